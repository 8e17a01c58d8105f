//! Weakest-link policies: random matching, Exponential Cliques and its
//! k-stopped and learning variants.

use rand::seq::SliceRandom;

use super::{assemble, random_matching, weakest_absorbed, Policy};
use crate::error::{Error, Result};
use crate::knowledge::KnowledgeState;
use crate::model::{Matching, WorkerId};
use crate::rng::SimRng;
use crate::schedule::{circle_round, circle_rounds, cyclic_cross, ProbeSchedule};

/// `floor(sqrt(2 ln n))`, the epoch after which k-stopped EC stops doubling.
pub fn kstop_epoch_limit(n: usize) -> u32 {
    (2.0 * (n.max(1) as f64).ln()).sqrt().floor() as u32
}

/// Epoch `k >= 1` covers steps `2^k - 1 .. 2^(k+1) - 1`; returns `(k, r)`
/// with `r` the offset inside the epoch. Step 0 is epoch 0.
pub(crate) fn epoch_of(t: usize) -> (u32, usize) {
    let k = (t + 1).ilog2();
    (k, t + 1 - (1usize << k))
}

fn all_ids(knowledge: &KnowledgeState) -> Vec<WorkerId> {
    (0..knowledge.n() as WorkerId).collect()
}

/// Matches unknown workers uniformly at random every step.
#[derive(Debug, Clone, Default)]
pub struct RandomPolicy;

impl RandomPolicy {
    pub fn new() -> Self {
        Self
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn next_matching(&mut self, t: usize, knowledge: &KnowledgeState, rng: &mut SimRng) -> Result<Matching> {
        if t == 0 {
            return random_matching(&all_ids(knowledge), rng);
        }
        let mut unk = knowledge.unknown();
        unk.shuffle(rng);
        let pairs = unk.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        Ok(assemble(pairs, knowledge))
    }

    fn is_absorbed(&self, knowledge: &KnowledgeState) -> bool {
        weakest_absorbed(knowledge)
    }
}

/// A group of unknown workers scheduled together for one epoch.
#[derive(Debug, Clone)]
enum Block {
    /// Two cliques of equal size tested against each other.
    Cross { a: Vec<WorkerId>, b: Vec<WorkerId> },
    /// An unpaired clique repeating its own internal matches.
    SelfMatch { members: Vec<WorkerId> },
    /// The standing leftover clique tested against this epoch's unpaired clique.
    LeftoverMerge { small: Vec<WorkerId>, big: Vec<WorkerId> },
    /// Two cliques probed by a pair of known-high helpers.
    Explore { c1: Vec<WorkerId>, c2: Vec<WorkerId>, a1: WorkerId, a2: WorkerId, schedule: ProbeSchedule },
}

impl Block {
    fn all_unknown(k: &KnowledgeState, members: &[WorkerId]) -> bool {
        members.iter().all(|&w| k.is_unknown(w))
    }

    fn emit(&self, r: usize, k: &KnowledgeState, out: &mut Vec<(WorkerId, WorkerId)>) {
        match self {
            Block::Cross { a, b } => {
                if Self::all_unknown(k, a) && Self::all_unknown(k, b) {
                    out.extend(cyclic_cross(a, b, r));
                }
            }
            Block::SelfMatch { members } => {
                if Self::all_unknown(k, members) {
                    out.extend(circle_round(members, r).0);
                }
            }
            Block::LeftoverMerge { small, big } => {
                if Self::all_unknown(k, small) && Self::all_unknown(k, big) {
                    let b = big.len();
                    let mut hit = vec![false; b];
                    for (s, &x) in small.iter().enumerate() {
                        let y = (s + r) % b;
                        hit[y] = true;
                        out.push((x, big[y]));
                    }
                    let unhit: Vec<WorkerId> = big.iter().zip(&hit).filter(|(_, &h)| !h).map(|(&w, _)| w).collect();
                    out.extend(unhit.chunks_exact(2).map(|c| (c[0], c[1])));
                }
            }
            Block::Explore { c1, c2, a1, a2, schedule } => {
                let m = schedule.len();
                if r >= m {
                    return;
                }
                let mut used1 = vec![false; m];
                let mut used2 = vec![false; m];
                let c1_live = c1.iter().any(|&w| k.is_unknown(w));
                let c2_live = c2.iter().any(|&w| k.is_unknown(w));
                if c1_live && k.is_unknown(c1[r]) {
                    out.push((*a1, c1[r]));
                    used1[r] = true;
                }
                let pr = schedule.probe(r);
                if c2_live && k.is_unknown(c2[pr]) {
                    out.push((*a2, c2[pr]));
                    used2[pr] = true;
                }
                for s in (0..m).filter(|&s| s != r) {
                    let t = schedule.partner(r, s);
                    if k.is_unknown(c1[s]) && k.is_unknown(c2[t]) {
                        out.push((c1[s], c2[t]));
                        used1[s] = true;
                        used2[t] = true;
                    }
                }
                // Unknown members left over pair inside their own clique.
                for (clique, used) in [(c1, &used1), (c2, &used2)] {
                    let rest: Vec<WorkerId> = clique
                        .iter()
                        .zip(used.iter())
                        .filter(|(&w, &u)| !u && k.is_unknown(w))
                        .map(|(&w, _)| w)
                        .collect();
                    out.extend(rest.chunks_exact(2).map(|c| (c[0], c[1])));
                }
            }
        }
    }
}

/// Circle-method pass over the workers still unknown when doubling stops.
/// Only pairs of unknown workers not yet tested are scheduled; workers left
/// idle by a round are paired by the caller.
#[derive(Debug, Clone)]
struct Finish {
    members: Vec<WorkerId>,
    round: usize,
}

impl Finish {
    fn new(knowledge: &KnowledgeState) -> Self {
        Self { members: knowledge.components().concat(), round: 0 }
    }

    fn emit(&mut self, k: &KnowledgeState, out: &mut Vec<(WorkerId, WorkerId)>) {
        if self.round >= circle_rounds(self.members.len()) {
            return;
        }
        let (pairs, _) = circle_round(&self.members, self.round);
        out.extend(pairs.into_iter().filter(|&(a, b)| k.is_unknown(a) && k.is_unknown(b) && !k.has_edge(a, b)));
        self.round += 1;
    }
}

/// Exponential Cliques with optional learning epochs and an optional stop.
///
/// Step 0 matches everyone at random. Epochs `1..=dl_epochs` use helper
/// probes, later epochs test clique pairs exhaustively, and from epoch
/// `finish_epoch` on the remaining untested pairs are enumerated.
#[derive(Debug, Clone)]
pub struct EcFamily {
    name: String,
    dl_epochs: u32,
    finish_epoch: Option<u32>,
    epoch: u32,
    blocks: Vec<Block>,
    finish: Option<Finish>,
    finish_started_at: Option<usize>,
}

impl EcFamily {
    pub fn new(name: String, dl_epochs: u32, finish_epoch: Option<u32>) -> Self {
        Self { name, dl_epochs, finish_epoch, epoch: 0, blocks: Vec::new(), finish: None, finish_started_at: None }
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn in_finish_phase(&self) -> bool {
        self.finish.is_some()
    }

    pub fn finish_started_at(&self) -> Option<usize> {
        self.finish_started_at
    }

    fn start_epoch(&mut self, k: u32, knowledge: &KnowledgeState, rng: &mut SimRng) -> Result<()> {
        let m = 1usize << k;
        let cliques = knowledge.clique_partition()?;
        let (mut regular, odd): (Vec<_>, Vec<_>) = cliques.into_iter().partition(|c| c.len() == m);
        if odd.len() > 1 {
            return Err(Error::InvariantViolation(format!("epoch {k}: {} cliques differ from size {m}", odd.len())));
        }
        let mut leftover = odd.into_iter().next();
        regular.shuffle(rng);
        let unpaired = if regular.len() % 2 == 1 { regular.pop() } else { None };

        let mut blocks = Vec::with_capacity(regular.len() / 2 + 1);
        let explore = k >= 1 && k <= self.dl_epochs;
        let mut helpers = Vec::new();
        if explore {
            let mut kh = knowledge.known_high();
            kh.shuffle(rng);
            helpers = kh.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        }
        let mut it = regular.into_iter();
        let mut h = helpers.into_iter();
        while let (Some(a), Some(b)) = (it.next(), it.next()) {
            match h.next() {
                Some((a1, a2)) => blocks.push(Block::Explore { c1: a, c2: b, a1, a2, schedule: ProbeSchedule::new(m) }),
                None => blocks.push(Block::Cross { a, b }),
            }
        }
        match (unpaired, leftover.take()) {
            (Some(u), Some(l)) => {
                let (small, big) = if l.len() <= u.len() { (l, u) } else { (u, l) };
                blocks.push(Block::LeftoverMerge { small, big });
            }
            (Some(c), None) | (None, Some(c)) => blocks.push(Block::SelfMatch { members: c }),
            (None, None) => {}
        }
        self.blocks = blocks;
        self.epoch = k;
        Ok(())
    }
}

impl Policy for EcFamily {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn next_matching(&mut self, t: usize, knowledge: &KnowledgeState, rng: &mut SimRng) -> Result<Matching> {
        if t == 0 {
            return random_matching(&all_ids(knowledge), rng);
        }
        let (k, r) = epoch_of(t);
        if r == 0 && self.finish.is_none() {
            if self.finish_epoch.is_some_and(|f| k >= f) {
                self.finish = Some(Finish::new(knowledge));
                self.finish_started_at = Some(t);
                self.blocks.clear();
                self.epoch = k;
            } else {
                self.start_epoch(k, knowledge, rng)?;
            }
        }
        let mut pairs = Vec::with_capacity(knowledge.n() / 2);
        match &mut self.finish {
            Some(f) => f.emit(knowledge, &mut pairs),
            None => {
                for b in &self.blocks {
                    b.emit(r, knowledge, &mut pairs);
                }
            }
        }
        Ok(assemble(pairs, knowledge))
    }

    fn is_absorbed(&self, knowledge: &KnowledgeState) -> bool {
        weakest_absorbed(knowledge)
    }
}
