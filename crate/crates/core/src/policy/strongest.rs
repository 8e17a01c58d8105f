//! Strongest-link policies: 1-chain, 2-chain and the conservative baseline.
//!
//! After a random first round, pairs that scored 0 are known low-low pairs
//! (K) and pairs that scored 1 hold at least one high worker (U). Each K pair
//! runs a chain that probes U pairs looking for high partners; settled pairs
//! (P) keep their partners from then on.

use std::collections::VecDeque;

use rand::seq::SliceRandom;

use super::{random_matching, Policy};
use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeState, Status};
use crate::model::{Matching, WorkerId};
use crate::rng::SimRng;

type Pair = (WorkerId, WorkerId);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Waiting to claim U pairs at the next period.
    Ready,
    /// 1-chain epoch in flight: probes `(x, i)` and `(y, j)`.
    One { ij: Pair },
    /// 2-chain epoch in flight: probes `(x, i)`, `(y, k)` and `(j, l)`.
    Two { ij: Pair, kl: Pair },
    /// Second period of a 2-chain epoch after exactly one probe succeeded.
    /// Matches `(win, hit)`, `(lose, partner)` and the failed pair.
    Second { win: WorkerId, hit: WorkerId, lose: WorkerId, partner: WorkerId, failed: Pair },
    /// Matched for good.
    Settled,
    /// Retired with U empty; its low pair stays together.
    Retired,
}

#[derive(Debug, Clone)]
struct Chain {
    zeros: Pair,
    phase: Phase,
    epochs: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainTerminal {
    Running,
    Settled,
    Stranded,
}

#[derive(Debug, Clone)]
pub struct ChainPolicy {
    two: bool,
    terminal_rematch: bool,
    first_round: Vec<Pair>,
    initialized: bool,
    chains: Vec<Chain>,
    u_set: VecDeque<Pair>,
    p_set: Vec<Pair>,
    periods: usize,
}

fn high(k: &KnowledgeState, w: WorkerId) -> Result<bool> {
    match k.status(w) {
        Status::High => Ok(true),
        Status::Low => Ok(false),
        Status::Unknown => Err(Error::InvariantViolation(format!("probed worker {w} is still unknown"))),
    }
}

impl ChainPolicy {
    pub fn new(two: bool, terminal_rematch: bool) -> Self {
        Self {
            two,
            terminal_rematch,
            first_round: Vec::new(),
            initialized: false,
            chains: Vec::new(),
            u_set: VecDeque::new(),
            p_set: Vec::new(),
            periods: 0,
        }
    }

    fn split_first_round(&self, k: &KnowledgeState) -> (Vec<Pair>, Vec<Pair>) {
        self.first_round.iter().partition(|&&(a, b)| k.status(a) == Status::Low && k.status(b) == Status::Low)
    }

    fn initialize(&mut self, k: &KnowledgeState, rng: &mut SimRng) {
        let (mut kset, uset) = self.split_first_round(k);
        kset.shuffle(rng);
        self.chains = kset.into_iter().map(|zeros| Chain { zeros, phase: Phase::Ready, epochs: 0 }).collect();
        self.u_set = uset.into_iter().collect();
        self.initialized = true;
    }

    /// Chain epochs started so far, summed over chains. Together with the
    /// step count this gives both time axes.
    pub fn epochs(&self) -> u32 {
        self.chains.iter().map(|c| c.epochs).sum()
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn u_len(&self) -> usize {
        self.u_set.len()
    }

    pub fn k_len(&self) -> usize {
        self.chains.iter().filter(|c| !matches!(c.phase, Phase::Settled | Phase::Retired)).count()
    }

    pub fn p_set(&self) -> &[Pair] {
        &self.p_set
    }

    pub fn retired_pairs(&self) -> Vec<Pair> {
        self.chains.iter().filter(|c| c.phase == Phase::Retired).map(|c| c.zeros).collect()
    }

    /// Settled pairs whose two members are both still unknown.
    fn rematch_targets(&self, k: &KnowledgeState) -> usize {
        self.p_set.iter().filter(|&&(a, b)| k.is_unknown(a) && k.is_unknown(b)).count()
    }

    fn can_rematch(&self, k: &KnowledgeState) -> bool {
        self.terminal_rematch
            && self.chains.iter().any(|c| matches!(c.phase, Phase::Ready | Phase::Retired))
            && self.rematch_targets(k) > 0
    }

    pub fn terminal_state(&self, k: &KnowledgeState, p: f64) -> ChainTerminal {
        if !self.absorbed(k) {
            ChainTerminal::Running
        } else if p > 0.5 && self.chains.iter().any(|c| matches!(c.phase, Phase::Retired | Phase::Ready)) {
            ChainTerminal::Stranded
        } else {
            ChainTerminal::Settled
        }
    }

    fn absorbed(&self, k: &KnowledgeState) -> bool {
        if self.first_round.is_empty() {
            return false;
        }
        let (active, u_empty) = if self.initialized {
            let busy = self
                .chains
                .iter()
                .any(|c| matches!(c.phase, Phase::One { .. } | Phase::Two { .. } | Phase::Second { .. }));
            if busy {
                return false;
            }
            (self.chains.iter().any(|c| c.phase == Phase::Ready), self.u_set.is_empty())
        } else {
            let (kset, uset) = self.split_first_round(k);
            (!kset.is_empty(), uset.is_empty())
        };
        (!active || u_empty) && !self.can_rematch(k)
    }

    /// Folds last period's probe outcomes into each chain.
    fn resolve(&mut self, k: &KnowledgeState) -> Result<()> {
        for c in &mut self.chains {
            let (x, y) = c.zeros;
            c.phase = match c.phase {
                Phase::One { ij: (i, j) } => {
                    let (hi, hj) = (high(k, i)?, high(k, j)?);
                    if !hi && !hj {
                        return Err(Error::InvariantViolation(format!("pair ({i}, {j}) from U is low-low")));
                    }
                    if hi && hj {
                        self.p_set.extend([(x, i), (y, j)]);
                        Phase::Settled
                    } else {
                        self.p_set.push((i, j));
                        Phase::Ready
                    }
                }
                Phase::Two { ij: (i, j), kl: (kk, l) } => {
                    let a = high(k, i)?;
                    let b = high(k, kk)?;
                    let c_score = !(k.status(j) == Status::Low && k.status(l) == Status::Low);
                    match (a, b, c_score) {
                        (true, true, true) => {
                            self.p_set.extend([(x, i), (y, kk), (j, l)]);
                            Phase::Settled
                        }
                        (true, false, true) => Phase::Second { win: x, hit: i, lose: y, partner: j, failed: (kk, l) },
                        (false, true, true) => Phase::Second { win: y, hit: kk, lose: x, partner: l, failed: (i, j) },
                        (false, false, true) | (true, true, false) => {
                            self.p_set.extend([(i, j), (kk, l)]);
                            Phase::Ready
                        }
                        _ => {
                            return Err(Error::InvariantViolation(format!(
                                "2-chain outcome ({a}, {b}, {c_score}) matches no case"
                            )))
                        }
                    }
                }
                Phase::Second { win, hit, lose, partner, failed } => {
                    if high(k, partner)? {
                        self.p_set.extend([(win, hit), (lose, partner), failed]);
                        Phase::Settled
                    } else {
                        self.p_set.extend([failed, (hit, partner)]);
                        Phase::Ready
                    }
                }
                other => other,
            };
        }
        Ok(())
    }

    fn reactivate_for_rematch(&mut self, k: &KnowledgeState) {
        let mut keep = Vec::with_capacity(self.p_set.len());
        for &(a, b) in &self.p_set {
            if k.is_unknown(a) && k.is_unknown(b) {
                self.u_set.push_back((a, b));
            } else {
                keep.push((a, b));
            }
        }
        self.p_set = keep;
        for c in &mut self.chains {
            if c.phase == Phase::Retired {
                c.phase = Phase::Ready;
            }
        }
    }
}

impl Policy for ChainPolicy {
    fn name(&self) -> String {
        if self.two { "two-chain" } else { "one-chain" }.into()
    }

    fn next_matching(&mut self, t: usize, k: &KnowledgeState, rng: &mut SimRng) -> Result<Matching> {
        if t == 0 {
            let ids: Vec<WorkerId> = (0..k.n() as WorkerId).collect();
            let m = random_matching(&ids, rng)?;
            self.first_round = m.pairs.clone();
            return Ok(m);
        }
        if !self.initialized {
            self.initialize(k, rng);
        } else {
            self.resolve(k)?;
        }
        self.periods += 1;
        if self.u_set.is_empty() && self.can_rematch(k) {
            self.reactivate_for_rematch(k);
        }
        let u_empty_at_start = self.u_set.is_empty();
        let mut pairs = Vec::with_capacity(k.n() / 2);
        for c in &mut self.chains {
            let (x, y) = c.zeros;
            match c.phase {
                Phase::Second { win, hit, lose, partner, failed } => {
                    pairs.extend([(win, hit), (lose, partner), failed]);
                }
                Phase::Ready if u_empty_at_start => {
                    c.phase = Phase::Retired;
                    pairs.push((x, y));
                }
                Phase::Ready => {
                    if self.two && self.u_set.len() >= 2 {
                        let (i, j) = self.u_set.pop_front().unwrap();
                        let (kk, l) = self.u_set.pop_front().unwrap();
                        c.phase = Phase::Two { ij: (i, j), kl: (kk, l) };
                        c.epochs += 1;
                        pairs.extend([(x, i), (y, kk), (j, l)]);
                    } else if let Some((i, j)) = self.u_set.pop_front() {
                        c.phase = Phase::One { ij: (i, j) };
                        c.epochs += 1;
                        pairs.extend([(x, i), (y, j)]);
                    } else {
                        pairs.push((x, y));
                    }
                }
                Phase::Retired => pairs.push((x, y)),
                Phase::Settled => {}
                Phase::One { .. } | Phase::Two { .. } => {
                    return Err(Error::InvariantViolation("chain probe left unresolved".into()));
                }
            }
        }
        pairs.extend(self.u_set.iter().copied());
        pairs.extend(self.p_set.iter().copied());
        Ok(Matching::new(pairs))
    }

    fn is_absorbed(&self, k: &KnowledgeState) -> bool {
        self.absorbed(k)
    }
}

/// Repeats the first-round matching forever.
#[derive(Debug, Clone, Default)]
pub struct ConservativePolicy {
    first_round: Option<Matching>,
}

impl ConservativePolicy {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Policy for ConservativePolicy {
    fn name(&self) -> String {
        "conservative".into()
    }

    fn next_matching(&mut self, t: usize, k: &KnowledgeState, rng: &mut SimRng) -> Result<Matching> {
        if t == 0 || self.first_round.is_none() {
            let ids: Vec<WorkerId> = (0..k.n() as WorkerId).collect();
            let m = random_matching(&ids, rng)?;
            self.first_round = Some(m.clone());
            return Ok(m);
        }
        Ok(self.first_round.clone().unwrap())
    }

    fn is_absorbed(&self, _k: &KnowledgeState) -> bool {
        self.first_round.is_some()
    }
}
