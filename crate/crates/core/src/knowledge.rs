//! The compressed history: known-high workers, known-low workers, and the
//! graph of uninformative past matches among everyone still unknown.
//!
//! Under weakest link an edge `(i, j)` records a past match that scored 0, so
//! `i` and `j` are not both high. Under strongest link an edge records a
//! score of 1, so they are not both low. Deductions are closed to a fixed
//! point on every update and edges touching an identified worker are removed.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{FeedbackModel, Outcome, WorkerId, WorkerType, HIGH, LOW};

/// Largest component [`KnowledgeState::component_posterior`] will enumerate.
pub const POSTERIOR_VERTEX_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Unknown,
    High,
    Low,
}

impl Status {
    fn of(t: WorkerType) -> Self {
        if t == HIGH {
            Status::High
        } else {
            Status::Low
        }
    }

    pub fn known_type(self) -> Option<WorkerType> {
        match self {
            Status::Unknown => None,
            Status::High => Some(HIGH),
            Status::Low => Some(LOW),
        }
    }
}

/// Workers identified by one update.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeductionLog {
    pub newly_high: Vec<WorkerId>,
    pub newly_low: Vec<WorkerId>,
    pub step: usize,
}

impl DeductionLog {
    pub fn is_empty(&self) -> bool {
        self.newly_high.is_empty() && self.newly_low.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeState {
    model: FeedbackModel,
    status: Vec<Status>,
    // Sorted neighbour lists; only unknown workers have neighbours.
    adj: Vec<Vec<WorkerId>>,
    n_high: usize,
    n_low: usize,
    n_edges: usize,
    updates: usize,
}

impl KnowledgeState {
    pub fn new(model: FeedbackModel, n: usize) -> Self {
        Self {
            model,
            status: vec![Status::Unknown; n],
            adj: vec![Vec::new(); n],
            n_high: 0,
            n_low: 0,
            n_edges: 0,
            updates: 0,
        }
    }

    pub fn model(&self) -> FeedbackModel {
        self.model
    }

    pub fn n(&self) -> usize {
        self.status.len()
    }

    #[inline]
    pub fn status(&self, w: WorkerId) -> Status {
        self.status[w as usize]
    }

    #[inline]
    pub fn is_unknown(&self, w: WorkerId) -> bool {
        self.status[w as usize] == Status::Unknown
    }

    pub fn statuses(&self) -> &[Status] {
        &self.status
    }

    pub fn n_known_high(&self) -> usize {
        self.n_high
    }

    pub fn n_known_low(&self) -> usize {
        self.n_low
    }

    pub fn n_unknown(&self) -> usize {
        self.n() - self.n_high - self.n_low
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn known_high(&self) -> Vec<WorkerId> {
        self.ids_with(Status::High)
    }

    pub fn known_low(&self) -> Vec<WorkerId> {
        self.ids_with(Status::Low)
    }

    pub fn unknown(&self) -> Vec<WorkerId> {
        self.ids_with(Status::Unknown)
    }

    fn ids_with(&self, s: Status) -> Vec<WorkerId> {
        self.status.iter().enumerate().filter(|(_, &x)| x == s).map(|(i, _)| i as WorkerId).collect()
    }

    pub fn neighbors(&self, w: WorkerId) -> &[WorkerId] {
        &self.adj[w as usize]
    }

    #[inline]
    pub fn has_edge(&self, a: WorkerId, b: WorkerId) -> bool {
        let (x, y) = if self.adj[a as usize].len() <= self.adj[b as usize].len() { (a, b) } else { (b, a) };
        self.adj[x as usize].binary_search(&y).is_ok()
    }

    /// All edges as sorted `(min, max)` pairs.
    pub fn edges(&self) -> Vec<(WorkerId, WorkerId)> {
        let mut out = Vec::with_capacity(self.n_edges);
        for (u, list) in self.adj.iter().enumerate() {
            let u = u as WorkerId;
            out.extend(list.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    /// True when every pair of unknown workers has already been tested, so no
    /// match among unknown workers can reveal anything new.
    pub fn unknown_graph_is_complete(&self) -> bool {
        let u = self.n_unknown();
        self.n_edges == u * u.saturating_sub(1) / 2
    }

    fn add_edge(&mut self, a: WorkerId, b: WorkerId) {
        if let Err(pos) = self.adj[a as usize].binary_search(&b) {
            self.adj[a as usize].insert(pos, b);
            let pos_b = self.adj[b as usize].binary_search(&a).unwrap_err();
            self.adj[b as usize].insert(pos_b, a);
            self.n_edges += 1;
        }
    }

    fn remove_vertex_edges(&mut self, w: WorkerId) -> Vec<WorkerId> {
        let nbrs = std::mem::take(&mut self.adj[w as usize]);
        for &v in &nbrs {
            let list = &mut self.adj[v as usize];
            if let Ok(pos) = list.binary_search(&w) {
                list.remove(pos);
            }
        }
        self.n_edges -= nbrs.len();
        nbrs
    }

    /// Folds one round of outcomes into the state and closes all deductions.
    ///
    /// Outcomes between two known workers are only checked for consistency.
    /// On error the state may hold part of the round.
    pub fn update(&mut self, outcomes: &[Outcome]) -> Result<DeductionLog> {
        let d = self.model.decisive();
        let mut log = DeductionLog { step: self.updates, ..Default::default() };
        let mut work: Vec<(WorkerId, WorkerType)> = Vec::new();
        for o in outcomes {
            let (i, j) = o.pair;
            let s = o.score;
            let inconsistent = || Error::Inconsistent { i, j, score: s };
            if s > 1 || i == j {
                return Err(inconsistent());
            }
            match (self.status(i).known_type(), self.status(j).known_type()) {
                (Some(ti), Some(tj)) => {
                    if self.model.payoff(ti, tj) != s {
                        return Err(inconsistent());
                    }
                }
                (Some(t), None) | (None, Some(t)) => {
                    let other = if self.is_unknown(i) { i } else { j };
                    if t == d {
                        // Partner of a known decisive-type worker scores its own type.
                        work.push((other, s));
                    } else if s != t {
                        return Err(inconsistent());
                    }
                }
                (None, None) => {
                    if s == d {
                        work.push((i, d));
                        work.push((j, d));
                    } else {
                        self.add_edge(i, j);
                    }
                }
            }
            self.close(&mut work, &mut log).map_err(|_| inconsistent())?;
        }
        log.newly_high.sort_unstable();
        log.newly_low.sort_unstable();
        self.updates += 1;
        Ok(log)
    }

    fn close(&mut self, work: &mut Vec<(WorkerId, WorkerType)>, log: &mut DeductionLog) -> Result<()> {
        let d = self.model.decisive();
        while let Some((w, t)) = work.pop() {
            match self.status(w).known_type() {
                Some(known) if known == t => continue,
                Some(_) => return Err(Error::InvariantViolation(format!("worker {w} deduced both types"))),
                None => {}
            }
            self.status[w as usize] = Status::of(t);
            if t == HIGH {
                self.n_high += 1;
                log.newly_high.push(w);
            } else {
                self.n_low += 1;
                log.newly_low.push(w);
            }
            let nbrs = self.remove_vertex_edges(w);
            if t == d {
                // An edge to a decisive-type worker forces the opposite type.
                work.extend(nbrs.into_iter().map(|v| (v, 1 - d)));
            }
        }
        Ok(())
    }

    /// Connected components of the unknown graph, each sorted, ordered by
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<WorkerId>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] || self.status[start] != Status::Unknown {
                continue;
            }
            seen[start] = true;
            stack.push(start as WorkerId);
            let mut comp = Vec::new();
            while let Some(u) = stack.pop() {
                comp.push(u);
                for &v in &self.adj[u as usize] {
                    if !seen[v as usize] {
                        seen[v as usize] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Components of the unknown graph, provided each one is complete.
    pub fn clique_partition(&self) -> Result<Vec<Vec<WorkerId>>> {
        let comps = self.components();
        for c in &comps {
            if c.iter().any(|&w| self.adj[w as usize].len() != c.len() - 1) {
                return Err(Error::NotACliquePartition(c[0]));
            }
        }
        Ok(comps)
    }

    /// Exact posterior probability of being high for every member of an
    /// unknown component, by enumerating the assignments its edges allow.
    pub fn component_posterior(&self, component: &[WorkerId], p: f64) -> Result<Vec<(WorkerId, f64)>> {
        let m = component.len();
        if m > POSTERIOR_VERTEX_CAP {
            return Err(Error::ComponentTooLarge { size: m, cap: POSTERIOR_VERTEX_CAP });
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
        let mut local_adj = vec![0u32; m];
        for (a, &u) in component.iter().enumerate() {
            if !self.is_unknown(u) {
                return Err(Error::InvalidConfig(format!("worker {u} is not in the unknown graph")));
            }
            for (b, &v) in component.iter().enumerate() {
                if a != b && self.has_edge(u, v) {
                    local_adj[a] |= 1 << b;
                }
            }
        }
        let weights: Vec<f64> = (0..=m).map(|k| p.powi(k as i32) * (1.0 - p).powi((m - k) as i32)).collect();
        let mut total = 0.0;
        let mut high_mass = vec![0.0; m];
        for mask in 0u32..(1u32 << m) {
            // `mask` marks high workers; the constrained set must be independent.
            let constrained = match self.model {
                FeedbackModel::WeakestLink => mask,
                FeedbackModel::StrongestLink => !mask & ((1u32 << m) - 1),
            };
            let independent = (0..m).all(|a| constrained & (1 << a) == 0 || local_adj[a] & constrained == 0);
            if !independent {
                continue;
            }
            let w = weights[mask.count_ones() as usize];
            total += w;
            for (a, h) in high_mass.iter_mut().enumerate() {
                if mask & (1 << a) != 0 {
                    *h += w;
                }
            }
        }
        Ok(component.iter().zip(high_mass).map(|(&u, h)| (u, h / total)).collect())
    }

    /// Posterior probability of being high for every worker.
    pub fn marginals(&self, p: f64) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = self
            .status
            .iter()
            .map(|s| match s {
                Status::High => 1.0,
                Status::Low => 0.0,
                Status::Unknown => f64::NAN,
            })
            .collect();
        for comp in self.components() {
            for (w, prob) in self.component_posterior(&comp, p)? {
                out[w as usize] = prob;
            }
        }
        Ok(out)
    }

    /// Debug document: sets as sorted arrays, edges as sorted id pairs.
    pub fn to_json(&self) -> Value {
        json!({
            "model": self.model.as_str(),
            "known_high": self.known_high(),
            "known_low": self.known_low(),
            "unknown": self.unknown(),
            "edges": self.edges().into_iter().map(|(a, b)| [a, b]).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeedbackModel::{StrongestLink, WeakestLink};
    use proptest::prelude::*;

    fn o(i: WorkerId, j: WorkerId, s: u8) -> Outcome {
        Outcome::new(i, j, s)
    }

    #[test]
    fn weakest_high_pair_is_identified() {
        let mut k = KnowledgeState::new(WeakestLink, 4);
        let log = k.update(&[o(0, 1, 1)]).unwrap();
        assert_eq!(k.known_high(), vec![0, 1]);
        assert_eq!(log.newly_high, vec![0, 1]);
    }

    #[test]
    fn weakest_neighbour_of_new_high_becomes_low() {
        let mut k = KnowledgeState::new(WeakestLink, 4);
        k.update(&[o(0, 2, 0)]).unwrap();
        assert!(k.has_edge(0, 2));
        k.update(&[o(0, 1, 1)]).unwrap();
        assert_eq!(k.known_high(), vec![0, 1]);
        assert_eq!(k.known_low(), vec![2]);
        assert_eq!(k.n_edges(), 0);
    }

    #[test]
    fn strongest_low_pair_is_identified() {
        let mut k = KnowledgeState::new(StrongestLink, 4);
        k.update(&[o(0, 1, 0)]).unwrap();
        assert_eq!(k.known_low(), vec![0, 1]);
    }

    #[test]
    fn strongest_probe_with_known_low_reveals_partner() {
        let mut k = KnowledgeState::new(StrongestLink, 6);
        k.update(&[o(0, 1, 0), o(2, 3, 1), o(4, 5, 1)]).unwrap();
        k.update(&[o(0, 2, 0), o(1, 3, 1), o(4, 5, 1)]).unwrap();
        assert_eq!(k.known_low(), vec![0, 1, 2]);
        assert_eq!(k.known_high(), vec![3]);
        assert_eq!(k.unknown(), vec![4, 5]);
        assert!(k.has_edge(4, 5));
    }

    #[test]
    fn partner_of_known_decisive_worker_is_revealed() {
        let mut k = KnowledgeState::new(WeakestLink, 6);
        k.update(&[o(0, 1, 1), o(2, 3, 0), o(4, 5, 0)]).unwrap();
        k.update(&[o(0, 2, 0), o(1, 4, 1), o(3, 5, 0)]).unwrap();
        assert_eq!(k.known_high(), vec![0, 1, 4]);
        // 2 low by direct probe, 5 low as neighbour of 4; 3 still unknown.
        assert_eq!(k.known_low(), vec![2, 5]);
        assert_eq!(k.unknown(), vec![3]);
    }

    #[test]
    fn contradiction_is_reported() {
        let mut k = KnowledgeState::new(WeakestLink, 4);
        k.update(&[o(0, 1, 1), o(2, 3, 0)]).unwrap();
        assert!(matches!(k.update(&[o(0, 1, 0)]), Err(Error::Inconsistent { .. })));
        let mut k = KnowledgeState::new(WeakestLink, 4);
        k.update(&[o(0, 1, 1)]).unwrap();
        k.update(&[o(0, 2, 0)]).unwrap();
        assert_eq!(k.known_low(), vec![2]);
        // known low paired with anything must score 0
        assert!(k.update(&[o(2, 3, 1)]).is_err());
    }

    #[test]
    fn repeated_matches_add_no_parallel_edges() {
        let mut k = KnowledgeState::new(WeakestLink, 4);
        k.update(&[o(0, 1, 0), o(2, 3, 0)]).unwrap();
        k.update(&[o(1, 0, 0), o(3, 2, 0)]).unwrap();
        assert_eq!(k.n_edges(), 2);
    }

    #[test]
    fn component_posterior_isolated_vertex() {
        let k = KnowledgeState::new(WeakestLink, 4);
        let post = k.component_posterior(&[2], 0.3).unwrap();
        assert!((post[0].1 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn component_posterior_single_edge() {
        let mut k = KnowledgeState::new(WeakestLink, 4);
        k.update(&[o(0, 1, 0)]).unwrap();
        for p in [0.1, 0.3, 0.5, 0.9] {
            // enumerate {00, 01, 10}: weights (1-p)^2, p(1-p), p(1-p)
            let q = 1.0 - p;
            let expected = p * q / (q * q + 2.0 * p * q);
            let post = k.component_posterior(&[0, 1], p).unwrap();
            assert!((post[0].1 - expected).abs() < 1e-14);
            assert!((post[0].1 - p / (1.0 + p)).abs() < 1e-14);
        }
    }

    #[test]
    fn component_posterior_clique_contains_high() {
        let m = 5;
        let mut k = KnowledgeState::new(WeakestLink, 6);
        let mut outs = Vec::new();
        for a in 0..m {
            for b in a + 1..m {
                outs.push(o(a, b, 0));
            }
        }
        k.update(&outs).unwrap();
        let comp: Vec<WorkerId> = (0..m).collect();
        for p in [0.2, 0.5, 0.8] {
            let post = k.component_posterior(&comp, p).unwrap();
            let any_high: f64 = post.iter().map(|x| x.1).sum();
            let mf = m as f64;
            assert!((any_high - mf * p / (mf * p + 1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn component_posterior_cap() {
        let k = KnowledgeState::new(WeakestLink, 22);
        let comp: Vec<WorkerId> = (0..21).collect();
        assert!(matches!(k.component_posterior(&comp, 0.5), Err(Error::ComponentTooLarge { .. })));
    }

    #[test]
    fn clique_partition_examples() {
        let k = KnowledgeState::new(WeakestLink, 4);
        assert_eq!(k.clique_partition().unwrap(), vec![vec![0], vec![1], vec![2], vec![3]]);
        let mut k = KnowledgeState::new(WeakestLink, 4);
        k.update(&[o(0, 1, 0)]).unwrap();
        assert_eq!(k.clique_partition().unwrap(), vec![vec![0, 1], vec![2], vec![3]]);
        let mut k = KnowledgeState::new(WeakestLink, 4);
        k.update(&[o(0, 1, 0)]).unwrap();
        k.update(&[o(1, 2, 0)]).unwrap();
        assert!(matches!(k.clique_partition(), Err(Error::NotACliquePartition(0))));
    }

    #[test]
    fn json_document_is_sorted() {
        let mut k = KnowledgeState::new(WeakestLink, 6);
        k.update(&[o(5, 4, 1), o(3, 0, 0), o(2, 1, 0)]).unwrap();
        let v = k.to_json();
        assert_eq!(v["known_high"], json!([4, 5]));
        assert_eq!(v["edges"], json!([[0, 3], [1, 2]]));
        assert_eq!(v["unknown"], json!([0, 1, 2, 3]));
    }

    fn random_round(n: usize, seed: u64, model: FeedbackModel, types: &[u8]) -> Vec<Outcome> {
        use rand::seq::SliceRandom;
        let mut ids: Vec<WorkerId> = (0..n as WorkerId).collect();
        ids.shuffle(&mut crate::rng::stream(seed));
        ids.chunks(2).map(|c| o(c[0], c[1], model.payoff(types[c[0] as usize], types[c[1] as usize]))).collect()
    }

    proptest! {
        #[test]
        fn partition_and_order_independence(mask in any::<u16>(), seed in any::<u64>(), strongest in any::<bool>()) {
            let model = if strongest { StrongestLink } else { WeakestLink };
            let n = 12;
            let types: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            let mut a = KnowledgeState::new(model, n);
            let mut b = KnowledgeState::new(model, n);
            for r in 0..4u64 {
                let round = random_round(n, seed.wrapping_add(r), model, &types);
                let mut rev = round.clone();
                rev.reverse();
                a.update(&round).unwrap();
                b.update(&rev).unwrap();
                prop_assert_eq!(a.n_known_high() + a.n_known_low() + a.n_unknown(), n);
                prop_assert_eq!(&a, &b);
                for w in a.known_high() { prop_assert_eq!(types[w as usize], 1); }
                for w in a.known_low() { prop_assert_eq!(types[w as usize], 0); }
                for (u, v) in a.edges() {
                    prop_assert!(a.is_unknown(u) && a.is_unknown(v));
                }
                let before = a.clone();
                a.update(&[]).unwrap();
                prop_assert_eq!(&a.status, &before.status);
                prop_assert_eq!(&a.adj, &before.adj);
                b.updates = a.updates;
            }
        }
    }
}
