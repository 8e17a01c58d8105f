//! Workers, hidden types, feedback models and matchings.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Bernoulli, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Index of a worker in `[0, N)`.
pub type WorkerId = u32;

/// A worker type: `0` (low) or `1` (high).
pub type WorkerType = u8;

pub const LOW: WorkerType = 0;
pub const HIGH: WorkerType = 1;

/// Hidden ground truth: one binary type per worker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeAssignment {
    theta: Vec<WorkerType>,
    n1: usize,
}

impl TypeAssignment {
    pub fn new(theta: Vec<WorkerType>) -> Result<Self> {
        if theta.len() < 2 || !theta.len().is_multiple_of(2) {
            return Err(Error::OddPopulation(theta.len()));
        }
        if let Some(&bad) = theta.iter().find(|&&t| t > 1) {
            return Err(Error::InvalidConfig(format!("worker type must be 0 or 1, got {bad}")));
        }
        let n1 = theta.iter().filter(|&&t| t == HIGH).count();
        Ok(Self { theta, n1 })
    }

    /// Builds an assignment of size `n` from the low `n` bits of `mask`
    /// (bit `i` is worker `i`).
    pub fn from_mask(n: usize, mask: u64) -> Result<Self> {
        Self::new((0..n).map(|i| ((mask >> i) & 1) as WorkerType).collect())
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn theta(&self) -> &[WorkerType] {
        &self.theta
    }

    #[inline]
    pub fn get(&self, w: WorkerId) -> WorkerType {
        self.theta[w as usize]
    }

    /// Relabels workers: worker `perm[i]` in the result has the type worker
    /// `i` has here.
    pub fn permuted(&self, perm: &[WorkerId]) -> Self {
        let mut theta = vec![LOW; self.theta.len()];
        for (i, &t) in self.theta.iter().enumerate() {
            theta[perm[i] as usize] = t;
        }
        Self { theta, n1: self.n1 }
    }
}

/// Draws `n` i.i.d. Bernoulli(`p`) types from the stream keyed by `seed`.
pub fn sample_types(n: usize, p: f64, seed: u64) -> Result<TypeAssignment> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::OddPopulation(n));
    }
    let coin = Bernoulli::new(p).map_err(|_| Error::InvalidProbability(p))?;
    let mut rng = rng::stream(seed);
    let theta = (0..n).map(|_| coin.sample(&mut rng) as WorkerType).collect();
    TypeAssignment::new(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackModel {
    /// A pair scores the minimum of its two types.
    #[serde(rename = "weakest")]
    WeakestLink,
    /// A pair scores the maximum of its two types.
    #[serde(rename = "strongest")]
    StrongestLink,
}

impl FeedbackModel {
    #[inline]
    pub fn payoff(self, ti: WorkerType, tj: WorkerType) -> WorkerType {
        match self {
            FeedbackModel::WeakestLink => ti.min(tj),
            FeedbackModel::StrongestLink => ti.max(tj),
        }
    }

    /// The score that identifies both members of an unknown pair: a weakest
    /// link pair scoring 1 must be two highs, a strongest link pair scoring 0
    /// must be two lows. It is also the type of a known worker whose partner's
    /// type is revealed exactly by the score.
    #[inline]
    pub fn decisive(self) -> WorkerType {
        match self {
            FeedbackModel::WeakestLink => HIGH,
            FeedbackModel::StrongestLink => LOW,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackModel::WeakestLink => "weakest",
            FeedbackModel::StrongestLink => "strongest",
        }
    }
}

impl fmt::Display for FeedbackModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeedbackModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weakest" | "weakest-link" | "min" => Ok(FeedbackModel::WeakestLink),
            "strongest" | "strongest-link" | "max" => Ok(FeedbackModel::StrongestLink),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// Payoff of a pair with types `ti`, `tj` under `model`.
#[inline]
pub fn payoff(model: FeedbackModel, ti: WorkerType, tj: WorkerType) -> WorkerType {
    model.payoff(ti, tj)
}

/// Best total payoff of a single step when every type is known.
/// True when every perfect matching attains the optimum, so no policy can
/// incur regret.
pub fn every_matching_optimal(model: FeedbackModel, assignment: &TypeAssignment) -> bool {
    let (n1, n0) = (assignment.n1(), assignment.n() - assignment.n1());
    match model {
        FeedbackModel::WeakestLink => n1 <= 1 || n0 == 0,
        FeedbackModel::StrongestLink => n1 == 0 || n0 <= 1,
    }
}

pub fn optimal_step_payoff(model: FeedbackModel, assignment: &TypeAssignment) -> u64 {
    let n1 = assignment.n1() as u64;
    match model {
        FeedbackModel::WeakestLink => n1 / 2,
        FeedbackModel::StrongestLink => n1.min(assignment.n() as u64 / 2),
    }
}

/// A perfect pairing of the population.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(WorkerId, WorkerId)>,
}

impl Matching {
    pub fn new(pairs: Vec<(WorkerId, WorkerId)>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs with each tuple ordered `(min, max)` and the list sorted.
    pub fn canonical(&self) -> Vec<(WorkerId, WorkerId)> {
        let mut v: Vec<_> = self.pairs.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        v.sort_unstable();
        v
    }

    /// Scores every pair against the hidden types.
    pub fn outcomes(&self, model: FeedbackModel, types: &TypeAssignment) -> Vec<Outcome> {
        self.pairs
            .iter()
            .map(|&(i, j)| Outcome { pair: (i, j), score: model.payoff(types.get(i), types.get(j)) })
            .collect()
    }
}

/// An observed pair score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub pair: (WorkerId, WorkerId),
    pub score: WorkerType,
}

impl Outcome {
    pub fn new(i: WorkerId, j: WorkerId, score: WorkerType) -> Self {
        Self { pair: (i, j), score }
    }
}

/// First problem found in a candidate matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchingViolation {
    SelfPair(WorkerId),
    OutOfRange(WorkerId),
    Duplicate { duplicated: WorkerId, missing: Option<WorkerId> },
    Missing(WorkerId),
}

impl fmt::Display for MatchingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchingViolation::SelfPair(w) => write!(f, "worker {w} paired with itself"),
            MatchingViolation::OutOfRange(w) => write!(f, "worker {w} is out of range"),
            MatchingViolation::Duplicate { duplicated, missing: Some(m) } => {
                write!(f, "worker {duplicated} duplicated, worker {m} missing")
            }
            MatchingViolation::Duplicate { duplicated, missing: None } => {
                write!(f, "worker {duplicated} duplicated")
            }
            MatchingViolation::Missing(w) => write!(f, "worker {w} missing"),
        }
    }
}

/// Checks that `m` pairs every worker in `[0, n)` exactly once.
pub fn validate_matching(m: &Matching, n: usize) -> std::result::Result<(), MatchingViolation> {
    let mut seen = vec![false; n];
    let mut duplicated = None;
    for &(a, b) in &m.pairs {
        if a == b {
            return Err(MatchingViolation::SelfPair(a));
        }
        for w in [a, b] {
            let Some(slot) = seen.get_mut(w as usize) else {
                return Err(MatchingViolation::OutOfRange(w));
            };
            if *slot && duplicated.is_none() {
                duplicated = Some(w);
            }
            *slot = true;
        }
    }
    let missing = seen.iter().position(|&s| !s).map(|i| i as WorkerId);
    match (duplicated, missing) {
        (Some(d), missing) => Err(MatchingViolation::Duplicate { duplicated: d, missing }),
        (None, Some(w)) => Err(MatchingViolation::Missing(w)),
        (None, None) => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sample_types_degenerate_probabilities() {
        let t = sample_types(4, 0.0, 7).unwrap();
        assert_eq!(t.theta(), &[0, 0, 0, 0]);
        assert_eq!(t.n1(), 0);
        let t = sample_types(4, 1.0, 7).unwrap();
        assert_eq!(t.theta(), &[1, 1, 1, 1]);
        assert_eq!(t.n1(), 4);
    }

    #[test]
    fn sample_types_rejects_bad_input() {
        assert_eq!(sample_types(5, 0.5, 1), Err(Error::OddPopulation(5)));
        assert_eq!(sample_types(0, 0.5, 1), Err(Error::OddPopulation(0)));
        assert!(matches!(sample_types(4, 1.5, 1), Err(Error::InvalidProbability(_))));
        assert!(matches!(sample_types(4, -0.1, 1), Err(Error::InvalidProbability(_))));
    }

    #[test]
    fn sample_types_concentrates() {
        let t = sample_types(100_000, 0.3, 1).unwrap();
        let frac = t.n1() as f64 / 100_000.0;
        assert!((0.29..=0.31).contains(&frac), "{frac}");
    }

    #[test]
    fn sample_types_matches_independent_binomial_sampler() {
        // Mean of n1 over many seeds against an independent binomial draw.
        use rand_distr::Binomial;
        let reps = 400;
        let from_sampler: f64 =
            (0..reps).map(|s| sample_types(1000, 0.3, s).unwrap().n1() as f64).sum::<f64>() / reps as f64;
        let mut r = rng::stream(12345);
        let binom = Binomial::new(1000, 0.3).unwrap();
        let reference: f64 = (0..reps).map(|_| binom.sample(&mut r) as f64).sum::<f64>() / reps as f64;
        // sd of each mean is sqrt(210/400) ~ 0.72
        assert!((from_sampler - reference).abs() < 5.0, "{from_sampler} vs {reference}");
    }

    #[test]
    fn payoff_examples() {
        assert_eq!(payoff(FeedbackModel::WeakestLink, 1, 0), 0);
        assert_eq!(payoff(FeedbackModel::StrongestLink, 1, 0), 1);
        assert_eq!(payoff(FeedbackModel::WeakestLink, 1, 1), 1);
    }

    #[test]
    fn optimal_step_payoff_examples() {
        let t = TypeAssignment::new(vec![1, 1, 1, 1, 1, 0, 0, 0]).unwrap();
        assert_eq!(optimal_step_payoff(FeedbackModel::WeakestLink, &t), 2);
        let t = TypeAssignment::new(vec![1, 1, 1, 1, 0, 0]).unwrap();
        assert_eq!(optimal_step_payoff(FeedbackModel::StrongestLink, &t), 3);
        let t = TypeAssignment::new(vec![1, 1, 0, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(optimal_step_payoff(FeedbackModel::StrongestLink, &t), 2);
    }

    #[test]
    fn validate_matching_examples() {
        assert_eq!(validate_matching(&Matching::new(vec![(0, 1), (2, 3)]), 4), Ok(()));
        assert_eq!(
            validate_matching(&Matching::new(vec![(0, 1), (1, 2)]), 4),
            Err(MatchingViolation::Duplicate { duplicated: 1, missing: Some(3) })
        );
        assert_eq!(validate_matching(&Matching::new(vec![(0, 0), (1, 2)]), 4), Err(MatchingViolation::SelfPair(0)));
        assert_eq!(validate_matching(&Matching::new(vec![(0, 1)]), 4), Err(MatchingViolation::Missing(2)));
        assert_eq!(validate_matching(&Matching::new(vec![(0, 9), (1, 2)]), 4), Err(MatchingViolation::OutOfRange(9)));
    }

    #[test]
    fn model_parsing() {
        assert_eq!("weakest".parse::<FeedbackModel>().unwrap(), FeedbackModel::WeakestLink);
        assert_eq!("Strongest".parse::<FeedbackModel>().unwrap(), FeedbackModel::StrongestLink);
        assert!("median".parse::<FeedbackModel>().is_err());
    }

    proptest! {
        #[test]
        fn payoff_is_symmetric(a in 0u8..2, b in 0u8..2) {
            for m in [FeedbackModel::WeakestLink, FeedbackModel::StrongestLink] {
                prop_assert_eq!(m.payoff(a, b), m.payoff(b, a));
            }
        }

        #[test]
        fn weakest_optimum_never_exceeds_strongest(mask in any::<u64>(), half in 1usize..32) {
            let t = TypeAssignment::from_mask(2 * half, mask).unwrap();
            prop_assert!(
                optimal_step_payoff(FeedbackModel::WeakestLink, &t)
                    <= optimal_step_payoff(FeedbackModel::StrongestLink, &t)
            );
        }

        #[test]
        fn sample_types_is_reproducible(seed in any::<u64>(), half in 1usize..64, p in 0.0f64..=1.0) {
            let a = sample_types(2 * half, p, seed).unwrap();
            let b = sample_types(2 * half, p, seed).unwrap();
            prop_assert_eq!(a.theta(), b.theta());
            prop_assert_eq!(a.n1(), a.theta().iter().filter(|&&t| t == 1).count());
        }
    }
}
