//! Matching policies and the shared machinery they build on.

mod strongest;
mod weakest;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeState, Status};
use crate::model::{FeedbackModel, Matching, WorkerId};
use crate::rng::SimRng;

pub use strongest::{ChainPolicy, ChainTerminal, ConservativePolicy};
pub use weakest::{kstop_epoch_limit, EcFamily, RandomPolicy};

/// A matching policy. One instance drives one replication.
pub trait Policy: Send {
    fn name(&self) -> String;

    /// The matching for step `t`, given everything learned before `t`.
    fn next_matching(&mut self, t: usize, knowledge: &KnowledgeState, rng: &mut SimRng) -> Result<Matching>;

    /// True once the policy would repeat the same kind of matching forever
    /// and no further information can be gained.
    fn is_absorbed(&self, knowledge: &KnowledgeState) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicySpec {
    Random,
    Ec,
    KstopEc,
    EcL { j: u32 },
    AllPairs,
    OneChain,
    TwoChain,
    Conservative,
}

impl PolicySpec {
    pub fn model(self) -> FeedbackModel {
        match self {
            PolicySpec::OneChain | PolicySpec::TwoChain | PolicySpec::Conservative => FeedbackModel::StrongestLink,
            _ => FeedbackModel::WeakestLink,
        }
    }

    pub fn weakest() -> Vec<PolicySpec> {
        vec![PolicySpec::Random, PolicySpec::Ec, PolicySpec::KstopEc, PolicySpec::EcL { j: 1 }, PolicySpec::AllPairs]
    }

    pub fn strongest() -> Vec<PolicySpec> {
        vec![PolicySpec::OneChain, PolicySpec::TwoChain, PolicySpec::Conservative]
    }

    /// Parses a bare policy name, taking `j` from the separate parameter
    /// when the name is `ec-l`.
    pub fn parse_with_j(name: &str, j: Option<u32>) -> Result<Self> {
        match (name.parse::<PolicySpec>()?, j) {
            (PolicySpec::EcL { .. }, Some(j)) if !name.contains(':') => Ok(PolicySpec::EcL { j }),
            (spec, _) => Ok(spec),
        }
    }

    pub fn build(self, model: FeedbackModel, n: usize, options: &PolicyOptions) -> Result<Box<dyn Policy>> {
        if model != self.model() {
            return Err(Error::ModelMismatch { policy: self.to_string(), model: model.to_string() });
        }
        let limit = options.epoch_limit.unwrap_or_else(|| kstop_epoch_limit(n));
        Ok(match self {
            PolicySpec::Random => Box::new(RandomPolicy::new()),
            PolicySpec::Ec => Box::new(EcFamily::new(self.to_string(), 0, None)),
            PolicySpec::KstopEc => Box::new(EcFamily::new(self.to_string(), 0, Some(limit.max(1)))),
            PolicySpec::EcL { j } => Box::new(EcFamily::new(self.to_string(), j, Some(limit.max(j + 1)))),
            PolicySpec::AllPairs => Box::new(EcFamily::new(self.to_string(), 0, Some(1))),
            PolicySpec::OneChain => Box::new(ChainPolicy::new(false, options.terminal_rematch)),
            PolicySpec::TwoChain => Box::new(ChainPolicy::new(true, options.terminal_rematch)),
            PolicySpec::Conservative => Box::new(ConservativePolicy::new()),
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Random => f.write_str("random"),
            PolicySpec::Ec => f.write_str("ec"),
            PolicySpec::KstopEc => f.write_str("kstop-ec"),
            PolicySpec::EcL { j } => write!(f, "ec-l:{j}"),
            PolicySpec::AllPairs => f.write_str("all-pairs"),
            PolicySpec::OneChain => f.write_str("one-chain"),
            PolicySpec::TwoChain => f.write_str("two-chain"),
            PolicySpec::Conservative => f.write_str("conservative"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    /// Accepts the plain names plus `ec-l:<j>`; a bare `ec-l` means `j = 1`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "random" => PolicySpec::Random,
            "ec" => PolicySpec::Ec,
            "kstop-ec" => PolicySpec::KstopEc,
            "ec-l" => PolicySpec::EcL { j: 1 },
            "all-pairs" => PolicySpec::AllPairs,
            "one-chain" => PolicySpec::OneChain,
            "two-chain" => PolicySpec::TwoChain,
            "conservative" => PolicySpec::Conservative,
            other => match other.strip_prefix("ec-l:").map(str::parse::<u32>) {
                Some(Ok(j)) => PolicySpec::EcL { j },
                _ => return Err(Error::UnknownPolicy(s.to_string())),
            },
        })
    }
}

impl serde::Serialize for PolicySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for PolicySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyOptions {
    /// Overrides the k-stopped epoch limit.
    pub epoch_limit: Option<u32>,
    /// Lets chain policies reuse retired low pairs after settlement.
    pub terminal_rematch: bool,
}

/// Uniform random perfect matching on `ids`.
pub fn random_matching(ids: &[WorkerId], rng: &mut SimRng) -> Result<Matching> {
    if !ids.len().is_multiple_of(2) {
        return Err(Error::OddPopulation(ids.len()));
    }
    let mut v = ids.to_vec();
    v.shuffle(rng);
    Ok(Matching::new(v.chunks_exact(2).map(|c| (c[0], c[1])).collect()))
}

/// Pairs of identified workers plus an optional unpaired low.
pub type WrapperPairs = (Vec<(WorkerId, WorkerId)>, Option<WorkerId>);

/// Pairs identified workers among themselves: highs with highs and lows with
/// lows, in id order. An odd low is returned unpaired for the caller to place.
pub fn nonlearning_wrapper(known_high: &[WorkerId], known_low: &[WorkerId]) -> Result<WrapperPairs> {
    if !known_high.len().is_multiple_of(2) {
        return Err(Error::InvariantViolation(format!("{} known high workers cannot pair up", known_high.len())));
    }
    let mut kh = known_high.to_vec();
    let mut kl = known_low.to_vec();
    kh.sort_unstable();
    kl.sort_unstable();
    let mut pairs: Vec<_> = kh.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    pairs.extend(kl.chunks_exact(2).map(|c| (c[0], c[1])));
    let odd = if kl.len() % 2 == 1 { kl.last().copied() } else { None };
    Ok((pairs, odd))
}

/// Completes a partial matching. Workers the policy left free are grouped by
/// status in id order; highs pair with highs and lows with lows. When the free
/// highs are odd and free unknowns exist, one high is paired with an unknown.
/// Remaining workers of each class pair consecutively and the at most two
/// leftovers pair with each other.
pub(crate) fn assemble(mut pairs: Vec<(WorkerId, WorkerId)>, knowledge: &KnowledgeState) -> Matching {
    let n = knowledge.n();
    let mut used = vec![false; n];
    for &(a, b) in &pairs {
        used[a as usize] = true;
        used[b as usize] = true;
    }
    let mut kh = Vec::new();
    let mut kl = Vec::new();
    let mut unk = Vec::new();
    for (w, &s) in knowledge.statuses().iter().enumerate() {
        if used[w] {
            continue;
        }
        match s {
            Status::High => kh.push(w as WorkerId),
            Status::Low => kl.push(w as WorkerId),
            Status::Unknown => unk.push(w as WorkerId),
        }
    }
    let mut unk = &unk[..];
    if kh.len() % 2 == 1 && !unk.is_empty() {
        pairs.push((kh.pop().unwrap(), unk[0]));
        unk = &unk[1..];
    }
    let mut rest = Vec::with_capacity(2);
    for class in [&kh[..], &kl[..], unk] {
        pairs.extend(class.chunks_exact(2).map(|c| (c[0], c[1])));
        if class.len() % 2 == 1 {
            rest.push(class[class.len() - 1]);
        }
    }
    pairs.extend(rest.chunks_exact(2).map(|c| (c[0], c[1])));
    Matching::new(pairs)
}

/// Absorption test shared by the weakest-link policies: every untested pair
/// of unknown workers is exhausted and no known high is waiting to probe one.
pub(crate) fn weakest_absorbed(knowledge: &KnowledgeState) -> bool {
    knowledge.unknown_graph_is_complete() && !(knowledge.n_known_high() % 2 == 1 && knowledge.n_unknown() > 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_matching, Outcome};
    use crate::rng::stream;

    #[test]
    fn names_round_trip() {
        for spec in PolicySpec::weakest().into_iter().chain(PolicySpec::strongest()) {
            assert_eq!(spec.to_string().parse::<PolicySpec>().unwrap(), spec);
        }
        assert_eq!("ec-l".parse::<PolicySpec>().unwrap(), PolicySpec::EcL { j: 1 });
        assert_eq!(PolicySpec::parse_with_j("ec-l", Some(3)).unwrap(), PolicySpec::EcL { j: 3 });
        assert!(matches!("greedy".parse::<PolicySpec>(), Err(Error::UnknownPolicy(_))));
    }

    #[test]
    fn model_mismatch_is_rejected() {
        let opts = PolicyOptions::default();
        assert!(matches!(
            PolicySpec::OneChain.build(FeedbackModel::WeakestLink, 8, &opts),
            Err(Error::ModelMismatch { .. })
        ));
    }

    #[test]
    fn random_matching_small_cases() {
        let mut rng = stream(3);
        assert_eq!(random_matching(&[4, 9], &mut rng).unwrap().canonical(), vec![(4, 9)]);
        assert!(random_matching(&[1, 2, 3], &mut rng).is_err());
        let a = random_matching(&[0, 1, 2, 3], &mut stream(11)).unwrap();
        let b = random_matching(&[0, 1, 2, 3], &mut stream(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_matching_is_uniform_on_four() {
        let mut rng = stream(2024);
        let draws = 30_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            let m = random_matching(&[0, 1, 2, 3], &mut rng).unwrap();
            *counts.entry(m.canonical()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 3);
        let expected = draws as f64 / 3.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 2 degrees of freedom, 0.999 quantile
        assert!(chi2 < 13.82, "chi-square {chi2}");
        for &c in counts.values() {
            assert!((c as f64 / draws as f64 - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn wrapper_examples() {
        assert_eq!(nonlearning_wrapper(&[1, 5], &[2, 3]).unwrap(), (vec![(1, 5), (2, 3)], None));
        assert_eq!(nonlearning_wrapper(&[], &[2, 3, 4, 7]).unwrap(), (vec![(2, 3), (4, 7)], None));
        assert_eq!(nonlearning_wrapper(&[1, 5], &[2]).unwrap(), (vec![(1, 5)], Some(2)));
        assert!(matches!(nonlearning_wrapper(&[1], &[]), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn odd_low_is_absorbed_by_leftover_pairing() {
        // KH = {1, 5}, KL = {2, 3}, unknown {0, 4} joined by a tested edge.
        let mut k = KnowledgeState::new(FeedbackModel::WeakestLink, 6);
        k.update(&[Outcome::new(1, 5, 1), Outcome::new(0, 3, 0), Outcome::new(2, 4, 0)]).unwrap();
        k.update(&[Outcome::new(1, 2, 0), Outcome::new(5, 3, 0), Outcome::new(0, 4, 0)]).unwrap();
        assert_eq!(k.known_low(), vec![2, 3]);
        let m = assemble(vec![(0, 4)], &k);
        assert_eq!(m.canonical(), vec![(0, 4), (1, 5), (2, 3)]);
        // a single free low pairs with the single free unknown
        let m = assemble(vec![(2, 4)], &k);
        assert_eq!(m.canonical(), vec![(0, 3), (1, 5), (2, 4)]);
        let m = assemble(vec![(0, 2)], &k);
        assert_eq!(m.canonical(), vec![(0, 2), (1, 5), (3, 4)]);
        assert!(validate_matching(&m, 6).is_ok());
    }
}
