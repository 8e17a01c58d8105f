//! Exact and proxy regret accounting.
//!
//! Per-step regret is kept as the integer shortfall `opt - realized`; it is
//! divided by `N` only when reported, so totals never depend on summation
//! order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{optimal_step_payoff, FeedbackModel, Matching, TypeAssignment, HIGH};

/// Counts for one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub shortfall: u64,
    pub count_01: u64,
    pub count_11: u64,
    pub count_00: u64,
}

impl StepRecord {
    pub fn of(matching: &Matching, types: &TypeAssignment, model: FeedbackModel, opt: u64) -> Self {
        let mut rec = StepRecord::default();
        let mut realized = 0u64;
        for &(a, b) in &matching.pairs {
            let (ta, tb) = (types.get(a), types.get(b));
            realized += model.payoff(ta, tb) as u64;
            match ta + tb {
                0 => rec.count_00 += 1,
                1 => rec.count_01 += 1,
                _ => rec.count_11 += 1,
            }
        }
        rec.shortfall = opt.saturating_sub(realized);
        rec
    }
}

/// `(optimal payoff - realized payoff) / N` for one step.
pub fn exact_step_regret(types: &TypeAssignment, matching: &Matching, model: FeedbackModel) -> f64 {
    let opt = optimal_step_payoff(model, types);
    let realized: u64 = matching.pairs.iter().map(|&(a, b)| model.payoff(types.get(a), types.get(b)) as u64).sum();
    (opt as f64 - realized as f64) / types.n() as f64
}

/// Totals accumulated over an accounting horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub shortfall: u64,
    pub count_01: u64,
    pub count_11: u64,
    pub count_00: u64,
}

impl Totals {
    pub fn add(&mut self, r: &StepRecord) {
        self.shortfall += r.shortfall;
        self.count_01 += r.count_01;
        self.count_11 += r.count_11;
        self.count_00 += r.count_00;
    }
}

/// Per-step history of one run.
#[derive(Debug, Clone)]
pub struct RegretLedger {
    model: FeedbackModel,
    n: usize,
    opt: u64,
    steps: Vec<StepRecord>,
    tau: Option<usize>,
}

impl RegretLedger {
    pub fn new(model: FeedbackModel, types: &TypeAssignment) -> Self {
        Self { model, n: types.n(), opt: optimal_step_payoff(model, types), steps: Vec::new(), tau: None }
    }

    pub fn record(&mut self, matching: &Matching, types: &TypeAssignment) -> StepRecord {
        let rec = StepRecord::of(matching, types, self.model, self.opt);
        self.steps.push(rec);
        rec
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn optimum(&self) -> u64 {
        self.opt
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Fixes tau. Later calls cannot move it.
    pub fn set_tau(&mut self, tau: usize) {
        if self.tau.is_none() {
            self.tau = Some(tau);
        }
    }

    pub fn tau(&self) -> Option<usize> {
        self.tau
    }

    /// Totals over steps `0..horizon`.
    pub fn totals(&self, horizon: usize) -> Totals {
        let mut t = Totals::default();
        for r in &self.steps[..horizon.min(self.steps.len())] {
            t.add(r);
        }
        t
    }

    /// Step index of the last positive shortfall, if any.
    pub fn last_positive(&self) -> Option<usize> {
        self.steps.iter().rposition(|r| r.shortfall > 0)
    }
}

/// First step from which no regret is incurred, given per-step shortfalls
/// and whether the run ended in a zero-regret absorbing configuration.
pub fn detect_tau(shortfalls: &[u64], absorbed_at_zero: bool) -> Option<usize> {
    if !absorbed_at_zero {
        return None;
    }
    Some(shortfalls.iter().rposition(|&s| s > 0).map_or(0, |i| i + 1))
}

/// Weakest-link proxy: high-low matches over `2N`.
pub fn proxy_weak(model: FeedbackModel, count_01: u64, n: usize) -> Result<f64> {
    if model != FeedbackModel::WeakestLink {
        return Err(Error::ModelMismatch { policy: "proxy_weak".into(), model: model.to_string() });
    }
    Ok(count_01 as f64 / (2.0 * n as f64))
}

/// Strongest-link proxy: low-low matches over `N` when `p > 0.5`, high-high
/// matches over `N` otherwise.
pub fn proxy_strong(model: FeedbackModel, count_00: u64, count_11: u64, n: usize, p: f64) -> Result<f64> {
    if model != FeedbackModel::StrongestLink {
        return Err(Error::ModelMismatch { policy: "proxy_strong".into(), model: model.to_string() });
    }
    let c = if p > 0.5 { count_00 } else { count_11 };
    Ok(c as f64 / n as f64)
}

pub fn proxy(model: FeedbackModel, totals: &Totals, n: usize, p: f64) -> f64 {
    match model {
        FeedbackModel::WeakestLink => totals.count_01 as f64 / (2.0 * n as f64),
        FeedbackModel::StrongestLink => {
            let c = if p > 0.5 { totals.count_00 } else { totals.count_11 };
            c as f64 / n as f64
        }
    }
}

/// Minimum number of high-high pairs any perfect matching must contain.
pub fn unavoidable_high_pairs(types: &TypeAssignment) -> u64 {
    let n = types.n() as u64;
    let n1 = types.theta().iter().filter(|&&t| t == HIGH).count() as u64;
    n1.saturating_sub(n / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeedbackModel::{StrongestLink, WeakestLink};
    use crate::oracle::brute_optimal_partition;
    use proptest::prelude::*;

    fn ta(v: &[u8]) -> TypeAssignment {
        TypeAssignment::new(v.to_vec()).unwrap()
    }

    #[test]
    fn exact_step_regret_examples() {
        let t = ta(&[1, 1, 0, 0]);
        assert_eq!(exact_step_regret(&t, &Matching::new(vec![(0, 1), (2, 3)]), WeakestLink), 0.0);
        assert_eq!(exact_step_regret(&t, &Matching::new(vec![(0, 2), (1, 3)]), WeakestLink), 0.25);
        assert_eq!(exact_step_regret(&t, &Matching::new(vec![(0, 1), (2, 3)]), StrongestLink), 0.25);
    }

    #[test]
    fn proxy_examples() {
        assert_eq!(proxy_weak(WeakestLink, 0, 4).unwrap(), 0.0);
        assert_eq!(proxy_weak(WeakestLink, 6, 4).unwrap(), 0.75);
        assert!(matches!(proxy_weak(StrongestLink, 1, 4), Err(Error::ModelMismatch { .. })));
        assert!((proxy_strong(StrongestLink, 3, 0, 100, 0.7).unwrap() - 0.03).abs() < 1e-15);
        assert!((proxy_strong(StrongestLink, 0, 5, 100, 0.3).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(proxy_strong(StrongestLink, 9, 2, 100, 0.5).unwrap(), 0.02);
        assert!(proxy_strong(WeakestLink, 0, 0, 4, 0.5).is_err());
    }

    #[test]
    fn tau_examples() {
        assert_eq!(detect_tau(&[2, 1, 0, 0, 3, 0, 0, 0], true), Some(5));
        assert_eq!(detect_tau(&[0, 0, 0], true), Some(0));
        assert_eq!(detect_tau(&[1, 1, 1], false), None);
    }

    #[test]
    fn tau_is_final() {
        let t = ta(&[1, 1]);
        let mut l = RegretLedger::new(WeakestLink, &t);
        l.set_tau(3);
        l.set_tau(7);
        assert_eq!(l.tau(), Some(3));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<u8>, Vec<u32>)> {
        (1usize..=6).prop_flat_map(|h| {
            let n = 2 * h;
            (proptest::collection::vec(0u8..=1, n), Just((0..n as u32).collect::<Vec<_>>()).prop_shuffle())
        })
    }

    proptest! {
        #[test]
        fn weakest_even_highs_regret_is_half_the_mixed_pairs((theta, perm) in arb_case()) {
            let t = TypeAssignment::new(theta).unwrap();
            prop_assume!(t.n1().is_multiple_of(2));
            let m = Matching::new(perm.chunks(2).map(|c| (c[0], c[1])).collect());
            let rec = StepRecord::of(&m, &t, WeakestLink, optimal_step_payoff(WeakestLink, &t));
            prop_assert_eq!(2 * rec.shortfall, rec.count_01);
        }

        #[test]
        fn strongest_regret_is_excess_high_pairs_below_half((theta, perm) in arb_case()) {
            let t = TypeAssignment::new(theta).unwrap();
            prop_assume!(2 * t.n1() < t.n());
            let m = Matching::new(perm.chunks(2).map(|c| (c[0], c[1])).collect());
            let rec = StepRecord::of(&m, &t, StrongestLink, optimal_step_payoff(StrongestLink, &t));
            prop_assert_eq!(rec.shortfall, rec.count_11 - unavoidable_high_pairs(&t));
        }

        #[test]
        fn shortfall_is_bounded_by_optimum((theta, perm) in arb_case(), strongest in any::<bool>()) {
            let model = if strongest { StrongestLink } else { WeakestLink };
            let t = TypeAssignment::new(theta).unwrap();
            let m = Matching::new(perm.chunks(2).map(|c| (c[0], c[1])).collect());
            let opt = optimal_step_payoff(model, &t);
            let rec = StepRecord::of(&m, &t, model, opt);
            prop_assert!(rec.shortfall <= opt);
            if t.n() <= crate::oracle::PARTITION_CAP {
                prop_assert_eq!(opt, brute_optimal_partition(&t, model).unwrap());
            }
        }
    }
}
