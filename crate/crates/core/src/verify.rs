//! The oracle suite behind `teamlearn verify`.

use num_traits::ToPrimitive;

use crate::error::Result;
use crate::experiments::summarize;
use crate::model::{optimal_step_payoff, sample_types, FeedbackModel, TypeAssignment};
use crate::oracle::{
    brute_optimal_partition, clique_high_probability, closed_forms, event_probabilities, events_sum_to_one,
    exact_expected_regret, first_round_composition, rational, sample_ec_cliques, tiny_run_regret, BinomialRecursion,
    BrutePosterior,
};
use crate::policy::{PolicyOptions, PolicySpec};
use crate::rng::{derive_seed, stream};
use crate::sim::Simulation;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VerifyOptions {
    pub quick: bool,
    /// Scores matches with the opposite payoff while the learner keeps the
    /// declared one. Every posterior check should then fail.
    pub swap_feedback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub observed: String,
    pub expected: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, observed: impl Into<String>, expected: impl Into<String>) -> Self {
        Self { name, passed, observed: observed.into(), expected: expected.into() }
    }
}

/// Graph posteriors against brute-force posteriors at every step of seeded
/// runs of every policy. Returns the worst absolute gap, or the first error.
pub fn posterior_gap(spec: PolicySpec, n: usize, p: f64, seed: u64, swap_feedback: bool) -> Result<f64> {
    let model = spec.model();
    let types = sample_types(n, p, derive_seed(seed, 1))?;
    let policy = spec.build(model, n, &PolicyOptions::default())?;
    let mut sim = Simulation::new(model, types, policy, derive_seed(seed, 2), 4 * n);
    if swap_feedback {
        let other = match model {
            FeedbackModel::WeakestLink => FeedbackModel::StrongestLink,
            FeedbackModel::StrongestLink => FeedbackModel::WeakestLink,
        };
        sim = sim.with_environment_model(other);
    }
    let mut brute = BrutePosterior::new(n, model, p)?;
    let mut worst = 0.0f64;
    let mut compare = |k: &crate::knowledge::KnowledgeState, b: &BrutePosterior| -> Result<()> {
        let graph = k.marginals(p)?;
        for (g, e) in graph.iter().zip(b.marginals()?) {
            let e = e.to_f64().unwrap_or(f64::NAN);
            let gap = (g - e).abs();
            worst = if gap.is_nan() { f64::INFINITY } else { worst.max(gap) };
        }
        Ok(())
    };
    compare(sim.knowledge(), &brute)?;
    while let Some(ev) = sim.step()? {
        brute.observe(&ev.outcomes);
        compare(sim.knowledge(), &brute)?;
    }
    Ok(worst)
}

pub fn posterior_check(opts: VerifyOptions) -> CheckResult {
    let runs = if opts.quick { 20 } else { 100 };
    let ps = [0.3, 0.5, 0.7];
    let mut worst = 0.0f64;
    let mut failure = None;
    'outer: for n in [6usize, 8] {
        for spec in PolicySpec::weakest().into_iter().chain(PolicySpec::strongest()) {
            for s in 0..runs {
                let p = ps[s as usize % ps.len()];
                match posterior_gap(spec, n, p, derive_seed(n as u64, s), opts.swap_feedback) {
                    Ok(g) => worst = worst.max(g),
                    Err(e) => {
                        failure = Some(format!("{spec} n={n} run {s}: {e}"));
                        break 'outer;
                    }
                }
            }
        }
    }
    match failure {
        Some(msg) => CheckResult::new("posterior-equivalence", false, msg, "max gap <= 1e-12"),
        None => CheckResult::new(
            "posterior-equivalence",
            worst <= 1e-12,
            format!("max gap {worst:.3e}"),
            "max gap <= 1e-12",
        ),
    }
}

pub fn partition_check(opts: VerifyOptions) -> CheckResult {
    let per_n = if opts.quick { 200 } else { 1000 };
    let mut rng = stream(0x5eed);
    let mut bad = 0;
    let mut total = 0;
    for n in [4usize, 6, 8, 10] {
        for _ in 0..per_n {
            let t = TypeAssignment::from_mask(n, rng.random_range(0..1u64 << n)).expect("valid mask");
            for model in [FeedbackModel::WeakestLink, FeedbackModel::StrongestLink] {
                total += 1;
                if brute_optimal_partition(&t, model).ok() != Some(optimal_step_payoff(model, &t)) {
                    bad += 1;
                }
            }
        }
    }
    CheckResult::new("optimal-partition", bad == 0, format!("{bad} of {total} disagree"), "0 disagree")
}

pub fn clique_check(opts: VerifyOptions) -> CheckResult {
    let target = if opts.quick { 20_000 } else { 100_000 };
    let mut obs = Vec::new();
    let mut ok = true;
    for (m, p, n) in [(2usize, 0.5, 4096usize), (4, 0.2, 8192), (8, 0.8, 16384)] {
        let expected = clique_high_probability(m, p);
        match sample_ec_cliques(m, p, n, target, derive_seed(m as u64, 7)) {
            Ok(t) => {
                let z = (t.frequency() - expected) / t.standard_error(expected);
                ok &= z.abs() <= 3.0;
                obs.push(format!("m={m},p={p}: {:.4} vs {:.4} (z={z:.2})", t.frequency(), expected));
            }
            Err(e) => {
                ok = false;
                obs.push(format!("m={m}: {e}"));
            }
        }
    }
    CheckResult::new("clique-probability", ok, obs.join("; "), "|z| <= 3")
}

pub fn recursion_check(opts: VerifyOptions) -> CheckResult {
    let reps = if opts.quick { 20_000 } else { 100_000 };
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    for p in [0.5, 0.8] {
        let rows = BinomialRecursion::for_cliques(1024, p, 5).check(reps, derive_seed(1024, (p * 10.0) as u64));
        for r in rows {
            ok &= r.holds(3.0);
            worst = worst.max((r.mean - r.mean_bound) / r.mean_se.max(1e-12));
            worst = worst.max((r.second - r.second_bound) / r.second_se.max(1e-12));
        }
    }
    CheckResult::new("binomial-recursion", ok, format!("max excess {worst:.2} SE"), "<= 3 SE above bound")
}

pub fn closed_form_check() -> CheckResult {
    let exact = events_sum_to_one(101);
    let float_ok = (0..=100).all(|i| {
        let c = closed_forms(i as f64 / 100.0);
        (c.events.iter().sum::<f64>() - 1.0).abs() < 1e-12
    });
    let half = rational(0.5).map(|p| event_probabilities(&p)).ok();
    CheckResult::new(
        "closed-forms",
        exact && float_ok && half.is_some(),
        format!("exact sums {exact}, float sums {float_ok}"),
        "event probabilities sum to 1",
    )
}

pub fn first_round_check(opts: VerifyOptions) -> CheckResult {
    let reps = if opts.quick { 50 } else { 200 };
    let mut ok = true;
    let mut obs = Vec::new();
    for p in [0.3, 0.5, 0.7] {
        let fr: Vec<f64> = (0..reps)
            .filter_map(|i| first_round_composition(2000, p, derive_seed(2000, i)).ok())
            .map(|f| f.high_high as f64 / f.u_pairs as f64)
            .collect();
        let s = summarize(&fr);
        let r = closed_forms(p).r;
        let z = (s.mean_or_nan() - r) / s.se.unwrap_or(f64::NAN);
        ok &= z.abs() <= 3.0;
        obs.push(format!("p={p}: {:.4} vs {r:.4}", s.mean_or_nan()));
    }
    CheckResult::new("first-round-composition", ok, obs.join("; "), "within 3 SE of p/(2-p)")
}

pub fn expected_regret_check(opts: VerifyOptions) -> CheckResult {
    let reps = if opts.quick { 10_000 } else { 100_000 };
    let (n, p, seed) = (4usize, 0.5, 17u64);
    let spec = PolicySpec::KstopEc;
    let opts_p = PolicyOptions::default();
    let exact = match exact_expected_regret(spec, &opts_p, n, p, seed) {
        Ok(v) => v.to_f64().unwrap_or(f64::NAN),
        Err(e) => return CheckResult::new("expected-regret", false, e.to_string(), "exact value"),
    };
    let mut rng = stream(99);
    let mut vals = Vec::with_capacity(reps);
    for _ in 0..reps {
        let theta: Vec<u8> = (0..n).map(|_| rng.random_bool(p) as u8).collect();
        let types = TypeAssignment::new(theta).expect("valid types");
        match tiny_run_regret(spec, &opts_p, types, seed) {
            Ok(v) => vals.push(v.to_f64().unwrap_or(f64::NAN)),
            Err(e) => return CheckResult::new("expected-regret", false, e.to_string(), "absorbing runs"),
        }
    }
    let s = summarize(&vals);
    let z = (s.mean_or_nan() - exact) / s.se.unwrap_or(f64::NAN);
    CheckResult::new(
        "expected-regret",
        z.abs() <= 3.0,
        format!("Monte Carlo {:.5} vs exact {exact:.5} (z={z:.2})", s.mean_or_nan()),
        "|z| <= 3",
    )
}

pub fn run_suite(opts: VerifyOptions) -> Vec<CheckResult> {
    vec![
        posterior_check(opts),
        partition_check(opts),
        clique_check(opts),
        recursion_check(opts),
        closed_form_check(),
        first_round_check(opts),
        expected_regret_check(opts),
    ]
}

pub fn render(results: &[CheckResult]) -> String {
    let mut s = format!("{:<26} {:<6} {}\n", "check", "status", "observed (expected)");
    for r in results {
        s.push_str(&format!(
            "{:<26} {:<6} {} ({})\n",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.observed,
            r.expected
        ));
    }
    s
}
