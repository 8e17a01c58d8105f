//! Brute-force and closed-form reference values.
//!
//! Everything here is independent of the incremental machinery it checks:
//! posteriors come from enumerating all type assignments, optima from
//! enumerating all perfect matchings, and exact quantities use rational
//! arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::knowledge::KnowledgeState;
use crate::model::{sample_types, FeedbackModel, Outcome, TypeAssignment, WorkerType};
use crate::policy::{PolicyOptions, PolicySpec};
use crate::rng::{derive_seed, stream, POLICY_STREAM, TYPES_STREAM};
use crate::sim::Simulation;

pub const POSTERIOR_CAP: usize = 12;
pub const PARTITION_CAP: usize = 10;
pub const EXPECTED_REGRET_CAP: usize = 8;

/// Exact rational value of `p`.
pub fn rational(p: f64) -> Result<BigRational> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    BigRational::from_float(p).ok_or(Error::InvalidProbability(p))
}

fn ratio(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

/// Prior weight `p^k (1-p)^(n-k)` for every `k` in `0..=n`.
fn prior_weights(n: usize, p: &BigRational) -> Vec<BigRational> {
    let q = BigRational::one() - p;
    (0..=n)
        .map(|k| {
            let mut w = BigRational::one();
            for _ in 0..k {
                w *= p;
            }
            for _ in k..n {
                w *= &q;
            }
            w
        })
        .collect()
}

/// Posterior over all `2^n` assignments, narrowed one outcome at a time.
#[derive(Debug, Clone)]
pub struct BrutePosterior {
    n: usize,
    model: FeedbackModel,
    alive: Vec<u32>,
    weights: Vec<BigRational>,
}

impl BrutePosterior {
    pub fn new(n: usize, model: FeedbackModel, p: f64) -> Result<Self> {
        if n > POSTERIOR_CAP {
            return Err(Error::SizeCapExceeded { size: n, cap: POSTERIOR_CAP });
        }
        let p = rational(p)?;
        Ok(Self { n, model, alive: (0..1u32 << n).collect(), weights: prior_weights(n, &p) })
    }

    pub fn observe(&mut self, outcomes: &[Outcome]) {
        let model = self.model;
        self.alive.retain(|&mask| {
            outcomes.iter().all(|o| {
                let ti = ((mask >> o.pair.0) & 1) as WorkerType;
                let tj = ((mask >> o.pair.1) & 1) as WorkerType;
                model.payoff(ti, tj) == o.score
            })
        });
    }

    pub fn consistent_assignments(&self) -> usize {
        self.alive.len()
    }

    /// Exact probability that each worker is high.
    pub fn marginals(&self) -> Result<Vec<BigRational>> {
        let mut total = BigRational::zero();
        let mut high = vec![BigRational::zero(); self.n];
        for &mask in &self.alive {
            let w = &self.weights[mask.count_ones() as usize];
            total += w;
            for (i, h) in high.iter_mut().enumerate() {
                if mask & (1 << i) != 0 {
                    *h += w;
                }
            }
        }
        if total.is_zero() {
            return Err(Error::InvariantViolation("no type assignment is consistent with the history".into()));
        }
        Ok(high.into_iter().map(|h| h / &total).collect())
    }
}

/// Exact marginals given every outcome observed so far.
pub fn brute_posterior(history: &[Vec<Outcome>], n: usize, model: FeedbackModel, p: f64) -> Result<Vec<BigRational>> {
    let mut b = BrutePosterior::new(n, model, p)?;
    for round in history {
        b.observe(round);
    }
    b.marginals()
}

/// Best single-step payoff over every perfect matching.
pub fn brute_optimal_partition(types: &TypeAssignment, model: FeedbackModel) -> Result<u64> {
    let n = types.n();
    if n > PARTITION_CAP {
        return Err(Error::SizeCapExceeded { size: n, cap: PARTITION_CAP });
    }
    fn best(free: u32, theta: &[WorkerType], model: FeedbackModel) -> u64 {
        if free == 0 {
            return 0;
        }
        let i = free.trailing_zeros();
        let rest = free & !(1 << i);
        let mut out = 0;
        let mut m = rest;
        while m != 0 {
            let j = m.trailing_zeros();
            m &= m - 1;
            let v = model.payoff(theta[i as usize], theta[j as usize]) as u64 + best(rest & !(1 << j), theta, model);
            out = out.max(v);
        }
        out
    }
    Ok(best(((1u64 << n) - 1) as u32, types.theta(), model))
}

/// Horizon used when running tiny instances to absorption.
fn tiny_horizon(n: usize) -> usize {
    (4 * n).max(64)
}

/// Cumulative regret of one tiny run with a fixed policy seed.
pub fn tiny_run_regret(
    spec: PolicySpec,
    options: &PolicyOptions,
    types: TypeAssignment,
    seed: u64,
) -> Result<BigRational> {
    let n = types.n();
    let policy = spec.build(spec.model(), n, options)?;
    let out = Simulation::new(spec.model(), types, policy, seed, tiny_horizon(n)).run(0.5)?;
    if out.tau.is_none() {
        return Err(Error::NonAbsorbing(out.horizon));
    }
    Ok(BigRational::new(BigInt::from(out.totals.shortfall), BigInt::from(n as u64)))
}

/// Expected cumulative per-worker regret of a policy with a fixed seed,
/// summed exactly over all `2^n` assignments.
pub fn exact_expected_regret(
    spec: PolicySpec,
    options: &PolicyOptions,
    n: usize,
    p: f64,
    seed: u64,
) -> Result<BigRational> {
    if n > EXPECTED_REGRET_CAP {
        return Err(Error::SizeCapExceeded { size: n, cap: EXPECTED_REGRET_CAP });
    }
    let weights = prior_weights(n, &rational(p)?);
    let mut total = BigRational::zero();
    for mask in 0..1u64 << n {
        let w = &weights[mask.count_ones() as usize];
        if w.is_zero() {
            continue;
        }
        let types = TypeAssignment::from_mask(n, mask)?;
        total += tiny_run_regret(spec, options, types, seed)? * w;
    }
    Ok(total)
}

/// `mp / (mp + 1 - p)`: chance that a size-`m` EC clique holds a high worker.
pub fn clique_high_probability(m: usize, p: f64) -> f64 {
    let mp = m as f64 * p;
    if mp == 0.0 {
        return 0.0;
    }
    mp / (mp + 1.0 - p)
}

/// Observed clique counts at an EC epoch boundary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CliqueTally {
    pub cliques: u64,
    pub with_high: u64,
}

impl CliqueTally {
    pub fn frequency(&self) -> f64 {
        self.with_high as f64 / self.cliques as f64
    }

    pub fn standard_error(&self, prob: f64) -> f64 {
        (prob * (1.0 - prob) / self.cliques as f64).sqrt()
    }
}

/// Runs Exponential Cliques on `n` workers until the start of the epoch in
/// which cliques have size `m`, and counts the regular cliques of that size
/// and those holding a high worker. Repeats with fresh seeds until at least
/// `target` cliques are seen.
pub fn sample_ec_cliques(m: usize, p: f64, n: usize, target: u64, base_seed: u64) -> Result<CliqueTally> {
    if !m.is_power_of_two() || m < 2 {
        return Err(Error::InvalidConfig(format!("clique size {m} is not a power of two >= 2")));
    }
    let mut tally = CliqueTally::default();
    let mut run = 0u64;
    while tally.cliques < target {
        let seed = derive_seed(base_seed, run);
        run += 1;
        let types = sample_types(n, p, derive_seed(seed, TYPES_STREAM))?;
        let policy = PolicySpec::Ec.build(FeedbackModel::WeakestLink, n, &PolicyOptions::default())?;
        let mut sim =
            Simulation::new(FeedbackModel::WeakestLink, types, policy, derive_seed(seed, POLICY_STREAM), 4 * n);
        for _ in 0..m - 1 {
            if sim.step()?.is_none() {
                break;
            }
        }
        if sim.t() != m - 1 {
            continue;
        }
        for c in sim.knowledge().clique_partition()? {
            if c.len() == m {
                tally.cliques += 1;
                if c.iter().any(|&w| sim.types().get(w) == 1) {
                    tally.with_high += 1;
                }
            }
        }
        if run > 1_000_000 {
            return Err(Error::InvalidConfig("clique sampling made no progress".into()));
        }
    }
    Ok(tally)
}

/// The recursion `beta_0 = N`, `beta_t ~ Binomial(floor(beta_{t-1} / 2), lambda_t)`.
#[derive(Debug, Clone)]
pub struct BinomialRecursion {
    pub n0: u64,
    pub lambdas: Vec<f64>,
}

/// Moments of `beta_t` against their bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub t: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub mean_bound: f64,
    pub second: f64,
    pub second_se: f64,
    pub second_bound: f64,
}

impl MomentRow {
    pub fn holds(&self, z: f64) -> bool {
        self.mean <= self.mean_bound + z * self.mean_se + 1e-9
            && self.second <= self.second_bound + z * self.second_se + 1e-9
    }
}

impl BinomialRecursion {
    /// `lambda_t = 1 - q_t^2` with `q_t = 2^t p / (2^t p + 1 - p)`, `t = 1..=steps`.
    pub fn for_cliques(n0: u64, p: f64, steps: usize) -> Self {
        let lambdas = (1..=steps)
            .map(|t| {
                let q = clique_high_probability(1 << t, p);
                1.0 - q * q
            })
            .collect();
        Self { n0, lambdas }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<u64> {
        let mut beta = self.n0;
        let mut out = Vec::with_capacity(self.lambdas.len());
        for &lambda in &self.lambdas {
            let trials = beta / 2;
            beta = if trials == 0 || lambda <= 0.0 {
                0
            } else if lambda >= 1.0 {
                trials
            } else {
                Binomial::new(trials, lambda).expect("valid binomial").sample(rng)
            };
            out.push(beta);
        }
        out
    }

    /// Monte Carlo moments and the bounds `E[b_t] <= N/2^t L_t` and
    /// `E[b_t^2] <= (N/2^t L_t)^2 + N/2^t L_t (1 - L_t)`, `L_t` the running
    /// product of the lambdas.
    pub fn check(&self, replications: usize, seed: u64) -> Vec<MomentRow> {
        let steps = self.lambdas.len();
        let mut s1 = vec![0.0; steps];
        let mut s2 = vec![0.0; steps];
        let mut s4 = vec![0.0; steps];
        let mut rng = stream(seed);
        for _ in 0..replications {
            for (t, b) in self.sample(&mut rng).into_iter().enumerate() {
                let b = b as f64;
                s1[t] += b;
                s2[t] += b * b;
                s4[t] += b * b * b * b;
            }
        }
        let r = replications as f64;
        let mut lam = 1.0;
        (0..steps)
            .map(|t| {
                lam *= self.lambdas[t];
                let scale = self.n0 as f64 / (1u64 << (t + 1)) as f64;
                let mean = s1[t] / r;
                let second = s2[t] / r;
                let var1 = (s2[t] / r - mean * mean).max(0.0) * r / (r - 1.0);
                let var2 = (s4[t] / r - second * second).max(0.0) * r / (r - 1.0);
                MomentRow {
                    t: t + 1,
                    mean,
                    mean_se: (var1 / r).sqrt(),
                    mean_bound: scale * lam,
                    second,
                    second_se: (var2 / r).sqrt(),
                    second_bound: (scale * lam).powi(2) + scale * lam * (1.0 - lam),
                }
            })
            .collect()
    }
}

/// Reference constants as functions of `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForms {
    pub nonlearning_bound: f64,
    pub universal_lower_bound: f64,
    pub r: f64,
    pub q: f64,
    pub events: [f64; 4],
}

pub fn closed_forms(p: f64) -> ClosedForms {
    let d = (2.0 - p) * (2.0 - p);
    ClosedForms {
        nonlearning_bound: 0.75 * (1.0 - p),
        universal_lower_bound: (1.0 - p) * (p + 2.0 * p * p) / (2.0 * (1.0 + p)),
        r: p / (2.0 - p),
        q: 2.0 * (1.0 - p) / (2.0 - p),
        events: [(1.0 - p) * (1.0 - p) / d, p * (2.0 - p) / d, (1.0 - p) * (1.0 - p) / d, 2.0 * (1.0 - p) / d],
    }
}

/// The four 2-chain event probabilities in exact arithmetic.
pub fn event_probabilities(p: &BigRational) -> [BigRational; 4] {
    let one = BigRational::one();
    let two = ratio(2, 1);
    let q = &one - p;
    let d = (&two - p) * (&two - p);
    [&q * &q / &d, p * (&two - p) / &d, &q * &q / &d, &two * &q / &d]
}

/// True when the event probabilities sum to exactly one at every grid point
/// `i / (points - 1)`.
pub fn events_sum_to_one(points: i64) -> bool {
    (0..points).all(|i| {
        let p = ratio(i, points - 1);
        let s = event_probabilities(&p).into_iter().fold(BigRational::zero(), |a, b| a + b);
        s.is_one()
    })
}

/// Composition of the score-1 pairs after a random first round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FirstRound {
    pub u_pairs: u64,
    pub high_high: u64,
    pub k_pairs: u64,
}

/// First round of a strongest-link chain policy under the usual seed streams.
pub fn first_round_composition(n: usize, p: f64, rep_seed: u64) -> Result<FirstRound> {
    let types = sample_types(n, p, derive_seed(rep_seed, TYPES_STREAM))?;
    let mut policy = PolicySpec::OneChain.build(FeedbackModel::StrongestLink, n, &PolicyOptions::default())?;
    let knowledge = KnowledgeState::new(FeedbackModel::StrongestLink, n);
    let m = policy.next_matching(0, &knowledge, &mut stream(derive_seed(rep_seed, POLICY_STREAM)))?;
    let mut fr = FirstRound::default();
    for &(a, b) in &m.pairs {
        match types.get(a) + types.get(b) {
            0 => fr.k_pairs += 1,
            1 => fr.u_pairs += 1,
            _ => {
                fr.u_pairs += 1;
                fr.high_high += 1;
            }
        }
    }
    Ok(fr)
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
