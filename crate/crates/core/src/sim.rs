//! The simulation loop: ask the policy for a matching, score it against the
//! hidden types, record regret, and fold the outcomes into the knowledge
//! state, until the policy absorbs or the horizon runs out.

use crate::error::{Error, Result};
use crate::knowledge::{DeductionLog, KnowledgeState};
use crate::model::{every_matching_optimal, validate_matching, FeedbackModel, Matching, Outcome, TypeAssignment};
use crate::policy::Policy;
use crate::regret::{proxy, RegretLedger, StepRecord, Totals};
use crate::rng::{stream, SimRng};

#[derive(Debug, Clone)]
pub struct StepEvent {
    pub t: usize,
    pub matching: Matching,
    pub outcomes: Vec<Outcome>,
    pub record: StepRecord,
    pub deductions: DeductionLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Running,
    /// The policy absorbed before step `at`; its stationary matching falls
    /// short of the optimum by `shortfall` every step from then on.
    Absorbed {
        at: usize,
        shortfall: u64,
    },
    Truncated,
}

/// Summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub n: usize,
    pub steps_run: usize,
    pub absorbed_at: Option<usize>,
    pub tau: Option<usize>,
    pub stranded: bool,
    pub truncated: bool,
    /// Steps `0..horizon` are the ones accounted for.
    pub horizon: usize,
    pub totals: Totals,
    pub exact_regret: f64,
    pub proxy_regret: f64,
}

pub struct Simulation {
    model: FeedbackModel,
    environment: FeedbackModel,
    types: TypeAssignment,
    knowledge: KnowledgeState,
    policy: Box<dyn Policy>,
    rng: SimRng,
    ledger: RegretLedger,
    t: usize,
    t_max: usize,
    status: RunStatus,
    trivial: bool,
}

impl Simulation {
    pub fn new(
        model: FeedbackModel,
        types: TypeAssignment,
        policy: Box<dyn Policy>,
        policy_seed: u64,
        t_max: usize,
    ) -> Self {
        let n = types.n();
        Self {
            model,
            environment: model,
            ledger: RegretLedger::new(model, &types),
            knowledge: KnowledgeState::new(model, n),
            trivial: every_matching_optimal(model, &types),
            types,
            policy,
            rng: stream(policy_seed),
            t: 0,
            t_max,
            status: RunStatus::Running,
        }
    }

    /// Scores matches with `env` while the learner still assumes the declared
    /// model. Only used to check that the oracles catch a wrong payoff.
    pub fn with_environment_model(mut self, env: FeedbackModel) -> Self {
        self.environment = env;
        self
    }

    pub fn knowledge(&self) -> &KnowledgeState {
        &self.knowledge
    }

    pub fn types(&self) -> &TypeAssignment {
        &self.types
    }

    pub fn ledger(&self) -> &RegretLedger {
        &self.ledger
    }

    pub fn status(&self) -> RunStatus {
        self.status
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn policy(&self) -> &dyn Policy {
        self.policy.as_ref()
    }

    fn checked_matching(&mut self) -> Result<Matching> {
        let m = self.policy.next_matching(self.t, &self.knowledge, &mut self.rng)?;
        validate_matching(&m, self.types.n()).map_err(Error::InvalidMatching)?;
        Ok(m)
    }

    /// Runs one step. Returns `None` once the run has ended.
    pub fn step(&mut self) -> Result<Option<StepEvent>> {
        if self.status != RunStatus::Running {
            return Ok(None);
        }
        if self.trivial {
            // nothing left to learn that could cost regret
            self.status = RunStatus::Absorbed { at: self.t, shortfall: 0 };
            self.ledger.set_tau(0);
            return Ok(None);
        }
        if self.policy.is_absorbed(&self.knowledge) {
            let m = self.checked_matching()?;
            let rec = StepRecord::of(&m, &self.types, self.model, self.ledger.optimum());
            self.status = RunStatus::Absorbed { at: self.t, shortfall: rec.shortfall };
            if rec.shortfall == 0 {
                self.ledger.set_tau(self.ledger.last_positive().map_or(0, |i| i + 1));
            }
            return Ok(None);
        }
        if self.t >= self.t_max {
            self.status = RunStatus::Truncated;
            return Ok(None);
        }
        let m = self.checked_matching()?;
        let outcomes = m.outcomes(self.environment, &self.types);
        let record = self.ledger.record(&m, &self.types);
        let deductions = self.knowledge.update(&outcomes)?;
        let ev = StepEvent { t: self.t, matching: m, outcomes, record, deductions };
        self.t += 1;
        Ok(Some(ev))
    }

    pub fn run(mut self, p: f64) -> Result<RunOutcome> {
        while self.step()?.is_some() {}
        Ok(self.outcome(p))
    }

    /// Runs to the end, handing every step to `observe`.
    pub fn run_with<F: FnMut(&StepEvent, &KnowledgeState) -> Result<()>>(
        mut self,
        p: f64,
        mut observe: F,
    ) -> Result<RunOutcome> {
        while let Some(ev) = self.step()? {
            observe(&ev, &self.knowledge)?;
        }
        Ok(self.outcome(p))
    }

    pub fn outcome(&self, p: f64) -> RunOutcome {
        let n = self.types.n();
        let (absorbed_at, tau, stranded, truncated, horizon) = match self.status {
            RunStatus::Absorbed { at, shortfall: 0 } => {
                let tau = self.ledger.tau().unwrap_or(at);
                (Some(at), Some(tau), false, false, tau)
            }
            RunStatus::Absorbed { at, .. } => (Some(at), None, true, false, at),
            RunStatus::Truncated => (None, None, false, true, self.t_max),
            RunStatus::Running => (None, None, false, false, self.t),
        };
        let totals = self.ledger.totals(horizon);
        RunOutcome {
            n,
            steps_run: self.t,
            absorbed_at,
            tau,
            stranded,
            truncated,
            horizon,
            totals,
            exact_regret: totals.shortfall as f64 / n as f64,
            proxy_regret: proxy(self.model, &totals, n, p),
        }
    }
}
