//! Replications, sweeps, summary statistics and result files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{sample_types, FeedbackModel};
use crate::policy::{PolicyOptions, PolicySpec};
use crate::rng::{derive_seed, POLICY_STREAM, TYPES_STREAM};
use crate::sim::{RunOutcome, Simulation};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

pub const CSV_HEADER: [&str; 13] = [
    "model",
    "policy",
    "n",
    "p",
    "seed",
    "replication",
    "exact_regret",
    "proxy_regret",
    "tau",
    "stranded",
    "count_01",
    "count_11",
    "count_00",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: FeedbackModel,
    pub policy: PolicySpec,
    pub n: usize,
    pub p: f64,
    #[serde(default = "one")]
    pub replications: u64,
    #[serde(default)]
    pub base_seed: u64,
    /// Defaults to `4 n`.
    #[serde(default)]
    pub t_max: Option<usize>,
    #[serde(default)]
    pub epoch_limit: Option<u32>,
    #[serde(default)]
    pub terminal_rematch: bool,
    #[serde(default)]
    pub record_trace: bool,
}

fn one() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn new(policy: PolicySpec, n: usize, p: f64, replications: u64, base_seed: u64) -> Self {
        Self {
            model: policy.model(),
            policy,
            n,
            p,
            replications,
            base_seed,
            t_max: None,
            epoch_limit: None,
            terminal_rematch: false,
            record_trace: false,
        }
    }

    pub fn horizon(&self) -> usize {
        self.t_max.unwrap_or(4 * self.n)
    }

    pub fn options(&self) -> PolicyOptions {
        PolicyOptions { epoch_limit: self.epoch_limit, terminal_rematch: self.terminal_rematch }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !self.n.is_multiple_of(2) {
            return Err(Error::OddPopulation(self.n));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidProbability(self.p));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.horizon() == 0 {
            return Err(Error::InvalidConfig("t_max must be at least 1".into()));
        }
        if self.policy.model() != self.model {
            return Err(Error::ModelMismatch { policy: self.policy.to_string(), model: self.model.to_string() });
        }
        Ok(())
    }

    pub fn replication_seed(&self, index: u64) -> u64 {
        derive_seed(self.base_seed, index)
    }
}

/// One line of the per-replication CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub model: FeedbackModel,
    pub policy: String,
    pub n: usize,
    pub p: f64,
    pub seed: u64,
    pub replication: u64,
    pub exact_regret: f64,
    pub proxy_regret: f64,
    pub tau: Option<usize>,
    pub stranded: bool,
    pub count_01: u64,
    pub count_11: u64,
    pub count_00: u64,
}

impl Row {
    fn from_outcome(cfg: &ExperimentConfig, index: u64, seed: u64, o: &RunOutcome) -> Self {
        Self {
            model: cfg.model,
            policy: cfg.policy.to_string(),
            n: cfg.n,
            p: cfg.p,
            seed,
            replication: index,
            exact_regret: o.exact_regret,
            proxy_regret: o.proxy_regret,
            tau: o.tau,
            stranded: o.stranded,
            count_01: o.totals.count_01,
            count_11: o.totals.count_11,
            count_00: o.totals.count_00,
        }
    }
}

/// Runs replication `index` of `cfg`, optionally streaming a JSON-lines trace.
pub fn run_replication_traced(
    cfg: &ExperimentConfig,
    index: u64,
    trace: Option<&mut dyn Write>,
) -> Result<(Row, RunOutcome)> {
    let seed = cfg.replication_seed(index);
    let wrap = |e: Error| Error::Replication { replication: index, seed, source: Box::new(e) };
    let run = || -> Result<(Row, RunOutcome)> {
        cfg.validate()?;
        let types = sample_types(cfg.n, cfg.p, derive_seed(seed, TYPES_STREAM))?;
        let policy = cfg.policy.build(cfg.model, cfg.n, &cfg.options())?;
        let sim = Simulation::new(cfg.model, types, policy, derive_seed(seed, POLICY_STREAM), cfg.horizon());
        let outcome = match trace {
            None => sim.run(cfg.p)?,
            Some(w) => sim.run_with(cfg.p, |ev, k| {
                let line = json!({
                    "replication": index,
                    "t": ev.t,
                    "pairs": ev.matching.pairs,
                    "scores": ev.outcomes.iter().map(|o| o.score).collect::<Vec<_>>(),
                    "shortfall": ev.record.shortfall,
                    "newly_high": ev.deductions.newly_high,
                    "newly_low": ev.deductions.newly_low,
                    "known_high": k.n_known_high(),
                    "known_low": k.n_known_low(),
                    "unknown_edges": k.n_edges(),
                });
                writeln!(w, "{line}")?;
                Ok(())
            })?,
        };
        Ok((Row::from_outcome(cfg, index, seed, &outcome), outcome))
    };
    run().map_err(wrap)
}

pub fn run_replication(cfg: &ExperimentConfig, index: u64) -> Result<Row> {
    run_replication_traced(cfg, index, None).map(|(row, _)| row)
}

/// How replications are spread over threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    /// Data-parallel over replications; `jobs` caps the thread count.
    #[default]
    Parallel,
    ParallelJobs(usize),
}

fn map_indices<T: Send, F: Fn(u64) -> T + Sync + Send>(count: u64, exec: Execution, f: F) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match exec {
            Execution::Serial => Ok((0..count).map(f).collect()),
            Execution::Parallel => Ok((0..count).into_par_iter().map(f).collect()),
            Execution::ParallelJobs(jobs) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs.max(1))
                    .build()
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
                Ok(pool.install(|| (0..count).into_par_iter().map(f).collect()))
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = exec;
        Ok((0..count).map(f).collect())
    }
}

/// Every replication of one configuration, in index order.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<Result<Row>>> {
    cfg.validate()?;
    map_indices(cfg.replications, exec, |i| run_replication(cfg, i))
}

/// Same as [`run_experiment`] but keeps the full run outcome.
pub fn run_experiment_outcomes(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<(Row, RunOutcome)>> {
    cfg.validate()?;
    map_indices(cfg.replications, exec, |i| run_replication_traced(cfg, i, None))?.into_iter().collect()
}

/// Mean, standard error and normal 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub count: usize,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

pub fn summarize(values: &[f64]) -> Stat {
    let count = values.len();
    if count == 0 {
        return Stat { count, mean: None, se: None, ci_low: None, ci_high: None };
    }
    let nf = count as f64;
    let mean = values.iter().sum::<f64>() / nf;
    if count < 2 {
        return Stat { count, mean: Some(mean), se: None, ci_low: None, ci_high: None };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let se = (var / nf).sqrt();
    Stat { count, mean: Some(mean), se: Some(se), ci_low: Some(mean - Z95 * se), ci_high: Some(mean + Z95 * se) }
}

impl Stat {
    fn to_json(self) -> Value {
        let f = |x: Option<f64>| x.filter(|v| v.is_finite()).map_or(Value::Null, |v| json!(v));
        let mut m = BTreeMap::new();
        m.insert("count", json!(self.count));
        m.insert("mean", f(self.mean));
        m.insert("se", f(self.se));
        m.insert("ci_low", f(self.ci_low));
        m.insert("ci_high", f(self.ci_high));
        json!(m)
    }

    pub fn mean_or_nan(&self) -> f64 {
        self.mean.unwrap_or(f64::NAN)
    }
}

/// Aggregates for one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub config: ExperimentConfig,
    pub rows: usize,
    pub errors: Vec<String>,
    pub exact_regret: Stat,
    pub proxy_regret: Stat,
    pub tau: Stat,
    pub tau_missing: usize,
    pub stranded: usize,
    pub count_01: Stat,
    pub count_11: Stat,
    pub count_00: Stat,
}

impl CellSummary {
    pub fn from_rows(config: &ExperimentConfig, rows: &[Row], errors: Vec<String>) -> Self {
        let col = |f: &dyn Fn(&Row) -> f64| summarize(&rows.iter().map(f).collect::<Vec<_>>());
        let taus: Vec<f64> = rows.iter().filter_map(|r| r.tau.map(|t| t as f64)).collect();
        Self {
            config: config.clone(),
            rows: rows.len(),
            errors,
            exact_regret: col(&|r| r.exact_regret),
            proxy_regret: col(&|r| r.proxy_regret),
            tau: summarize(&taus),
            tau_missing: rows.len() - taus.len(),
            stranded: rows.iter().filter(|r| r.stranded).count(),
            count_01: col(&|r| r.count_01 as f64),
            count_11: col(&|r| r.count_11 as f64),
            count_00: col(&|r| r.count_00 as f64),
        }
    }

    pub fn to_json(&self) -> Value {
        let c = &self.config;
        let mut cfg = BTreeMap::new();
        cfg.insert("model", json!(c.model.as_str()));
        cfg.insert("policy", json!(c.policy.to_string()));
        cfg.insert("n", json!(c.n));
        cfg.insert("p", json!(c.p));
        cfg.insert("replications", json!(c.replications));
        cfg.insert("base_seed", json!(c.base_seed));
        cfg.insert("t_max", json!(c.horizon()));
        cfg.insert("epoch_limit", json!(c.epoch_limit));
        cfg.insert("terminal_rematch", json!(c.terminal_rematch));
        let mut m = BTreeMap::new();
        m.insert("config", json!(cfg));
        m.insert("rows", json!(self.rows));
        m.insert("errors", json!(self.errors));
        m.insert("exact_regret", self.exact_regret.to_json());
        m.insert("proxy_regret", self.proxy_regret.to_json());
        m.insert("tau", self.tau.to_json());
        m.insert("tau_missing", json!(self.tau_missing));
        m.insert("stranded", json!(self.stranded));
        m.insert("count_01", self.count_01.to_json());
        m.insert("count_11", self.count_11.to_json());
        m.insert("count_00", self.count_00.to_json());
        json!(m)
    }
}

/// Result of one sweep cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub rows: Vec<Row>,
    pub summary: CellSummary,
}

fn split(results: Vec<Result<Row>>) -> (Vec<Row>, Vec<String>) {
    let mut rows = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => errors.push(e.to_string()),
        }
    }
    (rows, errors)
}

pub fn run_cell(cfg: &ExperimentConfig, exec: Execution) -> CellResult {
    let (rows, errors) = match run_experiment(cfg, exec) {
        Ok(results) => split(results),
        Err(e) => (Vec::new(), vec![e.to_string()]),
    };
    let summary = CellSummary::from_rows(cfg, &rows, errors);
    CellResult { rows, summary }
}

/// Cartesian parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// Keeps only policies defined for this model when set.
    #[serde(default)]
    pub model: Option<FeedbackModel>,
    pub policies: Vec<PolicySpec>,
    pub n: Vec<usize>,
    pub p: Vec<f64>,
    #[serde(default = "one")]
    pub replications: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub t_max: Option<usize>,
    #[serde(default)]
    pub epoch_limit: Option<u32>,
    #[serde(default)]
    pub terminal_rematch: bool,
}

impl SweepGrid {
    pub fn cells(&self) -> Result<Vec<ExperimentConfig>> {
        let mut out = Vec::new();
        for &policy in &self.policies {
            if self.model.is_some_and(|m| m != policy.model()) {
                continue;
            }
            for &n in &self.n {
                for &p in &self.p {
                    let mut c = ExperimentConfig::new(policy, n, p, self.replications, self.base_seed);
                    c.t_max = self.t_max;
                    c.epoch_limit = self.epoch_limit;
                    c.terminal_rematch = self.terminal_rematch;
                    c.validate()?;
                    out.push(c);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("sweep grid has no cells".into()));
        }
        Ok(out)
    }
}

pub fn sweep(cells: &[ExperimentConfig], exec: Execution) -> Result<Vec<CellResult>> {
    if cells.is_empty() {
        return Err(Error::InvalidConfig("sweep grid has no cells".into()));
    }
    Ok(cells.iter().map(|c| run_cell(c, exec)).collect())
}

pub fn write_csv<W: Write>(w: W, rows: &[Row]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wtr.write_record(CSV_HEADER)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<Row>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidConfig("unexpected CSV header".into()));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_csv_file(path: &Path, rows: &[Row]) -> Result<()> {
    write_csv(std::fs::File::create(path)?, rows)
}

pub fn summary_json(cells: &[CellSummary]) -> Value {
    Value::Array(cells.iter().map(CellSummary::to_json).collect())
}

pub fn write_summary_file(path: &Path, cells: &[CellSummary]) -> Result<()> {
    let mut s = serde_json::to_string_pretty(&summary_json(cells))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn fmt_opt(x: Option<f64>, prec: usize) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.prec$}"))
}

/// Human-readable table of cell summaries.
pub fn render_table(cells: &[CellSummary]) -> String {
    let mut s = format!(
        "{:<9} {:<13} {:>6} {:>5} {:>5} {:>10} {:>23} {:>10} {:>9} {:>6} {:>6}\n",
        "model", "policy", "n", "p", "reps", "exact", "exact 95% CI", "proxy", "mean tau", "no-tau", "errors"
    );
    for c in cells {
        let ci = match (c.exact_regret.ci_low, c.exact_regret.ci_high) {
            (Some(lo), Some(hi)) => format!("[{lo:.4}, {hi:.4}]"),
            _ => "n/a".into(),
        };
        s.push_str(&format!(
            "{:<9} {:<13} {:>6} {:>5} {:>5} {:>10} {:>23} {:>10} {:>9} {:>6} {:>6}\n",
            c.config.model.as_str(),
            c.config.policy.to_string(),
            c.config.n,
            c.config.p,
            c.rows,
            fmt_opt(c.exact_regret.mean, 4),
            ci,
            fmt_opt(c.proxy_regret.mean, 4),
            fmt_opt(c.tau.mean, 1),
            c.tau_missing,
            c.errors.len(),
        ));
    }
    s
}
