//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on runtime or verification failure, 2 on
//! invalid flags.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::experiments::{
    render_table, run_cell, run_replication_traced, summarize, sweep, write_csv_file, write_summary_file, CellResult,
    CellSummary, Execution, ExperimentConfig, SweepGrid,
};
use crate::model::FeedbackModel;
use crate::policy::PolicySpec;
use crate::verify::{render, run_suite, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "teamlearn", version, about = "Online team matching under weakest-link and strongest-link feedback")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run replications of one policy and print a summary.
    Simulate(SimulateArgs),
    /// Run every cell of a JSON parameter grid.
    Sweep(SweepArgs),
    /// Run the oracle suite and print a pass/fail table.
    Verify(VerifyArgs),
    /// Compare 1-chain and 2-chain on identical seeds.
    CompareChains(CompareArgs),
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    /// Worker threads for replications [default: available parallelism]
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Run replications on the calling thread only.
    #[arg(long, default_value_t = false)]
    pub serial: bool,
}

impl ExecArgs {
    fn execution(&self) -> Execution {
        match (self.serial, self.jobs) {
            (true, _) | (false, Some(1)) => Execution::Serial,
            (false, Some(j)) => Execution::ParallelJobs(j),
            (false, None) => Execution::Parallel,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Feedback model: weakest or strongest.
    #[arg(long)]
    pub model: String,
    /// random, ec, kstop-ec, ec-l, all-pairs, one-chain, two-chain, conservative.
    #[arg(long)]
    pub policy: String,
    /// Number of workers (even).
    #[arg(long)]
    pub n: usize,
    /// Probability that a worker is high.
    #[arg(long)]
    pub p: f64,
    /// Base seed.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replications: u64,
    /// Learning epochs for ec-l.
    #[arg(long, default_value_t = 1)]
    pub j: u32,
    /// Step cap [default: 4 n]
    #[arg(long)]
    pub t_max: Option<usize>,
    /// Epoch at which k-stopped policies stop doubling [default: floor(sqrt(2 ln n))]
    #[arg(long)]
    pub epoch_limit: Option<u32>,
    /// Let chain policies reuse retired low pairs once settled.
    #[arg(long, default_value_t = false)]
    pub terminal_rematch: bool,
    /// Write a JSON-lines step trace of every replication to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Directory for replications.csv and summary.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON grid: {"policies": [...], "n": [...], "p": [...], "replications": R, "base_seed": S, ...}
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct VerifyMode {
    /// Reduced sample sizes.
    #[arg(long)]
    pub quick: bool,
    /// Full sample sizes.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub mode: VerifyMode,
    #[arg(long, hide = true, default_value_t = false)]
    pub swap_feedback: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub replications: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

/// A flag problem found before any computation.
struct Usage(String);

fn usage(flag: &str, msg: impl std::fmt::Display) -> Usage {
    Usage(format!("--{flag}: {msg}"))
}

fn check_n(n: usize) -> Result<(), Usage> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(usage("n", "n must be even and at least 2"));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<(), Usage> {
    if !(0.0..=1.0).contains(&p) {
        return Err(usage("p", "p must lie in [0, 1]"));
    }
    Ok(())
}

fn check_positive(flag: &str, v: u64) -> Result<(), Usage> {
    if v == 0 {
        return Err(usage(flag, "must be at least 1"));
    }
    Ok(())
}

fn simulate_config(a: &SimulateArgs) -> Result<ExperimentConfig, Usage> {
    check_n(a.n)?;
    check_p(a.p)?;
    check_positive("replications", a.replications)?;
    if let Some(t) = a.t_max {
        check_positive("t-max", t as u64)?;
    }
    let model: FeedbackModel = a.model.parse().map_err(|e: Error| usage("model", e))?;
    let policy = PolicySpec::parse_with_j(&a.policy, Some(a.j)).map_err(|e| usage("policy", e))?;
    if policy.model() != model {
        return Err(usage("policy", format!("{policy} is not defined for the {model} model")));
    }
    let mut cfg = ExperimentConfig::new(policy, a.n, a.p, a.replications, a.seed);
    cfg.t_max = a.t_max;
    cfg.epoch_limit = a.epoch_limit;
    cfg.terminal_rematch = a.terminal_rematch;
    cfg.record_trace = a.trace.is_some();
    Ok(cfg)
}

fn write_outputs(dir: &Path, rows: &[crate::experiments::Row], summaries: &[CellSummary]) -> crate::error::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv_file(&dir.join("replications.csv"), rows)?;
    write_summary_file(&dir.join("summary.json"), summaries)
}

fn report_errors(cells: &[CellSummary]) -> i32 {
    let mut code = EXIT_OK;
    for c in cells {
        for e in &c.errors {
            eprintln!("error: {e}");
            code = EXIT_FAILURE;
        }
    }
    code
}

fn note_unabsorbed(cells: &[CellSummary]) {
    for c in cells {
        if c.tau_missing > 0 {
            println!(
                "note: {} of {} runs of {} never reached zero regret ({} stranded, {} truncated)",
                c.tau_missing,
                c.rows,
                c.config.policy,
                c.stranded,
                c.tau_missing - c.stranded
            );
        }
    }
}

fn run_simulate(a: &SimulateArgs) -> i32 {
    let cfg = match simulate_config(a) {
        Ok(c) => c,
        Err(Usage(m)) => {
            eprintln!("error: {m}");
            return EXIT_USAGE;
        }
    };
    let cell = match &a.trace {
        Some(path) => {
            let file = match File::create(path) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: --trace: {e}");
                    return EXIT_FAILURE;
                }
            };
            let mut w = BufWriter::new(file);
            let mut rows = Vec::new();
            let mut errors = Vec::new();
            for i in 0..cfg.replications {
                match run_replication_traced(&cfg, i, Some(&mut w)) {
                    Ok((row, _)) => rows.push(row),
                    Err(e) => errors.push(e.to_string()),
                }
            }
            if let Err(e) = w.flush() {
                errors.push(e.to_string());
            }
            let summary = CellSummary::from_rows(&cfg, &rows, errors);
            CellResult { rows, summary }
        }
        None => run_cell(&cfg, a.exec.execution()),
    };
    print!("{}", render_table(std::slice::from_ref(&cell.summary)));
    note_unabsorbed(std::slice::from_ref(&cell.summary));
    let mut code = report_errors(std::slice::from_ref(&cell.summary));
    if let Some(dir) = &a.out {
        if let Err(e) = write_outputs(dir, &cell.rows, std::slice::from_ref(&cell.summary)) {
            eprintln!("error: {e}");
            code = EXIT_FAILURE;
        }
    }
    code
}

fn run_sweep(a: &SweepArgs) -> i32 {
    let text = match std::fs::read_to_string(&a.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: --config: {e}");
            return EXIT_USAGE;
        }
    };
    let grid: SweepGrid = match serde_json::from_str(&text) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: --config: {e}");
            return EXIT_USAGE;
        }
    };
    let cells = match grid.cells() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: --config: {e}");
            return EXIT_USAGE;
        }
    };
    let results = match sweep(&cells, a.exec.execution()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    let summaries: Vec<CellSummary> = results.iter().map(|r| r.summary.clone()).collect();
    print!("{}", render_table(&summaries));
    note_unabsorbed(&summaries);
    let mut code = report_errors(&summaries);
    if let Some(dir) = &a.out {
        let rows: Vec<_> = results.iter().flat_map(|r| r.rows.iter().cloned()).collect();
        if let Err(e) = write_outputs(dir, &rows, &summaries) {
            eprintln!("error: {e}");
            code = EXIT_FAILURE;
        }
    }
    code
}

fn run_verify(a: &VerifyArgs) -> i32 {
    let results = run_suite(VerifyOptions { quick: a.mode.quick, swap_feedback: a.swap_feedback });
    print!("{}", render(&results));
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).collect();
    for r in &failed {
        eprintln!("FAILED {}: observed {}, expected {}", r.name, r.observed, r.expected);
    }
    if failed.is_empty() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

/// Paired comparison of the two chain policies.
pub struct ChainComparison {
    pub one: CellResult,
    pub two: CellResult,
}

impl ChainComparison {
    pub fn run(n: usize, p: f64, replications: u64, seed: u64, t_max: Option<usize>, exec: Execution) -> Self {
        let cell = |spec| {
            let mut c = ExperimentConfig::new(spec, n, p, replications, seed);
            c.t_max = t_max;
            run_cell(&c, exec)
        };
        Self { one: cell(PolicySpec::OneChain), two: cell(PolicySpec::TwoChain) }
    }

    /// Per-seed differences `two - one` of a column.
    pub fn paired_diff(&self, f: impl Fn(&crate::experiments::Row) -> f64) -> crate::experiments::Stat {
        let d: Vec<f64> = self
            .one
            .rows
            .iter()
            .zip(&self.two.rows)
            .filter(|(a, b)| a.seed == b.seed)
            .map(|(a, b)| f(b) - f(a))
            .collect();
        summarize(&d)
    }

    pub fn render(&self) -> String {
        let fmt = |s: &crate::experiments::Stat| match (s.mean, s.ci_low, s.ci_high) {
            (Some(m), Some(lo), Some(hi)) => format!("{m:.5} [{lo:.5}, {hi:.5}]"),
            (Some(m), _, _) => format!("{m:.5}"),
            _ => "n/a".into(),
        };
        let mut s = format!(
            "{:<10} {:>32} {:>14} {:>14}\n",
            "policy", "proxy regret [95% CI]", "mean count_11", "mean count_00"
        );
        for (name, c) in [("one-chain", &self.one), ("two-chain", &self.two)] {
            s.push_str(&format!(
                "{:<10} {:>32} {:>14.2} {:>14.2}\n",
                name,
                fmt(&c.summary.proxy_regret),
                c.summary.count_11.mean_or_nan(),
                c.summary.count_00.mean_or_nan()
            ));
        }
        let d = self.paired_diff(|r| r.proxy_regret);
        let sign = match d.mean {
            Some(m) if m < 0.0 => "two-chain lower",
            Some(m) if m > 0.0 => "one-chain lower",
            Some(_) => "equal",
            None => "n/a",
        };
        s.push_str(&format!("paired difference (two - one): {} -> {sign}\n", fmt(&d)));
        s
    }
}

fn run_compare(a: &CompareArgs) -> i32 {
    if let Err(Usage(m)) =
        check_n(a.n).and_then(|_| check_p(a.p)).and_then(|_| check_positive("replications", a.replications))
    {
        eprintln!("error: {m}");
        return EXIT_USAGE;
    }
    let cmp = ChainComparison::run(a.n, a.p, a.replications, a.seed, a.t_max, a.exec.execution());
    print!("{}", cmp.render());
    let summaries = [cmp.one.summary.clone(), cmp.two.summary.clone()];
    let mut code = report_errors(&summaries);
    if let Some(dir) = &a.out {
        let rows: Vec<_> = cmp.one.rows.iter().chain(&cmp.two.rows).cloned().collect();
        if let Err(e) = write_outputs(dir, &rows, &summaries) {
            eprintln!("error: {e}");
            code = EXIT_FAILURE;
        }
    }
    code
}

/// Parses `args` and runs the chosen subcommand, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Verify(a) => run_verify(a),
        Command::CompareChains(a) => run_compare(a),
    }
}
