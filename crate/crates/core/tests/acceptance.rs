//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails other than the known shortfalls listed in
//! `KNOWN_SHORTFALLS` (see README).

use std::time::Instant;

use teamlearn::cli::ChainComparison;
use teamlearn::experiments::{run_cell, summarize, write_csv, CellResult, Execution, ExperimentConfig, Row, Stat};
use teamlearn::policy::PolicySpec;
use teamlearn::verify::{
    clique_check, closed_form_check, first_round_check, posterior_check, recursion_check, VerifyOptions,
};

/// Criteria that do not hold at the prescribed sizes.
const KNOWN_SHORTFALLS: &[u32] = &[3, 4];

struct Verdict {
    id: u32,
    passed: bool,
    detail: String,
}

/// Every experiment run, kept for the determinism re-run.
struct Recorder {
    runs: Vec<(ExperimentConfig, Vec<u8>)>,
}

fn csv_bytes(rows: &[Row]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("csv to memory");
    buf
}

impl Recorder {
    fn cell(&mut self, cfg: ExperimentConfig) -> CellResult {
        let c = run_cell(&cfg, Execution::Parallel);
        assert!(c.summary.errors.is_empty(), "{}: {:?}", cfg.policy, c.summary.errors);
        self.runs.push((cfg, csv_bytes(&c.rows)));
        c
    }
}

fn ci(s: &Stat) -> (f64, f64, f64) {
    (s.mean_or_nan(), s.ci_low.unwrap_or(f64::NAN), s.ci_high.unwrap_or(f64::NAN))
}

fn fmt_ci(s: &Stat) -> String {
    let (m, lo, hi) = ci(s);
    format!("{m:.4} [{lo:.4}, {hi:.4}]")
}

fn criterion_1(rec: &mut Recorder) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    let start = Instant::now();
    for p in [0.7, 0.8, 0.9] {
        let c = rec.cell(ExperimentConfig::new(PolicySpec::KstopEc, 4096, p, 200, 101));
        let target = 0.75 * (1.0 - p);
        let m = c.summary.exact_regret.mean_or_nan();
        ok &= (m - target).abs() <= 0.03;
        parts.push(format!("p={p}: {m:.4} vs {target:.4}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    parts.push(format!("{secs:.1}s"));
    Verdict { id: 1, passed: ok, detail: parts.join("; ") }
}

fn criterion_2(rec: &mut Recorder) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [0.7, 0.9] {
        let bound = (1.0 - p) * (p + 2.0 * p * p) / (2.0 * (1.0 + p)) - 0.01;
        let mut worst = f64::INFINITY;
        for spec in PolicySpec::weakest() {
            let c = rec.cell(ExperimentConfig::new(spec, 4096, p, 100, 202));
            let m = c.summary.exact_regret.mean_or_nan();
            ok &= m >= bound;
            worst = worst.min(m);
        }
        parts.push(format!("p={p}: min mean {worst:.4} >= {bound:.4}"));
    }
    Verdict { id: 2, passed: ok, detail: parts.join("; ") }
}

fn criterion_3(rec: &mut Recorder) -> Verdict {
    let ecl = rec.cell(ExperimentConfig::new(PolicySpec::EcL { j: 1 }, 4096, 0.2, 400, 303));
    let kstop = rec.cell(ExperimentConfig::new(PolicySpec::KstopEc, 4096, 0.2, 400, 303));
    let (_, _, ecl_hi) = ci(&ecl.summary.exact_regret);
    let (_, kstop_lo, _) = ci(&kstop.summary.exact_regret);
    let below = ecl_hi < 0.6;
    let disjoint = ecl_hi < kstop_lo;
    let paired: Vec<f64> = ecl.rows.iter().zip(&kstop.rows).map(|(a, b)| a.exact_regret - b.exact_regret).collect();
    Verdict {
        id: 3,
        passed: below && disjoint,
        detail: format!(
            "ec-l:1 {}, kstop-ec {}, paired diff {}",
            fmt_ci(&ecl.summary.exact_regret),
            fmt_ci(&kstop.summary.exact_regret),
            fmt_ci(&summarize(&paired))
        ),
    }
}

/// Same comparison with EC run for longer before the finish phase.
fn criterion_3_sensitivity(epoch_limit: u32) -> String {
    let cell = |spec| {
        let mut cfg = ExperimentConfig::new(spec, 4096, 0.2, 400, 303);
        cfg.epoch_limit = Some(epoch_limit);
        run_cell(&cfg, Execution::Parallel).summary.exact_regret
    };
    format!(
        "epoch limit {epoch_limit}: ec-l:1 {}, kstop-ec {}",
        fmt_ci(&cell(PolicySpec::EcL { j: 1 })),
        fmt_ci(&cell(PolicySpec::KstopEc))
    )
}

fn comparison(rec: &mut Recorder, p: f64) -> ChainComparison {
    let cmp = ChainComparison::run(2000, p, 500, 404, None, Execution::Parallel);
    for (spec, cell) in [(PolicySpec::OneChain, &cmp.one), (PolicySpec::TwoChain, &cmp.two)] {
        assert!(cell.summary.errors.is_empty(), "{:?}", cell.summary.errors);
        rec.runs.push((ExperimentConfig::new(spec, 2000, p, 500, 404), csv_bytes(&cell.rows)));
    }
    cmp
}

fn criterion_4(rec: &mut Recorder) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (p, two_lower) in [(0.6, true), (0.4, false)] {
        let cmp = comparison(rec, p);
        let (_, one_lo, one_hi) = ci(&cmp.one.summary.proxy_regret);
        let (_, two_lo, two_hi) = ci(&cmp.two.summary.proxy_regret);
        let holds = if two_lower { two_hi < one_lo } else { one_hi < two_lo };
        ok &= holds;
        parts.push(format!(
            "p={p} proxy one {} two {} ({})",
            fmt_ci(&cmp.one.summary.proxy_regret),
            fmt_ci(&cmp.two.summary.proxy_regret),
            if holds { "ok" } else { "violated" }
        ));
    }
    for p in [0.3, 0.5, 0.7] {
        let cmp = comparison(rec, p);
        let one = cmp.one.summary.count_11.mean_or_nan();
        let two = cmp.two.summary.count_11.mean_or_nan();
        ok &= one <= two;
        parts
            .push(format!("p={p} count_11 one {one:.1} two {two:.1} ({})", if one <= two { "ok" } else { "violated" }));
    }
    Verdict { id: 4, passed: ok, detail: parts.join("; ") }
}

fn criterion_5(rec: &mut Recorder) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (spec, p) in [(PolicySpec::KstopEc, 0.8), (PolicySpec::OneChain, 0.4)] {
        let c = rec.cell(ExperimentConfig::new(spec, 4096, p, 200, 505));
        let gap = (c.summary.proxy_regret.mean_or_nan() - c.summary.exact_regret.mean_or_nan()).abs();
        ok &= gap <= 0.02;
        parts.push(format!("{spec} p={p}: |proxy - exact| = {gap:.5}"));
    }
    Verdict { id: 5, passed: ok, detail: parts.join("; ") }
}

fn from_checks(id: u32, checks: &[teamlearn::verify::CheckResult]) -> Verdict {
    Verdict {
        id,
        passed: checks.iter().all(|c| c.passed),
        detail: checks.iter().map(|c| c.observed.clone()).collect::<Vec<_>>().join("; "),
    }
}

fn criterion_10(rec: &mut Recorder) -> Verdict {
    let mut ratios = Vec::new();
    for n in [256usize, 1024, 4096] {
        let c = rec.cell(ExperimentConfig::new(PolicySpec::KstopEc, n, 0.8, 200, 1010));
        assert_eq!(c.summary.tau_missing, 0);
        ratios.push((n, c.summary.tau.mean_or_nan() / n as f64));
    }
    let decreasing = ratios.windows(2).all(|w| w[1].1 < w[0].1);
    let detail = ratios.iter().map(|(n, r)| format!("N={n}: tau/N {r:.5}")).collect::<Vec<_>>().join("; ");
    Verdict { id: 10, passed: decreasing, detail }
}

fn criterion_11(rec: &Recorder) -> Verdict {
    let mut mismatched = Vec::new();
    for (cfg, bytes) in &rec.runs {
        let again = run_cell(cfg, Execution::Serial);
        if &csv_bytes(&again.rows) != bytes {
            mismatched.push(format!("{} n={} p={}", cfg.policy, cfg.n, cfg.p));
        }
    }
    Verdict {
        id: 11,
        passed: mismatched.is_empty(),
        detail: if mismatched.is_empty() {
            format!("{} experiments re-run serially, all CSVs byte-identical", rec.runs.len())
        } else {
            format!("differs: {}", mismatched.join(", "))
        },
    }
}

fn main() {
    let started = Instant::now();
    let full = VerifyOptions { quick: false, swap_feedback: false };
    let mut rec = Recorder { runs: Vec::new() };
    let mut verdicts = vec![criterion_1(&mut rec), criterion_2(&mut rec), criterion_3(&mut rec)];
    let note = criterion_3_sensitivity(6);
    verdicts.push(criterion_4(&mut rec));
    verdicts.push(criterion_5(&mut rec));
    verdicts.push(from_checks(6, &[posterior_check(full)]));
    verdicts.push(from_checks(7, &[clique_check(full)]));
    verdicts.push(from_checks(8, &[recursion_check(full)]));
    verdicts.push(from_checks(9, &[first_round_check(full), closed_form_check()]));
    verdicts.push(criterion_10(&mut rec));
    verdicts.push(criterion_11(&rec));

    for v in &verdicts {
        println!("criterion {:>2}: {} - {}", v.id, if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("note (criterion 3 sensitivity): {note}");
    let passed = verdicts.iter().filter(|v| v.passed).count();
    println!("{passed} of {} criteria pass ({:.0}s)", verdicts.len(), started.elapsed().as_secs_f64());

    let unexpected: Vec<u32> =
        verdicts.iter().filter(|v| !v.passed && !KNOWN_SHORTFALLS.contains(&v.id)).map(|v| v.id).collect();
    for v in verdicts.iter().filter(|v| v.passed && KNOWN_SHORTFALLS.contains(&v.id)) {
        println!("criterion {} now passes; remove it from the known shortfalls", v.id);
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
