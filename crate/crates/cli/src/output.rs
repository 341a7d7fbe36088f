//! Result files. Every CSV is RFC 4180 with a header row and LF line endings;
//! floats carry 9 significant digits.
//!
//! | file            | columns                                                                              |
//! |-----------------|--------------------------------------------------------------------------------------|
//! | `metrics.csv`   | policy, checkpoint_t, mean_cum_reward, se_reward, mean_pseudo_regret, se_regret      |
//! | `arms.csv`      | arm_id, price_<i>_<j> per product (market runs only), mu, gap                        |
//! | `histogram.csv` | policy, arm_id, mean_selection_count                                                 |
//! | `timing.csv`    | policy, total_decision_seconds                                                       |
//! | bench output    | policy, k, mean_seconds, std_seconds                                                 |

use std::io::Write;
use std::path::{Path, PathBuf};

use postprice::runner::{Experiment, ExperimentConfig, ExperimentMetrics};
use serde::Serialize;

use crate::{CliError, Result};

pub const METRICS_HEADER: [&str; 6] = [
    "policy",
    "checkpoint_t",
    "mean_cum_reward",
    "se_reward",
    "mean_pseudo_regret",
    "se_regret",
];
pub const HISTOGRAM_HEADER: [&str; 3] = ["policy", "arm_id", "mean_selection_count"];
pub const TIMING_HEADER: [&str; 2] = ["policy", "total_decision_seconds"];
pub const BENCH_HEADER: [&str; 4] = ["policy", "k", "mean_seconds", "std_seconds"];

/// `%.9g`: 9 significant digits, trailing zeros trimmed, exponent form
/// outside `[1e-5, 1e9)`.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn io_err(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("cannot write {what}: {e}"))
}

pub fn write_metrics<W: Write>(w: W, metrics: &ExperimentMetrics) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(METRICS_HEADER)?;
    for p in &metrics.policies {
        for c in &p.checkpoints {
            out.write_record([
                p.label.clone(),
                c.t.to_string(),
                fmt_float(c.mean_cum_reward),
                fmt_float(c.se_reward),
                fmt_float(c.mean_pseudo_regret),
                fmt_float(c.se_regret),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_arms<W: Write>(w: W, exp: &Experiment) -> csv::Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["arm_id".to_string()];
    if let (Some(_), postprice::runner::Environment::Market { grid, .. }) = (exp.arms(), &exp.environment) {
        for i in 0..grid.num_vm_types() {
            for j in 0..grid.num_edge_nodes() {
                header.push(format!("price_{i}_{j}"));
            }
        }
    }
    header.extend(["mu".to_string(), "gap".to_string()]);
    out.write_record(&header)?;
    for arm in 0..exp.num_arms() {
        let mut row = vec![arm.to_string()];
        if let Some(arms) = exp.arms() {
            row.extend(arms[arm].prices.iter().map(|p| fmt_float(*p)));
        }
        row.push(fmt_float(exp.table.means[arm]));
        row.push(fmt_float(exp.table.gaps[arm]));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_histogram<W: Write>(w: W, metrics: &ExperimentMetrics) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(HISTOGRAM_HEADER)?;
    for p in &metrics.policies {
        for (arm, count) in p.mean_selection_counts.iter().enumerate() {
            out.write_record([p.label.clone(), arm.to_string(), fmt_float(*count)])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_timing<W: Write>(w: W, metrics: &ExperimentMetrics) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(TIMING_HEADER)?;
    for p in &metrics.policies {
        out.write_record([p.label.clone(), fmt_float(p.total_decision_seconds)])?;
    }
    out.flush()?;
    Ok(())
}

/// One row of the timing benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub policy: String,
    pub k: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

pub fn write_bench<W: Write>(w: W, rows: &[BenchRow]) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(BENCH_HEADER)?;
    for r in rows {
        out.write_record([
            r.policy.clone(),
            r.k.to_string(),
            fmt_float(r.mean_seconds),
            fmt_float(r.std_seconds),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Creates `path` and streams a CSV into it.
pub fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(std::io::BufWriter<std::fs::File>) -> csv::Result<()>,
{
    let file = std::fs::File::create(path).map_err(|e| io_err(&path.display().to_string(), e))?;
    body(std::io::BufWriter::new(file)).map_err(|e| io_err(&path.display().to_string(), e))
}

#[derive(Debug, Serialize)]
pub struct ArmRecord {
    pub arm_id: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prices: Option<Vec<f64>>,
    pub mu: f64,
    pub gap: f64,
}

#[derive(Debug, Serialize)]
pub struct PolicyRunInfo {
    pub label: String,
    pub total_rounds: u64,
    pub round_shortfall: u64,
    pub early_stops: u64,
    pub total_decision_seconds: f64,
    pub median_round_seconds: f64,
}

/// Everything needed to reproduce a run: `config` is the resolved
/// configuration and can be fed back to `run --config manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub master_seed: u64,
    pub parallelism: usize,
    pub started_at: String,
    pub finished_at: String,
    pub config: ExperimentConfig,
    pub valuation_model: Option<String>,
    pub best_arm: usize,
    pub best_mean: f64,
    pub arms: Vec<ArmRecord>,
    pub policies: Vec<PolicyRunInfo>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn arm_records(exp: &Experiment) -> Vec<ArmRecord> {
        (0..exp.num_arms())
            .map(|a| ArmRecord {
                arm_id: a,
                prices: exp.arms().map(|arms| arms[a].prices.clone()),
                mu: exp.table.means[a],
                gap: exp.table.gaps[a],
            })
            .collect()
    }
}
