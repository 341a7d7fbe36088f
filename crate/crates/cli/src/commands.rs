//! The `run`, `validate` and `bench-timing` subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use postprice::runner::{run_experiment, Environment, Experiment, ExperimentMetrics};

use crate::bench::{self, BenchOptions};
use crate::config;
use crate::output::{self, BenchRow, PolicyRunInfo, RunManifest};
use crate::{CliError, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const ARMS_FILE: &str = "arms.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub parallelism: usize,
    pub seed: Option<u64>,
    pub checkpoints: Option<String>,
}

#[derive(Debug)]
pub struct RunReport {
    pub experiment: Experiment,
    pub metrics: ExperimentMetrics,
    pub files: Vec<PathBuf>,
}

/// Loads a config, applies command-line overrides and validates it.
pub fn prepare(path: &Path, seed: Option<u64>, checkpoints: Option<&str>) -> Result<Experiment> {
    let mut cfg = config::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(spec) = checkpoints {
        cfg.checkpoints = Some(config::parse_checkpoints(spec, cfg.horizon)?);
    }
    Experiment::new(&cfg).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn run(opts: &RunOptions) -> Result<RunReport> {
    let experiment = prepare(&opts.config, opts.seed, opts.checkpoints.as_deref())?;
    std::fs::create_dir_all(&opts.out)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", opts.out.display())))?;
    let started_at = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
    let metrics = run_experiment(&experiment, opts.parallelism)?;
    let finished_at = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);

    let path = |name: &str| opts.out.join(name);
    output::write_file(&path(METRICS_FILE), |w| output::write_metrics(w, &metrics))?;
    output::write_file(&path(ARMS_FILE), |w| output::write_arms(w, &experiment))?;
    output::write_file(&path(HISTOGRAM_FILE), |w| output::write_histogram(w, &metrics))?;
    output::write_file(&path(TIMING_FILE), |w| output::write_timing(w, &metrics))?;
    let files: Vec<PathBuf> = [METRICS_FILE, ARMS_FILE, HISTOGRAM_FILE, TIMING_FILE, MANIFEST_FILE]
        .into_iter()
        .map(path)
        .collect();

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        master_seed: experiment.config.seed,
        parallelism: opts.parallelism,
        started_at,
        finished_at,
        config: experiment.config.clone(),
        valuation_model: match &experiment.environment {
            Environment::Market { model, .. } => Some(model.kind_name().to_string()),
            Environment::BernoulliArms { .. } => None,
        },
        best_arm: experiment.table.best_arm,
        best_mean: experiment.table.best_mean,
        arms: RunManifest::arm_records(&experiment),
        policies: metrics
            .policies
            .iter()
            .map(|p| PolicyRunInfo {
                label: p.label.clone(),
                total_rounds: p.total_rounds,
                round_shortfall: p.round_shortfall,
                early_stops: p.early_stops,
                total_decision_seconds: p.total_decision_seconds,
                median_round_seconds: p.median_round_seconds,
            })
            .collect(),
        outputs: files.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(path(MANIFEST_FILE), json + "\n")
        .map_err(|e| CliError::Output(format!("cannot write {}: {e}", path(MANIFEST_FILE).display())))?;
    Ok(RunReport { experiment, metrics, files })
}

/// Human-readable end-of-run table.
pub fn summarize(report: &RunReport) -> String {
    let mut s = String::new();
    let m = &report.metrics;
    let _ = writeln!(s, "horizon {}  episodes {}  best arm {} (mu = {:.6})", m.horizon, m.episodes, report.experiment.table.best_arm, report.experiment.table.best_mean);
    let _ = writeln!(s, "{:<16} {:>14} {:>10} {:>14} {:>12}", "policy", "pseudo-regret", "se", "cum. reward", "decide (s)");
    for p in &m.policies {
        let last = p.final_checkpoint();
        let _ = writeln!(
            s,
            "{:<16} {:>14.3} {:>10.3} {:>14.3} {:>12.4}",
            p.label, last.mean_pseudo_regret, last.se_regret, last.mean_cum_reward, p.total_decision_seconds
        );
    }
    s
}

/// Resolves a config and renders its arm set and mean table.
pub fn validate(path: &Path) -> Result<String> {
    let exp = prepare(path, None, None)?;
    let mut s = String::new();
    let _ = writeln!(s, "config OK: K = {}, T = {}, episodes = {}, policies = {}", exp.num_arms(), exp.config.horizon, exp.config.episodes,
        exp.policies().iter().map(|p| p.label()).collect::<Vec<_>>().join(", "));
    let _ = writeln!(s, "{:>6}  {:>12}  {:>12}  prices", "arm", "mu", "gap");
    for arm in 0..exp.num_arms() {
        let prices = exp
            .arms()
            .map(|a| a[arm].prices.iter().map(|p| output::fmt_float(*p)).collect::<Vec<_>>().join(" "))
            .unwrap_or_default();
        let _ = writeln!(s, "{arm:>6}  {:>12.9}  {:>12.9}  {prices}", exp.table.means[arm], exp.table.gaps[arm]);
    }
    let best = exp.table.best_arm;
    let best_prices = exp
        .arms()
        .map(|a| a[best].prices.iter().map(|p| output::fmt_float(*p)).collect::<Vec<_>>().join(" "))
        .unwrap_or_else(|| "-".into());
    let _ = writeln!(s, "best arm: {best} (mu = {:.9}, prices {best_prices})", exp.table.best_mean);
    Ok(s)
}

pub fn bench_timing(opts: &BenchOptions, out: &Path) -> Result<Vec<BenchRow>> {
    let rows = bench::run(opts)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
    }
    output::write_file(out, |w| output::write_bench(w, &rows))?;
    Ok(rows)
}
