//! Decision-cost benchmark over a growing number of arms.
//!
//! The environment is a fixed synthetic Bernoulli bandit, so environment cost
//! is negligible and identical across policies; only `select_arm` + `update`
//! time is recorded.

use postprice::policies::PolicyKind;
use postprice::runner::{mean_and_se, run_episode, EnvironmentSpec, Experiment, ExperimentConfig, PolicySpec};

use crate::output::BenchRow;
use crate::{CliError, Result};

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub k_list: Vec<usize>,
    pub trials: u64,
    pub horizon: u64,
    pub seed: u64,
    pub policies: Vec<PolicySpec>,
}

impl BenchOptions {
    pub fn new(k_list: Vec<usize>, trials: u64, horizon: u64) -> Self {
        Self {
            k_list,
            trials,
            horizon,
            seed: 0,
            policies: PolicyKind::ALL.into_iter().map(PolicySpec::new).collect(),
        }
    }
}

/// Arm means spread evenly over `[0.1, 0.9]`, best arm first.
pub fn synthetic_means(k: usize) -> Vec<f64> {
    (0..k).map(|i| 0.9 - 0.8 * i as f64 / (k - 1) as f64).collect()
}

/// One row per `(K, policy)`, K-major in input order.
pub fn run(opts: &BenchOptions) -> Result<Vec<BenchRow>> {
    if opts.k_list.is_empty() {
        return Err(CliError::Config("--k-list must name at least one K".into()));
    }
    if let Some(k) = opts.k_list.iter().find(|k| **k < 2) {
        return Err(CliError::Config(format!("every K must be at least 2 (got {k})")));
    }
    if opts.trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for &k in &opts.k_list {
        let config = ExperimentConfig {
            horizon: opts.horizon,
            episodes: opts.trials,
            seed: opts.seed,
            checkpoints: Some(vec![opts.horizon]),
            environment: EnvironmentSpec::BernoulliArms { means: synthetic_means(k) },
            policies: opts.policies.clone(),
        };
        let exp = Experiment::new(&config)?;
        for spec in exp.policies() {
            let seconds = (0..opts.trials)
                .map(|trial| run_episode(&exp, spec, trial).map(|t| t.decision_seconds))
                .collect::<postprice::Result<Vec<f64>>>()?;
            let (mean, se) = mean_and_se(&seconds);
            rows.push(BenchRow {
                policy: spec.label().to_string(),
                k,
                mean_seconds: mean,
                std_seconds: se * (seconds.len() as f64).sqrt(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_row_per_policy_and_k() {
        let rows = run(&BenchOptions::new(vec![3, 6], 2, 50)).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].k, 3);
        assert_eq!(rows[5].k, 6);
        assert!(rows.iter().all(|r| r.mean_seconds >= 0.0 && r.std_seconds >= 0.0));
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(run(&BenchOptions::new(vec![], 1, 10)).is_err());
        assert!(run(&BenchOptions::new(vec![1], 1, 10)).is_err());
        assert!(run(&BenchOptions::new(vec![5], 0, 10)).is_err());
        // Horizon shorter than K cannot fit the forced exploration.
        assert!(run(&BenchOptions::new(vec![50], 1, 10)).is_err());
    }

    #[test]
    fn synthetic_means_span_the_interval() {
        let m = synthetic_means(5);
        assert_eq!(m.len(), 5);
        assert!((m[0] - 0.9).abs() < 1e-15 && (m[4] - 0.1).abs() < 1e-15);
    }
}
