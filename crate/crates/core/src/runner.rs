//! Multi-episode experiments.
//!
//! One round is `select_arm -> sample buyer -> purchase -> settle -> update`.
//! Each episode owns its policy, ledger and two random streams (environment
//! and policy) derived from `(seed, episode)` and `(seed, policy label,
//! episode)`. Every policy therefore faces the same buyers in episode `e`,
//! and the thread schedule cannot influence any result: aggregation is a
//! sequential reduction in `(policy, episode)` order.

use std::collections::HashSet;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::market::{
    build_arm_set, purchase, settle, ArmScheme, CapacityLedger, PriceLevels, PriceVector, ProductGrid,
    ValuationModel, ValuationSampler,
};
use crate::oracle::{build_mean_table, geometric_checkpoints, ArmMeanTable};
use crate::policies::{Divergence, ExploitRule, Policy, PolicyConfig, PolicyKind};
use crate::rng;

fn default_epsilon() -> f64 {
    0.1
}

fn default_episodes() -> u64 {
    1
}

/// A policy entry of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Reporting name and random-stream key; defaults to the kind name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub divergence: Divergence,
    #[serde(default)]
    pub eg_exploit_rule: ExploitRule,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            label: None,
            gamma: 0.0,
            epsilon: default_epsilon(),
            divergence: Divergence::default(),
            eg_exploit_rule: ExploitRule::default(),
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.kind.name())
    }

    pub fn policy_config(&self, horizon: u64, num_arms: usize) -> PolicyConfig {
        PolicyConfig {
            kind: self.kind,
            gamma: self.gamma,
            epsilon: self.epsilon,
            divergence: self.divergence,
            horizon,
            num_arms,
            eg_exploit_rule: self.eg_exploit_rule,
        }
    }
}

/// Posted-price market over `vm_types x edge_nodes` products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub vm_types: usize,
    pub edge_nodes: usize,
    /// Number of arms `K`.
    pub arms: usize,
    /// Shared price ladder; defaults to `K` evenly spaced levels `1/K .. 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_levels: Option<Vec<f64>>,
    #[serde(default)]
    pub arm_scheme: ArmScheme,
    /// Seed for `random_grid`; defaults to the experiment seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_seed: Option<u64>,
    pub valuation: ValuationModel,
    /// Units per product: one entry for all products or one per product.
    /// Absent means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    Market(MarketSpec),
    /// Synthetic arms paying 1 with the given probability, else 0.
    BernoulliArms { means: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: u64,
    #[serde(default = "default_episodes")]
    pub episodes: u64,
    #[serde(default)]
    pub seed: u64,
    /// Rounds at which metrics are reported; defaults to powers of two plus
    /// the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    pub environment: EnvironmentSpec,
    /// Defaults to the five learning policies with default parameters.
    #[serde(default)]
    pub policies: Vec<PolicySpec>,
}

impl ExperimentConfig {
    /// Fills every default explicitly, so the result can be echoed and
    /// re-run without implicit state.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if c.checkpoints.is_none() {
            c.checkpoints = Some(geometric_checkpoints(c.horizon));
        }
        if c.policies.is_empty() {
            c.policies = PolicyKind::ALL.into_iter().map(PolicySpec::new).collect();
        }
        for p in &mut c.policies {
            if p.label.is_none() {
                p.label = Some(p.kind.name().to_string());
            }
        }
        if let EnvironmentSpec::Market(m) = &mut c.environment {
            if m.price_levels.is_none() {
                m.price_levels = Some((1..=m.arms).map(|k| k as f64 / m.arms as f64).collect());
            }
            if m.arm_seed.is_none() {
                m.arm_seed = Some(c.seed);
            }
        }
        c
    }

    pub fn num_arms(&self) -> usize {
        match &self.environment {
            EnvironmentSpec::Market(m) => m.arms,
            EnvironmentSpec::BernoulliArms { means } => means.len(),
        }
    }
}

/// Environment side of a resolved experiment.
#[derive(Debug, Clone)]
pub enum Environment {
    Market {
        grid: ProductGrid,
        arms: Vec<PriceVector>,
        model: ValuationModel,
        sampler: ValuationSampler,
        capacity: Option<Vec<u64>>,
    },
    BernoulliArms { means: Vec<f64> },
}

/// A validated experiment with its arm set and ground-truth table.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub environment: Environment,
    pub table: ArmMeanTable,
    pub checkpoints: Vec<u64>,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let config = config.resolved();
        if config.horizon == 0 {
            return config_err("horizon must be at least 1");
        }
        if config.episodes == 0 {
            return config_err("episodes must be at least 1");
        }
        let k = config.num_arms();
        if k == 0 {
            return config_err("the arm set is empty");
        }
        if config.horizon < k as u64 {
            return config_err(format!(
                "horizon T = {} must be at least the number of arms K = {k}",
                config.horizon
            ));
        }
        let checkpoints = config.checkpoints.clone().unwrap_or_default();
        if checkpoints.is_empty() {
            return config_err("checkpoints must not be empty");
        }
        if let Some(w) = checkpoints.windows(2).find(|w| w[0] >= w[1]) {
            return config_err(format!("checkpoints must be strictly increasing ({} >= {})", w[0], w[1]));
        }
        if checkpoints[0] == 0 || *checkpoints.last().unwrap() > config.horizon {
            return config_err(format!("checkpoints must lie in [1, {}]", config.horizon));
        }
        let mut labels = HashSet::new();
        for p in &config.policies {
            if !labels.insert(p.label().to_string()) {
                return config_err(format!("duplicate policy label `{}`", p.label()));
            }
            p.policy_config(config.horizon, k).validate()?;
        }

        let (environment, table) = match &config.environment {
            EnvironmentSpec::Market(m) => {
                let grid = ProductGrid::new(m.vm_types, m.edge_nodes)?;
                let levels = PriceLevels::new(m.price_levels.clone().unwrap_or_default())?;
                let arms = build_arm_set(&grid, &levels, m.arms, m.arm_scheme, m.arm_seed.unwrap_or(config.seed))?;
                let sampler = ValuationSampler::new(&m.valuation, &grid)?;
                if let Some(cap) = &m.capacity {
                    if cap.len() != 1 && cap.len() != grid.num_products() {
                        return config_err(format!(
                            "capacity needs 1 or {} entries, got {}",
                            grid.num_products(),
                            cap.len()
                        ));
                    }
                }
                let table = build_mean_table(&arms, &m.valuation)?;
                let capacity = m.capacity.as_ref().map(|c| {
                    if c.len() == 1 {
                        vec![c[0]; grid.num_products()]
                    } else {
                        c.clone()
                    }
                });
                (
                    Environment::Market { grid, arms, model: m.valuation.clone(), sampler, capacity },
                    table,
                )
            }
            EnvironmentSpec::BernoulliArms { means } => {
                let table = ArmMeanTable::from_means(means.clone())?;
                (Environment::BernoulliArms { means: means.clone() }, table)
            }
        };
        Ok(Self { config, environment, table, checkpoints })
    }

    pub fn num_arms(&self) -> usize {
        self.table.num_arms()
    }

    pub fn policies(&self) -> &[PolicySpec] {
        &self.config.policies
    }

    /// Price vectors of a market experiment; `None` for synthetic arms.
    pub fn arms(&self) -> Option<&[PriceVector]> {
        match &self.environment {
            Environment::Market { arms, .. } => Some(arms),
            Environment::BernoulliArms { .. } => None,
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    config(msg)
}

/// Everything one episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub selections: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Last simulated round when every product sold out before the horizon.
    pub stop_round: Option<u64>,
    /// Time spent in `select_arm` and `update` only.
    pub decision_seconds: f64,
    /// Order-sensitive hash of every environment draw of the episode.
    pub environment_fingerprint: u64,
}

impl EpisodeTrace {
    pub fn rounds(&self) -> u64 {
        self.selections.len() as u64
    }

    pub fn selection_counts(&self, num_arms: usize) -> Vec<u64> {
        let mut counts = vec![0u64; num_arms];
        for &a in &self.selections {
            counts[a] += 1;
        }
        counts
    }
}

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

fn fold(h: u64, x: f64) -> u64 {
    (h ^ x.to_bits()).wrapping_mul(FNV_PRIME)
}

/// Runs one episode of `policy` in the experiment's environment.
pub fn run_episode(exp: &Experiment, policy: &PolicySpec, episode: u64) -> Result<EpisodeTrace> {
    let horizon = exp.config.horizon;
    let k = exp.num_arms();
    let mut agent = Policy::new(policy.policy_config(horizon, k))?;
    let mut env_rng = rng::environment(exp.config.seed, episode);
    let mut policy_rng = rng::policy(exp.config.seed, policy.label(), episode);

    let mut selections = Vec::with_capacity(horizon as usize);
    let mut rewards = Vec::with_capacity(horizon as usize);
    let mut decision_seconds = 0.0;
    let mut fingerprint = FNV_OFFSET;
    let mut stop_round = None;

    match &exp.environment {
        Environment::Market { grid, arms, sampler, capacity, .. } => {
            let mut ledger = match capacity {
                Some(c) => CapacityLedger::finite(c.clone()),
                None => CapacityLedger::unlimited(grid.num_products()),
            };
            let mut valuations = vec![0.0; grid.num_products()];
            for t in 1..=horizon {
                let started = Instant::now();
                let arm = agent.select_arm(&mut policy_rng);
                decision_seconds += started.elapsed().as_secs_f64();

                sampler.fill(&mut env_rng, &mut valuations);
                fingerprint = valuations.iter().fold(fingerprint, |h, v| fold(h, *v));
                let wanted = purchase(&valuations, &arms[arm])?;
                let outcome = settle(&arms[arm], &wanted, &mut ledger)?;

                let started = Instant::now();
                agent.update(arm, outcome.reward, &mut policy_rng)?;
                decision_seconds += started.elapsed().as_secs_f64();

                selections.push(arm);
                rewards.push(outcome.reward);
                if ledger.all_exhausted() && t < horizon {
                    stop_round = Some(t);
                    break;
                }
            }
        }
        Environment::BernoulliArms { means } => {
            for _ in 0..horizon {
                let started = Instant::now();
                let arm = agent.select_arm(&mut policy_rng);
                decision_seconds += started.elapsed().as_secs_f64();

                let u: f64 = env_rng.random();
                fingerprint = fold(fingerprint, u);
                let reward = if u < means[arm] { 1.0 } else { 0.0 };

                let started = Instant::now();
                agent.update(arm, reward, &mut policy_rng)?;
                decision_seconds += started.elapsed().as_secs_f64();

                selections.push(arm);
                rewards.push(reward);
            }
        }
    }
    Ok(EpisodeTrace {
        selections,
        rewards,
        stop_round,
        decision_seconds,
        environment_fingerprint: fingerprint,
    })
}

/// Checkpoint-level reduction of one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub cumulative_reward: Vec<f64>,
    pub pseudo_regret: Vec<f64>,
    pub selection_counts: Vec<u64>,
    pub rounds: u64,
    pub stop_round: Option<u64>,
    pub decision_seconds: f64,
}

impl EpisodeSummary {
    pub fn from_trace(trace: &EpisodeTrace, table: &ArmMeanTable, checkpoints: &[u64]) -> Self {
        let mut cumulative_reward = Vec::with_capacity(checkpoints.len());
        let mut pseudo_regret = Vec::with_capacity(checkpoints.len());
        let mut reward = 0.0;
        let mut regret = 0.0;
        let mut next = checkpoints.iter().peekable();
        for (i, (&arm, &r)) in trace.selections.iter().zip(&trace.rewards).enumerate() {
            reward += r;
            regret += table.gaps[arm];
            while next.peek().is_some_and(|&&c| c == i as u64 + 1) {
                cumulative_reward.push(reward);
                pseudo_regret.push(regret);
                next.next();
            }
        }
        // Early-stopped episodes hold their last values.
        for _ in next {
            cumulative_reward.push(reward);
            pseudo_regret.push(regret);
        }
        Self {
            cumulative_reward,
            pseudo_regret,
            selection_counts: trace.selection_counts(table.num_arms()),
            rounds: trace.rounds(),
            stop_round: trace.stop_round,
            decision_seconds: trace.decision_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub t: u64,
    pub mean_cum_reward: f64,
    pub se_reward: f64,
    pub mean_pseudo_regret: f64,
    pub se_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub label: String,
    pub kind: PolicyKind,
    pub checkpoints: Vec<CheckpointStats>,
    /// Mean number of times each arm was selected per episode.
    pub mean_selection_counts: Vec<f64>,
    /// Pseudo-regret at the last checkpoint, per episode, in episode order.
    pub episode_final_regret: Vec<f64>,
    pub total_rounds: u64,
    /// `episodes * horizon - total_rounds`; nonzero only under capacity stops.
    pub round_shortfall: u64,
    pub early_stops: u64,
    pub total_decision_seconds: f64,
    /// Median over episodes of the mean decision time per round.
    pub median_round_seconds: f64,
}

impl PolicyMetrics {
    pub fn final_checkpoint(&self) -> &CheckpointStats {
        self.checkpoints.last().expect("experiments have at least one checkpoint")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetrics {
    pub horizon: u64,
    pub episodes: u64,
    pub policies: Vec<PolicyMetrics>,
}

impl ExperimentMetrics {
    pub fn policy(&self, label: &str) -> Option<&PolicyMetrics> {
        self.policies.iter().find(|p| p.label == label)
    }
}

/// Mean and standard error of the mean (sample std / sqrt(n); 0 for n = 1).
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn aggregate(exp: &Experiment, spec: &PolicySpec, episodes: &[EpisodeSummary]) -> PolicyMetrics {
    let checkpoints = exp
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let rewards: Vec<f64> = episodes.iter().map(|e| e.cumulative_reward[i]).collect();
            let regrets: Vec<f64> = episodes.iter().map(|e| e.pseudo_regret[i]).collect();
            let (mean_cum_reward, se_reward) = mean_and_se(&rewards);
            let (mean_pseudo_regret, se_regret) = mean_and_se(&regrets);
            CheckpointStats { t, mean_cum_reward, se_reward, mean_pseudo_regret, se_regret }
        })
        .collect();
    let k = exp.num_arms();
    let n = episodes.len() as f64;
    let mut mean_selection_counts = vec![0.0; k];
    for e in episodes {
        for (m, c) in mean_selection_counts.iter_mut().zip(&e.selection_counts) {
            *m += *c as f64;
        }
    }
    mean_selection_counts.iter_mut().for_each(|m| *m /= n);
    let total_rounds: u64 = episodes.iter().map(|e| e.rounds).sum();
    let mut per_round: Vec<f64> = episodes
        .iter()
        .map(|e| e.decision_seconds / e.rounds.max(1) as f64)
        .collect();
    per_round.sort_by(f64::total_cmp);
    let median_round_seconds = if per_round.len() % 2 == 1 {
        per_round[per_round.len() / 2]
    } else {
        let h = per_round.len() / 2;
        0.5 * (per_round[h - 1] + per_round[h])
    };
    PolicyMetrics {
        label: spec.label().to_string(),
        kind: spec.kind,
        checkpoints,
        mean_selection_counts,
        episode_final_regret: episodes.iter().map(|e| *e.pseudo_regret.last().unwrap()).collect(),
        total_rounds,
        round_shortfall: exp.config.episodes * exp.config.horizon - total_rounds,
        early_stops: episodes.iter().filter(|e| e.stop_round.is_some()).count() as u64,
        total_decision_seconds: episodes.iter().map(|e| e.decision_seconds).sum(),
        median_round_seconds,
    }
}

/// Runs every policy for every episode on `parallelism` worker threads.
pub fn run_experiment(exp: &Experiment, parallelism: usize) -> Result<ExperimentMetrics> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| crate::Error::Config(format!("cannot start {parallelism} worker threads: {e}")))?;
    let mut policies = Vec::with_capacity(exp.policies().len());
    for spec in exp.policies() {
        let summaries: Vec<EpisodeSummary> = pool.install(|| {
            (0..exp.config.episodes)
                .into_par_iter()
                .map(|e| {
                    run_episode(exp, spec, e).map(|t| EpisodeSummary::from_trace(&t, &exp.table, &exp.checkpoints))
                })
                .collect::<Result<_>>()
        })?;
        policies.push(aggregate(exp, spec, &summaries));
    }
    Ok(ExperimentMetrics { horizon: exp.config.horizon, episodes: exp.config.episodes, policies })
}
