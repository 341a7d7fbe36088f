//! Bandit policies over a fixed arm set.
//!
//! Every policy is a [`Policy`]: per-arm [`ArmStats`], a round counter and,
//! for Thompson Sampling, Beta posteriors. `select_arm` picks the arm for the
//! next round; `update` feeds back the reward in `[0, 1]` that arm earned.
//! Index policies (KL-UCB, MOSS, UCB) first try every arm once in id order,
//! and break argmax ties toward the lowest arm id.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};

/// Width of the bracket the KL-UCB root finder must close.
pub const KL_UCB_TOLERANCE: f64 = 1e-9;
/// Iteration cap of the KL-UCB root finder.
pub const KL_UCB_MAX_ITERS: usize = 100;

/// Pull count and cumulative reward of one arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub pulls: u64,
    pub reward_sum: f64,
}

impl ArmStats {
    pub fn new(pulls: u64, reward_sum: f64) -> Self {
        Self { pulls, reward_sum }
    }

    /// Stats of an arm pulled `pulls` times with the given average reward.
    pub fn with_mean(mean: f64, pulls: u64) -> Self {
        Self { pulls, reward_sum: mean * pulls as f64 }
    }

    /// `reward_sum / pulls`, or `None` before the first pull.
    pub fn empirical_mean(&self) -> Option<f64> {
        (self.pulls > 0).then(|| (self.reward_sum / self.pulls as f64).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    KlUcb,
    Moss,
    Ucb,
    Thompson,
    EpsilonGreedy,
    /// Round-robin over the arms with no learning; a decision-cost baseline.
    Null,
}

impl PolicyKind {
    /// The five learning policies, in reporting order.
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::KlUcb,
        PolicyKind::Moss,
        PolicyKind::Ucb,
        PolicyKind::Thompson,
        PolicyKind::EpsilonGreedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::KlUcb => "kl_ucb",
            PolicyKind::Moss => "moss",
            PolicyKind::Ucb => "ucb",
            PolicyKind::Thompson => "thompson",
            PolicyKind::EpsilonGreedy => "epsilon_greedy",
            PolicyKind::Null => "null",
        }
    }

    fn forces_exploration(self) -> bool {
        matches!(self, PolicyKind::KlUcb | PolicyKind::Moss | PolicyKind::Ucb)
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        [PolicyKind::Null]
            .into_iter()
            .chain(PolicyKind::ALL)
            .find(|k| k.name() == s)
            .ok_or_else(|| crate::Error::Config(format!("unknown policy kind `{s}`")))
    }
}

/// Divergence used inside the KL-UCB index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    #[default]
    Bernoulli,
    Exponential,
}

/// What epsilon-greedy maximizes on its exploit steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExploitRule {
    #[default]
    EmpiricalMean,
    UcbIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// KL-UCB exploration constant in `f(t) = log t + gamma log log t`.
    pub gamma: f64,
    /// Exploration probability of epsilon-greedy.
    pub epsilon: f64,
    pub divergence: Divergence,
    pub horizon: u64,
    pub num_arms: usize,
    pub eg_exploit_rule: ExploitRule,
}

impl PolicyConfig {
    /// Defaults: `gamma = 0`, `epsilon = 0.1`, Bernoulli divergence,
    /// empirical-mean exploitation.
    pub fn new(kind: PolicyKind, horizon: u64, num_arms: usize) -> Self {
        Self {
            kind,
            gamma: 0.0,
            epsilon: 0.1,
            divergence: Divergence::Bernoulli,
            horizon,
            num_arms,
            eg_exploit_rule: ExploitRule::EmpiricalMean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_arms == 0 {
            return config("policy needs a non-empty arm set");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return config(format!("gamma must be finite and >= 0 (got {})", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return config(format!("epsilon must lie in [0, 1] (got {})", self.epsilon));
        }
        if self.horizon == 0 {
            return config("horizon must be positive");
        }
        if self.kind == PolicyKind::Moss && self.horizon < self.num_arms as u64 {
            return config(format!(
                "moss needs horizon T >= K (T = {}, K = {})",
                self.horizon, self.num_arms
            ));
        }
        Ok(())
    }
}

/// Beta posterior over an arm's mean reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BetaPosterior {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub arms: Vec<ArmStats>,
    /// Completed rounds; always the sum of all pulls.
    pub round: u64,
    /// Empty unless the policy is Thompson Sampling.
    pub posteriors: Vec<BetaPosterior>,
}

impl PolicyState {
    fn new(kind: PolicyKind, num_arms: usize) -> Self {
        Self {
            arms: vec![ArmStats::default(); num_arms],
            round: 0,
            posteriors: if kind == PolicyKind::Thompson {
                vec![BetaPosterior::default(); num_arms]
            } else {
                Vec::new()
            },
        }
    }
}

/// Bernoulli KL divergence `d(u, v)` with `0 log 0 = 0`.
///
/// Defined for `u, v` in `[0, 1]`; infinite when `v` sits on a boundary that
/// `u` does not (`v = 0 < u` or `u < 1 = v`).
pub fn bernoulli_kl(u: f64, v: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v), "d({u}, {v})");
    if u == v {
        return 0.0;
    }
    if u == 0.0 {
        return -(-v).ln_1p();
    }
    if u == 1.0 {
        return -v.ln();
    }
    if v == 0.0 || v == 1.0 {
        return f64::INFINITY;
    }
    let delta = v - u;
    let x = delta / u;
    let y = delta / (1.0 - u);
    if x.abs() <= 0.01 && y.abs() <= 0.01 {
        // d = sum_{k>=2} (delta^k / k) ((-1)^k u^{1-k} + (1-u)^{1-k}); the
        // first-order terms cancel exactly, so no catastrophic cancellation.
        let mut sum = 0.0;
        let mut xk = -x;
        let mut yk = y;
        for k in 2..=14 {
            xk *= -x;
            yk *= y;
            sum += (u * xk + (1.0 - u) * yk) / k as f64;
            // Odd terms can cancel to zero, so stop on their magnitude bound.
            if (u * xk.abs() + (1.0 - u) * yk.abs()) / (k as f64) <= sum * 1e-17 {
                break;
            }
        }
        sum.max(0.0)
    } else {
        (-u * x.ln_1p() - (1.0 - u) * (-y).ln_1p()).max(0.0)
    }
}

/// Exponential-family divergence `d(u, v) = v/u - 1 - log(v/u)` for `u, v > 0`.
pub fn exponential_kl(u: f64, v: f64) -> Result<f64> {
    if !(u > 0.0 && v > 0.0) {
        return contract(format!("exponential divergence needs u, v > 0 (got {u}, {v})"));
    }
    Ok(exponential_kl_unchecked(u, v))
}

fn exponential_kl_unchecked(u: f64, v: f64) -> f64 {
    let r = v / u;
    ((r - 1.0) - r.ln()).max(0.0)
}

/// Exploration level `f(t) = log t + gamma * max(log log t, 0)`.
pub fn exploration(t: f64, gamma: f64) -> f64 {
    let base = t.ln();
    if gamma == 0.0 {
        base
    } else {
        base + gamma * base.ln().max(0.0)
    }
}

/// KL-UCB index: the largest `q` in `[mean, 1]` with `n d(mean, q) <= f(t)`.
pub fn kl_ucb_index(stats: &ArmStats, t: f64, gamma: f64, divergence: Divergence) -> Result<f64> {
    let Some(mean) = stats.empirical_mean() else {
        return contract("kl_ucb_index requested for an arm with no pulls");
    };
    if !(t >= 1.0) {
        return contract(format!("kl_ucb_index needs round t >= 1 (got {t})"));
    }
    Ok(kl_ucb_solve(mean, stats.pulls as f64, exploration(t, gamma), divergence))
}

fn kl_ucb_solve(mean: f64, pulls: f64, level: f64, divergence: Divergence) -> f64 {
    if mean >= 1.0 {
        return 1.0;
    }
    if level <= 0.0 {
        return mean;
    }
    let divergence_at = |q: f64| -> f64 {
        match divergence {
            Divergence::Bernoulli => bernoulli_kl(mean, q),
            Divergence::Exponential if mean > 0.0 => exponential_kl_unchecked(mean, q),
            Divergence::Exponential => f64::INFINITY,
        }
    };
    let slope_at = |q: f64| -> f64 {
        match divergence {
            Divergence::Bernoulli => (q - mean) / (q * (1.0 - q)),
            Divergence::Exponential => 1.0 / mean - 1.0 / q,
        }
    };
    let excess = |q: f64| pulls * divergence_at(q) - level;
    let mut lo = mean;
    let mut hi = match divergence {
        // Pinsker: d(u, q) > 2 (q - u)^2, so nothing beyond this is feasible.
        Divergence::Bernoulli => (mean + (level / (2.0 * pulls)).sqrt()).min(1.0),
        Divergence::Exponential => 1.0,
    };
    let mut g_hi = excess(hi);
    if g_hi <= 0.0 {
        return hi;
    }
    // The excess is convex and increasing on [mean, 1], so Newton steps taken
    // from the infeasible end never cross the root. Steps that leave the
    // bracket fall back to bisection; once a step is below half the tolerance
    // a probe just left of the Newton point closes the bracket.
    for _ in 0..KL_UCB_MAX_ITERS {
        if hi - lo <= KL_UCB_TOLERANCE {
            break;
        }
        let step = g_hi / (pulls * slope_at(hi));
        let mut probe = hi - step;
        if step.is_finite() && step < 0.5 * KL_UCB_TOLERANCE {
            probe -= 0.5 * KL_UCB_TOLERANCE;
        }
        if !(probe > lo && probe < hi) {
            probe = 0.5 * (lo + hi);
        }
        let g = excess(probe);
        if g <= 0.0 {
            lo = probe;
        } else {
            hi = probe;
            g_hi = g;
        }
    }
    lo
}

/// MOSS index `mean + sqrt(max(log(T / (K n)), 0) / n)`.
pub fn moss_index(stats: &ArmStats, horizon: u64, num_arms: usize) -> Result<f64> {
    let Some(mean) = stats.empirical_mean() else {
        return contract("moss_index requested for an arm with no pulls");
    };
    if num_arms == 0 || horizon < num_arms as u64 {
        return contract(format!("moss_index needs T >= K >= 1 (T = {horizon}, K = {num_arms})"));
    }
    Ok(moss_bound(mean, stats.pulls as f64, horizon as f64 / num_arms as f64))
}

fn moss_bound(mean: f64, pulls: f64, horizon_per_arm: f64) -> f64 {
    let bonus = (horizon_per_arm / pulls).ln().max(0.0);
    mean + (bonus / pulls).sqrt()
}

/// UCB index `mean + sqrt(log t / n)`.
pub fn ucb_index(stats: &ArmStats, t: u64) -> Result<f64> {
    let Some(mean) = stats.empirical_mean() else {
        return contract("ucb_index requested for an arm with no pulls");
    };
    if t == 0 {
        return contract("ucb_index needs round t >= 1");
    }
    Ok(ucb_bound(mean, stats.pulls as f64, (t as f64).ln()))
}

fn ucb_bound(mean: f64, pulls: f64, log_t: f64) -> f64 {
    mean + (log_t / pulls).sqrt()
}

/// First index of the maximum; lowest id wins ties.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// A policy instance for one episode.
#[derive(Debug, Clone)]
pub struct Policy {
    config: PolicyConfig,
    state: PolicyState,
}

impl Policy {
    pub fn new(config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        let state = PolicyState::new(config.kind, config.num_arms);
        Ok(Self { config, state })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    /// Arm to play in round `state.round + 1`.
    pub fn select_arm<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let arms = &self.state.arms;
        let kind = self.config.kind;
        if kind.forces_exploration() {
            if let Some(unplayed) = arms.iter().position(|a| a.pulls == 0) {
                return unplayed;
            }
        }
        let t = self.state.round + 1;
        let mean = |a: &ArmStats| a.reward_sum / a.pulls as f64;
        match kind {
            PolicyKind::KlUcb => {
                let level = exploration(t as f64, self.config.gamma);
                let div = self.config.divergence;
                argmax(arms.iter().map(|a| kl_ucb_solve(mean(a).clamp(0.0, 1.0), a.pulls as f64, level, div)))
            }
            PolicyKind::Moss => {
                let per_arm = self.config.horizon as f64 / self.config.num_arms as f64;
                argmax(arms.iter().map(|a| moss_bound(mean(a), a.pulls as f64, per_arm)))
            }
            PolicyKind::Ucb => {
                let log_t = (t as f64).ln();
                argmax(arms.iter().map(|a| ucb_bound(mean(a), a.pulls as f64, log_t)))
            }
            PolicyKind::Thompson => argmax(self.state.posteriors.iter().map(|p| {
                Beta::new(p.alpha, p.beta)
                    .expect("posterior parameters stay >= 1")
                    .sample(rng)
            })),
            PolicyKind::EpsilonGreedy => {
                if rng.random::<f64>() < self.config.epsilon {
                    return rng.random_range(0..arms.len());
                }
                // Unplayed arms look infinitely good to the exploit step.
                let log_t = (t as f64).ln();
                let rule = self.config.eg_exploit_rule;
                argmax(arms.iter().map(|a| match (a.pulls, rule) {
                    (0, _) => f64::INFINITY,
                    (_, ExploitRule::EmpiricalMean) => mean(a),
                    (_, ExploitRule::UcbIndex) => ucb_bound(mean(a), a.pulls as f64, log_t),
                }))
            }
            PolicyKind::Null => (self.state.round % arms.len() as u64) as usize,
        }
    }

    /// Records the reward earned by `arm` in the current round.
    pub fn update<R: Rng + ?Sized>(&mut self, arm: usize, reward: f64, rng: &mut R) -> Result<()> {
        if arm >= self.state.arms.len() {
            return contract(format!("arm {arm} outside arm set of size {}", self.state.arms.len()));
        }
        if !(0.0..=1.0).contains(&reward) {
            return contract(format!("reward {reward} outside [0, 1]"));
        }
        let stats = &mut self.state.arms[arm];
        stats.pulls += 1;
        stats.reward_sum += reward;
        self.state.round += 1;
        if let Some(post) = self.state.posteriors.get_mut(arm) {
            // Binarize so the Beta posterior stays conjugate.
            if rng.random::<f64>() < reward {
                post.alpha += 1.0;
            } else {
                post.beta += 1.0;
            }
        }
        Ok(())
    }
}

/// Stateless form of [`Policy::select_arm`].
pub fn select_arm<R: Rng + ?Sized>(state: &PolicyState, config: &PolicyConfig, rng: &mut R) -> Result<usize> {
    config.validate()?;
    if state.arms.len() != config.num_arms {
        return contract(format!(
            "state tracks {} arms but config declares {}",
            state.arms.len(),
            config.num_arms
        ));
    }
    let policy = Policy { config: config.clone(), state: state.clone() };
    Ok(policy.select_arm(rng))
}
