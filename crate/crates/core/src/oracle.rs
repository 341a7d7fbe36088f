//! Ground truth for evaluating policies: expected reward of every arm, the
//! optimal arm, per-arm gaps and pseudo-regret.

use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};
use crate::market::{gaussian_density, PriceVector, ValuationModel};
use crate::policies::bernoulli_kl;
use crate::quadrature;

/// Relative tolerance of the quadrature behind truncated survival functions.
pub const SURVIVAL_REL_TOL: f64 = 1e-10;

/// `Pr[v >= x]` for one product's valuation under a model.
#[derive(Debug, Clone)]
pub struct Survival {
    model: ValuationModel,
    /// Mass of the untruncated density on `[0, 1]`.
    normalizer: f64,
}

impl Survival {
    pub fn new(model: &ValuationModel) -> Self {
        let normalizer = match model {
            ValuationModel::TruncatedGaussian { mean, std } => {
                quadrature::integrate(|y| gaussian_density(y, *mean, *std), 0.0, 1.0, SURVIVAL_REL_TOL)
            }
            ValuationModel::TruncatedExponential { mean } => {
                quadrature::integrate(|y| (-y / mean).exp(), 0.0, 1.0, SURVIVAL_REL_TOL)
            }
            _ => 1.0,
        };
        Self { model: model.clone(), normalizer }
    }

    /// Probability that the valuation for `product` is at least `x`.
    pub fn at(&self, product: usize, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x > 1.0 {
            return 0.0;
        }
        match &self.model {
            ValuationModel::Uniform => 1.0 - x,
            ValuationModel::TruncatedGaussian { mean, std } => {
                quadrature::integrate(|y| gaussian_density(y, *mean, *std), x, 1.0, SURVIVAL_REL_TOL)
                    / self.normalizer
            }
            ValuationModel::TruncatedExponential { mean } => {
                quadrature::integrate(|y| (-y / mean).exp(), x, 1.0, SURVIVAL_REL_TOL) / self.normalizer
            }
            ValuationModel::Bernoulli { probs } => {
                if probs.len() == 1 {
                    probs[0]
                } else {
                    probs[product]
                }
            }
        }
    }
}

/// Expected scaled reward `sum_k p_k Pr[v_k >= p_k] / (M N)` of posting `arm`.
pub fn expected_reward(arm: &PriceVector, model: &ValuationModel) -> f64 {
    expected_reward_with(arm, &Survival::new(model))
}

fn expected_reward_with(arm: &PriceVector, survival: &Survival) -> f64 {
    if arm.prices.is_empty() {
        return 0.0;
    }
    let total: f64 = arm
        .prices
        .iter()
        .enumerate()
        .map(|(k, &p)| p * survival.at(k, p))
        .sum();
    total / arm.len() as f64
}

/// Per-arm expected rewards with the optimum and gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMeanTable {
    pub means: Vec<f64>,
    /// Lowest id among the arms attaining `best_mean`.
    pub best_arm: usize,
    pub best_mean: f64,
    pub gaps: Vec<f64>,
}

impl ArmMeanTable {
    pub fn from_means(means: Vec<f64>) -> Result<Self> {
        if means.is_empty() {
            return config("mean table needs at least one arm");
        }
        if let Some(m) = means.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return config(format!("arm mean {m} outside [0, 1]"));
        }
        let mut best_arm = 0;
        for (i, m) in means.iter().enumerate() {
            if *m > means[best_arm] {
                best_arm = i;
            }
        }
        let best_mean = means[best_arm];
        let gaps = means.iter().map(|m| best_mean - m).collect();
        Ok(Self { means, best_arm, best_mean, gaps })
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }
}

pub fn build_mean_table(arms: &[PriceVector], model: &ValuationModel) -> Result<ArmMeanTable> {
    if arms.is_empty() {
        return config("cannot build a mean table for an empty arm set");
    }
    let survival = Survival::new(model);
    ArmMeanTable::from_means(arms.iter().map(|a| expected_reward_with(a, &survival)).collect())
}

/// Cumulative pseudo-regret sampled at checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSeries {
    pub checkpoints: Vec<u64>,
    pub regret: Vec<f64>,
}

/// `REG_t = t mu* - sum_{tau <= t} mu(arm_tau)` at every checkpoint.
///
/// Accumulated as a running sum of gaps. Checkpoints past the end of
/// `selections` (an early-stopped episode) report the final value.
pub fn pseudo_regret(selections: &[usize], table: &ArmMeanTable, checkpoints: &[u64]) -> Result<RegretSeries> {
    if let Some(w) = checkpoints.windows(2).find(|w| w[0] >= w[1]) {
        return contract(format!("checkpoints must be strictly increasing ({} >= {})", w[0], w[1]));
    }
    if checkpoints.first() == Some(&0) {
        return contract("checkpoints are 1-based rounds");
    }
    let mut regret = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    let mut running = 0.0;
    for (round, &arm) in selections.iter().enumerate() {
        let Some(gap) = table.gaps.get(arm) else {
            return contract(format!("selection {arm} at round {} outside arm set of size {}", round + 1, table.num_arms()));
        };
        running += gap;
        while next.peek().is_some_and(|&&c| c == round as u64 + 1) {
            regret.push(running);
            next.next();
        }
    }
    regret.extend(next.map(|_| running));
    Ok(RegretSeries { checkpoints: checkpoints.to_vec(), regret })
}

/// Coefficient `sum_{mu_p < mu*} gap_p / d(mu_p, mu*)` of `log t` in the
/// asymptotic KL-UCB regret bound, with Bernoulli `d`.
///
/// A suboptimal arm facing `mu* = 1` has infinite divergence and contributes 0.
pub fn log_regret_coefficient(table: &ArmMeanTable) -> f64 {
    table
        .means
        .iter()
        .zip(&table.gaps)
        .filter(|(_, gap)| **gap > 0.0)
        .map(|(mu, gap)| gap / bernoulli_kl(*mu, table.best_mean))
        .sum()
}

/// Powers of two up to `horizon`, plus `horizon` itself.
pub fn geometric_checkpoints(horizon: u64) -> Vec<u64> {
    let mut out: Vec<u64> = std::iter::successors(Some(1u64), |c| c.checked_mul(2))
        .take_while(|c| *c < horizon)
        .collect();
    if horizon > 0 {
        out.push(horizon);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::ValuationSampler;
    use crate::market::{build_arm_set, ArmScheme, PriceLevels, ProductGrid};
    use crate::rng::{derive, Purpose};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn arm(prices: &[f64]) -> PriceVector {
        PriceVector { arm_id: 0, prices: prices.to_vec() }
    }

    fn monte_carlo(arm: &PriceVector, model: &ValuationModel, n: usize, seed: u64) -> (f64, f64) {
        let grid = ProductGrid::new(1, arm.len()).unwrap();
        let s = ValuationSampler::new(model, &grid).unwrap();
        let mut rng = derive(seed, Purpose::Environment, "mc", 0);
        let mut v = vec![0.0; arm.len()];
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            s.fill(&mut rng, &mut v);
            let r: f64 = v.iter().zip(&arm.prices).filter(|(v, p)| v >= p).map(|(_, p)| p).sum::<f64>()
                / arm.len() as f64;
            sum += r;
            sq += r * r;
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn uniform_single_product() {
        let a = arm(&[0.5]);
        assert_eq!(expected_reward(&a, &ValuationModel::Uniform), 0.25);
        let (mc, se) = monte_carlo(&a, &ValuationModel::Uniform, 10_000_000, 1);
        assert_abs_diff_eq!(mc, 0.25, epsilon = 3.0 * se);
    }

    #[test]
    fn uniform_two_products() {
        let a = arm(&[0.25, 0.75]);
        assert_abs_diff_eq!(expected_reward(&a, &ValuationModel::Uniform), 0.1875, epsilon = 1e-15);
        let (mc, se) = monte_carlo(&a, &ValuationModel::Uniform, 2_000_000, 2);
        assert_abs_diff_eq!(mc, 0.1875, epsilon = 3.0 * se);
    }

    #[test]
    fn price_one_earns_nothing_under_continuous_models() {
        for model in [
            ValuationModel::Uniform,
            ValuationModel::TruncatedGaussian { mean: 0.2, std: 0.2 },
            ValuationModel::TruncatedExponential { mean: 2.0 },
        ] {
            assert_eq!(expected_reward(&arm(&[1.0, 1.0]), &model), 0.0);
        }
    }

    #[test]
    fn truncated_survival_matches_closed_forms() {
        use statrs::function::erf::erfc;
        let (mu, sigma) = (0.2, 0.2);
        let upper = |x: f64| 0.5 * erfc((x - mu) / (sigma * std::f64::consts::SQRT_2));
        let g = Survival::new(&ValuationModel::TruncatedGaussian { mean: mu, std: sigma });
        let lambda = 0.5;
        let e = Survival::new(&ValuationModel::TruncatedExponential { mean: 2.0 });
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let want = (upper(x) - upper(1.0)) / (upper(0.0) - upper(1.0));
            assert_relative_eq!(g.at(0, x), want, max_relative = 1e-8, epsilon = 1e-300);
            let want = ((-lambda * x).exp() - (-lambda).exp()) / (1.0 - (-lambda).exp());
            assert_relative_eq!(e.at(0, x), want, max_relative = 1e-8, epsilon = 1e-300);
        }
    }

    #[test]
    fn bernoulli_survival_is_per_product() {
        let model = ValuationModel::Bernoulli { probs: vec![0.2, 0.9] };
        assert_abs_diff_eq!(expected_reward(&arm(&[1.0, 0.5]), &model), (0.2 + 0.45) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn mean_table_examples() {
        let t = ArmMeanTable::from_means(vec![0.3]).unwrap();
        assert_eq!((t.best_arm, t.gaps.clone()), (0, vec![0.0]));

        let t = ArmMeanTable::from_means(vec![0.1, 0.4, 0.4]).unwrap();
        assert_eq!(t.best_arm, 1);
        assert!(ArmMeanTable::from_means(vec![]).is_err());
        assert!(ArmMeanTable::from_means(vec![1.2]).is_err());

        let grid = ProductGrid::new(1, 1).unwrap();
        let levels = PriceLevels::new((1..=9).map(|k| k as f64 / 10.0).collect()).unwrap();
        let arms = build_arm_set(&grid, &levels, 9, ArmScheme::UniformLadder, 0).unwrap();
        let table = build_mean_table(&arms, &ValuationModel::Uniform).unwrap();
        assert_eq!(arms[table.best_arm].prices, vec![0.5]);
        assert_eq!(table.gaps[table.best_arm], 0.0);
        assert!(table.gaps.iter().all(|g| *g >= 0.0));

        let twins = vec![arm(&[0.5]), arm(&[0.5])];
        assert_eq!(build_mean_table(&twins, &ValuationModel::Uniform).unwrap().best_arm, 0);
    }

    #[test]
    fn regret_examples() {
        let t = ArmMeanTable::from_means(vec![0.5, 0.4, 0.3]).unwrap();
        let r = pseudo_regret(&[0; 50], &t, &[1, 10, 50]).unwrap();
        assert_eq!(r.regret, vec![0.0; 3]);

        let r = pseudo_regret(&[1; 100], &t, &[100]).unwrap();
        assert_abs_diff_eq!(r.regret[0], 10.0, epsilon = 1e-12);

        let alt: Vec<usize> = (0..10).map(|i| if i % 2 == 0 { 0 } else { 2 }).collect();
        let r = pseudo_regret(&alt, &t, &[10]).unwrap();
        assert_abs_diff_eq!(r.regret[0], 1.0, epsilon = 1e-12);

        assert!(pseudo_regret(&[3], &t, &[1]).is_err());
        assert!(pseudo_regret(&[0], &t, &[2, 1]).is_err());
        // Past the last selection the series holds its final value.
        let r = pseudo_regret(&[1, 1], &t, &[1, 2, 8]).unwrap();
        assert_abs_diff_eq!(r.regret[2], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn log_regret_coefficient_examples() {
        let all_best = ArmMeanTable::from_means(vec![0.5, 0.5]).unwrap();
        assert_eq!(log_regret_coefficient(&all_best), 0.0);
        // Frozen from 30-digit mpmath: 0.1 / d(0.4, 0.5) and 0.2 / d(0.3, 0.5).
        let two = ArmMeanTable::from_means(vec![0.5, 0.4]).unwrap();
        assert_abs_diff_eq!(log_regret_coefficient(&two), 4.966_349_616_475_454, epsilon = 1e-10);
        let three = ArmMeanTable::from_means(vec![0.5, 0.5, 0.3]).unwrap();
        assert_abs_diff_eq!(log_regret_coefficient(&three), 2.430_639_321_735_940, epsilon = 1e-10);
        let perfect = ArmMeanTable::from_means(vec![1.0, 0.3]).unwrap();
        assert_eq!(log_regret_coefficient(&perfect), 0.0);
    }

    #[test]
    fn geometric_schedule() {
        assert_eq!(geometric_checkpoints(20), vec![1, 2, 4, 8, 16, 20]);
        assert_eq!(geometric_checkpoints(16), vec![1, 2, 4, 8, 16]);
        assert_eq!(geometric_checkpoints(1), vec![1]);
    }

    proptest! {
        #[test]
        fn regret_decomposes_over_pull_counts(
            means in prop::collection::vec(0.0f64..=1.0, 1..8),
            picks in prop::collection::vec(0usize..8, 1..500),
        ) {
            let k = means.len();
            let t = ArmMeanTable::from_means(means).unwrap();
            let sel: Vec<usize> = picks.iter().map(|p| p % k).collect();
            let n = sel.len() as u64;
            let r = pseudo_regret(&sel, &t, &[n]).unwrap();
            let mut counts = vec![0u64; k];
            for s in &sel { counts[*s] += 1; }
            let decomposed: f64 = counts.iter().zip(&t.gaps).map(|(c, g)| *c as f64 * g).sum();
            prop_assert!((r.regret[0] - decomposed).abs() <= 1e-9);
            prop_assert!(r.regret[0] <= n as f64 * t.max_gap() + 1e-9);
        }

        #[test]
        fn regret_is_nondecreasing_and_scales_with_gaps(
            means in prop::collection::vec(0.0f64..=1.0, 2..6),
            picks in prop::collection::vec(0usize..6, 1..200),
            scale in 0.0f64..1.0,
        ) {
            let k = means.len();
            let t = ArmMeanTable::from_means(means).unwrap();
            let sel: Vec<usize> = picks.iter().map(|p| p % k).collect();
            let cps: Vec<u64> = (1..=sel.len() as u64).collect();
            let r = pseudo_regret(&sel, &t, &cps).unwrap();
            prop_assert!(r.regret.windows(2).all(|w| w[0] <= w[1]));
            let scaled = ArmMeanTable::from_means(t.gaps.iter().map(|g| t.best_mean - scale * g).map(|m| m.clamp(0.0, 1.0)).collect()).unwrap();
            let rs = pseudo_regret(&sel, &scaled, &cps).unwrap();
            for (a, b) in r.regret.iter().zip(&rs.regret) {
                prop_assert!((b - scale * a).abs() <= 1e-9);
            }
        }
    }
}
