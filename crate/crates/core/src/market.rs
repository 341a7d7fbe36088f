//! Products, price levels, arms and the dynamics of a single buyer round.
//!
//! Products are indexed row-major: product `(i, j)` (VM type `i` at edge node
//! `j`) lives at `i * num_edge_nodes + j` in every per-product vector.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};
use crate::quadrature;
use crate::rng::{self, Purpose};

/// `M` VM types offered at `N` edge nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductGrid {
    num_vm_types: usize,
    num_edge_nodes: usize,
}

impl ProductGrid {
    pub fn new(num_vm_types: usize, num_edge_nodes: usize) -> Result<Self> {
        if num_vm_types == 0 || num_edge_nodes == 0 {
            return config(format!(
                "product grid needs at least one VM type and one edge node (got {num_vm_types} x {num_edge_nodes})"
            ));
        }
        Ok(Self { num_vm_types, num_edge_nodes })
    }

    pub fn num_vm_types(&self) -> usize {
        self.num_vm_types
    }

    pub fn num_edge_nodes(&self) -> usize {
        self.num_edge_nodes
    }

    pub fn num_products(&self) -> usize {
        self.num_vm_types * self.num_edge_nodes
    }

    /// Flat index of product `(vm_type, edge_node)`.
    pub fn product_index(&self, vm_type: usize, edge_node: usize) -> usize {
        debug_assert!(vm_type < self.num_vm_types && edge_node < self.num_edge_nodes);
        vm_type * self.num_edge_nodes + edge_node
    }
}

/// Shared ladder of admissible prices, strictly increasing inside `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PriceLevels(Vec<f64>);

impl PriceLevels {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return config("price levels must not be empty");
        }
        if let Some(bad) = levels.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return config(format!("price level {bad} outside (0, 1]"));
        }
        if let Some(w) = levels.windows(2).find(|w| w[0] >= w[1]) {
            return config(format!(
                "price levels must be strictly increasing ({} >= {})",
                w[0], w[1]
            ));
        }
        Ok(Self(levels))
    }

    /// `V` evenly spaced levels `1/V, 2/V, ..., 1`.
    pub fn evenly_spaced(count: usize) -> Result<Self> {
        if count == 0 {
            return config("price level count must be positive");
        }
        Self::new((1..=count).map(|k| k as f64 / count as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for PriceLevels {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PriceLevels> for Vec<f64> {
    fn from(p: PriceLevels) -> Self {
        p.0
    }
}

/// One arm: a price for every product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceVector {
    pub arm_id: usize,
    pub prices: Vec<f64>,
}

impl PriceVector {
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// How the `K` arms are carved out of the `V^(M*N)` possible price vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmScheme {
    /// Arm `k` posts level `k` on every product.
    #[default]
    UniformLadder,
    /// Each product's level drawn independently from a seeded stream,
    /// duplicates rejected.
    RandomGrid,
}

/// Builds exactly `k` distinct price vectors.
pub fn build_arm_set(
    grid: &ProductGrid,
    levels: &PriceLevels,
    k: usize,
    scheme: ArmScheme,
    seed: u64,
) -> Result<Vec<PriceVector>> {
    if k == 0 {
        return config("number of arms K must be at least 1");
    }
    let v = levels.len();
    let products = grid.num_products();
    match scheme {
        ArmScheme::UniformLadder => {
            if k > v {
                return config(format!(
                    "uniform_ladder supports at most V = {v} arms, but K = {k}"
                ));
            }
            Ok(levels.as_slice()[..k]
                .iter()
                .enumerate()
                .map(|(arm_id, &p)| PriceVector { arm_id, prices: vec![p; products] })
                .collect())
        }
        ArmScheme::RandomGrid => {
            let space = (v as u128).checked_pow(products as u32);
            if matches!(space, Some(s) if (k as u128) > s) {
                return config(format!(
                    "random_grid supports at most V^(M*N) = {v}^{products} = {} arms, but K = {k}",
                    space.unwrap_or(u128::MAX)
                ));
            }
            let mut stream = rng::derive(seed, Purpose::Arms, "random_grid", 0);
            let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(k);
            let mut arms = Vec::with_capacity(k);
            while arms.len() < k {
                let idx: Vec<usize> = (0..products).map(|_| stream.random_range(0..v)).collect();
                if seen.insert(idx.clone()) {
                    arms.push(PriceVector {
                        arm_id: arms.len(),
                        prices: idx.iter().map(|&l| levels.as_slice()[l]).collect(),
                    });
                }
            }
            Ok(arms)
        }
    }
}

/// Distribution of a buyer's private valuation for each product, supported on
/// `[0, 1]`. Truncated variants are renormalized onto `[0, 1]`, never clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValuationModel {
    Uniform,
    TruncatedGaussian { mean: f64, std: f64 },
    /// Exponential with the given mean (`1 / lambda`) before truncation.
    TruncatedExponential { mean: f64 },
    /// Valuation is 1 with the given probability, else 0. One entry per
    /// product, or a single entry shared by every product.
    Bernoulli { probs: Vec<f64> },
}

impl ValuationModel {
    pub fn validate(&self, grid: &ProductGrid) -> Result<()> {
        match self {
            ValuationModel::Uniform => Ok(()),
            ValuationModel::TruncatedGaussian { mean, std } => {
                if !mean.is_finite() || !(*std > 0.0 && std.is_finite()) {
                    return config(format!(
                        "truncated_gaussian needs finite mean and positive std (got mean {mean}, std {std})"
                    ));
                }
                // Rejection sampling must terminate in reasonable time.
                let mass = quadrature::integrate(|x| gaussian_density(x, *mean, *std), 0.0, 1.0, 1e-10);
                if mass < 1e-6 {
                    return config(format!(
                        "truncated_gaussian(mean {mean}, std {std}) puts only {mass:e} mass on [0, 1]"
                    ));
                }
                Ok(())
            }
            ValuationModel::TruncatedExponential { mean } => {
                if !(*mean > 0.0 && mean.is_finite()) {
                    return config(format!("truncated_exponential needs a positive mean (got {mean})"));
                }
                Ok(())
            }
            ValuationModel::Bernoulli { probs } => {
                if probs.len() != 1 && probs.len() != grid.num_products() {
                    return config(format!(
                        "bernoulli needs 1 or {} probabilities, got {}",
                        grid.num_products(),
                        probs.len()
                    ));
                }
                if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return config(format!("bernoulli probability {p} outside [0, 1]"));
                }
                Ok(())
            }
        }
    }

    /// Name used in configs and output metadata.
    pub fn kind_name(&self) -> &'static str {
        match self {
            ValuationModel::Uniform => "uniform",
            ValuationModel::TruncatedGaussian { .. } => "truncated_gaussian",
            ValuationModel::TruncatedExponential { .. } => "truncated_exponential",
            ValuationModel::Bernoulli { .. } => "bernoulli",
        }
    }
}

pub(crate) fn gaussian_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
}

/// A [`ValuationModel`] with its per-draw constants precomputed.
#[derive(Debug, Clone)]
pub struct ValuationSampler {
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Uniform,
    Gaussian(Normal<f64>),
    /// Inverse CDF of Exp(mean) restricted to [0, 1]: `-mean * ln(1 - u * mass)`.
    Exponential { mean: f64, mass: f64 },
    Bernoulli(Vec<f64>),
}

impl ValuationSampler {
    pub fn new(model: &ValuationModel, grid: &ProductGrid) -> Result<Self> {
        model.validate(grid)?;
        let kind = match model {
            ValuationModel::Uniform => SamplerKind::Uniform,
            ValuationModel::TruncatedGaussian { mean, std } => SamplerKind::Gaussian(
                Normal::new(*mean, *std).map_err(|e| crate::Error::Config(e.to_string()))?,
            ),
            ValuationModel::TruncatedExponential { mean } => SamplerKind::Exponential {
                mean: *mean,
                mass: -(-1.0 / mean).exp_m1(),
            },
            ValuationModel::Bernoulli { probs } => SamplerKind::Bernoulli(if probs.len() == 1 {
                vec![probs[0]; grid.num_products()]
            } else {
                probs.clone()
            }),
        };
        Ok(Self { kind })
    }

    /// Fills `out` with one i.i.d. valuation per product.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.kind {
            SamplerKind::Uniform => out.iter_mut().for_each(|v| *v = rng.random::<f64>()),
            SamplerKind::Gaussian(normal) => {
                for v in out.iter_mut() {
                    *v = loop {
                        let x = normal.sample(rng);
                        if (0.0..=1.0).contains(&x) {
                            break x;
                        }
                    };
                }
            }
            SamplerKind::Exponential { mean, mass } => {
                for v in out.iter_mut() {
                    let u: f64 = rng.random();
                    *v = (-mean * (-u * mass).ln_1p()).clamp(0.0, 1.0);
                }
            }
            SamplerKind::Bernoulli(probs) => {
                for (v, p) in out.iter_mut().zip(probs) {
                    *v = if rng.random::<f64>() < *p { 1.0 } else { 0.0 };
                }
            }
        }
    }
}

/// Draws one buyer's valuation vector.
pub fn sample_valuations<R: Rng + ?Sized>(
    model: &ValuationModel,
    grid: &ProductGrid,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let sampler = ValuationSampler::new(model, grid)?;
    let mut out = vec![0.0; grid.num_products()];
    sampler.fill(rng, &mut out);
    Ok(out)
}

/// The buyer takes product `(i, j)` iff its valuation is at least the posted
/// price; ties buy.
pub fn purchase(valuations: &[f64], arm: &PriceVector) -> Result<Vec<bool>> {
    if valuations.len() != arm.len() {
        return contract(format!(
            "valuation vector has {} entries but arm {} prices {} products",
            valuations.len(),
            arm.arm_id,
            arm.len()
        ));
    }
    Ok(valuations.iter().zip(&arm.prices).map(|(v, p)| v >= p).collect())
}

/// Result of one round: scaled reward plus what was actually consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// `raw_payment / (M * N)`, always in `[0, 1]`.
    pub reward: f64,
    pub consumption: Vec<bool>,
    /// Sum of the prices of consumed products.
    pub raw_payment: f64,
}

/// Remaining units per product; `None` is unlimited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityLedger {
    initial: Vec<Option<u64>>,
    remaining: Vec<Option<u64>>,
}

impl CapacityLedger {
    pub fn unlimited(num_products: usize) -> Self {
        Self::new(vec![None; num_products])
    }

    pub fn finite(units: Vec<u64>) -> Self {
        Self::new(units.into_iter().map(Some).collect())
    }

    pub fn new(remaining: Vec<Option<u64>>) -> Self {
        Self { initial: remaining.clone(), remaining }
    }

    pub fn len(&self) -> usize {
        self.remaining.len()
    }

    pub fn is_empty(&self) -> bool {
        self.remaining.is_empty()
    }

    pub fn remaining(&self, product: usize) -> Option<u64> {
        self.remaining[product]
    }

    /// Units sold so far of a finite product; `None` for unlimited ones.
    pub fn sold(&self, product: usize) -> Option<u64> {
        Some(self.initial[product]? - self.remaining[product]?)
    }

    /// True once every product is finite and at zero.
    pub fn all_exhausted(&self) -> bool {
        !self.remaining.is_empty() && self.remaining.iter().all(|r| *r == Some(0))
    }
}

/// Collects payment for a purchase decision and draws down capacity.
///
/// A requested product whose capacity is already zero is not sold: its
/// consumption entry is forced to 0 before the payment is computed.
pub fn settle(arm: &PriceVector, consumption: &[bool], ledger: &mut CapacityLedger) -> Result<Outcome> {
    if consumption.len() != arm.len() || ledger.len() != arm.len() {
        return contract(format!(
            "settle: arm has {} prices, consumption {} entries, ledger {} products",
            arm.len(),
            consumption.len(),
            ledger.len()
        ));
    }
    let mut sold = consumption.to_vec();
    let mut raw_payment = 0.0;
    for (product, wants) in sold.iter_mut().enumerate() {
        if !*wants {
            continue;
        }
        match &mut ledger.remaining[product] {
            Some(0) => *wants = false,
            Some(units) => {
                *units -= 1;
                raw_payment += arm.prices[product];
            }
            None => raw_payment += arm.prices[product],
        }
    }
    Ok(Outcome {
        reward: raw_payment / arm.len() as f64,
        consumption: sold,
        raw_payment,
    })
}

/// Buyer surplus `sum (v - p) * c`.
pub fn buyer_utility(valuations: &[f64], arm: &PriceVector, consumption: &[bool]) -> Result<f64> {
    if valuations.len() != arm.len() || consumption.len() != arm.len() {
        return contract(format!(
            "buyer_utility: {} valuations, {} prices, {} consumption entries",
            valuations.len(),
            arm.len(),
            consumption.len()
        ));
    }
    Ok(valuations
        .iter()
        .zip(&arm.prices)
        .zip(consumption)
        .filter(|(_, c)| **c)
        .map(|((v, p), _)| v - p)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn single() -> ProductGrid {
        ProductGrid::new(1, 1).unwrap()
    }

    fn arm(prices: &[f64]) -> PriceVector {
        PriceVector { arm_id: 0, prices: prices.to_vec() }
    }

    #[test]
    fn grid_counts_products() {
        let g = ProductGrid::new(3, 3).unwrap();
        assert_eq!(g.num_products(), 9);
        assert_eq!(g.product_index(2, 1), 7);
        assert!(ProductGrid::new(0, 3).is_err());
    }

    #[test]
    fn price_levels_validation() {
        assert!(PriceLevels::new(vec![0.2, 0.2]).is_err());
        assert!(PriceLevels::new(vec![0.0, 0.5]).is_err());
        assert!(PriceLevels::new(vec![0.5, 1.1]).is_err());
        assert!(PriceLevels::new(vec![]).is_err());
        let l = PriceLevels::evenly_spaced(4).unwrap();
        assert_eq!(l.as_slice(), &[0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn ladder_is_the_level_list() {
        let levels = PriceLevels::new(vec![0.25, 0.5, 0.75]).unwrap();
        let arms = build_arm_set(&single(), &levels, 3, ArmScheme::UniformLadder, 0).unwrap();
        let prices: Vec<Vec<f64>> = arms.iter().map(|a| a.prices.clone()).collect();
        assert_eq!(prices, vec![vec![0.25], vec![0.5], vec![0.75]]);
        assert_eq!(arms.iter().map(|a| a.arm_id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn ladder_rejects_k_above_v() {
        let levels = PriceLevels::new(vec![0.25, 0.5, 0.75]).unwrap();
        let err = build_arm_set(&single(), &levels, 4, ArmScheme::UniformLadder, 0).unwrap_err();
        assert!(matches!(err, crate::Error::Config(ref m) if m.contains("V = 3")), "{err}");
    }

    #[test]
    fn random_grid_is_distinct_and_reproducible() {
        let grid = ProductGrid::new(2, 1).unwrap();
        let levels = PriceLevels::evenly_spaced(5).unwrap();
        let a = build_arm_set(&grid, &levels, 20, ArmScheme::RandomGrid, 7).unwrap();
        let b = build_arm_set(&grid, &levels, 20, ArmScheme::RandomGrid, 7).unwrap();
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|p| p.len() == 2));
        let bits = |v: &[PriceVector]| -> Vec<Vec<u64>> {
            v.iter().map(|p| p.prices.iter().map(|x| x.to_bits()).collect()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let distinct: HashSet<Vec<u64>> = bits(&a).into_iter().collect();
        assert_eq!(distinct.len(), 20);
        for p in &a {
            assert!(p.prices.iter().all(|x| levels.as_slice().contains(x)));
        }
    }

    #[test]
    fn random_grid_can_fill_the_whole_space() {
        let grid = ProductGrid::new(2, 1).unwrap();
        let levels = PriceLevels::evenly_spaced(3).unwrap();
        assert_eq!(build_arm_set(&grid, &levels, 9, ArmScheme::RandomGrid, 1).unwrap().len(), 9);
        let err = build_arm_set(&grid, &levels, 10, ArmScheme::RandomGrid, 1).unwrap_err();
        assert!(err.to_string().contains("3^2 = 9"), "{err}");
    }

    #[test]
    fn degenerate_bernoulli_is_all_ones() {
        let grid = ProductGrid::new(2, 2).unwrap();
        let mut rng = derive(1, Purpose::Environment, "", 0);
        let v = sample_valuations(&ValuationModel::Bernoulli { probs: vec![1.0] }, &grid, &mut rng).unwrap();
        assert_eq!(v, vec![1.0; 4]);
    }

    #[test]
    fn uniform_mean_converges() {
        let mut rng = derive(2, Purpose::Environment, "", 0);
        let s = ValuationSampler::new(&ValuationModel::Uniform, &single()).unwrap();
        let n = 1_000_000;
        let mut buf = [0.0];
        let mut sum = 0.0;
        for _ in 0..n {
            s.fill(&mut rng, &mut buf);
            sum += buf[0];
        }
        assert_abs_diff_eq!(sum / n as f64, 0.5, epsilon = 0.005);
    }

    #[test]
    fn truncated_gaussian_mean_matches_closed_form() {
        use statrs::function::erf::erf;
        let (mu, sigma) = (0.2, 0.2);
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let cdf = |z: f64| 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
        let (a, b) = ((0.0 - mu) / sigma, (1.0 - mu) / sigma);
        let z = cdf(b) - cdf(a);
        let mean = mu + sigma * (phi(a) - phi(b)) / z;
        let var = sigma * sigma * (1.0 + (a * phi(a) - b * phi(b)) / z - ((phi(a) - phi(b)) / z).powi(2));

        let model = ValuationModel::TruncatedGaussian { mean: mu, std: sigma };
        let s = ValuationSampler::new(&model, &single()).unwrap();
        let mut rng = derive(3, Purpose::Environment, "", 0);
        let n = 1_000_000;
        let mut buf = [0.0];
        let mut sum = 0.0;
        for _ in 0..n {
            s.fill(&mut rng, &mut buf);
            assert!((0.0..=1.0).contains(&buf[0]));
            sum += buf[0];
        }
        let band = 3.0 * (var / n as f64).sqrt();
        assert_abs_diff_eq!(sum / n as f64, mean, epsilon = band);
    }

    #[test]
    fn truncated_exponential_is_renormalized_not_clipped() {
        let model = ValuationModel::TruncatedExponential { mean: 2.0 };
        let s = ValuationSampler::new(&model, &single()).unwrap();
        let mut rng = derive(4, Purpose::Environment, "", 0);
        let n = 200_000;
        let mut buf = [0.0];
        let mut at_one = 0;
        let mut sum = 0.0;
        for _ in 0..n {
            s.fill(&mut rng, &mut buf);
            if buf[0] == 1.0 {
                at_one += 1;
            }
            sum += buf[0];
        }
        // No point mass at the truncation edge.
        assert!(at_one < 5);
        // Mean of Exp(mean 2) on [0, 1]: 2 - e^{-1/2} / (1 - e^{-1/2}).
        let e = (-0.5f64).exp();
        let exact = 2.0 - e / (1.0 - e);
        assert_abs_diff_eq!(sum / n as f64, exact, epsilon = 3.0 * (1.0 / 12.0 / n as f64).sqrt());
    }

    #[test]
    fn invalid_models_are_rejected() {
        let g = ProductGrid::new(1, 2).unwrap();
        assert!(ValuationModel::TruncatedGaussian { mean: 0.5, std: 0.0 }.validate(&g).is_err());
        assert!(ValuationModel::TruncatedGaussian { mean: 40.0, std: 0.1 }.validate(&g).is_err());
        assert!(ValuationModel::TruncatedExponential { mean: -1.0 }.validate(&g).is_err());
        assert!(ValuationModel::Bernoulli { probs: vec![0.1, 0.2, 0.3] }.validate(&g).is_err());
        assert!(ValuationModel::Bernoulli { probs: vec![1.5] }.validate(&g).is_err());
        assert!(ValuationModel::Bernoulli { probs: vec![0.1, 0.2] }.validate(&g).is_ok());
    }

    #[test]
    fn purchase_examples() {
        assert_eq!(purchase(&[0.5], &arm(&[0.5])).unwrap(), vec![true]);
        assert_eq!(purchase(&[0.0, 0.0], &arm(&[0.1, 0.9])).unwrap(), vec![false, false]);
        assert_eq!(
            purchase(&[0.7, 0.2, 0.9], &arm(&[0.5, 0.5, 0.5])).unwrap(),
            vec![true, false, true]
        );
        assert!(matches!(purchase(&[0.1], &arm(&[0.1, 0.2])), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn settle_examples() {
        let a = arm(&[0.5, 0.5]);
        let mut ledger = CapacityLedger::unlimited(2);
        let o = settle(&a, &[false, false], &mut ledger).unwrap();
        assert_eq!((o.reward, o.raw_payment), (0.0, 0.0));
        assert_eq!(ledger, CapacityLedger::unlimited(2));

        let o = settle(&a, &[true, true], &mut ledger).unwrap();
        assert_eq!(o.raw_payment, 1.0);
        assert_eq!(o.reward, 0.5);

        let mut ledger = CapacityLedger::new(vec![Some(0), None]);
        let o = settle(&a, &[true, true], &mut ledger).unwrap();
        assert_eq!(o.consumption, vec![false, true]);
        assert_eq!(o.reward, 0.25);
        assert_eq!(ledger.remaining(0), Some(0));
    }

    #[test]
    fn settle_decrements_finite_capacity() {
        let a = arm(&[0.2, 0.4]);
        let mut ledger = CapacityLedger::finite(vec![2, 1]);
        settle(&a, &[true, true], &mut ledger).unwrap();
        assert_eq!((ledger.remaining(0), ledger.remaining(1)), (Some(1), Some(0)));
        assert!(!ledger.all_exhausted());
        let o = settle(&a, &[true, true], &mut ledger).unwrap();
        assert_eq!(o.consumption, vec![true, false]);
        assert_abs_diff_eq!(o.raw_payment, 0.2);
        assert!(ledger.all_exhausted());
        assert_eq!(ledger.sold(0), Some(2));
    }

    #[test]
    fn utility_examples() {
        assert_eq!(buyer_utility(&[0.9], &arm(&[0.5]), &[false]).unwrap(), 0.0);
        assert_abs_diff_eq!(buyer_utility(&[0.8], &arm(&[0.5]), &[true]).unwrap(), 0.3, epsilon = 1e-15);
        assert!(buyer_utility(&[0.8], &arm(&[0.5]), &[true, false]).is_err());
    }

    fn unit() -> impl Strategy<Value = f64> {
        0.0f64..=1.0
    }

    fn price() -> impl Strategy<Value = f64> {
        (1u32..=1000).prop_map(|k| k as f64 / 1000.0)
    }

    proptest! {
        #[test]
        fn raising_a_price_only_weakly_lowers_that_entry(
            v in prop::collection::vec(unit(), 1..8),
            seed_prices in prop::collection::vec(price(), 8),
            which in 0usize..8,
            bump in 0.0f64..0.5,
        ) {
            let n = v.len();
            let which = which % n;
            let low = arm(&seed_prices[..n]);
            let mut high = low.clone();
            high.prices[which] = (high.prices[which] + bump).min(1.0);
            let c0 = purchase(&v, &low).unwrap();
            let c1 = purchase(&v, &high).unwrap();
            for k in 0..n {
                if k == which {
                    prop_assert!(c1[k] <= c0[k]);
                } else {
                    prop_assert_eq!(c1[k], c0[k]);
                }
            }
        }

        #[test]
        fn reward_bounded_and_utility_nonnegative(
            v in prop::collection::vec(unit(), 1..10),
            p in prop::collection::vec(price(), 10),
        ) {
            let a = arm(&p[..v.len()]);
            let c = purchase(&v, &a).unwrap();
            let mut ledger = CapacityLedger::unlimited(v.len());
            let o = settle(&a, &c, &mut ledger).unwrap();
            prop_assert!((0.0..=1.0).contains(&o.reward));
            let paid: f64 = a.prices.iter().zip(&o.consumption).filter(|(_, c)| **c).map(|(p, _)| p).sum();
            prop_assert!((o.raw_payment - paid).abs() < 1e-12);
            prop_assert!(buyer_utility(&v, &a, &c).unwrap() >= 0.0);
        }

        #[test]
        fn ledger_conserves_units(
            caps in prop::collection::vec(0u64..5, 1..5),
            rounds in prop::collection::vec(prop::collection::vec(any::<bool>(), 5), 0..20),
        ) {
            let n = caps.len();
            let a = arm(&vec![0.5; n]);
            let mut ledger = CapacityLedger::finite(caps.clone());
            let mut sold = vec![0u64; n];
            for want in &rounds {
                let o = settle(&a, &want[..n], &mut ledger).unwrap();
                for (k, c) in o.consumption.iter().enumerate() {
                    sold[k] += *c as u64;
                }
            }
            for k in 0..n {
                prop_assert_eq!(caps[k] - ledger.remaining(k).unwrap(), sold[k]);
                prop_assert_eq!(ledger.sold(k).unwrap(), sold[k]);
            }
        }

        #[test]
        fn valuation_streams_are_deterministic(seed in any::<u64>(), kind in 0usize..4) {
            let grid = ProductGrid::new(3, 3).unwrap();
            let model = [
                ValuationModel::Uniform,
                ValuationModel::TruncatedGaussian { mean: 0.2, std: 0.2 },
                ValuationModel::TruncatedExponential { mean: 2.0 },
                ValuationModel::Bernoulli { probs: vec![0.3] },
            ][kind].clone();
            let mut r1 = derive(seed, Purpose::Environment, "", 0);
            let mut r2 = derive(seed, Purpose::Environment, "", 0);
            for _ in 0..20 {
                let a = sample_valuations(&model, &grid, &mut r1).unwrap();
                let b = sample_valuations(&model, &grid, &mut r2).unwrap();
                prop_assert!(a.iter().all(|x| (0.0..=1.0).contains(x)));
                prop_assert_eq!(a, b);
            }
        }
    }
}
