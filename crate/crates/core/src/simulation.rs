//! Synthetic 2PL test data with covariate-driven form assignment, plus the
//! analytic true local transform used as ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stats::sample_variance;
use crate::types::{ExamineeRecord, Form, LinearTransform};

/// Number of quadrature nodes used for marginal score distributions.
pub const QUADRATURE_NODES: usize = 61;
/// Quadrature grid half-width in standard deviations.
pub const QUADRATURE_HALF_WIDTH: f64 = 6.0;

/// Probability of a correct response under the two-parameter logistic model.
#[inline]
pub fn prob_2pl(theta: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + (-a * (theta - b)).exp())
}

/// Strength of the covariate–ability association.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    /// Covariate discriminations drawn from U(0.1, 0.5).
    Weak,
    /// Covariate discriminations drawn from U(0.5, 1.5).
    Medium,
    Custom { a_min: f64, a_max: f64 },
}

impl Correlation {
    pub fn discrimination_range(self) -> (f64, f64) {
        match self {
            Correlation::Weak => (0.1, 0.5),
            Correlation::Medium => (0.5, 1.5),
            Correlation::Custom { a_min, a_max } => (a_min, a_max),
        }
    }

    pub fn label(self) -> String {
        match self {
            Correlation::Weak => "weak".into(),
            Correlation::Medium => "medium".into(),
            Correlation::Custom { a_min, a_max } => format!("custom({a_min},{a_max})"),
        }
    }
}

/// Design constants of one simulation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub items: usize,
    pub anchor_items: usize,
    pub sample_size: usize,
    pub theta_mean_p: f64,
    pub theta_mean_q: f64,
    pub theta_sd: f64,
    pub item_a_range: (f64, f64),
    pub covariate_categories: Vec<usize>,
    pub correlation: Correlation,
    /// `(beta_0, beta_A, beta_1, beta_2, beta_3)`.
    pub beta: Vec<f64>,
    pub strata: usize,
    pub replications: usize,
    pub theta_bins: usize,
    pub trim_alpha: f64,
    pub omission_threshold: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            items: 40,
            anchor_items: 20,
            sample_size: 1000,
            theta_mean_p: 0.0,
            theta_mean_q: 0.5,
            theta_sd: 1.0,
            item_a_range: (0.5, 2.0),
            covariate_categories: vec![3, 4, 5],
            correlation: Correlation::Medium,
            beta: vec![0.0, -0.35, 0.1, -0.1, 0.1],
            strata: 8,
            replications: 500,
            theta_bins: 10,
            trim_alpha: 0.01,
            omission_threshold: 1e-4,
            seed: 20_240_601,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.items == 0 || self.anchor_items == 0 {
            return bad("item counts must be positive");
        }
        if self.sample_size < 2 * self.strata.max(1) {
            return bad("sample size too small for the number of strata");
        }
        if self.strata == 0 || self.replications == 0 || self.theta_bins == 0 {
            return bad("strata, replications and theta bins must be positive");
        }
        if self.beta.len() != 2 + self.covariate_categories.len() {
            return bad("beta needs an intercept, an anchor coefficient and one coefficient per covariate");
        }
        if self.covariate_categories.iter().any(|&m| m < 2) {
            return bad("covariates need at least 2 categories");
        }
        if !(self.theta_sd > 0.0) {
            return bad("theta sd must be positive");
        }
        let (lo, hi) = self.item_a_range;
        let (clo, chi) = self.correlation.discrimination_range();
        if !(lo > 0.0 && hi >= lo && clo >= 0.0 && chi >= clo) {
            return bad("discrimination ranges must be non-negative and ordered");
        }
        if !(0.0..0.5).contains(&self.trim_alpha) {
            return bad("trim alpha must lie in [0, 0.5)");
        }
        if !(self.omission_threshold >= 0.0) {
            return bad("omission threshold must be non-negative");
        }
        Ok(())
    }
}

/// Deterministic generator for stream `stream` of the master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemParams {
    pub discrimination: Vec<f64>,
    pub difficulty: Vec<f64>,
}

impl ItemParams {
    pub fn new(discrimination: Vec<f64>, difficulty: Vec<f64>) -> Result<Self> {
        if discrimination.len() != difficulty.len() {
            return Err(Error::DimensionError { expected: discrimination.len(), found: difficulty.len() });
        }
        if discrimination.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidConfig("item discriminations must be positive".into()));
        }
        Ok(Self { discrimination, difficulty })
    }

    /// `a ~ U(a_range)`, `b ~ N(0, 1)`.
    pub fn draw<R: Rng + ?Sized>(n: usize, a_range: (f64, f64), rng: &mut R) -> Self {
        let mut discrimination = Vec::with_capacity(n);
        let mut difficulty = Vec::with_capacity(n);
        for _ in 0..n {
            discrimination.push(uniform(rng, a_range));
            difficulty.push(rng.sample(StandardNormal));
        }
        Self { discrimination, difficulty }
    }

    pub fn len(&self) -> usize {
        self.discrimination.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discrimination.is_empty()
    }

    pub fn probabilities(&self, theta: f64) -> impl Iterator<Item = f64> + '_ {
        self.discrimination.iter().zip(&self.difficulty).map(move |(&a, &b)| prob_2pl(theta, a, b))
    }

    /// Mean and variance of the sum score given `theta` under local independence.
    pub fn score_moments(&self, theta: f64) -> (f64, f64) {
        self.probabilities(theta).fold((0.0, 0.0), |(m, v), p| (m + p, v + p * (1.0 - p)))
    }

    pub fn sample_score<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> u32 {
        self.probabilities(theta).filter(|&p| rng.random::<f64>() < p).count() as u32
    }
}

/// Ordinal covariate built from `m - 1` binary 2PL indicators sharing one
/// discrimination, with sorted difficulties.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateModel {
    pub discrimination: f64,
    pub thresholds: Vec<f64>,
}

impl CovariateModel {
    pub fn draw<R: Rng + ?Sized>(categories: usize, a_range: (f64, f64), rng: &mut R) -> Self {
        let discrimination = uniform(rng, a_range);
        let mut thresholds: Vec<f64> = (0..categories.saturating_sub(1)).map(|_| rng.sample(StandardNormal)).collect();
        thresholds.sort_by(f64::total_cmp);
        Self { discrimination, thresholds }
    }

    pub fn categories(&self) -> usize {
        self.thresholds.len() + 1
    }

    /// Category in `0..categories()`.
    pub fn sample<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> u32 {
        self.thresholds
            .iter()
            .filter(|&&b| rng.random::<f64>() < prob_2pl(theta, self.discrimination, b))
            .count() as u32
    }
}

/// Ordinal covariates for every `theta`; row `i` holds examinee `i`'s codes.
pub fn gen_covariates<R: Rng + ?Sized>(
    thetas: &[f64],
    categories: &[usize],
    discrimination_range: (f64, f64),
    rng: &mut R,
) -> Vec<Vec<u32>> {
    let models: Vec<CovariateModel> =
        categories.iter().map(|&m| CovariateModel::draw(m, discrimination_range, rng)).collect();
    thetas.iter().map(|&t| models.iter().map(|m| m.sample(t, rng)).collect()).collect()
}

/// Fixed test forms and covariate models of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub form_x: ItemParams,
    pub form_y: ItemParams,
    pub anchor: ItemParams,
    pub covariates: Vec<CovariateModel>,
}

impl Design {
    pub fn draw<R: Rng + ?Sized>(config: &SimulationConfig, rng: &mut R) -> Self {
        let form_x = ItemParams::draw(config.items, config.item_a_range, rng);
        let form_y = ItemParams::draw(config.items, config.item_a_range, rng);
        let anchor = ItemParams::draw(config.anchor_items, config.item_a_range, rng);
        let range = config.correlation.discrimination_range();
        let covariates =
            config.covariate_categories.iter().map(|&m| CovariateModel::draw(m, range, rng)).collect();
        Self { form_x, form_y, anchor, covariates }
    }

    /// Draws one sample of examinees: latent group, ability, anchor and
    /// covariate responses, then form assignment from the true propensity
    /// model on the standardized anchor and covariates.
    pub fn generate<R: Rng + ?Sized>(&self, config: &SimulationConfig, rng: &mut R) -> SimulatedSample {
        let n = config.sample_size;
        let mut theta = Vec::with_capacity(n);
        let mut group = Vec::with_capacity(n);
        let mut anchor = Vec::with_capacity(n);
        let mut covariates = Vec::with_capacity(n);
        for _ in 0..n {
            let q = rng.random::<f64>() < 0.5;
            let mean = if q { config.theta_mean_q } else { config.theta_mean_p };
            let z: f64 = rng.sample(StandardNormal);
            let t = mean + config.theta_sd * z;
            theta.push(t);
            group.push(u8::from(q));
            anchor.push(self.anchor.sample_score(t, rng));
            covariates.push(self.covariates.iter().map(|m| m.sample(t, rng)).collect::<Vec<u32>>());
        }

        let standardize = |raw: Vec<f64>| -> Vec<f64> {
            let m = raw.iter().sum::<f64>() / raw.len() as f64;
            let sd = sample_variance(&raw).sqrt();
            raw.iter().map(|v| if sd > 0.0 { (v - m) / sd } else { 0.0 }).collect()
        };
        let z_anchor = standardize(anchor.iter().map(|&a| a as f64).collect());
        let z_cov: Vec<Vec<f64>> = (0..self.covariates.len())
            .map(|c| standardize(covariates.iter().map(|row| row[c] as f64).collect()))
            .collect();

        let beta = &config.beta;
        let mut records = Vec::with_capacity(n);
        let mut true_propensity = Vec::with_capacity(n);
        for i in 0..n {
            let eta = beta[0]
                + beta[1] * z_anchor[i]
                + z_cov.iter().zip(&beta[2..]).map(|(col, b)| b * col[i]).sum::<f64>();
            let p = 1.0 / (1.0 + (-eta).exp());
            let form = if rng.random::<f64>() < p { Form::Y } else { Form::X };
            let items = match form {
                Form::X => &self.form_x,
                Form::Y => &self.form_y,
            };
            let score = items.sample_score(theta[i], rng);
            true_propensity.push(p);
            records.push(ExamineeRecord::new(
                form,
                score,
                Some(anchor[i]),
                covariates[i].iter().map(|&c| c as f64).collect(),
            ));
        }
        SimulatedSample { records, theta, group, true_propensity }
    }
}

/// A generated dataset together with the truth only a simulation knows.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSample {
    pub records: Vec<ExamineeRecord>,
    pub theta: Vec<f64>,
    /// Latent population: 0 for P, 1 for Q.
    pub group: Vec<u8>,
    pub true_propensity: Vec<f64>,
}

/// Draws a fresh design and one sample from it.
pub fn gen_population<R: Rng + ?Sized>(config: &SimulationConfig, rng: &mut R) -> (Design, SimulatedSample) {
    let design = Design::draw(config, rng);
    let sample = design.generate(config, rng);
    (design, sample)
}

/// True linear transform for a group of abilities: per-theta score moments
/// of both forms, combined by the laws of total mean and variance.
pub fn true_transform(thetas: &[f64], form_x: &ItemParams, form_y: &ItemParams) -> Result<LinearTransform> {
    if thetas.is_empty() {
        return Err(Error::EmptyInput);
    }
    let pooled = |items: &ItemParams| -> (f64, f64) {
        let n = thetas.len() as f64;
        let moments: Vec<(f64, f64)> = thetas.iter().map(|&t| items.score_moments(t)).collect();
        let mean = moments.iter().map(|m| m.0).sum::<f64>() / n;
        let within = moments.iter().map(|m| m.1).sum::<f64>() / n;
        let between = moments.iter().map(|m| (m.0 - mean) * (m.0 - mean)).sum::<f64>() / n;
        (mean, within + between)
    };
    let (mx, vx) = pooled(form_x);
    let (my, vy) = pooled(form_y);
    if !(vx > 0.0 && vy > 0.0) {
        return Err(Error::InsufficientData("zero conditional score variance".into()));
    }
    LinearTransform::from_moments(mx, vx.sqrt(), my, vy.sqrt())
}

/// Sum-score distribution `P(X = 0..=J)` by the Lord–Wingersky recursion,
/// averaged over the weighted ability nodes.
pub fn score_distribution(items: &ItemParams, nodes: &[(f64, f64)]) -> Result<Vec<f64>> {
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    if nodes.is_empty() || (total - 1.0).abs() > 1e-9 || nodes.iter().any(|n| n.1 < 0.0) {
        return Err(Error::InvalidConfig("quadrature weights must be non-negative and sum to 1".into()));
    }
    let mut out = vec![0.0; items.len() + 1];
    for &(theta, weight) in nodes {
        let probs: Vec<f64> = items.probabilities(theta).collect();
        for (s, p) in lord_wingersky(&probs).into_iter().enumerate() {
            out[s] += weight * p;
        }
    }
    Ok(out)
}

/// Distribution of the number of successes among independent items with
/// success probabilities `probs`.
pub fn lord_wingersky(probs: &[f64]) -> Vec<f64> {
    let mut dist = Vec::with_capacity(probs.len() + 1);
    dist.push(1.0);
    for &p in probs {
        dist.push(0.0);
        for s in (0..dist.len()).rev() {
            let stay = dist[s] * (1.0 - p);
            let up = if s > 0 { dist[s - 1] * p } else { 0.0 };
            dist[s] = stay + up;
        }
    }
    dist
}

/// Equally spaced nodes over `mean ± 6 sd` with normalized normal-density weights.
pub fn normal_quadrature(mean: f64, sd: f64, nodes: usize) -> Vec<(f64, f64)> {
    if nodes == 1 {
        return vec![(mean, 1.0)];
    }
    let step = 2.0 * QUADRATURE_HALF_WIDTH / (nodes - 1) as f64;
    let raw: Vec<(f64, f64)> = (0..nodes)
        .map(|i| {
            let z = -QUADRATURE_HALF_WIDTH + i as f64 * step;
            (mean + sd * z, (-0.5 * z * z).exp())
        })
        .collect();
    let total: f64 = raw.iter().map(|n| n.1).sum();
    raw.into_iter().map(|(t, w)| (t, w / total)).collect()
}

/// Quadrature for the two-population ability mixture of a scenario.
pub fn population_quadrature(config: &SimulationConfig) -> Vec<(f64, f64)> {
    normal_quadrature(config.theta_mean_p, config.theta_sd, QUADRATURE_NODES)
        .into_iter()
        .chain(normal_quadrature(config.theta_mean_q, config.theta_sd, QUADRATURE_NODES))
        .map(|(t, w)| (t, 0.5 * w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn prob_2pl_examples() {
        assert_eq!(prob_2pl(0.3, 1.7, 0.3), 0.5);
        assert_abs_diff_eq!(prob_2pl(3f64.ln(), 1.0, 0.0), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(prob_2pl(1.5, 2.0, 0.5), 1.0 / (1.0 + (-2f64).exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(prob_2pl(1.5, 2.0, 0.5), 0.8808, epsilon = 1e-4);
    }

    #[test]
    fn lord_wingersky_small_cases() {
        let items = ItemParams::new(vec![1.0], vec![0.0]).unwrap();
        assert_eq!(score_distribution(&items, &[(0.0, 1.0)]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(lord_wingersky(&[0.5, 0.5]), vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn lord_wingersky_matches_enumeration() {
        let p = [0.2, 0.5, 0.8];
        let mut expected = [0.0; 4];
        for mask in 0..8u32 {
            let prob: f64 = (0..3).map(|l| if mask >> l & 1 == 1 { p[l] } else { 1.0 - p[l] }).product();
            expected[mask.count_ones() as usize] += prob;
        }
        for (got, want) in lord_wingersky(&p).iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn score_distribution_rejects_bad_weights() {
        let items = ItemParams::new(vec![1.0], vec![0.0]).unwrap();
        assert!(score_distribution(&items, &[(0.0, 0.4)]).is_err());
    }

    #[test]
    fn single_theta_bin_moments() {
        // two items with p = 0.5: mean 1, variance 0.5
        let items = ItemParams::new(vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(items.score_moments(0.0), (1.0, 0.5));
    }

    #[test]
    fn identical_forms_give_identity() {
        let mut rng = stream_rng(7, 0);
        let items = ItemParams::draw(40, (0.5, 2.0), &mut rng);
        let thetas = [-0.4, -0.1, 0.3];
        let t = true_transform(&thetas, &items, &items).unwrap();
        assert_abs_diff_eq!(t.slope, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.apply(17.0), 17.0, epsilon = 1e-12);
    }

    #[test]
    fn true_transform_homotopy_is_continuous() {
        let mut rng = stream_rng(11, 0);
        let x = ItemParams::draw(40, (0.5, 2.0), &mut rng);
        let y0 = ItemParams::draw(40, (0.5, 2.0), &mut rng);
        let thetas = [0.1, 0.2, 0.35];
        let mut prev_gap = f64::INFINITY;
        for step in 0..=5 {
            let s = step as f64 / 5.0;
            let blend = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (1.0 - s) * u + s * v).collect::<Vec<_>>();
            let y = ItemParams::new(
                blend(&y0.discrimination, &x.discrimination),
                blend(&y0.difficulty, &x.difficulty),
            )
            .unwrap();
            let t = true_transform(&thetas, &x, &y).unwrap();
            let gap = (t.slope - 1.0).abs() + (t.mu_x - t.mu_y).abs();
            assert!(gap <= prev_gap + 1e-12);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-12);
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        let q = normal_quadrature(0.5, 1.0, QUADRATURE_NODES);
        assert_eq!(q.len(), 61);
        assert_abs_diff_eq!(q.iter().map(|n| n.1).sum::<f64>(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(q.iter().map(|n| n.0 * n.1).sum::<f64>(), 0.5, epsilon = 1e-12);
        let mix = population_quadrature(&SimulationConfig::default());
        assert_abs_diff_eq!(mix.iter().map(|n| n.1).sum::<f64>(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn binary_covariate_is_one_indicator() {
        let mut rng = stream_rng(3, 0);
        let m = CovariateModel::draw(2, (1.0, 1.0), &mut rng);
        assert_eq!(m.thresholds.len(), 1);
        assert_eq!(m.categories(), 2);
        let codes = gen_covariates(&[0.0; 50], &[2], (1.0, 1.0), &mut rng);
        assert!(codes.iter().all(|row| row.len() == 1 && row[0] <= 1));
    }

    #[test]
    fn generation_is_reproducible() {
        let config = SimulationConfig { sample_size: 300, ..SimulationConfig::default() };
        let a = gen_population(&config, &mut stream_rng(5, 1));
        let b = gen_population(&config, &mut stream_rng(5, 1));
        assert_eq!(a, b);
        let c = gen_population(&config, &mut stream_rng(5, 2));
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn config_validation() {
        assert!(SimulationConfig::default().validate().is_ok());
        let bad = SimulationConfig { beta: vec![0.0; 3], ..SimulationConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SimulationConfig { covariate_categories: vec![1, 3, 4], ..SimulationConfig::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn prob_2pl_monotone_and_symmetric(a in 0.01f64..4.0, b in -3.0f64..3.0, t in -4.0f64..4.0, d in 0.0f64..3.0) {
            prop_assert!(prob_2pl(t + 0.01, a, b) > prob_2pl(t, a, b));
            prop_assert!((prob_2pl(b + d, a, b) + prob_2pl(b - d, a, b) - 1.0).abs() < 1e-14);
        }

        #[test]
        fn score_distribution_is_a_distribution(
            params in prop::collection::vec((0.3f64..2.5, -2.5f64..2.5), 1..30),
            mean in -1.0f64..1.0,
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = params.into_iter().unzip();
            let items = ItemParams::new(a, b).unwrap();
            let nodes = normal_quadrature(mean, 1.0, 21);
            let dist = score_distribution(&items, &nodes).unwrap();
            prop_assert!(dist.iter().all(|p| *p >= 0.0));
            prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let expected_mean: f64 = nodes.iter().map(|&(t, w)| w * items.score_moments(t).0).sum();
            let mean_score: f64 = dist.iter().enumerate().map(|(s, p)| s as f64 * p).sum();
            prop_assert!((mean_score - expected_mean).abs() < 1e-10);
        }
    }
}
