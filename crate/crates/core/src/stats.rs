//! Moments, empirical and kernel-smoothed distribution functions.
//!
//! Two moment conventions live side by side: [`unweighted_moments`] uses the
//! `n - 1` denominator (anchor and stratification estimators) while
//! [`weighted_moments`] divides by the weight sum (IPW estimators).

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::types::WeightedSample;

/// Absolute tolerance of the bisection used to invert smooth CDFs.
pub const INVERSE_TOLERANCE: f64 = 1e-8;

/// Weighted mean and standard deviation with the weight sum as denominator.
pub fn weighted_moments(sample: &WeightedSample) -> (f64, f64) {
    let total = sample.total_weight();
    let mean = sample
        .values()
        .iter()
        .zip(sample.weights())
        .map(|(v, w)| w * v)
        .sum::<f64>()
        / total;
    let var = sample
        .values()
        .iter()
        .zip(sample.weights())
        .map(|(v, w)| w * (v - mean) * (v - mean))
        .sum::<f64>()
        / total;
    (mean, var.max(0.0).sqrt())
}

/// Validating wrapper building the sample from raw slices.
pub fn weighted_moments_of(values: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    let sample = WeightedSample::new(values.to_vec(), weights.to_vec())?;
    Ok(weighted_moments(&sample))
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample mean and standard deviation with the `n - 1` denominator.
pub fn unweighted_moments(values: &[f64]) -> Result<(f64, f64)> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "standard deviation needs at least 2 values, got {}",
            values.len()
        )));
    }
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((m, (ss / (values.len() - 1) as f64).sqrt()))
}

/// Sample variance with the `n - 1` denominator; zero for a single value.
pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and non-empty.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// A non-decreasing distribution function on the real line.
pub trait Cdf {
    fn cdf(&self, x: f64) -> f64;

    /// An interval carrying essentially all of the probability mass.
    fn support(&self) -> (f64, f64);

    /// Smallest `x` in `domain` with `cdf(x) >= p`, by bisection.
    fn inverse(&self, p: f64, domain: (f64, f64)) -> Result<f64> {
        check_probability(p)?;
        let (mut lo, mut hi) = domain;
        if self.cdf(lo) >= p {
            return Ok(lo);
        }
        if self.cdf(hi) < p {
            return Ok(hi);
        }
        while hi - lo > INVERSE_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// Generalized inverse of `cdf` over `domain`.
pub fn inverse_cdf<C: Cdf + ?Sized>(cdf: &C, p: f64, domain: (f64, f64)) -> Result<f64> {
    cdf.inverse(p, domain)
}

/// Right-continuous weighted empirical distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEcdf {
    support: Vec<f64>,
    cumulative: Vec<f64>,
}

impl WeightedEcdf {
    pub fn new(sample: &WeightedSample) -> Self {
        let mut pairs: Vec<(f64, f64)> =
            sample.values().iter().copied().zip(sample.weights().iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support = Vec::new();
        let mut mass: Vec<f64> = Vec::new();
        for (v, w) in pairs {
            if support.last() == Some(&v) {
                *mass.last_mut().unwrap() += w;
            } else {
                support.push(v);
                mass.push(w);
            }
        }
        let mut running = 0.0;
        let mut cumulative: Vec<f64> = mass
            .iter()
            .map(|m| {
                running += m;
                running
            })
            .collect();
        let total = running;
        for c in &mut cumulative {
            *c /= total;
        }
        Self { support, cumulative }
    }

    /// Distinct sample values in ascending order.
    pub fn support_points(&self) -> &[f64] {
        &self.support
    }
}

/// Weighted empirical CDF of a sample.
pub fn weighted_ecdf(sample: &WeightedSample) -> WeightedEcdf {
    WeightedEcdf::new(sample)
}

impl Cdf for WeightedEcdf {
    fn cdf(&self, x: f64) -> f64 {
        let k = self.support.partition_point(|v| *v <= x);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    fn support(&self) -> (f64, f64) {
        (self.support[0], *self.support.last().unwrap())
    }

    fn inverse(&self, p: f64, domain: (f64, f64)) -> Result<f64> {
        check_probability(p)?;
        let (lo, hi) = domain;
        if self.cdf(lo) >= p {
            return Ok(lo);
        }
        // the step function only jumps at support points
        let k = self.cumulative.partition_point(|c| *c < p);
        match self.support.get(k) {
            Some(&v) if v <= hi => Ok(v.max(lo)),
            _ => Ok(hi),
        }
    }
}

/// Gaussian-kernel continuization that keeps the weighted mean and variance:
/// the smoothed variable is `a (V + h Z) + (1 - a) mu` with
/// `a = sqrt(sigma^2 / (sigma^2 + h^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCdf {
    values: Vec<f64>,
    weights: Vec<f64>,
    mean: f64,
    shrink: f64,
    bandwidth: f64,
}

impl KernelCdf {
    pub fn new(sample: &WeightedSample, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || bandwidth.is_nan() {
            return Err(Error::InvalidBandwidth(bandwidth));
        }
        let (mean, sd) = weighted_moments(sample);
        let total = sample.total_weight();
        let shrink = if sd > 0.0 {
            if bandwidth.is_infinite() {
                0.0
            } else {
                (sd * sd / (sd * sd + bandwidth * bandwidth)).sqrt()
            }
        } else {
            0.0
        };
        Ok(Self {
            values: sample.values().to_vec(),
            weights: sample.weights().iter().map(|w| w / total).collect(),
            mean,
            shrink,
            bandwidth,
        })
    }

    fn kernel_scale(&self) -> f64 {
        if self.bandwidth.is_infinite() {
            // limit of a * h as h grows: the sample sd
            let var: f64 = self
                .values
                .iter()
                .zip(&self.weights)
                .map(|(v, w)| w * (v - self.mean) * (v - self.mean))
                .sum();
            var.sqrt()
        } else {
            self.shrink * self.bandwidth
        }
    }
}

/// Kernel-smoothed CDF of a sample with the given bandwidth.
pub fn kernel_cdf(sample: &WeightedSample, bandwidth: f64) -> Result<KernelCdf> {
    KernelCdf::new(sample, bandwidth)
}

impl Cdf for KernelCdf {
    fn cdf(&self, x: f64) -> f64 {
        let scale = self.kernel_scale();
        if scale <= 0.0 {
            return if x >= self.mean { 1.0 } else { 0.0 };
        }
        let a = self.shrink;
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * normal_cdf((x - a * v - (1.0 - a) * self.mean) / scale))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    fn support(&self) -> (f64, f64) {
        let a = self.shrink;
        let centre = |v: f64| a * v + (1.0 - a) * self.mean;
        let lo = self.values.iter().map(|v| centre(*v)).fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().map(|v| centre(*v)).fold(f64::NEG_INFINITY, f64::max);
        let pad = 10.0 * self.kernel_scale();
        (lo - pad, hi + pad)
    }
}
