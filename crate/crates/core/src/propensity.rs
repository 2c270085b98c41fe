//! Propensity-score estimation, quantile stratification and covariate balance.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::{quantile_linear, sample_variance};
use crate::types::{covariate_arity, ExamineeRecord, Form};

/// Lower and upper clamp applied to every estimated propensity.
pub const PROPENSITY_FLOOR: f64 = 1e-6;
/// Coefficient magnitude beyond which a fit is treated as separated.
pub const SEPARATION_BOUND: f64 = 15.0;
/// ASMD below this value counts as satisfactory balance.
pub const BALANCE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovariateKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncodeWarning {
    /// Covariate with a single observed value; its columns were dropped.
    DegenerateColumn { covariate: usize },
}

/// Encoded covariates, row-major, without the intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub n_rows: usize,
    pub column_names: Vec<String>,
    /// Covariate index each column was derived from.
    pub source: Vec<usize>,
    pub data: Vec<f64>,
    pub warnings: Vec<EncodeWarning>,
}

impl DesignMatrix {
    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i)[j]).collect()
    }

    /// Builds a design matrix from already-encoded rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * p);
        for r in rows {
            if r.len() != p {
                return Err(Error::DimensionError { expected: p, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            n_rows: rows.len(),
            column_names: (0..p).map(|j| format!("c{j}")).collect(),
            source: (0..p).collect(),
            data,
            warnings: Vec::new(),
        })
    }
}

/// Standardizes numeric covariates (mean 0, sd 1 with the `n - 1` sd) and
/// dummy-codes categorical ones against their lowest level. Constant
/// covariates are dropped and reported in `warnings`.
pub fn encode_covariates(records: &[ExamineeRecord], kinds: &[CovariateKind]) -> Result<DesignMatrix> {
    let arity = covariate_arity(records)?;
    if arity != kinds.len() {
        return Err(Error::DimensionError { expected: kinds.len(), found: arity });
    }
    let n = records.len();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    let mut source = Vec::new();
    let mut warnings = Vec::new();

    for (c, kind) in kinds.iter().enumerate() {
        let raw: Vec<f64> = records.iter().map(|r| r.covariates[c]).collect();
        let mut levels = raw.clone();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        if levels.len() < 2 {
            warn!("covariate {c} has a single observed value and was dropped");
            warnings.push(EncodeWarning::DegenerateColumn { covariate: c });
            continue;
        }
        match kind {
            CovariateKind::Numeric => {
                let m = raw.iter().sum::<f64>() / n as f64;
                let sd = sample_variance(&raw).sqrt();
                columns.push(raw.iter().map(|v| (v - m) / sd).collect());
                names.push(format!("c{c}"));
                source.push(c);
            }
            CovariateKind::Categorical => {
                for level in &levels[1..] {
                    columns.push(raw.iter().map(|v| if v == level { 1.0 } else { 0.0 }).collect());
                    names.push(format!("c{c}={level}"));
                    source.push(c);
                }
            }
        }
    }

    let p = columns.len();
    let mut data = Vec::with_capacity(n * p);
    for i in 0..n {
        data.extend(columns.iter().map(|col| col[i]));
    }
    Ok(DesignMatrix { n_rows: n, column_names: names, source, data, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stop when the largest coefficient update is at most this.
    pub tolerance: f64,
    /// Stop when the largest mean score component is at most this.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, gradient_tolerance: 1e-6, max_iterations: 100 }
    }
}

/// Fitted logistic propensity model, intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_log_likelihood: f64,
    /// Largest absolute component of the mean score at the returned fit.
    pub gradient_norm: f64,
    /// Coefficients diverged and were clamped to `±SEPARATION_BOUND`.
    pub separation: bool,
}

impl PropensityModel {
    pub fn linear_predictor(&self, row: &[f64]) -> Result<f64> {
        if row.len() + 1 != self.coefficients.len() {
            return Err(Error::DimensionError {
                expected: self.coefficients.len() - 1,
                found: row.len(),
            });
        }
        Ok(self.coefficients[0]
            + self.coefficients[1..].iter().zip(row).map(|(b, x)| b * x).sum::<f64>())
    }

    pub fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        (0..design.n_rows).map(|i| estimate_propensity(self, design.row(i))).collect()
    }
}

#[inline]
fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of `coefficients` (intercept first).
pub fn log_likelihood(design: &DesignMatrix, treated: &[bool], coefficients: &[f64]) -> f64 {
    (0..design.n_rows)
        .map(|i| {
            let eta = coefficients[0]
                + coefficients[1..].iter().zip(design.row(i)).map(|(b, x)| b * x).sum::<f64>();
            let y = if treated[i] { 1.0 } else { 0.0 };
            y * eta - softplus(eta)
        })
        .sum()
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares. `treated[i]` is `T_i = 1` (form Y).
pub fn fit_logistic(design: &DesignMatrix, treated: &[bool], options: FitOptions) -> Result<PropensityModel> {
    let n = design.n_rows;
    if treated.len() != n {
        return Err(Error::DimensionError { expected: n, found: treated.len() });
    }
    let n_treated = treated.iter().filter(|t| **t).count();
    if n_treated == 0 || n_treated == n {
        return Err(Error::MissingForm);
    }
    let p = design.n_cols() + 1;
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { design.row(i)[j - 1] });
    let y = DVector::from_fn(n, |i, _| if treated[i] { 1.0 } else { 0.0 });
    let mut beta = DVector::<f64>::zeros(p);
    let mut iterations = 0;
    let mut separation = false;

    let score = |beta: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        let eta = &x * beta;
        let mu = eta.map(logistic);
        let grad = x.transpose() * (&y - &mu);
        (mu, grad)
    };

    while iterations < options.max_iterations {
        let (mu, grad) = score(&beta);
        if grad.amax() / n as f64 <= options.gradient_tolerance {
            break;
        }
        let w = mu.map(|m| m * (1.0 - m));
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let wi = w[i];
            for a in 0..p {
                let xa = x[(i, a)] * wi;
                for b in 0..=a {
                    xtwx[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let step = match xtwx.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match xtwx.lu().solve(&grad) {
                Some(s) => s,
                None if iterations > 0 => {
                    separation = true;
                    break;
                }
                None => return Err(Error::SingularDesign),
            },
        };
        beta += &step;
        iterations += 1;
        if beta.amax() > SEPARATION_BOUND {
            separation = true;
            break;
        }
        if step.amax() <= options.tolerance {
            break;
        }
    }

    if separation {
        warn!("logistic fit separated; coefficients clamped to ±{SEPARATION_BOUND}");
        beta.apply(|b| *b = b.clamp(-SEPARATION_BOUND, SEPARATION_BOUND));
    }
    let (_, grad) = score(&beta);
    let gradient_norm = grad.amax() / n as f64;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let converged = !separation && gradient_norm <= options.gradient_tolerance;
    if !converged && !separation {
        warn!("logistic fit did not converge after {iterations} iterations");
    }
    Ok(PropensityModel {
        final_log_likelihood: log_likelihood(design, treated, &coefficients),
        coefficients,
        converged,
        iterations,
        gradient_norm,
        separation,
    })
}

/// `P(T = 1 | c)` under `model`, clamped into `[1e-6, 1 - 1e-6]`.
pub fn estimate_propensity(model: &PropensityModel, row: &[f64]) -> Result<f64> {
    let eta = model.linear_predictor(row)?;
    Ok(logistic(eta).clamp(PROPENSITY_FLOOR, 1.0 - PROPENSITY_FLOOR))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumAssignment {
    pub k: usize,
    /// Stratum of each record, `1..=k`.
    pub labels: Vec<u32>,
    /// The `j/k` propensity quantiles, `j = 1..k-1`.
    pub boundaries: Vec<f64>,
}

impl StratumAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l as usize - 1] += 1;
        }
        sizes
    }

    /// Record indices belonging to each stratum, in input order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l as usize - 1].push(i);
        }
        members
    }
}

/// Splits records into `k` propensity strata of (near) equal size by rank;
/// ties are ordered by input position.
pub fn stratify_quantile(propensities: &[f64], k: usize) -> Result<StratumAssignment> {
    let n = propensities.len();
    if k == 0 {
        return Err(Error::InvalidConfig("number of strata must be at least 1".into()));
    }
    if k > n {
        return Err(Error::TooManyStrata { strata: k, records: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| propensities[a].total_cmp(&propensities[b]));
    let mut labels = vec![0u32; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = (rank * k / n) as u32 + 1;
    }
    let sorted: Vec<f64> = order.iter().map(|&i| propensities[i]).collect();
    let boundaries = (1..k).map(|j| quantile_linear(&sorted, j as f64 / k as f64)).collect();
    Ok(StratumAssignment { k, labels, boundaries })
}

/// Absolute standardized mean difference with `n - 1` variances.
pub fn asmd(group_x: &[f64], group_y: &[f64]) -> Result<f64> {
    if group_x.is_empty() || group_y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mx = group_x.iter().sum::<f64>() / group_x.len() as f64;
    let my = group_y.iter().sum::<f64>() / group_y.len() as f64;
    let diff = (mx - my).abs();
    let denom = ((sample_variance(group_x) + sample_variance(group_y)) / 2.0).sqrt();
    if denom > 0.0 {
        Ok(diff / denom)
    } else if diff == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::InfiniteAsmd)
    }
}

/// Balance of each covariate between forms within each stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub k: usize,
    /// `asmd[stratum - 1][covariate]`; `None` where the stratum lacks a form.
    pub asmd: Vec<Vec<Option<f64>>>,
    pub n_x: Vec<usize>,
    pub n_y: Vec<usize>,
    /// Strata containing only one form.
    pub overlap_violations: Vec<u32>,
    /// Per covariate: share of strata with ASMD below [`BALANCE_THRESHOLD`].
    pub satisfactory_fraction: Vec<f64>,
}

pub fn balance_report(records: &[ExamineeRecord], assignment: &StratumAssignment) -> Result<BalanceReport> {
    if assignment.labels.len() != records.len() {
        return Err(Error::DimensionError { expected: records.len(), found: assignment.labels.len() });
    }
    let n_cov = covariate_arity(records)?;
    let members = assignment.members();
    let mut table = Vec::with_capacity(assignment.k);
    let mut n_x = Vec::with_capacity(assignment.k);
    let mut n_y = Vec::with_capacity(assignment.k);
    let mut violations = Vec::new();
    let mut satisfied = vec![0usize; n_cov];

    for (s, idx) in members.iter().enumerate() {
        let (xs, ys): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| records[i].form == Form::X);
        n_x.push(xs.len());
        n_y.push(ys.len());
        if xs.is_empty() || ys.is_empty() {
            violations.push(s as u32 + 1);
            table.push(vec![None; n_cov]);
            continue;
        }
        let row: Vec<Option<f64>> = (0..n_cov)
            .map(|c| {
                let gx: Vec<f64> = xs.iter().map(|&i| records[i].covariates[c]).collect();
                let gy: Vec<f64> = ys.iter().map(|&i| records[i].covariates[c]).collect();
                Some(asmd(&gx, &gy).unwrap_or(f64::INFINITY))
            })
            .collect();
        for (c, v) in row.iter().enumerate() {
            if matches!(v, Some(a) if *a < BALANCE_THRESHOLD) {
                satisfied[c] += 1;
            }
        }
        table.push(row);
    }
    if !violations.is_empty() {
        warn!("strata {violations:?} do not contain both forms");
    }
    Ok(BalanceReport {
        k: assignment.k,
        asmd: table,
        n_x,
        n_y,
        overlap_violations: violations,
        satisfactory_fraction: satisfied.iter().map(|&s| s as f64 / assignment.k as f64).collect(),
    })
}
