//! Conditional bias and RMSE over ability bins, and the Monte Carlo study
//! comparing the local equating methods.

use std::fmt::{self, Write as _};

use std::ops::Range;

use log::{debug, warn};

use crate::equating::{anchor_family, ipw_family, ipw_weights, strat_family};
use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Execution};
use crate::propensity::{encode_covariates, fit_logistic, stratify_quantile, CovariateKind, FitOptions};
use crate::simulation::{score_distribution, stream_rng, true_transform, Design, SimulationConfig};
use crate::stats::unweighted_moments;
use crate::types::{ExamineeRecord, Form, IndexKind, LinearTransform, TransformFamily};

/// Share of failed replications above which a study is flagged unstable.
pub const UNSTABLE_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Anchor,
    Strat,
    Ipw,
    /// Single linear transform on the pooled forms, ignoring group differences.
    EquivalentGroups,
}

impl Method {
    pub const LOCAL: [Method; 3] = [Method::Anchor, Method::Strat, Method::Ipw];

    pub fn name(self) -> &'static str {
        match self {
            Method::Anchor => "anchor",
            Method::Strat => "strat",
            Method::Ipw => "ipw",
            Method::EquivalentGroups => "eg",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.trim() {
            "anchor" => Some(Method::Anchor),
            "strat" => Some(Method::Strat),
            "ipw" => Some(Method::Ipw),
            "eg" => Some(Method::EquivalentGroups),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBins {
    pub nbins: usize,
    /// `nbins + 1` equally spaced edges from min to max theta.
    pub edges: Vec<f64>,
    /// Bin of each examinee, `1..=nbins`.
    pub labels: Vec<usize>,
}

impl ThetaBins {
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.nbins];
        for &l in &self.labels {
            c[l - 1] += 1;
        }
        c
    }
}

/// Equal-width bins between the smallest and largest theta; the last bin
/// includes its right edge. Constant theta collapses to a single bin.
pub fn bin_by_theta(thetas: &[f64], nbins: usize) -> Result<ThetaBins> {
    if nbins == 0 {
        return Err(Error::InvalidConfig("at least one theta bin is required".into()));
    }
    if thetas.is_empty() {
        return Err(Error::EmptyInput);
    }
    let lo = thetas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Ok(ThetaBins { nbins: 1, edges: vec![lo, hi], labels: vec![1; thetas.len()] });
    }
    let width = (hi - lo) / nbins as f64;
    let edges = (0..=nbins).map(|j| if j == nbins { hi } else { lo + j as f64 * width }).collect();
    let labels = thetas
        .iter()
        .map(|&t| (((t - lo) / width).floor() as usize).min(nbins - 1) + 1)
        .collect();
    Ok(ThetaBins { nbins, edges, labels })
}

/// Within-replication error sums per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellErrors {
    abs: Vec<f64>,
    sq: Vec<f64>,
    signed: Vec<f64>,
    count: Vec<usize>,
}

impl CellErrors {
    pub fn new(cells: usize) -> Self {
        Self { abs: vec![0.0; cells], sq: vec![0.0; cells], signed: vec![0.0; cells], count: vec![0; cells] }
    }

    /// Adds `estimate - truth` to `cell`.
    pub fn push(&mut self, cell: usize, truth: f64, estimate: f64) {
        let e = estimate - truth;
        self.abs[cell] += e.abs();
        self.sq[cell] += e * e;
        self.signed[cell] += e;
        self.count[cell] += 1;
    }

    pub fn from_slices(truth: &[f64], estimate: &[f64], cells: &[usize], ncells: usize) -> Result<Self> {
        if truth.len() != estimate.len() || truth.len() != cells.len() {
            return Err(Error::DimensionError { expected: truth.len(), found: estimate.len().min(cells.len()) });
        }
        let mut e = Self::new(ncells);
        for ((&t, &m), &c) in truth.iter().zip(estimate).zip(cells) {
            if c >= ncells {
                return Err(Error::DimensionError { expected: ncells, found: c + 1 });
            }
            e.push(c, t, m);
        }
        Ok(e)
    }
}

/// Running double average over replications of within-replication means.
/// Merging is associative; cells never observed stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorAccumulator {
    abs: Vec<f64>,
    sq: Vec<f64>,
    signed: Vec<f64>,
    replications: Vec<usize>,
}

impl ErrorAccumulator {
    pub fn new(cells: usize) -> Self {
        Self { abs: vec![0.0; cells], sq: vec![0.0; cells], signed: vec![0.0; cells], replications: vec![0; cells] }
    }

    pub fn add_replication(&mut self, errors: &CellErrors) {
        for c in 0..self.abs.len() {
            let n = errors.count[c];
            if n == 0 {
                continue;
            }
            let n = n as f64;
            self.abs[c] += errors.abs[c] / n;
            self.sq[c] += errors.sq[c] / n;
            self.signed[c] += errors.signed[c] / n;
            self.replications[c] += 1;
        }
    }

    pub fn merge(&mut self, other: &ErrorAccumulator) {
        for c in 0..self.abs.len() {
            self.abs[c] += other.abs[c];
            self.sq[c] += other.sq[c];
            self.signed[c] += other.signed[c];
            self.replications[c] += other.replications[c];
        }
    }

    fn finish(&self, sums: &[f64], f: impl Fn(f64) -> f64) -> Vec<Option<f64>> {
        sums.iter()
            .zip(&self.replications)
            .map(|(s, &r)| (r > 0).then(|| f(s / r as f64)))
            .collect()
    }

    /// Mean absolute error per cell.
    pub fn bias(&self) -> Vec<Option<f64>> {
        self.finish(&self.abs, |v| v)
    }

    pub fn rmse(&self) -> Vec<Option<f64>> {
        self.finish(&self.sq, f64::sqrt)
    }

    pub fn signed_mean(&self) -> Vec<Option<f64>> {
        self.finish(&self.signed, |v| v)
    }

    pub fn replications(&self) -> &[usize] {
        &self.replications
    }
}

/// Bias (mean absolute error) per bin of a single replication.
pub fn bias_per_bin(truth: &[f64], estimate: &[f64], bins: &[usize], nbins: usize) -> Result<Vec<Option<f64>>> {
    let mut acc = ErrorAccumulator::new(nbins);
    acc.add_replication(&CellErrors::from_slices(truth, estimate, bins, nbins)?);
    Ok(acc.bias())
}

/// Root mean squared error per bin of a single replication.
pub fn rmse_per_bin(truth: &[f64], estimate: &[f64], bins: &[usize], nbins: usize) -> Result<Vec<Option<f64>>> {
    let mut acc = ErrorAccumulator::new(nbins);
    acc.add_replication(&CellErrors::from_slices(truth, estimate, bins, nbins)?);
    Ok(acc.rmse())
}

/// `true` marks score values whose probability falls below `threshold`.
pub fn apply_omission_rule(probabilities: &[f64], threshold: f64) -> Vec<bool> {
    probabilities.iter().map(|&p| p < threshold).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDescriptor {
    pub name: String,
    pub sample_size: usize,
    pub correlation: String,
    pub strata: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub theta_bin: usize,
    pub score: u32,
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    pub signed_mean: Option<f64>,
    pub omitted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub scenario: ScenarioDescriptor,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub failed_replications: usize,
    pub unstable: bool,
    pub theta_bins: usize,
    pub max_score: u32,
    /// Per theta bin: form-Y score distribution the omission rule was applied to.
    pub bin_probabilities: Vec<Option<Vec<f64>>>,
    pub rows: Vec<ReportRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.8}")).unwrap_or_default()
}

impl EvaluationReport {
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Retained (bin, score) cells of `method`.
    pub fn retained(&self, method: Method) -> impl Iterator<Item = &ReportRow> {
        self.rows_for(method).filter(|r| !r.omitted)
    }

    pub fn mean_bias(&self, method: Method) -> Option<f64> {
        let v: Vec<f64> = self.retained(method).filter_map(|r| r.bias).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_rmse(&self, method: Method) -> Option<f64> {
        let v: Vec<f64> = self.retained(method).filter_map(|r| r.rmse).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Delimited report with one row per (method, theta bin, score).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,method,theta_bin,score,bias,rmse,signed_mean,omitted\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.scenario.name,
                r.method,
                r.theta_bin,
                r.score,
                fmt_opt(r.bias),
                fmt_opt(r.rmse),
                fmt_opt(r.signed_mean),
                r.omitted
            );
        }
        out
    }
}

fn global_family(records: &[ExamineeRecord]) -> Result<TransformFamily> {
    let xs: Vec<f64> = records.iter().filter(|r| r.form == Form::X).map(|r| r.score as f64).collect();
    let ys: Vec<f64> = records.iter().filter(|r| r.form == Form::Y).map(|r| r.score as f64).collect();
    let (mx, sx) = unweighted_moments(&xs)?;
    let (my, sy) = unweighted_moments(&ys)?;
    let mut family = TransformFamily::new(IndexKind::Stratum);
    family.entries.insert(1, LinearTransform::from_moments(mx, sx, my, sy)?);
    Ok(family)
}

/// Errors of every method and the form-Y score distribution of every theta
/// bin in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub errors: Vec<CellErrors>,
    /// `None` for bins without examinees.
    pub bin_probabilities: Vec<Option<Vec<f64>>>,
}

/// Replication results folded in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyTotals {
    pub accumulators: Vec<ErrorAccumulator>,
    probability_sums: Vec<Vec<f64>>,
    probability_counts: Vec<usize>,
    pub replications: usize,
    pub failed: usize,
}

impl StudyTotals {
    fn new(methods: usize, bins: usize, scores: usize) -> Self {
        Self {
            accumulators: (0..methods).map(|_| ErrorAccumulator::new(bins * scores)).collect(),
            probability_sums: vec![vec![0.0; scores]; bins],
            probability_counts: vec![0; bins],
            replications: 0,
            failed: 0,
        }
    }

    fn add(&mut self, outcome: Result<Replication>) {
        self.replications += 1;
        match outcome {
            Ok(rep) => {
                for (acc, e) in self.accumulators.iter_mut().zip(&rep.errors) {
                    acc.add_replication(e);
                }
                for (b, probs) in rep.bin_probabilities.iter().enumerate() {
                    if let Some(probs) = probs {
                        for (sum, p) in self.probability_sums[b].iter_mut().zip(probs) {
                            *sum += p;
                        }
                        self.probability_counts[b] += 1;
                    }
                }
            }
            Err(e) => {
                debug!("replication failed: {e}");
                self.failed += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &StudyTotals) {
        for (a, b) in self.accumulators.iter_mut().zip(&other.accumulators) {
            a.merge(b);
        }
        for (a, b) in self.probability_sums.iter_mut().zip(&other.probability_sums) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.probability_counts.iter_mut().zip(&other.probability_counts) {
            *a += b;
        }
        self.replications += other.replications;
        self.failed += other.failed;
    }

    /// Form-Y score distribution of each theta bin averaged over the
    /// replications in which the bin was populated.
    pub fn bin_probabilities(&self) -> Vec<Option<Vec<f64>>> {
        self.probability_sums
            .iter()
            .zip(&self.probability_counts)
            .map(|(sums, &n)| (n > 0).then(|| sums.iter().map(|s| s / n as f64).collect()))
            .collect()
    }
}

/// Design and methods shared by every replication of a study.
#[derive(Debug, Clone)]
pub struct Study {
    pub config: SimulationConfig,
    pub methods: Vec<Method>,
    pub design: Design,
}

impl Study {
    /// Validates `config` and draws the fixed design from stream 0.
    pub fn new(config: &SimulationConfig, methods: &[Method]) -> Result<Self> {
        config.validate()?;
        if methods.is_empty() {
            return Err(Error::InvalidConfig("no methods requested".into()));
        }
        let design = Design::draw(config, &mut stream_rng(config.seed, 0));
        Ok(Self { config: config.clone(), methods: methods.to_vec(), design })
    }

    /// Number of (theta bin, score) cells.
    pub fn cells(&self) -> usize {
        self.config.theta_bins * (self.config.items + 1)
    }

    /// Errors of each method in replication `r`, drawn from stream `r + 1`.
    /// Any failing estimator fails the whole replication.
    pub fn replicate(&self, r: usize) -> Result<Replication> {
        let config = &self.config;
        let methods = &self.methods;
        let mut rng = stream_rng(config.seed, r as u64 + 1);
        let sample = self.design.generate(config, &mut rng);
        let records = &sample.records;

        // covariates only: the anchor is unavailable to the propensity methods
        let kinds = vec![CovariateKind::Numeric; config.covariate_categories.len()];
        let design_matrix = encode_covariates(records, &kinds)?;
        let treated: Vec<bool> = records.iter().map(|r| r.form == Form::Y).collect();
        let model = fit_logistic(&design_matrix, &treated, FitOptions::default())?;
        let propensities = model.predict(&design_matrix)?;
        let assignment = stratify_quantile(&propensities, config.strata)?;

        let mut families = Vec::with_capacity(methods.len());
        for &m in methods {
            let family = match m {
                Method::Anchor => anchor_family(records)?,
                Method::Strat => strat_family(records, &assignment)?,
                Method::Ipw => {
                    let w = ipw_weights(records, &assignment, &propensities, config.trim_alpha)?;
                    ipw_family(records, &w)?
                }
                Method::EquivalentGroups => global_family(records)?,
            };
            families.push(family);
        }

        let focal: Vec<usize> = (0..records.len()).filter(|&i| records[i].form == Form::Y).collect();
        let focal_theta: Vec<f64> = focal.iter().map(|&i| sample.theta[i]).collect();
        let bins = bin_by_theta(&focal_theta, config.theta_bins)?;
        let mut truths: Vec<Option<LinearTransform>> = vec![None; config.theta_bins];
        let mut bin_probabilities = vec![None; config.theta_bins];
        for b in 1..=bins.nbins {
            let thetas: Vec<f64> =
                focal_theta.iter().zip(&bins.labels).filter(|(_, &l)| l == b).map(|(t, _)| *t).collect();
            if thetas.is_empty() {
                continue;
            }
            truths[b - 1] = true_transform(&thetas, &self.design.form_x, &self.design.form_y).ok();
            let w = 1.0 / thetas.len() as f64;
            let nodes: Vec<(f64, f64)> = thetas.iter().map(|&t| (t, w)).collect();
            bin_probabilities[b - 1] = Some(score_distribution(&self.design.form_y, &nodes)?);
        }

        let scores = config.items + 1;
        let mut errors: Vec<CellErrors> = methods.iter().map(|_| CellErrors::new(self.cells())).collect();
        for (j, &i) in focal.iter().enumerate() {
            let bin = bins.labels[j];
            let Some(truth) = truths[bin - 1] else { continue };
            let r = &records[i];
            let y = r.score as f64;
            let target = truth.apply(y);
            let cell = (bin - 1) * scores + r.score as usize;
            for ((m, family), err) in methods.iter().zip(&families).zip(errors.iter_mut()) {
                let index = match m {
                    Method::Anchor => r.anchor.ok_or(Error::MissingAnchor)?,
                    Method::Strat | Method::Ipw => assignment.labels[i],
                    Method::EquivalentGroups => 1,
                };
                let estimate = family.equate(index, y).ok_or(Error::EmptyFamily)?;
                err.push(cell, target, estimate);
            }
        }
        Ok(Replication { errors, bin_probabilities })
    }

    /// Runs `replications` and folds them in index order.
    pub fn run(&self, replications: Range<usize>, execution: Execution) -> StudyTotals {
        let first = replications.start;
        let outcomes = map_indexed(replications.len(), execution, |j| self.replicate(first + j));
        let mut totals = StudyTotals::new(self.methods.len(), self.config.theta_bins, self.config.items + 1);
        for outcome in outcomes {
            totals.add(outcome);
        }
        totals
    }

    /// Report rows from accumulated errors. A cell is omitted when its
    /// score is rarer than the omission threshold within its theta bin or
    /// was never observed; omitted cells carry no values.
    pub fn report(&self, name: &str, totals: &StudyTotals) -> EvaluationReport {
        let config = &self.config;
        let scores = config.items + 1;
        let (replications, failed) = (totals.replications, totals.failed);
        let bin_probabilities = totals.bin_probabilities();
        let masks: Vec<Vec<bool>> = bin_probabilities
            .iter()
            .map(|p| match p {
                Some(p) => apply_omission_rule(p, config.omission_threshold),
                None => vec![true; scores],
            })
            .collect();
        let unstable = failed as f64 > UNSTABLE_FAILURE_RATE * replications as f64;
        if unstable {
            warn!("study {name}: {failed} of {replications} replications failed");
        }
        let mut rows = Vec::with_capacity(self.methods.len() * self.cells());
        for (m, acc) in self.methods.iter().zip(&totals.accumulators) {
            let (bias, rmse, signed) = (acc.bias(), acc.rmse(), acc.signed_mean());
            for bin in 1..=config.theta_bins {
                for score in 0..scores {
                    let c = (bin - 1) * scores + score;
                    let omitted = masks[bin - 1][score] || bias[c].is_none();
                    let keep = |v: Option<f64>| if omitted { None } else { v };
                    rows.push(ReportRow {
                        method: *m,
                        theta_bin: bin,
                        score: score as u32,
                        bias: keep(bias[c]),
                        rmse: keep(rmse[c]),
                        signed_mean: keep(signed[c]),
                        omitted,
                    });
                }
            }
        }
        EvaluationReport {
            scenario: ScenarioDescriptor {
                name: name.to_string(),
                sample_size: config.sample_size,
                correlation: config.correlation.label(),
                strata: config.strata,
            },
            methods: self.methods.clone(),
            replications,
            failed_replications: failed,
            unstable,
            theta_bins: config.theta_bins,
            max_score: config.items as u32,
            bin_probabilities,
            rows,
        }
    }
}

/// Runs the Monte Carlo study on rayon's pool (when enabled).
pub fn run_study(config: &SimulationConfig, methods: &[Method], name: &str) -> Result<EvaluationReport> {
    run_study_with(config, methods, name, Execution::Parallel)
}

/// Runs `config.replications` independent replications and aggregates the
/// per-(method, theta bin, score) bias and RMSE. Replication `r` draws from
/// stream `r + 1` of the master seed and results are folded in replication
/// order, so the report does not depend on scheduling.
pub fn run_study_with(
    config: &SimulationConfig,
    methods: &[Method],
    name: &str,
    execution: Execution,
) -> Result<EvaluationReport> {
    let study = Study::new(config, methods)?;
    let totals = study.run(0..config.replications, execution);
    Ok(study.report(name, &totals))
}
