//! The `equate`, `diagnose` and `simulate` commands. Each writes
//! comma-separated tables into an output directory and returns what it wrote.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use locequate::equating::{
    anchor_family, equipercentile_family, ipw_family, ipw_weights, percentile_index, strat_family, Bandwidth,
    Conditioning, EquipercentileFamily, DEFAULT_TRIM_ALPHA,
};
use locequate::evaluation::{run_study_with, EvaluationReport};
use locequate::propensity::{balance_report, encode_covariates, fit_logistic, stratify_quantile, BalanceReport, CovariateKind, FitOptions, StratumAssignment};
use locequate::simulation::{stream_rng, Design};
use locequate::{Execution, Form, TransformFamily};
use log::{info, warn};

use crate::config::{echo, parse_config, Scenario};
use crate::dataset::{write_dataset, Dataset};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquateMethod {
    Anchor,
    Strat,
    Ipw,
    EquipercentileAnchor,
    EquipercentileStrat,
    EquipercentileIpw,
}

impl EquateMethod {
    pub const ALL: [EquateMethod; 6] = [
        EquateMethod::Anchor,
        EquateMethod::Strat,
        EquateMethod::Ipw,
        EquateMethod::EquipercentileAnchor,
        EquateMethod::EquipercentileStrat,
        EquateMethod::EquipercentileIpw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EquateMethod::Anchor => "anchor",
            EquateMethod::Strat => "strat",
            EquateMethod::Ipw => "ipw",
            EquateMethod::EquipercentileAnchor => "equipercentile-anchor",
            EquateMethod::EquipercentileStrat => "equipercentile-strat",
            EquateMethod::EquipercentileIpw => "equipercentile-ipw",
        }
    }

    fn uses_anchor(self) -> bool {
        matches!(self, EquateMethod::Anchor | EquateMethod::EquipercentileAnchor)
    }
}

impl fmt::Display for EquateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EquateMethod {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        EquateMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown method `{s}`")))
    }
}

/// `step`, `inf`, or a positive kernel bandwidth.
pub fn parse_bandwidth(s: &str) -> Result<Bandwidth> {
    match s {
        "step" => Ok(Bandwidth::Step),
        "inf" | "infinite" => Ok(Bandwidth::Infinite),
        _ => match s.parse::<f64>() {
            Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Kernel(h)),
            _ => Err(CliError::Usage(format!("bandwidth `{s}` is not step, inf or a positive number"))),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquateOptions {
    pub method: EquateMethod,
    pub strata: usize,
    pub trim_alpha: f64,
    pub bandwidth: Bandwidth,
    pub percentiles: Vec<f64>,
    /// Upper end of the curve score range; the largest observed score if unset.
    pub max_score: Option<u32>,
}

impl EquateOptions {
    pub fn new(method: EquateMethod) -> Self {
        Self {
            method,
            strata: 8,
            trim_alpha: DEFAULT_TRIM_ALPHA,
            bandwidth: Bandwidth::Step,
            percentiles: vec![10.0, 30.0, 50.0, 70.0, 90.0],
            max_score: None,
        }
    }
}

/// One curve written by `cmd_equate`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    pub percentile: f64,
    pub index: u32,
    pub resolved_index: u32,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquateOutput {
    pub family_table: PathBuf,
    pub manifest: PathBuf,
    pub curves: Vec<CurveFile>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

fn fmt_f(v: f64) -> String {
    format!("{v:.10}")
}

fn propensity_strata(dataset: &Dataset, k: usize) -> Result<(Vec<f64>, StratumAssignment)> {
    let design = encode_covariates(&dataset.records, &dataset.covariate_kinds)?;
    let treated: Vec<bool> = dataset.records.iter().map(|r| r.form == Form::Y).collect();
    let model = fit_logistic(&design, &treated, FitOptions::default())?;
    if !model.converged {
        warn!("propensity model did not converge (gradient {:e})", model.gradient_norm);
    }
    let props = model.predict(&design)?;
    let assignment = stratify_quantile(&props, k)?;
    Ok((props, assignment))
}

enum Fitted {
    Linear(TransformFamily),
    Equipercentile(EquipercentileFamily),
}

/// Equates form Y to form X with one method and writes the family table,
/// one curve per requested percentile of the conditioning variable, and a
/// manifest naming each curve's percentile and index value.
pub fn cmd_equate(dataset: &Dataset, options: &EquateOptions, out_dir: &Path) -> Result<EquateOutput> {
    let method = options.method;
    if method.uses_anchor() && !dataset.has_anchor {
        return Err(CliError::Usage(format!("method {method} needs an anchor column")));
    }
    if !method.uses_anchor() && dataset.covariate_names.is_empty() {
        return Err(CliError::Usage(format!("method {method} needs at least one covariate column")));
    }
    if options.percentiles.iter().any(|p| !(0.0..=100.0).contains(p)) {
        return Err(CliError::Usage("percentiles must lie in [0, 100]".into()));
    }
    fs::create_dir_all(out_dir)?;
    let records = &dataset.records;

    let (fitted, index_values): (Fitted, Vec<u32>) = if method.uses_anchor() {
        let anchors = records.iter().map(|r| r.anchor.unwrap_or(0)).collect();
        let fitted = match method {
            EquateMethod::Anchor => Fitted::Linear(anchor_family(records)?),
            _ => Fitted::Equipercentile(equipercentile_family(records, Conditioning::Anchor, options.bandwidth)?),
        };
        (fitted, anchors)
    } else {
        let (props, assignment) = propensity_strata(dataset, options.strata)?;
        let fitted = match method {
            EquateMethod::Strat => Fitted::Linear(strat_family(records, &assignment)?),
            EquateMethod::Ipw => Fitted::Linear(ipw_family(records, &ipw_weights(records, &assignment, &props, options.trim_alpha)?)?),
            EquateMethod::EquipercentileStrat => {
                Fitted::Equipercentile(equipercentile_family(records, Conditioning::Strata(&assignment), options.bandwidth)?)
            }
            _ => {
                let w = ipw_weights(records, &assignment, &props, options.trim_alpha)?;
                Fitted::Equipercentile(equipercentile_family(records, Conditioning::Weighted(&w), options.bandwidth)?)
            }
        };
        (fitted, assignment.labels.clone())
    };

    let family_table = out_dir.join(format!("family_{method}.csv"));
    let mut w = csv_writer(&family_table)?;
    match &fitted {
        Fitted::Linear(f) => {
            w.write_record(["index", "slope", "mu_y", "mu_x", "omitted"])?;
            let mut rows: Vec<(u32, Option<_>)> = f.entries.iter().map(|(k, t)| (*k, Some(*t))).collect();
            rows.extend(f.omitted.iter().map(|k| (*k, None)));
            rows.sort_by_key(|r| r.0);
            for (k, t) in rows {
                match t {
                    Some(t) => w.write_record([k.to_string(), fmt_f(t.slope), fmt_f(t.mu_y), fmt_f(t.mu_x), "false".into()])?,
                    None => w.write_record([k.to_string(), String::new(), String::new(), String::new(), "true".into()])?,
                }
            }
        }
        Fitted::Equipercentile(f) => {
            w.write_record(["index", "omitted"])?;
            let mut rows: Vec<(u32, bool)> = f.entries.keys().map(|k| (*k, false)).collect();
            rows.extend(f.omitted.iter().map(|k| (*k, true)));
            rows.sort_by_key(|r| r.0);
            for (k, o) in rows {
                w.write_record([k.to_string(), o.to_string()])?;
            }
        }
    }
    w.flush()?;

    let max_score = options.max_score.unwrap_or_else(|| dataset.max_score());
    let mut curves = Vec::new();
    for &pct in &options.percentiles {
        let index = percentile_index(&index_values, pct)?;
        let (resolved_index, apply): (u32, Box<dyn Fn(f64) -> f64 + '_>) = match &fitted {
            Fitted::Linear(f) => {
                let (k, t) = f.resolve(index).ok_or(locequate::Error::EmptyFamily)?;
                (k, Box::new(move |y| t.apply(y)))
            }
            Fitted::Equipercentile(f) => {
                let (k, m) = f.resolve(index).ok_or(locequate::Error::EmptyFamily)?;
                (k, Box::new(move |y| m.apply(y)))
            }
        };
        if resolved_index != index {
            warn!("percentile {pct}: index {index} has no transform, using {resolved_index}");
        }
        let path = out_dir.join(format!("curve_{method}_p{pct}.csv"));
        let mut w = csv_writer(&path)?;
        w.write_record(["raw_score", "equated", "equated_minus_raw"])?;
        for y in 0..=max_score {
            let e = apply(y as f64);
            w.write_record([y.to_string(), fmt_f(e), fmt_f(e - y as f64)])?;
        }
        w.flush()?;
        curves.push(CurveFile { percentile: pct, index, resolved_index, path });
    }

    let manifest = out_dir.join(format!("curves_{method}.csv"));
    let mut w = csv_writer(&manifest)?;
    w.write_record(["percentile", "index", "resolved_index", "file"])?;
    for c in &curves {
        let file = c.path.file_name().unwrap().to_string_lossy().into_owned();
        w.write_record([c.percentile.to_string(), c.index.to_string(), c.resolved_index.to_string(), file])?;
    }
    w.flush()?;
    info!("{method}: wrote {} curves to {}", curves.len(), out_dir.display());
    Ok(EquateOutput { family_table, manifest, curves })
}

fn fmt_asmd(v: Option<f64>) -> String {
    match v {
        Some(a) if a.is_infinite() => "inf".into(),
        Some(a) => format!("{a:.6}"),
        None => String::new(),
    }
}

/// Fits the propensity model once and, for every K, writes the
/// stratum × covariate ASMD table `balance_k<K>.csv`; per-covariate shares
/// of balanced strata go to `balance_summary.csv`.
pub fn cmd_diagnose(dataset: &Dataset, ks: &[usize], out_dir: &Path) -> Result<Vec<BalanceReport>> {
    if dataset.covariate_names.is_empty() {
        return Err(CliError::Usage("diagnose needs at least one covariate column".into()));
    }
    if ks.is_empty() {
        return Err(CliError::Usage("no strata counts given".into()));
    }
    fs::create_dir_all(out_dir)?;
    let design = encode_covariates(&dataset.records, &dataset.covariate_kinds)?;
    let treated: Vec<bool> = dataset.records.iter().map(|r| r.form == Form::Y).collect();
    let model = fit_logistic(&design, &treated, FitOptions::default())?;
    let props = model.predict(&design)?;

    let mut reports = Vec::with_capacity(ks.len());
    let mut summary = csv_writer(&out_dir.join("balance_summary.csv"))?;
    summary.write_record(["k", "covariate", "satisfactory_fraction", "overlap_violations"])?;
    for &k in ks {
        let assignment = stratify_quantile(&props, k)?;
        let report = balance_report(&dataset.records, &assignment)?;
        let mut w = csv_writer(&out_dir.join(format!("balance_k{k}.csv")))?;
        let mut header = vec!["stratum".to_string(), "n_x".into(), "n_y".into()];
        header.extend(dataset.covariate_names.iter().cloned());
        w.write_record(&header)?;
        for (s, row) in report.asmd.iter().enumerate() {
            let mut out = vec![(s + 1).to_string(), report.n_x[s].to_string(), report.n_y[s].to_string()];
            out.extend(row.iter().map(|v| fmt_asmd(*v)));
            w.write_record(&out)?;
        }
        w.flush()?;
        for (name, frac) in dataset.covariate_names.iter().zip(&report.satisfactory_fraction) {
            summary.write_record([k.to_string(), name.clone(), format!("{frac:.6}"), report.overlap_violations.len().to_string()])?;
        }
        reports.push(report);
    }
    summary.flush()?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulateOptions {
    /// Overrides every scenario's seed.
    pub seed: Option<u64>,
    /// Worker threads for replications; rayon's default when unset.
    pub threads: Option<usize>,
    /// Also write the first replication's sample of each scenario as a dataset.
    pub export_sample: bool,
}

fn run_scenarios(scenarios: &[Scenario], execution: Execution) -> Result<Vec<EvaluationReport>> {
    scenarios
        .iter()
        .map(|s| {
            info!("scenario {}: {} replications", s.name, s.config.replications);
            run_study_with(&s.config, &s.methods, &s.name, execution).map_err(CliError::from)
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn run_with_threads(scenarios: &[Scenario], threads: Option<usize>) -> Result<Vec<EvaluationReport>> {
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            pool.install(|| run_scenarios(scenarios, Execution::Parallel))
        }
        None => run_scenarios(scenarios, Execution::Parallel),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_with_threads(scenarios: &[Scenario], threads: Option<usize>) -> Result<Vec<EvaluationReport>> {
    if threads.is_some_and(|n| n > 1) {
        warn!("built without the parallel feature; running sequentially");
    }
    run_scenarios(scenarios, Execution::Sequential)
}

fn export_sample(scenario: &Scenario, out_dir: &Path) -> Result<PathBuf> {
    let config = &scenario.config;
    let design = Design::draw(config, &mut stream_rng(config.seed, 0));
    let sample = design.generate(config, &mut stream_rng(config.seed, 1));
    let dataset = Dataset {
        has_anchor: true,
        covariate_names: (1..=config.covariate_categories.len()).map(|c| format!("c{c}")).collect(),
        covariate_kinds: vec![CovariateKind::Numeric; config.covariate_categories.len()],
        records: sample.records,
    };
    let path = out_dir.join(format!("sample_{}.csv", scenario.name));
    write_dataset(fs::File::create(&path)?, &dataset)?;
    Ok(path)
}

/// Runs every scenario of a config and writes `config_resolved.txt`, one
/// `report_<scenario>.csv` per scenario and `summary.csv`.
pub fn cmd_simulate(config_text: &str, options: &SimulateOptions, out_dir: &Path) -> Result<Vec<EvaluationReport>> {
    let mut scenarios = parse_config(config_text)?;
    if let Some(seed) = options.seed {
        for s in &mut scenarios {
            s.config.seed = seed;
        }
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config_resolved.txt"), echo(&scenarios))?;
    let reports = run_with_threads(&scenarios, options.threads)?;

    let mut summary = csv_writer(&out_dir.join("summary.csv"))?;
    summary.write_record([
        "scenario",
        "method",
        "sample_size",
        "correlation",
        "strata",
        "replications",
        "failed",
        "unstable",
        "retained_cells",
        "mean_bias",
        "mean_rmse",
    ])?;
    for (scenario, report) in scenarios.iter().zip(&reports) {
        fs::write(out_dir.join(format!("report_{}.csv", scenario.name)), report.to_csv())?;
        for &m in &report.methods {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.8}")).unwrap_or_default();
            summary.write_record([
                scenario.name.clone(),
                m.to_string(),
                report.scenario.sample_size.to_string(),
                report.scenario.correlation.clone(),
                report.scenario.strata.to_string(),
                report.replications.to_string(),
                report.failed_replications.to_string(),
                report.unstable.to_string(),
                report.retained(m).count().to_string(),
                opt(report.mean_bias(m)),
                opt(report.mean_rmse(m)),
            ])?;
        }
        if options.export_sample {
            export_sample(scenario, out_dir)?;
        }
    }
    summary.flush()?;
    Ok(reports)
}
