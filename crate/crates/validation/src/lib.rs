//! Acceptance checks for the equating library and its command-line front
//! end. Each check returns whether it passed and a one-line measurement.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::time::Instant;

use locequate::equating::{equipercentile_family, ipw_weights, Bandwidth, Conditioning};
use locequate::evaluation::{apply_omission_rule, run_study, Method};
use locequate::propensity::{fit_logistic, DesignMatrix, FitOptions, StratumAssignment};
use locequate::simulation::{lord_wingersky, normal_quadrature, score_distribution, stream_rng, Correlation, Design, SimulationConfig};
use locequate::stats::unweighted_moments;
use locequate::{ExamineeRecord, Form};
use locequate_cli::{cmd_diagnose, cmd_simulate, parse_dataset, DatasetSchema, SimulateOptions};
use rand::Rng;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

pub fn logistic_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (rows, treated) in common::logistic_fixtures() {
        let design = DesignMatrix::from_rows(&rows).unwrap();
        let model = fit_logistic(&design, &treated, FitOptions::default()).unwrap();
        let oracle = common::nelder_mead(
            |b| common::neg_log_likelihood(&rows, &treated, b),
            &vec![0.0; rows[0].len() + 1],
            0.5,
        );
        for (b, o) in model.coefficients.iter().zip(&oracle) {
            worst = worst.max((b - o).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-3 && secs < 1.0, format!("max |coef diff| {worst:.2e} (tol 1e-3), {secs:.3}s (limit 1s)"))
}

pub fn lord_wingersky_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = stream_rng(7, 0);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let j = 1 + case % 12;
        let probs: Vec<f64> = (0..j).map(|_| rng.random::<f64>()).collect();
        for (a, b) in lord_wingersky(&probs).iter().zip(&common::enumerate_scores(&probs)) {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-12 && secs < 5.0, format!("20 cases, J <= 12: max diff {worst:.2e} (tol 1e-12), {secs:.3}s (limit 5s)"))
}

pub fn kernel_limit() -> Outcome {
    let mut rng = stream_rng(2024, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.random_range(100..600);
        let px = rng.random_range(0.3..0.7);
        let py = rng.random_range(0.3..0.7);
        let records: Vec<ExamineeRecord> = (0..n)
            .map(|_| {
                let form = if rng.random::<f64>() < 0.5 { Form::X } else { Form::Y };
                let p = if form == Form::X { px } else { py };
                let score = (0..40).filter(|_| rng.random::<f64>() < p).count() as u32;
                ExamineeRecord::new(form, score, None, vec![])
            })
            .collect();
        let one = StratumAssignment { k: 1, labels: vec![1; n], boundaries: vec![] };
        let scores = |f: Form| records.iter().filter(|r| r.form == f).map(|r| r.score as f64).collect::<Vec<_>>();
        let (ys, xs) = (scores(Form::Y), scores(Form::X));
        let sd = unweighted_moments(&ys).unwrap().1.max(unweighted_moments(&xs).unwrap().1);
        let kernel = equipercentile_family(&records, Conditioning::Strata(&one), Bandwidth::Kernel(1e4 * sd)).unwrap();
        let linear = equipercentile_family(&records, Conditioning::Strata(&one), Bandwidth::Infinite).unwrap();
        let mut sorted = ys.clone();
        sorted.sort_by(f64::total_cmp);
        let lo = sorted[(0.05 * (sorted.len() - 1) as f64).round() as usize] as u32;
        let hi = sorted[(0.95 * (sorted.len() - 1) as f64).round() as usize] as u32;
        for y in lo..=hi {
            let d = kernel.entries[&1].apply(y as f64) - linear.entries[&1].apply(y as f64);
            worst = worst.max(d.abs());
        }
    }
    outcome(worst < 0.05, format!("10 datasets, h = 1e4 sd: max |kernel - linear| {worst:.2e} (tol 0.05)"))
}

pub fn stabilization_identity() -> Outcome {
    let mut rng = stream_rng(31, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let k = rng.random_range(1..6);
        let n = rng.random_range(4 * k..200);
        let labels: Vec<u32> = (0..n).map(|i| (i * k / n) as u32 + 1).collect();
        let mut forms: Vec<Form> = (0..n).map(|_| if rng.random::<f64>() < 0.4 { Form::Y } else { Form::X }).collect();
        for s in 0..k {
            let first = (0..n).find(|&i| labels[i] == s as u32 + 1).unwrap();
            forms[first] = Form::Y;
            forms[first + 1] = Form::X;
        }
        let records: Vec<ExamineeRecord> = forms.iter().map(|&f| ExamineeRecord::new(f, 1, None, vec![])).collect();
        let share: Vec<f64> = (1..=k as u32)
            .map(|s| {
                let m: Vec<usize> = (0..n).filter(|&i| labels[i] == s).collect();
                m.iter().filter(|&&i| forms[i] == Form::Y).count() as f64 / m.len() as f64
            })
            .collect();
        let props: Vec<f64> = labels.iter().map(|&l| share[l as usize - 1]).collect();
        let assignment = StratumAssignment { k, labels, boundaries: vec![] };
        let w = ipw_weights(&records, &assignment, &props, 0.01).unwrap();
        for v in w.raw.iter().chain(&w.trimmed) {
            worst = worst.max((v.unwrap() - 1.0).abs());
        }
    }
    outcome(worst <= 1e-12, format!("20 random stratifications: max |w - 1| {worst:.2e} (tol 1e-12)"))
}

pub fn null_confounding() -> Outcome {
    let start = Instant::now();
    let config = SimulationConfig { beta: vec![0.0; 5], theta_mean_q: 0.0, replications: 100, ..SimulationConfig::default() };
    let report = run_study(&config, &Method::LOCAL, "null").unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut pass = secs < 600.0;
    let mut parts = Vec::new();
    for m in Method::LOCAL {
        let cells: Vec<f64> = report.retained(m).filter_map(|r| r.bias).collect();
        let over = cells.iter().filter(|&&b| b >= 0.5).count();
        let max = cells.iter().copied().fold(0.0, f64::max);
        pass &= over == 0;
        parts.push(format!("{m} {over}/{} cells >= 0.5 (max {max:.2})", cells.len()));
    }
    outcome(pass, format!("{}; {secs:.1}s (limit 600s)", parts.join(", ")))
}

pub fn weak_correlation_ordering() -> Outcome {
    let start = Instant::now();
    let config = SimulationConfig { correlation: Correlation::Weak, replications: 100, ..SimulationConfig::default() };
    let report = run_study(&config, &Method::LOCAL, "weak").unwrap();
    let secs = start.elapsed().as_secs_f64();
    let anchor: Vec<_> = report.retained(Method::Anchor).collect();
    let ipw: Vec<_> = report.retained(Method::Ipw).collect();
    let le = anchor.iter().zip(&ipw).filter(|(a, i)| i.bias.unwrap() <= a.bias.unwrap()).count();
    let share = le as f64 / anchor.len() as f64;
    let mut close = 0;
    let mut total = 0;
    for m in Method::LOCAL {
        for r in report.retained(m) {
            let (b, e) = (r.bias.unwrap(), r.rmse.unwrap());
            total += 1;
            if e - b <= 0.15 * b {
                close += 1;
            }
        }
    }
    let mean = |m| report.mean_bias(m).unwrap();
    outcome(
        share >= 0.6 && close == total && secs < 1800.0,
        format!(
            "IPW <= anchor in {le}/{} cells ({:.0}%, need 60%); RMSE within 15% of bias in {close}/{total} cells; \
             mean bias anchor {:.2} strat {:.2} ipw {:.2}; {secs:.1}s",
            anchor.len(),
            100.0 * share,
            mean(Method::Anchor),
            mean(Method::Strat),
            mean(Method::Ipw)
        ),
    )
}

fn contiguous(mask: &[bool]) -> bool {
    let kept: Vec<usize> = (0..mask.len()).filter(|&s| !mask[s]).collect();
    !kept.is_empty() && kept.len() == kept.last().unwrap() - kept[0] + 1
}

pub fn omission_rule() -> Outcome {
    let config = SimulationConfig { replications: 20, ..SimulationConfig::default() };
    let report = run_study(&config, &[Method::Anchor], "omission").unwrap();
    let mut pass = true;
    let (mut low, mut high) = (false, false);
    for probs in report.bin_probabilities.iter().flatten() {
        let mask = apply_omission_rule(probs, config.omission_threshold);
        pass &= (mask[0] || mask[40]) && contiguous(&mask);
        low |= mask[0];
        high |= mask[40];
    }
    pass &= low && high;
    let design = Design::draw(&config, &mut stream_rng(config.seed, 0));
    let mut densities = Vec::new();
    for sd in [0.25, 0.5, 1.0] {
        let probs = score_distribution(&design.form_y, &normal_quadrature(0.5, sd, 61)).unwrap();
        let mask = apply_omission_rule(&probs, config.omission_threshold);
        pass &= contiguous(&mask);
        densities.push(format!("N(0.5,{sd}) masks {}", mask.iter().filter(|m| **m).count()));
    }
    outcome(
        pass,
        format!(
            "J = 40: every theta bin masks an extreme score with a contiguous retained range (score 0 masked somewhere: {low}, \
             score 40: {high}); {}",
            densities.join(", ")
        ),
    )
}

pub fn balance_workflow() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = stream_rng(77, 0);
    let mut text = String::from("form,score,gender,age,verbal\n");
    for _ in 0..10_000 {
        let form = if rng.random::<f64>() < 0.5 { "X" } else { "Y" };
        let score = rng.random_range(0..41);
        let gender = rng.random_range(0..2);
        let age = rng.random_range(18..60);
        let verbal = rng.random_range(0..21);
        text.push_str(&format!("{form},{score},{gender},{age},{verbal}\n"));
    }
    let path = dir.path().join("randomized.csv");
    fs::write(&path, text).unwrap();
    let schema = DatasetSchema::parse("categorical=gender\nnumeric=age,verbal\n").unwrap();
    let data = parse_dataset(&path, &schema).unwrap();
    let ks = [5usize, 10, 20];
    let reports = cmd_diagnose(&data, &ks, dir.path()).unwrap();
    let mut shape_ok = true;
    for &k in &ks {
        let table = fs::read_to_string(dir.path().join(format!("balance_k{k}.csv"))).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        shape_ok &= lines.len() == k + 1 && lines[0] == "stratum,n_x,n_y,gender,age,verbal";
        shape_ok &= lines[1..].iter().all(|l| l.split(',').count() == 6);
    }
    // balance is judged at K = 5, the coarsest documented K; finer K are reported
    let fractions: Vec<String> = reports
        .iter()
        .map(|r| format!("K={}: {}", r.k, r.satisfactory_fraction.iter().map(|f| format!("{f:.2}")).collect::<Vec<_>>().join("/")))
        .collect();
    let balanced = reports[0].satisfactory_fraction.iter().all(|&f| f >= 0.9);
    outcome(
        shape_ok && balanced,
        format!("K x 3 tables written: {shape_ok}; balanced share per covariate {}", fractions.join(", ")),
    )
}

pub fn determinism() -> Outcome {
    let config = "sample_size=500\nreplications=8\nseed=123\nscenario.weak.correlation=weak\nscenario.medium.correlation=medium\n";
    let run = |threads: usize| {
        let dir = tempfile::tempdir().unwrap();
        let options = SimulateOptions { threads: Some(threads), ..SimulateOptions::default() };
        cmd_simulate(config, &options, dir.path()).unwrap();
        ["config_resolved.txt", "summary.csv", "report_weak.csv", "report_medium.csv"]
            .map(|f| fs::read(dir.path().join(f)).unwrap())
    };
    let a = run(1);
    let b = run(1);
    let c = run(8);
    outcome(a == b && a == c, format!("rerun identical: {}, 1 vs 8 threads identical: {}", a == b, a == c))
}

/// Every acceptance check with its label, in reporting order.
pub fn criteria() -> [(&'static str, fn() -> Outcome); 9] {
    [
        ("logistic MLE matches direct-search oracle", logistic_oracle),
        ("Lord-Wingersky matches exhaustive enumeration", lord_wingersky_oracle),
        ("kernel equipercentile map reaches the linear limit", kernel_limit),
        ("stabilized weights are one at self-consistent propensities", stabilization_identity),
        ("null confounding: bias below 0.5 at every retained score", null_confounding),
        ("weak correlation: IPW bias <= anchor bias, RMSE ~ bias", weak_correlation_ordering),
        ("omission rule trims extreme scores", omission_rule),
        ("balance workflow under randomized assignment", balance_workflow),
        ("simulate is deterministic across runs and thread counts", determinism),
    ]
}
