mod common;

use locequate::simulation::{
    gen_covariates, gen_population, normal_quadrature, score_distribution, stream_rng, Correlation, Design,
    SimulationConfig,
};
use locequate::Form;
use rand::Rng;
use rand_distr::StandardNormal;

fn big(beta: Vec<f64>) -> SimulationConfig {
    SimulationConfig { sample_size: 10_000, beta, ..SimulationConfig::default() }
}

#[test]
fn symmetric_assignment_without_selection() {
    let (_, sample) = gen_population(&big(vec![0.0; 5]), &mut stream_rng(1, 0));
    let share = sample.records.iter().filter(|r| r.form == Form::Y).count() as f64 / 10_000.0;
    assert!((share - 0.5).abs() < 3.0 * (0.25f64 / 10_000.0).sqrt());
}

#[test]
fn negative_anchor_coefficient_gives_negative_correlation() {
    let (_, sample) = gen_population(&big(vec![0.0, -0.35, 0.0, 0.0, 0.0]), &mut stream_rng(2, 0));
    let anchor: Vec<f64> = sample.records.iter().map(|r| r.anchor.unwrap() as f64).collect();
    let t: Vec<f64> = sample.records.iter().map(|r| r.form.indicator() as f64).collect();
    assert!(common::pearson(&anchor, &t) < 0.0);
}

#[test]
fn sample_scores_match_conditional_expectations() {
    let config = big(SimulationConfig::default().beta);
    let (design, sample) = gen_population(&config, &mut stream_rng(3, 0));
    let (mut diff, mut var) = (0.0, 0.0);
    for (r, &theta) in sample.records.iter().zip(&sample.theta) {
        let items = if r.form == Form::X { &design.form_x } else { &design.form_y };
        let (m, v) = items.score_moments(theta);
        diff += r.score as f64 - m;
        var += v;
    }
    let n = sample.records.len() as f64;
    assert!((diff / n).abs() < 3.0 * var.sqrt() / n);
}

#[test]
fn marginal_mean_matches_monte_carlo_oracle() {
    let config = big(vec![0.0; 5]);
    let design = Design::draw(&config, &mut stream_rng(config.seed, 0));
    let mut rng = stream_rng(4, 0);
    let draws = 100_000;
    let oracle: f64 = (0..draws)
        .map(|_| {
            let mean = if rng.random::<f64>() < 0.5 { config.theta_mean_q } else { config.theta_mean_p };
            let z: f64 = rng.sample(StandardNormal);
            design.form_y.score_moments(mean + z).0
        })
        .sum::<f64>()
        / draws as f64;

    let nodes: Vec<(f64, f64)> = normal_quadrature(config.theta_mean_p, 1.0, 61)
        .into_iter()
        .chain(normal_quadrature(config.theta_mean_q, 1.0, 61))
        .map(|(t, w)| (t, 0.5 * w))
        .collect();
    let dist = score_distribution(&design.form_y, &nodes).unwrap();
    let quadrature_mean: f64 = dist.iter().enumerate().map(|(s, p)| s as f64 * p).sum();
    assert!((quadrature_mean - oracle).abs() < 0.05, "{quadrature_mean} vs {oracle}");
}

#[test]
fn covariate_correlation_with_ability() {
    let mut rng = stream_rng(5, 0);
    let thetas: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();

    let flat = gen_covariates(&thetas, &[4], (0.0, 0.0), &mut rng);
    let c: Vec<f64> = flat.iter().map(|r| r[0] as f64).collect();
    assert!(common::pearson(&c, &thetas).abs() < 0.02);

    let mut rho = Vec::new();
    for correlation in [Correlation::Weak, Correlation::Medium] {
        let cov = gen_covariates(&thetas, &[3, 4, 5], correlation.discrimination_range(), &mut rng);
        let r: Vec<f64> = (0..3)
            .map(|j| {
                let c: Vec<f64> = cov.iter().map(|row| row[j] as f64).collect();
                common::spearman(&c, &thetas)
            })
            .collect();
        rho.push(r);
    }
    for j in 0..3 {
        assert!(rho[1][j] > 0.2 && rho[1][j] < 0.8, "medium covariate {j}: {}", rho[1][j]);
        assert!(rho[0][j] > 0.0 && rho[0][j] < rho[1][j]);
    }
}
