mod common;

use std::time::Instant;

use approx::assert_abs_diff_eq;
use locequate::equating::{equipercentile_family, Bandwidth, Conditioning};
use locequate::propensity::{fit_logistic, stratify_quantile, DesignMatrix, FitOptions};
use locequate::simulation::{lord_wingersky, prob_2pl, stream_rng, true_transform, ItemParams};
use locequate::stats::unweighted_moments;
use locequate::{ExamineeRecord, Form};
use rand::Rng;

#[test]
fn logistic_mle_matches_direct_search() {
    let start = Instant::now();
    for (rows, treated) in common::logistic_fixtures() {
        let design = DesignMatrix::from_rows(&rows).unwrap();
        let model = fit_logistic(&design, &treated, FitOptions::default()).unwrap();
        assert!(model.converged && !model.separation);
        let oracle = common::nelder_mead(
            |b| common::neg_log_likelihood(&rows, &treated, b),
            &vec![0.0; rows[0].len() + 1],
            0.5,
        );
        for (b, o) in model.coefficients.iter().zip(&oracle) {
            assert_abs_diff_eq!(*b, *o, epsilon = 1e-3);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn lord_wingersky_matches_enumeration() {
    let mut rng = stream_rng(7, 0);
    for case in 0..20 {
        let j = 1 + case % 12;
        let probs: Vec<f64> = (0..j).map(|_| rng.random::<f64>()).collect();
        let fast = lord_wingersky(&probs);
        let slow = common::enumerate_scores(&probs);
        for (a, b) in fast.iter().zip(&slow) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }
}

#[test]
fn kernel_map_approaches_linear_map() {
    let mut rng = stream_rng(99, 0);
    for _ in 0..10 {
        let n = rng.random_range(50..400);
        let shift = rng.random_range(-3.0..3.0);
        let records: Vec<ExamineeRecord> = (0..n)
            .map(|i| {
                let form = if i % 2 == 0 { Form::X } else { Form::Y };
                let p = if form == Form::X { 0.55 } else { 0.45 };
                let base = (0..30).filter(|_| rng.random::<f64>() < p).count() as f64;
                let score = (base + if form == Form::Y { shift } else { 0.0 }).max(0.0).round() as u32;
                ExamineeRecord::new(form, score, None, vec![])
            })
            .collect();
        let one = stratify_quantile(&vec![0.5; n], 1).unwrap();
        let ys: Vec<f64> = records.iter().filter(|r| r.form == Form::Y).map(|r| r.score as f64).collect();
        let xs: Vec<f64> = records.iter().filter(|r| r.form == Form::X).map(|r| r.score as f64).collect();
        let sd = unweighted_moments(&ys).unwrap().1.max(unweighted_moments(&xs).unwrap().1);

        let wide = equipercentile_family(&records, Conditioning::Strata(&one), Bandwidth::Kernel(1e4 * sd)).unwrap();
        let linear = equipercentile_family(&records, Conditioning::Strata(&one), Bandwidth::Infinite).unwrap();
        let (wide, linear) = (&wide.entries[&1], &linear.entries[&1]);

        let mut sorted = ys.clone();
        sorted.sort_by(f64::total_cmp);
        let lo = sorted[(0.05 * (sorted.len() - 1) as f64).round() as usize];
        let hi = sorted[(0.95 * (sorted.len() - 1) as f64).round() as usize];
        let mut y = lo;
        while y <= hi {
            assert!((wide.apply(y) - linear.apply(y)).abs() < 0.05, "y = {y}");
            y += 0.5;
        }
    }
}

#[test]
fn true_transform_matches_monte_carlo_moments() {
    let mut rng = stream_rng(3, 0);
    let form_x = ItemParams::draw(15, (0.5, 2.0), &mut rng);
    let form_y = ItemParams::draw(15, (0.5, 2.0), &mut rng);
    let thetas = [-0.4, -0.1, 0.0, 0.3, 0.35];
    let t = true_transform(&thetas, &form_x, &form_y).unwrap();

    let draws = 100_000;
    let simulate = |items: &ItemParams, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..draws)
            .map(|_| {
                let theta = thetas[rng.random_range(0..thetas.len())];
                items.sample_score(theta, rng) as f64
            })
            .collect()
    };
    let (mx, sx) = unweighted_moments(&simulate(&form_x, &mut rng)).unwrap();
    let (my, sy) = unweighted_moments(&simulate(&form_y, &mut rng)).unwrap();
    let se = |s: f64| 4.0 * s / (draws as f64).sqrt();
    assert_abs_diff_eq!(mx, t.mu_x, epsilon = se(sx));
    assert_abs_diff_eq!(my, t.mu_y, epsilon = se(sy));
    assert_abs_diff_eq!(sx / sy, t.slope, epsilon = 0.02);
}

#[test]
fn expected_score_is_sum_of_item_probabilities() {
    let mut rng = stream_rng(5, 0);
    let items = ItemParams::draw(10, (0.5, 2.0), &mut rng);
    let theta = 0.7;
    let expected: f64 = items
        .discrimination
        .iter()
        .zip(&items.difficulty)
        .map(|(&a, &b)| prob_2pl(theta, a, b))
        .sum();
    assert_abs_diff_eq!(items.score_moments(theta).0, expected, epsilon = 1e-12);
}
