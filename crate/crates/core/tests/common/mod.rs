//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Nelder–Mead minimizer, restarted from its own optimum until the
/// objective stops improving.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], scale: f64) -> Vec<f64> {
    let mut best = start.to_vec();
    let mut best_val = f(&best);
    for _ in 0..20 {
        let x = nelder_mead_run(&f, &best, scale);
        let v = f(&x);
        let improved = best_val - v;
        best = x;
        best_val = v;
        if improved.abs() < 1e-15 {
            break;
        }
    }
    best
}

fn nelder_mead_run<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], scale: f64) -> Vec<f64> {
    let d = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..d {
        let mut p = start.to_vec();
        p[i] += scale;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    for _ in 0..20_000 {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread < 1e-11 && (values[d] - values[0]).abs() < 1e-15 {
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|j| simplex[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|j| centroid[j] + t * (simplex[d][j] - centroid[j])).collect() };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[d] = expanded;
                values[d] = fe;
            } else {
                simplex[d] = reflected;
                values[d] = fr;
            }
        } else if fr < values[d - 1] {
            simplex[d] = reflected;
            values[d] = fr;
        } else {
            let contracted = if fr < values[d] { along(-0.5) } else { along(0.5) };
            let fc = f(&contracted);
            if fc < values[d].min(fr) {
                simplex[d] = contracted;
                values[d] = fc;
            } else {
                for i in 1..=d {
                    simplex[i] = (0..d).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let i = (0..=d).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    simplex[i].clone()
}

/// Negative Bernoulli log-likelihood with an intercept, computed directly.
pub fn neg_log_likelihood(rows: &[Vec<f64>], treated: &[bool], beta: &[f64]) -> f64 {
    rows.iter()
        .zip(treated)
        .map(|(x, &t)| {
            let eta = beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
            let p = 1.0 / (1.0 + (-eta).exp());
            -(if t { p.ln() } else { (1.0 - p).ln() })
        })
        .sum()
}

/// Five small non-separable logistic regression datasets (8 to 20 records).
pub fn logistic_fixtures() -> Vec<(Vec<Vec<f64>>, Vec<bool>)> {
    let b = |v: &[u8]| v.iter().map(|&t| t == 1).collect::<Vec<bool>>();
    let col = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<Vec<f64>>>();
    let mut out = vec![
        (col(&[-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0]), b(&[0, 1, 0, 0, 1, 0, 1, 1])),
        (
            col(&[0.2, 1.1, -0.7, 2.3, -1.9, 0.8, -0.3, 1.6, -1.2, 0.5]),
            b(&[1, 0, 0, 1, 0, 1, 1, 0, 0, 1]),
        ),
    ];
    for (seed, n, k) in [(11u64, 12usize, 2usize), (12, 16, 2), (13, 20, 3)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        // labels alternate in covariate order of a noisy score so no hyperplane separates them
        let mut treated: Vec<bool> = rows.iter().map(|r| 0.4 * r[0] + rng.random_range(-1.5..1.5) > 0.0).collect();
        treated[0] = true;
        treated[1] = false;
        out.push((rows, treated));
    }
    out
}

/// Score distribution by summing over all 2^J response patterns.
pub fn enumerate_scores(probs: &[f64]) -> Vec<f64> {
    let j = probs.len();
    let mut dist = vec![0.0; j + 1];
    for pattern in 0u32..(1 << j) {
        let mut p = 1.0;
        for (l, &q) in probs.iter().enumerate() {
            p *= if pattern >> l & 1 == 1 { q } else { 1.0 - q };
        }
        dist[pattern.count_ones() as usize] += p;
    }
    dist
}

/// Average ranks (ties share their mean rank).
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}
