//! Local equating families: anchor-conditioned, propensity-stratified,
//! stratified inverse probability weighting, and the equipercentile variant.

use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};
use crate::propensity::StratumAssignment;
use crate::stats::{
    inverse_cdf, kernel_cdf, quantile_linear, unweighted_moments, weighted_ecdf, weighted_moments, Cdf,
    KernelCdf, WeightedEcdf,
};
use crate::types::{ExamineeRecord, Form, IndexKind, LinearTransform, TransformFamily, WeightedSample};

/// Default symmetric trimming fraction for IPW weights.
pub const DEFAULT_TRIM_ALPHA: f64 = 0.01;

/// Linear transform from two cells of raw scores with `n - 1` moments, or
/// `None` when either side has fewer than two scores or zero spread.
fn unweighted_cell(xs: &[f64], ys: &[f64]) -> Option<LinearTransform> {
    let (mx, sx) = unweighted_moments(xs).ok()?;
    let (my, sy) = unweighted_moments(ys).ok()?;
    LinearTransform::from_moments(mx, sx, my, sy).ok()
}

/// Scores of each form grouped by a conditioning value.
fn group_scores<I>(records: &[ExamineeRecord], keys: I) -> BTreeMap<u32, (Vec<f64>, Vec<f64>)>
where
    I: IntoIterator<Item = Option<u32>>,
{
    let mut cells: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (r, key) in records.iter().zip(keys) {
        let Some(key) = key else { continue };
        let cell = cells.entry(key).or_default();
        match r.form {
            Form::X => cell.0.push(r.score as f64),
            Form::Y => cell.1.push(r.score as f64),
        }
    }
    cells
}

fn check_both_forms(records: &[ExamineeRecord]) -> Result<()> {
    let has_x = records.iter().any(|r| r.form == Form::X);
    let has_y = records.iter().any(|r| r.form == Form::Y);
    if has_x && has_y {
        Ok(())
    } else {
        Err(Error::MissingForm)
    }
}

fn linear_family(kind: IndexKind, cells: BTreeMap<u32, (Vec<f64>, Vec<f64>)>) -> Result<TransformFamily> {
    let mut family = TransformFamily::new(kind);
    for (index, (xs, ys)) in cells {
        match unweighted_cell(&xs, &ys) {
            Some(t) => {
                family.entries.insert(index, t);
            }
            None => family.omitted.push(index),
        }
    }
    family.finish()
}

/// One transform per anchor score observed with at least two examinees and
/// positive spread on each form.
pub fn anchor_family(records: &[ExamineeRecord]) -> Result<TransformFamily> {
    if records.iter().any(|r| r.anchor.is_none()) {
        return Err(Error::MissingAnchor);
    }
    check_both_forms(records)?;
    linear_family(IndexKind::AnchorScore, group_scores(records, records.iter().map(|r| r.anchor)))
}

/// One transform per propensity stratum from the within-stratum form moments.
pub fn strat_family(records: &[ExamineeRecord], assignment: &StratumAssignment) -> Result<TransformFamily> {
    if assignment.labels.len() != records.len() {
        return Err(Error::DimensionError { expected: records.len(), found: assignment.labels.len() });
    }
    check_both_forms(records)?;
    let mut cells = group_scores(records, assignment.labels.iter().map(|&l| Some(l)));
    for k in 1..=assignment.k as u32 {
        cells.entry(k).or_default();
    }
    linear_family(IndexKind::Stratum, cells)
}

/// Stabilized, trimmed inverse probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct IpwWeights {
    pub alpha: f64,
    pub stratum: Vec<u32>,
    /// Untrimmed weight; `None` for records in strata without both forms.
    pub raw: Vec<Option<f64>>,
    pub trimmed: Vec<Option<f64>>,
    /// Proportion of `T = 1` records per stratum (index `k - 1`).
    pub treated_share: Vec<f64>,
    pub overlap_violations: Vec<u32>,
}

/// Stabilized weights `p_k / pi` (form Y) and `(1 - p_k) / (1 - pi)` (form X),
/// clipped within each stratum at the `alpha/2` and `1 - alpha/2` quantiles
/// of that stratum's pooled weights.
pub fn ipw_weights(
    records: &[ExamineeRecord],
    assignment: &StratumAssignment,
    propensities: &[f64],
    alpha: f64,
) -> Result<IpwWeights> {
    let n = records.len();
    if assignment.labels.len() != n {
        return Err(Error::DimensionError { expected: n, found: assignment.labels.len() });
    }
    if propensities.len() != n {
        return Err(Error::DimensionError { expected: n, found: propensities.len() });
    }
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("trim fraction {alpha} outside [0, 0.5)")));
    }
    if let Some(&p) = propensities.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::InvalidProbability(p));
    }

    let mut raw = vec![None; n];
    let mut trimmed = vec![None; n];
    let mut treated_share = vec![0.0; assignment.k];
    let mut violations = Vec::new();

    for (s, members) in assignment.members().into_iter().enumerate() {
        let n_y = members.iter().filter(|&&i| records[i].form == Form::Y).count();
        if n_y == 0 || n_y == members.len() {
            if !members.is_empty() {
                violations.push(s as u32 + 1);
            }
            continue;
        }
        let p_k = n_y as f64 / members.len() as f64;
        treated_share[s] = p_k;
        let w: Vec<f64> = members
            .iter()
            .map(|&i| match records[i].form {
                Form::Y => p_k / propensities[i],
                Form::X => (1.0 - p_k) / (1.0 - propensities[i]),
            })
            .collect();
        let mut sorted = w.clone();
        sorted.sort_by(f64::total_cmp);
        let lo = quantile_linear(&sorted, alpha / 2.0);
        let hi = quantile_linear(&sorted, 1.0 - alpha / 2.0);
        for (&i, &wi) in members.iter().zip(&w) {
            raw[i] = Some(wi);
            trimmed[i] = Some(wi.clamp(lo, hi));
        }
    }
    if !violations.is_empty() {
        warn!("strata {violations:?} lack one of the forms; their records carry no weight");
    }
    Ok(IpwWeights {
        alpha,
        stratum: assignment.labels.clone(),
        raw,
        trimmed,
        treated_share,
        overlap_violations: violations,
    })
}

/// Weighted scores of each form per stratum.
fn weighted_cells(records: &[ExamineeRecord], weights: &IpwWeights) -> BTreeMap<u32, [(Vec<f64>, Vec<f64>); 2]> {
    let mut cells: BTreeMap<u32, [(Vec<f64>, Vec<f64>); 2]> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let cell = cells.entry(weights.stratum[i]).or_default();
        let Some(w) = weights.trimmed[i] else { continue };
        let side = &mut cell[r.form.indicator() as usize];
        side.0.push(r.score as f64);
        side.1.push(w);
    }
    cells
}

/// One transform per stratum from trimmed-weight moments (weight-sum
/// denominators).
pub fn ipw_family(records: &[ExamineeRecord], weights: &IpwWeights) -> Result<TransformFamily> {
    if weights.stratum.len() != records.len() {
        return Err(Error::DimensionError { expected: records.len(), found: weights.stratum.len() });
    }
    let mut family = TransformFamily::new(IndexKind::Stratum);
    for (k, [(xs, wx), (ys, wy)]) in weighted_cells(records, weights) {
        let transform = (|| {
            let (mx, sx) = weighted_moments(&WeightedSample::new(xs, wx).ok()?);
            let (my, sy) = weighted_moments(&WeightedSample::new(ys, wy).ok()?);
            LinearTransform::from_moments(mx, sx, my, sy).ok()
        })();
        match transform {
            Some(t) => {
                family.entries.insert(k, t);
            }
            None => family.omitted.push(k),
        }
    }
    family.finish()
}

/// Continuization used by equipercentile equating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Step (unsmoothed) weighted ECDFs.
    Step,
    /// Gaussian kernel with this bandwidth.
    Kernel(f64),
    /// Limit of infinite bandwidth: the moment-matching linear map with
    /// weight-sum standard deviations.
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EquipercentileMap {
    Step { fx: WeightedEcdf, fy: WeightedEcdf },
    Kernel { fx: KernelCdf, fy: KernelCdf },
    Linear(LinearTransform),
}

impl EquipercentileMap {
    /// `F_X^{-1}(F_Y(y))`.
    pub fn apply(&self, y: f64) -> f64 {
        // probabilities come from a CDF clamped to [0, 1], so inversion cannot fail
        match self {
            EquipercentileMap::Step { fx, fy } => inverse_cdf(fx, fy.cdf(y), fx.support()).unwrap(),
            EquipercentileMap::Kernel { fx, fy } => inverse_cdf(fx, fy.cdf(y), fx.support()).unwrap(),
            EquipercentileMap::Linear(t) => t.apply(y),
        }
    }
}

/// Cells an equipercentile family is conditioned on.
#[derive(Debug, Clone, Copy)]
pub enum Conditioning<'a> {
    Anchor,
    Strata(&'a StratumAssignment),
    Weighted(&'a IpwWeights),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquipercentileFamily {
    pub index_kind: IndexKind,
    pub bandwidth: Bandwidth,
    pub entries: BTreeMap<u32, EquipercentileMap>,
    pub omitted: Vec<u32>,
}

impl EquipercentileFamily {
    /// Map for `index`, or the nearest index that has one (ties go low).
    pub fn resolve(&self, index: u32) -> Option<(u32, &EquipercentileMap)> {
        if let Some(m) = self.entries.get(&index) {
            return Some((index, m));
        }
        let below = self.entries.range(..index).next_back();
        let above = self.entries.range(index..).next();
        match (below, above) {
            (Some((&lo, a)), Some((&hi, b))) => Some(if index - lo <= hi - index { (lo, a) } else { (hi, b) }),
            (Some((&k, m)), None) | (None, Some((&k, m))) => Some((k, m)),
            (None, None) => None,
        }
    }
}

fn ep_cell(x: WeightedSample, y: WeightedSample, bandwidth: Bandwidth) -> Result<EquipercentileMap> {
    Ok(match bandwidth {
        Bandwidth::Step => EquipercentileMap::Step { fx: weighted_ecdf(&x), fy: weighted_ecdf(&y) },
        Bandwidth::Kernel(h) => EquipercentileMap::Kernel { fx: kernel_cdf(&x, h)?, fy: kernel_cdf(&y, h)? },
        Bandwidth::Infinite => {
            let (mx, sx) = weighted_moments(&x);
            let (my, sy) = weighted_moments(&y);
            EquipercentileMap::Linear(LinearTransform::from_moments(mx, sx, my, sy)?)
        }
    })
}

/// Equipercentile maps per conditioning cell built from (optionally
/// smoothed) weighted ECDFs. Unit weights unless conditioning on IPW weights.
pub fn equipercentile_family(
    records: &[ExamineeRecord],
    conditioning: Conditioning<'_>,
    bandwidth: Bandwidth,
) -> Result<EquipercentileFamily> {
    if let Bandwidth::Kernel(h) = bandwidth {
        if !(h > 0.0) {
            return Err(Error::InvalidBandwidth(h));
        }
    }
    check_both_forms(records)?;
    let n = records.len();
    let (kind, keys, weights): (IndexKind, Vec<Option<u32>>, Vec<Option<f64>>) = match conditioning {
        Conditioning::Anchor => {
            if records.iter().any(|r| r.anchor.is_none()) {
                return Err(Error::MissingAnchor);
            }
            (IndexKind::AnchorScore, records.iter().map(|r| r.anchor).collect(), vec![Some(1.0); n])
        }
        Conditioning::Strata(a) => {
            if a.labels.len() != n {
                return Err(Error::DimensionError { expected: n, found: a.labels.len() });
            }
            (IndexKind::Stratum, a.labels.iter().map(|&l| Some(l)).collect(), vec![Some(1.0); n])
        }
        Conditioning::Weighted(w) => {
            if w.stratum.len() != n {
                return Err(Error::DimensionError { expected: n, found: w.stratum.len() });
            }
            (IndexKind::Stratum, w.stratum.iter().map(|&l| Some(l)).collect(), w.trimmed.clone())
        }
    };

    let mut cells: BTreeMap<u32, [(Vec<f64>, Vec<f64>); 2]> = BTreeMap::new();
    for ((r, key), w) in records.iter().zip(keys).zip(weights) {
        let Some(key) = key else { continue };
        let cell = cells.entry(key).or_default();
        let Some(w) = w else { continue };
        let side = &mut cell[r.form.indicator() as usize];
        side.0.push(r.score as f64);
        side.1.push(w);
    }

    let mut family = EquipercentileFamily { index_kind: kind, bandwidth, entries: BTreeMap::new(), omitted: Vec::new() };
    for (k, [(xs, wx), (ys, wy)]) in cells {
        let map = match (WeightedSample::new(xs, wx), WeightedSample::new(ys, wy)) {
            (Ok(x), Ok(y)) => ep_cell(x, y, bandwidth).ok(),
            _ => None,
        };
        match map {
            Some(m) => {
                family.entries.insert(k, m);
            }
            None => family.omitted.push(k),
        }
    }
    if family.entries.is_empty() {
        return Err(Error::EmptyFamily);
    }
    Ok(family)
}

/// Smallest observed index value whose empirical CDF reaches `percentile / 100`.
pub fn percentile_index(index_values: &[u32], percentile: f64) -> Result<u32> {
    if index_values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::InvalidProbability(percentile / 100.0));
    }
    let mut sorted = index_values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let target = percentile / 100.0;
    let mut count = 0usize;
    for (i, &v) in sorted.iter().enumerate() {
        count += 1;
        let last_of_value = sorted.get(i + 1) != Some(&v);
        if last_of_value && count as f64 / n >= target - 1e-12 {
            return Ok(v);
        }
    }
    Ok(*sorted.last().unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedTransform {
    pub percentile: f64,
    /// Index value at the requested percentile.
    pub index: u32,
    /// Index whose transform was used (differs from `index` when omitted).
    pub resolved_index: u32,
    pub transform: LinearTransform,
}

/// Transforms at the requested percentiles of the conditioning variable.
pub fn family_at_percentiles(
    family: &TransformFamily,
    percentiles: &[f64],
    index_values: &[u32],
) -> Result<Vec<SelectedTransform>> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    percentiles
        .iter()
        .map(|&pct| {
            let index = percentile_index(index_values, pct)?;
            let (resolved_index, transform) = family.resolve(index).ok_or(Error::EmptyFamily)?;
            if resolved_index != index {
                warn!("percentile {pct}: index {index} has no transform, using nearest index {resolved_index}");
            }
            Ok(SelectedTransform { percentile: pct, index, resolved_index, transform: *transform })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn r(form: Form, score: u32, anchor: u32) -> ExamineeRecord {
        ExamineeRecord::new(form, score, Some(anchor), vec![])
    }

    #[test]
    fn anchor_family_hand_example() {
        let records = vec![r(Form::X, 2, 1), r(Form::X, 4, 1), r(Form::Y, 1, 1), r(Form::Y, 3, 1)];
        let fam = anchor_family(&records).unwrap();
        let t = fam.get(1).unwrap();
        assert_eq!(t.slope, 1.0);
        assert_eq!(t.apply(0.0), 1.0);
        assert_eq!(t.apply(5.0), 6.0);
    }

    #[test]
    fn anchor_family_identity_and_omissions() {
        let mut records = Vec::new();
        for a in 0..3 {
            for s in [a, a + 2, a + 5] {
                records.push(r(Form::X, s, a));
                records.push(r(Form::Y, s, a));
            }
        }
        records.push(r(Form::X, 7, 9));
        records.push(r(Form::X, 8, 9));
        let fam = anchor_family(&records).unwrap();
        for a in 0..3 {
            let t = fam.get(a).unwrap();
            assert_abs_diff_eq!(t.slope, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(t.apply(4.0), 4.0, epsilon = 1e-12);
        }
        assert_eq!(fam.omitted, vec![9]);
    }

    #[test]
    fn anchor_family_errors() {
        let no_anchor = vec![ExamineeRecord::new(Form::X, 1, None, vec![])];
        assert_eq!(anchor_family(&no_anchor), Err(Error::MissingAnchor));
        let one_each = vec![r(Form::X, 1, 0), r(Form::Y, 1, 0)];
        assert_eq!(anchor_family(&one_each), Err(Error::EmptyFamily));
    }

    #[test]
    fn strat_family_examples() {
        let records = vec![r(Form::X, 2, 0), r(Form::X, 4, 0), r(Form::Y, 1, 0), r(Form::Y, 3, 0)];
        let one = StratumAssignment { k: 1, labels: vec![1; 4], boundaries: vec![] };
        let fam = strat_family(&records, &one).unwrap();
        assert_eq!(fam.get(1).unwrap().apply(2.0), 3.0);

        // stratum 2 holds a single form-Y record
        let mut records = records;
        records.push(r(Form::Y, 9, 0));
        records.push(r(Form::X, 9, 0));
        records.push(r(Form::X, 6, 0));
        let two = StratumAssignment { k: 2, labels: vec![1, 1, 1, 1, 2, 2, 2], boundaries: vec![0.5] };
        let fam = strat_family(&records, &two).unwrap();
        assert_eq!(fam.omitted, vec![2]);
        assert!(fam.get(1).is_some());
    }

    #[test]
    fn stabilization_identity() {
        let forms = [Form::X, Form::Y, Form::Y, Form::X, Form::X, Form::Y, Form::X, Form::X];
        let records: Vec<_> = forms.iter().map(|&f| r(f, 3, 0)).collect();
        let assignment = StratumAssignment { k: 2, labels: vec![1, 1, 1, 1, 2, 2, 2, 2], boundaries: vec![0.5] };
        let props = vec![0.5, 0.5, 0.5, 0.5, 0.25, 0.25, 0.25, 0.25];
        let w = ipw_weights(&records, &assignment, &props, 0.01).unwrap();
        assert!(w.raw.iter().chain(&w.trimmed).all(|v| *v == Some(1.0)));
    }

    #[test]
    fn stabilized_weight_formula() {
        // stratum share of form Y is 0.5; a form-Y record with pi = 0.25
        let records = vec![r(Form::Y, 1, 0), r(Form::X, 1, 0)];
        let a = StratumAssignment { k: 1, labels: vec![1, 1], boundaries: vec![] };
        let w = ipw_weights(&records, &a, &[0.25, 0.5], 0.0).unwrap();
        assert_eq!(w.raw[0], Some(2.0));
        assert_eq!(w.raw[1], Some(1.0));
    }

    /// Type-7 quantile computed from the order statistics directly.
    fn oracle_quantile(values: &[f64], p: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let pos = p * (v.len() as f64 - 1.0);
        let j = pos.floor() as usize;
        let g = pos - j as f64;
        if j + 1 >= v.len() {
            v[j]
        } else {
            (1.0 - g) * v[j] + g * v[j + 1]
        }
    }

    #[test]
    fn trimming_clips_at_weight_quantiles() {
        // p_k = 3/4: form-Y weights 0.75 / pi, form-X weight 0.25 / (1 - pi)
        let records = vec![r(Form::Y, 0, 0), r(Form::Y, 0, 0), r(Form::Y, 0, 0), r(Form::X, 0, 0)];
        let props = [0.75, 0.1875, 0.75, 0.5];
        let a = StratumAssignment { k: 1, labels: vec![1; 4], boundaries: vec![] };
        let w = ipw_weights(&records, &a, &props, 0.25).unwrap();
        let raw: Vec<f64> = w.raw.iter().map(|v| v.unwrap()).collect();
        assert_eq!(raw, vec![1.0, 4.0, 1.0, 0.5]);
        let lo = oracle_quantile(&raw, 0.125);
        let hi = oracle_quantile(&raw, 0.875);
        assert_eq!((lo, hi), (0.6875, 2.875));
        let trimmed: Vec<f64> = w.trimmed.iter().map(|v| v.unwrap()).collect();
        assert_eq!(trimmed, vec![1.0, 2.875, 1.0, 0.6875]);
    }

    #[test]
    fn overlap_violation_excludes_stratum() {
        let records = vec![r(Form::X, 1, 0), r(Form::X, 2, 0), r(Form::X, 1, 0), r(Form::Y, 2, 0), r(Form::X, 3, 0), r(Form::Y, 5, 0)];
        let a = StratumAssignment { k: 2, labels: vec![1, 1, 2, 2, 2, 2], boundaries: vec![0.5] };
        let w = ipw_weights(&records, &a, &[0.5; 6], 0.01).unwrap();
        assert_eq!(w.overlap_violations, vec![1]);
        assert_eq!(w.trimmed[0], None);
        assert!(w.trimmed[2].is_some());
    }

    #[test]
    fn ipw_family_unit_weights_hand_example() {
        let records = vec![r(Form::X, 2, 0), r(Form::X, 4, 0), r(Form::Y, 1, 0), r(Form::Y, 3, 0)];
        let a = StratumAssignment { k: 1, labels: vec![1; 4], boundaries: vec![] };
        let w = ipw_weights(&records, &a, &[0.5; 4], 0.0).unwrap();
        let fam = ipw_family(&records, &w).unwrap();
        let t = fam.get(1).unwrap();
        assert_eq!(t.slope, 1.0);
        assert_eq!(t.apply(1.0), 2.0);
    }

    /// Classical brute force: for each y, count F_Y(y), then scan every
    /// score for the smallest x with F_X(x) >= F_Y(y).
    fn brute_force_equipercentile(xs: &[u32], ys: &[u32], max_score: u32) -> Vec<f64> {
        (0..=max_score)
            .map(|y| {
                let fy = ys.iter().filter(|&&v| v <= y).count() as f64 / ys.len() as f64;
                let lo = *xs.iter().min().unwrap();
                let hi = *xs.iter().max().unwrap();
                (lo..=hi)
                    .find(|&x| xs.iter().filter(|&&v| v <= x).count() as f64 / xs.len() as f64 >= fy)
                    .unwrap_or(hi) as f64
            })
            .collect()
    }

    #[test]
    fn step_equipercentile_matches_brute_force() {
        let xs = [3, 5, 5, 7, 8, 10, 12, 12, 13, 15];
        let ys = [1, 2, 4, 4, 6, 9, 9, 11, 14, 14];
        let mut records: Vec<_> = xs.iter().map(|&s| r(Form::X, s, 0)).collect();
        records.extend(ys.iter().map(|&s| r(Form::Y, s, 0)));
        let a = StratumAssignment { k: 1, labels: vec![1; 20], boundaries: vec![] };
        let fam = equipercentile_family(&records, Conditioning::Strata(&a), Bandwidth::Step).unwrap();
        let map = &fam.entries[&1];
        let oracle = brute_force_equipercentile(&xs, &ys, 15);
        for (y, expected) in oracle.iter().enumerate() {
            assert_eq!(map.apply(y as f64), *expected, "score {y}");
        }
    }

    #[test]
    fn identical_distributions_give_identity() {
        let scores = [0, 2, 2, 3, 7, 9];
        let mut records: Vec<_> = scores.iter().map(|&s| r(Form::X, s, 1)).collect();
        records.extend(scores.iter().map(|&s| r(Form::Y, s, 1)));
        for bw in [Bandwidth::Step, Bandwidth::Kernel(0.6), Bandwidth::Infinite] {
            let fam = equipercentile_family(&records, Conditioning::Anchor, bw).unwrap();
            for &s in &scores {
                assert_abs_diff_eq!(fam.entries[&1].apply(s as f64), s as f64, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn percentile_index_matches_figure_mapping() {
        // deciles of anchor scores 5, 8, 11, 14, 18
        let mut anchors = Vec::new();
        for (value, count) in [(3, 5), (5, 5), (6, 10), (8, 10), (10, 10), (11, 10), (13, 10), (14, 10), (16, 10), (18, 10), (20, 10)] {
            anchors.extend(std::iter::repeat(value).take(count));
        }
        let got: Vec<u32> = [10.0, 30.0, 50.0, 70.0, 90.0]
            .iter()
            .map(|&p| percentile_index(&anchors, p).unwrap())
            .collect();
        assert_eq!(got, vec![5, 8, 11, 14, 18]);

        // equal-size strata: 20 strata give 2, 6, 10, 14, 18
        let labels: Vec<u32> = (0..7322).map(|i| (i * 20 / 7322) as u32 + 1).collect();
        let got: Vec<u32> = [10.0, 30.0, 50.0, 70.0, 90.0]
            .iter()
            .map(|&p| percentile_index(&labels, p).unwrap())
            .collect();
        assert_eq!(got, vec![2, 6, 10, 14, 18]);
    }

    #[test]
    fn family_at_percentiles_examples() {
        let mut fam = TransformFamily::new(IndexKind::AnchorScore);
        for a in 0..=4u32 {
            fam.entries.insert(a, LinearTransform::new(1.0, 0.0, a as f64).unwrap());
        }
        let values = [0, 1, 1, 2, 2, 2, 3, 3, 4];
        let sel = family_at_percentiles(&fam, &[50.0], &values).unwrap();
        assert_eq!(sel[0].index, 2);

        let mut single = TransformFamily::new(IndexKind::Stratum);
        single.entries.insert(3, LinearTransform::new(2.0, 1.0, 1.0).unwrap());
        let sel = family_at_percentiles(&single, &[10.0, 50.0, 90.0], &[1, 2, 3, 4, 5]).unwrap();
        assert!(sel.iter().all(|s| s.transform == single.entries[&3]));
        assert_eq!(sel[0].resolved_index, 3);
    }

    proptest! {
        #[test]
        fn cell_transforms_are_monotone_and_map_means(
            xs in prop::collection::vec(0u32..40, 2..30),
            ys in prop::collection::vec(0u32..40, 2..30),
        ) {
            let fx: Vec<f64> = xs.iter().map(|&v| v as f64).collect();
            let fy: Vec<f64> = ys.iter().map(|&v| v as f64).collect();
            prop_assume!(unweighted_moments(&fx).unwrap().1 > 0.0 && unweighted_moments(&fy).unwrap().1 > 0.0);
            let mut records: Vec<_> = xs.iter().map(|&s| r(Form::X, s, 0)).collect();
            records.extend(ys.iter().map(|&s| r(Form::Y, s, 0)));
            let t = *anchor_family(&records).unwrap().get(0).unwrap();
            prop_assert!(t.slope > 0.0);
            let (mx, sx) = unweighted_moments(&fx).unwrap();
            let (my, sy) = unweighted_moments(&fy).unwrap();
            prop_assert!((t.apply(my) - mx).abs() < 1e-10);
            let back = LinearTransform::from_moments(my, sy, mx, sx).unwrap();
            for y in [0.0, 7.5, 20.0, 39.0] {
                prop_assert!((back.apply(t.apply(y)) - y).abs() < 1e-10);
            }
            let ep = equipercentile_family(&records, Conditioning::Anchor, Bandwidth::Step).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for y in 0..40 {
                let v = ep.entries[&0].apply(y as f64);
                prop_assert!(v >= prev);
                prev = v;
            }
        }
    }
}
