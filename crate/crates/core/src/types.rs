//! Domain types shared by every estimator.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Test form taken by an examinee. `X` is the reference scale, `Y` is the
/// form being equated onto it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Form {
    X,
    Y,
}

impl Form {
    /// Treatment indicator: 0 for form X, 1 for form Y.
    pub fn indicator(self) -> u8 {
        match self {
            Form::X => 0,
            Form::Y => 1,
        }
    }

    pub fn from_indicator(t: u8) -> Option<Form> {
        match t {
            0 => Some(Form::X),
            1 => Some(Form::Y),
            _ => None,
        }
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Form::X => f.write_str("X"),
            Form::Y => f.write_str("Y"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExamineeRecord {
    pub form: Form,
    pub score: u32,
    pub anchor: Option<u32>,
    /// Covariate codes; categorical covariates carry integer levels.
    pub covariates: Vec<f64>,
}

impl ExamineeRecord {
    pub fn new(form: Form, score: u32, anchor: Option<u32>, covariates: Vec<f64>) -> Self {
        Self { form, score, anchor, covariates }
    }
}

/// Checks that every record carries the same number of covariates and returns it.
pub fn covariate_arity(records: &[ExamineeRecord]) -> Result<usize> {
    let first = records.first().ok_or(Error::EmptyInput)?.covariates.len();
    for r in records {
        if r.covariates.len() != first {
            return Err(Error::DimensionError { expected: first, found: r.covariates.len() });
        }
    }
    Ok(first)
}

/// A linear equating map `y -> slope * (y - mu_y) + mu_x` from the form Y
/// scale onto the form X scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTransform {
    pub slope: f64,
    pub mu_y: f64,
    pub mu_x: f64,
}

impl LinearTransform {
    pub fn new(slope: f64, mu_y: f64, mu_x: f64) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::InvalidTransform(format!("slope {slope} must be positive")));
        }
        if !mu_y.is_finite() || !mu_x.is_finite() {
            return Err(Error::InvalidTransform("non-finite location".into()));
        }
        Ok(Self { slope, mu_y, mu_x })
    }

    /// Builds the transform matching the first two moments of both forms.
    pub fn from_moments(mu_x: f64, sd_x: f64, mu_y: f64, sd_y: f64) -> Result<Self> {
        if !(sd_x > 0.0 && sd_y > 0.0) {
            return Err(Error::InvalidTransform(format!(
                "standard deviations must be positive (sd_x = {sd_x}, sd_y = {sd_y})"
            )));
        }
        Self::new(sd_x / sd_y, mu_y, mu_x)
    }

    pub fn identity() -> Self {
        Self { slope: 1.0, mu_y: 0.0, mu_x: 0.0 }
    }

    #[inline]
    pub fn apply(&self, y: f64) -> f64 {
        self.slope * (y - self.mu_y) + self.mu_x
    }

    /// The reverse-direction map (X scale onto Y scale).
    pub fn inverse(&self) -> Self {
        Self { slope: 1.0 / self.slope, mu_y: self.mu_x, mu_x: self.mu_y }
    }
}

/// Free-function form of [`LinearTransform::apply`].
pub fn apply_linear(t: &LinearTransform, y: f64) -> f64 {
    t.apply(y)
}

/// What a family of transforms is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexKind {
    AnchorScore,
    Stratum,
    ThetaBin,
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexKind::AnchorScore => "anchor_score",
            IndexKind::Stratum => "stratum",
            IndexKind::ThetaBin => "theta_bin",
        })
    }
}

/// Local equating transforms indexed by a conditioning value.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformFamily {
    pub index_kind: IndexKind,
    pub entries: BTreeMap<u32, LinearTransform>,
    /// Observed index values without enough data for a transform.
    pub omitted: Vec<u32>,
}

impl TransformFamily {
    pub fn new(index_kind: IndexKind) -> Self {
        Self { index_kind, entries: BTreeMap::new(), omitted: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> Option<&LinearTransform> {
        self.entries.get(&index)
    }

    /// Transform for `index`, falling back to the nearest index that has one
    /// (ties resolve to the lower index). Returns the index actually used.
    pub fn resolve(&self, index: u32) -> Option<(u32, &LinearTransform)> {
        if let Some(t) = self.entries.get(&index) {
            return Some((index, t));
        }
        let below = self.entries.range(..index).next_back();
        let above = self.entries.range(index..).next();
        match (below, above) {
            (Some((&lo, tl)), Some((&hi, th))) => {
                if index - lo <= hi - index {
                    Some((lo, tl))
                } else {
                    Some((hi, th))
                }
            }
            (Some((&lo, t)), None) => Some((lo, t)),
            (None, Some((&hi, t))) => Some((hi, t)),
            (None, None) => None,
        }
    }

    /// Equated value of `y` for an examinee whose conditioning value is `index`.
    pub fn equate(&self, index: u32, y: f64) -> Option<f64> {
        self.resolve(index).map(|(_, t)| t.apply(y))
    }

    pub(crate) fn finish(mut self) -> Result<Self> {
        self.omitted.sort_unstable();
        self.omitted.dedup();
        if self.entries.is_empty() {
            return Err(Error::EmptyFamily);
        }
        Ok(self)
    }
}

/// Values paired with strictly positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSample {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::DimensionError { expected: values.len(), found: weights.len() });
        }
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(&w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidWeight(w));
        }
        Ok(Self { values, weights })
    }

    pub fn unweighted(values: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; values.len()];
        Self::new(values, weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_linear_examples() {
        let id = LinearTransform::new(1.0, 5.0, 5.0).unwrap();
        assert_eq!(apply_linear(&id, 7.0), 7.0);
        let shift = LinearTransform::new(1.0, 5.0, 7.0).unwrap();
        assert_eq!(apply_linear(&shift, 3.0), 5.0);
        let t = LinearTransform::new(1.5, 10.0, 12.0).unwrap();
        assert_eq!(apply_linear(&t, 14.0), 18.0);
    }

    #[test]
    fn rejects_non_positive_slope() {
        assert!(LinearTransform::new(0.0, 1.0, 1.0).is_err());
        assert!(LinearTransform::new(-1.0, 1.0, 1.0).is_err());
        assert!(LinearTransform::from_moments(1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn maps_mean_y_to_mean_x() {
        let t = LinearTransform::from_moments(12.3, 4.1, 9.8, 3.3).unwrap();
        assert_eq!(t.apply(9.8), 12.3);
    }

    #[test]
    fn resolve_falls_back_to_nearest() {
        let mut fam = TransformFamily::new(IndexKind::AnchorScore);
        fam.entries.insert(2, LinearTransform::new(1.0, 0.0, 2.0).unwrap());
        fam.entries.insert(6, LinearTransform::new(1.0, 0.0, 6.0).unwrap());
        fam.omitted.push(4);
        assert_eq!(fam.resolve(2).unwrap().0, 2);
        assert_eq!(fam.resolve(4).unwrap().0, 2);
        assert_eq!(fam.resolve(5).unwrap().0, 6);
        assert_eq!(fam.resolve(0).unwrap().0, 2);
        assert_eq!(fam.resolve(9).unwrap().0, 6);
        assert_eq!(fam.equate(5, 1.0), Some(7.0));
    }

    #[test]
    fn weighted_sample_validation() {
        assert_eq!(WeightedSample::new(vec![], vec![]), Err(Error::EmptyInput));
        assert!(matches!(
            WeightedSample::new(vec![1.0, 2.0], vec![1.0, 0.0]),
            Err(Error::InvalidWeight(_))
        ));
        assert!(matches!(
            WeightedSample::new(vec![1.0], vec![1.0, 1.0]),
            Err(Error::DimensionError { .. })
        ));
    }
}
