//! Delimited examinee datasets and the column-role schema that describes them.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use locequate::propensity::CovariateKind;
use locequate::{ExamineeRecord, Form};

use crate::error::{CliError, Result};

/// Column roles of a dataset file.
///
/// Text form, one `key=value` per line (`#` starts a comment):
///
/// ```text
/// form=form
/// score=score
/// anchor=anchor
/// numeric=age,verbal
/// categorical=gender
/// ignore=id
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSchema {
    pub form: String,
    pub score: String,
    pub anchor: Option<String>,
    pub numeric: Vec<String>,
    pub categorical: Vec<String>,
    pub ignore: Vec<String>,
    /// Columns not named anywhere become numeric covariates instead of an error.
    pub implicit_numeric: bool,
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

impl DatasetSchema {
    /// Used when no schema file is given: `form`, `score` and an optional
    /// `anchor` column, every other column a numeric covariate.
    pub fn conventional() -> Self {
        Self {
            form: "form".into(),
            score: "score".into(),
            anchor: Some("anchor".into()),
            implicit_numeric: true,
            ..Self::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut schema = Self { form: "form".into(), score: "score".into(), ..Self::default() };
        let mut bad = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bad.push(line.to_string());
                continue;
            };
            let value = value.trim();
            match key.trim() {
                "form" => schema.form = value.to_string(),
                "score" => schema.score = value.to_string(),
                "anchor" => schema.anchor = (!value.is_empty()).then(|| value.to_string()),
                "numeric" => schema.numeric = list(value),
                "categorical" => schema.categorical = list(value),
                "ignore" => schema.ignore = list(value),
                other => bad.push(other.to_string()),
            }
        }
        if bad.is_empty() {
            Ok(schema)
        } else {
            Err(CliError::Config(bad))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    fn resolve(&self, headers: &[String]) -> Result<ResolvedSchema> {
        let find = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| CliError::Schema(name.into()));
        let form = find(&self.form)?;
        let score = find(&self.score)?;
        let anchor = match &self.anchor {
            Some(a) if self.implicit_numeric => headers.iter().position(|h| h == a),
            Some(a) => Some(find(a)?),
            None => None,
        };
        for name in self.numeric.iter().chain(&self.categorical).chain(&self.ignore) {
            find(name)?;
        }
        let mut seen = BTreeSet::new();
        for h in headers {
            if !seen.insert(h) {
                return Err(CliError::Schema(h.clone()));
            }
        }
        let mut covariates = Vec::new();
        for (i, h) in headers.iter().enumerate() {
            if i == form || i == score || Some(i) == anchor || self.ignore.contains(h) {
                continue;
            }
            let kind = if self.categorical.contains(h) {
                CovariateKind::Categorical
            } else if self.numeric.contains(h) || self.implicit_numeric {
                CovariateKind::Numeric
            } else {
                return Err(CliError::Schema(h.clone()));
            };
            covariates.push((i, kind));
        }
        Ok(ResolvedSchema { form, score, anchor, covariates })
    }
}

struct ResolvedSchema {
    form: usize,
    score: usize,
    anchor: Option<usize>,
    covariates: Vec<(usize, CovariateKind)>,
}

/// Parsed examinee records with their covariate metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub has_anchor: bool,
    pub covariate_names: Vec<String>,
    pub covariate_kinds: Vec<CovariateKind>,
    pub records: Vec<ExamineeRecord>,
}

impl Dataset {
    pub fn max_score(&self) -> u32 {
        self.records.iter().map(|r| r.score).max().unwrap_or(0)
    }
}

fn parse_form(v: &str) -> Option<Form> {
    match v {
        "X" | "x" | "0" => Some(Form::X),
        "Y" | "y" | "1" => Some(Form::Y),
        _ => None,
    }
}

/// Reads a comma-separated dataset with a header row. Row numbers in errors
/// count data rows from 1.
pub fn read_dataset<R: Read>(reader: R, schema: &DatasetSchema) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = csv.headers()?.iter().map(String::from).collect();
    let roles = schema.resolve(&headers)?;
    let mut records = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let err = |message: String| CliError::Row { row: row_no, message };
        let cell = |j: usize| row.get(j).unwrap_or("");
        let form = parse_form(cell(roles.form)).ok_or_else(|| err(format!("unknown form label `{}`", cell(roles.form))))?;
        let int = |j: usize| {
            cell(j).parse::<u32>().map_err(|_| err(format!("`{}` in column `{}` is not a non-negative integer", cell(j), headers[j])))
        };
        let score = int(roles.score)?;
        let anchor = roles.anchor.map(int).transpose()?;
        let covariates = roles
            .covariates
            .iter()
            .map(|&(j, _)| {
                cell(j)
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("`{}` in column `{}` is not a number", cell(j), headers[j])))
            })
            .collect::<Result<Vec<f64>>>()?;
        records.push(ExamineeRecord::new(form, score, anchor, covariates));
    }
    if records.is_empty() {
        return Err(CliError::Core(locequate::Error::EmptyInput));
    }
    Ok(Dataset {
        has_anchor: roles.anchor.is_some(),
        covariate_names: roles.covariates.iter().map(|&(j, _)| headers[j].clone()).collect(),
        covariate_kinds: roles.covariates.iter().map(|&(_, k)| k).collect(),
        records,
    })
}

pub fn parse_dataset(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    read_dataset(fs::File::open(path)?, schema)
}

/// Writes `form,score[,anchor],<covariates>`; [`read_dataset`] with the
/// conventional schema (plus any categorical tags) reads it back unchanged.
pub fn write_dataset<W: Write>(writer: W, dataset: &Dataset) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["form".to_string(), "score".to_string()];
    if dataset.has_anchor {
        header.push("anchor".into());
    }
    header.extend(dataset.covariate_names.iter().cloned());
    csv.write_record(&header)?;
    for r in &dataset.records {
        let mut row = vec![r.form.to_string(), r.score.to_string()];
        if dataset.has_anchor {
            row.push(r.anchor.map(|a| a.to_string()).unwrap_or_default());
        }
        row.extend(r.covariates.iter().map(|c| c.to_string()));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

/// Schema that reads back a file produced by [`write_dataset`].
pub fn schema_for(dataset: &Dataset) -> DatasetSchema {
    let pick = |kind: CovariateKind| {
        dataset
            .covariate_names
            .iter()
            .zip(&dataset.covariate_kinds)
            .filter(|(_, k)| **k == kind)
            .map(|(n, _)| n.clone())
            .collect()
    };
    DatasetSchema {
        form: "form".into(),
        score: "score".into(),
        anchor: dataset.has_anchor.then(|| "anchor".into()),
        numeric: pick(CovariateKind::Numeric),
        categorical: pick(CovariateKind::Categorical),
        ignore: Vec::new(),
        implicit_numeric: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, schema: &DatasetSchema) -> Result<Dataset> {
        read_dataset(text.as_bytes(), schema)
    }

    #[test]
    fn three_rows_with_one_covariate() {
        let d = read("form,score,anchor,gender\nX,10,5,0\nY,12,6,1\n1,8,4,1\n", &DatasetSchema::conventional()).unwrap();
        assert_eq!(d.records.len(), 3);
        assert_eq!(d.covariate_names, vec!["gender"]);
        assert_eq!(d.records[2].form, Form::Y);
        assert_eq!(locequate::types::covariate_arity(&d.records).unwrap(), 1);
    }

    #[test]
    fn missing_score_column() {
        let e = read("form,anchor\nX,1\n", &DatasetSchema::conventional()).unwrap_err();
        assert!(matches!(e, CliError::Schema(c) if c == "score"));
    }

    #[test]
    fn bad_score_reports_data_row() {
        let e = read("form,score\nX,3\nY,abc\n", &DatasetSchema::conventional()).unwrap_err();
        assert!(matches!(e, CliError::Row { row: 2, .. }));
        let e = read("form,score\nX,3\nZ,4\n", &DatasetSchema::conventional()).unwrap_err();
        assert!(matches!(e, CliError::Row { row: 2, .. }));
    }

    #[test]
    fn explicit_schema_must_cover_every_column() {
        let schema = DatasetSchema::parse("form=t\nscore=s\nnumeric=age\n").unwrap();
        let e = read("t,s,age,id\n0,3,20,a\n", &schema).unwrap_err();
        assert!(matches!(e, CliError::Schema(c) if c == "id"));
        let schema = DatasetSchema::parse("form=t\nscore=s\nnumeric=age\nignore=id\n").unwrap();
        let d = read("t,s,age,id\n0,3,20,a\n1,4,30,b\n", &schema).unwrap();
        assert_eq!(d.covariate_names, vec!["age"]);
        assert!(!d.has_anchor);
    }

    #[test]
    fn unknown_schema_key() {
        assert!(matches!(DatasetSchema::parse("form=f\nscores=s\n"), Err(CliError::Config(k)) if k == vec!["scores"]));
    }

    #[test]
    fn round_trip_is_lossless() {
        let schema = DatasetSchema::parse("numeric=verbal\ncategorical=gender\nanchor=anchor\n").unwrap();
        let text = "form,score,anchor,gender,verbal\nX,10,5,0,0.1\nY,12,6,1,-3.25\nY,0,0,2,1e-7\n";
        let d = read(text, &schema).unwrap();
        let mut out = Vec::new();
        write_dataset(&mut out, &d).unwrap();
        let back = read_dataset(out.as_slice(), &schema_for(&d)).unwrap();
        assert_eq!(back, d);
    }
}
