//! Dataset representation, CSV ingestion and the cutoff assignment rule.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};

/// Which side of the cutoff a unit falls on. `Right` is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn of(score: f64, cutoff: f64) -> Side {
        if score >= cutoff {
            Side::Right
        } else {
            Side::Left
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left (control)",
            Side::Right => "right (treated)",
        })
    }
}

/// A predetermined characteristic; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

impl Covariate {
    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RDDataset {
    score: Vec<f64>,
    outcome: Vec<f64>,
    covariates: Vec<Covariate>,
    cutoff: f64,
    unit_id: Option<Vec<String>>,
}

impl RDDataset {
    pub fn new(score: Vec<f64>, outcome: Vec<f64>, cutoff: f64) -> Result<Self> {
        if score.is_empty() {
            return Err(RdError::InvalidData("dataset has no rows".into()));
        }
        if score.len() != outcome.len() {
            return Err(RdError::InvalidData(format!(
                "score has {} rows but outcome has {}",
                score.len(),
                outcome.len()
            )));
        }
        if !cutoff.is_finite() {
            return Err(RdError::InvalidData("cutoff must be finite".into()));
        }
        if let Some(i) = score.iter().position(|x| !x.is_finite()) {
            return Err(RdError::InvalidData(format!(
                "score at row {i} is not finite"
            )));
        }
        if let Some(i) = outcome.iter().position(|x| !x.is_finite()) {
            return Err(RdError::InvalidData(format!(
                "outcome at row {i} is not finite"
            )));
        }
        Ok(RDDataset {
            score,
            outcome,
            covariates: Vec::new(),
            cutoff,
            unit_id: None,
        })
    }

    pub fn with_covariate(
        mut self,
        name: impl Into<String>,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        let name = name.into();
        if values.len() != self.len() {
            return Err(RdError::InvalidData(format!(
                "covariate `{name}` has {} rows, expected {}",
                values.len(),
                self.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(RdError::InvalidData(format!(
                "covariate `{name}` has non-finite values"
            )));
        }
        if self.covariates.iter().any(|c| c.name == name) {
            return Err(RdError::InvalidData(format!(
                "duplicate covariate `{name}`"
            )));
        }
        self.covariates.push(Covariate { name, values });
        Ok(self)
    }

    /// Convenience for fully observed covariates.
    pub fn with_complete_covariate(
        self,
        name: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        self.with_covariate(name, values.into_iter().map(Some).collect())
    }

    pub fn with_unit_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(RdError::InvalidData(
                "unit id column length mismatch".into(),
            ));
        }
        self.unit_id = Some(ids);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.score.len()
    }

    pub fn is_empty(&self) -> bool {
        self.score.is_empty()
    }

    pub fn score(&self) -> &[f64] {
        &self.score
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Option<&Covariate> {
        self.covariates.iter().find(|c| c.name == name)
    }

    pub fn unit_ids(&self) -> Option<&[String]> {
        self.unit_id.as_deref()
    }

    pub fn side(&self, i: usize) -> Side {
        Side::of(self.score[i], self.cutoff)
    }

    /// Row indices on one side of the cutoff, in dataset order.
    pub fn rows_on(&self, side: Side) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.side(i) == side).collect()
    }

    pub fn count_on(&self, side: Side) -> usize {
        self.score
            .iter()
            .filter(|&&x| Side::of(x, self.cutoff) == side)
            .count()
    }

    /// Same rows and covariates with a different outcome vector.
    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<Self> {
        let mut ds = RDDataset::new(self.score.clone(), outcome, self.cutoff)?;
        ds.covariates = self.covariates.clone();
        ds.unit_id = self.unit_id.clone();
        Ok(ds)
    }

    /// Same data analysed at a different cutoff.
    pub fn with_cutoff(&self, cutoff: f64) -> Result<Self> {
        if !cutoff.is_finite() {
            return Err(RdError::InvalidData("cutoff must be finite".into()));
        }
        let mut ds = self.clone();
        ds.cutoff = cutoff;
        Ok(ds)
    }

    /// Restrict to the given rows (in the given order).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let mut ds = RDDataset::new(pick(&self.score), pick(&self.outcome), self.cutoff)?;
        ds.covariates = self
            .covariates
            .iter()
            .map(|c| Covariate {
                name: c.name.clone(),
                values: rows.iter().map(|&i| c.values[i]).collect(),
            })
            .collect();
        ds.unit_id = self
            .unit_id
            .as_ref()
            .map(|ids| rows.iter().map(|&i| ids[i].clone()).collect());
        Ok(ds)
    }

    /// Dataset whose outcome is the named covariate, dropping rows where it
    /// is missing. Returns the dataset and the number of dropped rows.
    pub fn covariate_as_outcome(&self, name: &str) -> Result<(Self, usize)> {
        let cov = self
            .covariate(name)
            .ok_or_else(|| RdError::MissingColumn(name.to_string()))?;
        let rows: Vec<usize> = (0..self.len())
            .filter(|&i| cov.values[i].is_some())
            .collect();
        if rows.is_empty() {
            return Err(RdError::InvalidData(format!(
                "covariate `{name}` is entirely missing"
            )));
        }
        let dropped = self.len() - rows.len();
        let score = rows.iter().map(|&i| self.score[i]).collect();
        let outcome = rows.iter().map(|&i| cov.values[i].unwrap()).collect();
        Ok((RDDataset::new(score, outcome, self.cutoff)?, dropped))
    }

    /// Smallest and largest score.
    pub fn score_range(&self) -> (f64, f64) {
        self.score
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
    }

    /// Largest distance from the cutoff on each side (0 for an empty side).
    pub fn side_extent(&self) -> (f64, f64) {
        let c = self.cutoff;
        self.score.iter().fold((0.0f64, 0.0f64), |(l, r), &x| {
            if x >= c {
                (l, r.max(x - c))
            } else {
                (l.max(c - x), r)
            }
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["score".to_string(), "outcome".to_string()];
        header.extend(self.covariates.iter().map(|c| c.name.clone()));
        if self.unit_id.is_some() {
            header.push("id".into());
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.score[i].to_string(), self.outcome[i].to_string()];
            for c in &self.covariates {
                rec.push(
                    c.values[i]
                        .map(|v| v.to_string())
                        .unwrap_or_else(|| "NA".into()),
                );
            }
            if let Some(ids) = &self.unit_id {
                rec.push(ids[i].clone());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| RdError::Csv(e.into()))?;
        Ok(())
    }
}

/// Column-name mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub score: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub unit_id: Option<String>,
}

impl CsvSchema {
    pub fn new(score: impl Into<String>, outcome: impl Into<String>) -> Self {
        CsvSchema {
            score: score.into(),
            outcome: outcome.into(),
            covariates: Vec::new(),
            unit_id: None,
        }
    }

    pub fn with_covariates<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.covariates = names.into_iter().map(Into::into).collect();
        self
    }
}

fn is_missing_marker(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema, cutoff: f64) -> Result<RDDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| RdError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema, cutoff)
}

/// Parse CSV with a header row. Row indices in errors are 1-based data rows.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema, cutoff: f64) -> Result<RDDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: BTreeMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    let col = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| RdError::MissingColumn(name.to_string()))
    };
    let score_col = col(&schema.score)?;
    let outcome_col = col(&schema.outcome)?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|n| col(n))
        .collect::<Result<Vec<_>>>()?;
    let id_col = schema.unit_id.as_deref().map(col).transpose()?;

    let mut score = Vec::new();
    let mut outcome = Vec::new();
    let mut covs: Vec<Vec<Option<f64>>> = vec![Vec::new(); cov_cols.len()];
    let mut ids = Vec::new();

    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let required = |c: usize, name: &str| -> Result<f64> {
            let raw = cell(c);
            match raw.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(RdError::BadCell {
                    row,
                    column: name.to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        score.push(required(score_col, &schema.score)?);
        outcome.push(required(outcome_col, &schema.outcome)?);
        for (k, &c) in cov_cols.iter().enumerate() {
            let raw = cell(c);
            let v = if is_missing_marker(raw) {
                None
            } else {
                match raw.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => Some(v),
                    _ => {
                        return Err(RdError::BadCell {
                            row,
                            column: schema.covariates[k].clone(),
                            value: raw.to_string(),
                        })
                    }
                }
            };
            covs[k].push(v);
        }
        if let Some(c) = id_col {
            ids.push(cell(c).to_string());
        }
    }

    let mut ds = RDDataset::new(score, outcome, cutoff)?;
    for (name, values) in schema.covariates.iter().zip(covs) {
        ds = ds.with_covariate(name.clone(), values)?;
    }
    if id_col.is_some() {
        ds = ds.with_unit_ids(ids)?;
    }
    Ok(ds)
}

/// Binary treatment indicators, `1` exactly when score >= cutoff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentVector(pub Vec<u8>);

impl TreatmentVector {
    pub fn n_treated(&self) -> usize {
        self.0.iter().filter(|&&d| d == 1).count()
    }
}

pub fn assign_treatment(ds: &RDDataset) -> TreatmentVector {
    TreatmentVector(
        ds.score()
            .iter()
            .map(|&x| u8::from(Side::of(x, ds.cutoff()) == Side::Right))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationWarning {
    FewDistinctScores,
    FewTreated,
    FewControl,
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValidationWarning::FewDistinctScores => {
                "few distinct score values (possible discrete running variable)"
            }
            ValidationWarning::FewTreated => "few observations on treated side",
            ValidationWarning::FewControl => "few observations on control side",
        })
    }
}

pub const MIN_DISTINCT_SCORES: usize = 50;
pub const MIN_PER_SIDE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_treated: usize,
    pub n_control: usize,
    /// `(score value, multiplicity)` for every repeated score, ascending.
    pub mass_points: Vec<(f64, usize)>,
    pub distinct_score_count: usize,
    pub warnings: Vec<ValidationWarning>,
}

pub fn validate(ds: &RDDataset) -> ValidationReport {
    let n_treated = ds.count_on(Side::Right);
    let n_control = ds.len() - n_treated;

    let mut sorted = ds.score().to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut mass_points = Vec::new();
    let mut distinct = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        distinct += 1;
        if j - i >= 2 {
            mass_points.push((sorted[i], j - i));
        }
        i = j;
    }

    let mut warnings = Vec::new();
    if distinct < MIN_DISTINCT_SCORES {
        warnings.push(ValidationWarning::FewDistinctScores);
    }
    if n_treated < MIN_PER_SIDE {
        warnings.push(ValidationWarning::FewTreated);
    }
    if n_control < MIN_PER_SIDE {
        warnings.push(ValidationWarning::FewControl);
    }
    ValidationReport {
        n_treated,
        n_control,
        mass_points,
        distinct_score_count: distinct,
        warnings,
    }
}
