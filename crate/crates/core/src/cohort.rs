//! Cohort representation, CSV ingestion and leakage-free normalization.
//!
//! A [`Cohort`] holds one row per patient: an opaque identifier, a feature
//! vector, a rating on the 0–100 scale and optionally a binary label. It is
//! validated once on construction and never mutated afterwards.
//!
//! Normalization is always fit on an explicit row subset ([`fit_norm_stats`])
//! and then applied to every row ([`apply_norm`]), so held-out rows never
//! influence the statistics.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::matrix::Matrix;

/// Inclusive bounds of the rating scale.
pub const RATING_MIN: f64 = 0.0;
pub const RATING_MAX: f64 = 100.0;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("column `{0}` is assigned more than one role")]
    ConflictingRoles(String),
    #[error("duplicate column name `{0}` in header")]
    DuplicateColumn(String),
    #[error("line {line}: column `{column}` value `{value}` is not a finite number")]
    NonNumeric {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: rating {value} outside [0, 100]")]
    RatingOutOfRange { line: u64, value: f64 },
    #[error("line {line}: label `{value}` is not 0 or 1")]
    InvalidLabel { line: u64, value: String },
    #[error("line {line}: duplicate id `{id}` (first seen on line {first_line})")]
    DuplicateId { line: u64, first_line: u64, id: String },
    #[error("row {row}: rating {value} outside [0, 100]")]
    RatingInvalid { row: usize, value: f64 },
    #[error("row {row}: label {value} is not 0 or 1")]
    LabelInvalid { row: usize, value: u8 },
    #[error("duplicate id `{0}`")]
    IdNotUnique(String),
    #[error("row {row}: non-finite feature value")]
    FeatureNotFinite { row: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cohort has no rows")]
    Empty,
    #[error("row subset is empty")]
    EmptySubset,
    #[error("row index {index} out of range for cohort of {n} rows")]
    RowOutOfRange { index: usize, n: usize },
    #[error("normalization statistics have dimension {found}, cohort has {expected} features")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Validated dataset: identifiers, features, rating and optional binary label.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    ids: Vec<String>,
    feature_names: Vec<String>,
    features: Matrix,
    rating: Vec<f64>,
    binary_label: Option<Vec<u8>>,
}

impl Cohort {
    pub fn new(
        ids: Vec<String>,
        feature_names: Vec<String>,
        features: Matrix,
        rating: Vec<f64>,
        binary_label: Option<Vec<u8>>,
    ) -> Result<Self, CohortError> {
        let n = ids.len();
        if n == 0 {
            return Err(CohortError::Empty);
        }
        if features.rows() != n || rating.len() != n {
            return Err(CohortError::Shape(format!(
                "{} ids, {} feature rows, {} ratings",
                n,
                features.rows(),
                rating.len()
            )));
        }
        if features.cols() != feature_names.len() {
            return Err(CohortError::Shape(format!(
                "{} feature columns but {} feature names",
                features.cols(),
                feature_names.len()
            )));
        }
        if let Some(labels) = &binary_label {
            if labels.len() != n {
                return Err(CohortError::Shape(format!(
                    "{} ids but {} labels",
                    n,
                    labels.len()
                )));
            }
            if let Some((row, &value)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
                return Err(CohortError::LabelInvalid { row, value });
            }
        }
        if let Some((row, &value)) = rating
            .iter()
            .enumerate()
            .find(|(_, r)| !(RATING_MIN..=RATING_MAX).contains(*r))
        {
            return Err(CohortError::RatingInvalid { row, value });
        }
        for row in 0..n {
            if features.row(row).iter().any(|v| !v.is_finite()) {
                return Err(CohortError::FeatureNotFinite { row });
            }
        }
        let mut seen = HashMap::with_capacity(n);
        for id in &ids {
            if seen.insert(id.as_str(), ()).is_some() {
                return Err(CohortError::IdNotUnique(id.clone()));
            }
        }
        Ok(Self {
            ids,
            feature_names,
            features,
            rating,
            binary_label,
        })
    }

    /// Number of patients.
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Number of features.
    pub fn m(&self) -> usize {
        self.feature_names.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn rating(&self) -> &[f64] {
        &self.rating
    }

    pub fn binary_label(&self) -> Option<&[u8]> {
        self.binary_label.as_deref()
    }

    /// All row indices `0..n`.
    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n()).collect()
    }

    /// Same cohort with the feature matrix replaced.
    fn with_features(&self, features: Matrix) -> Self {
        Self {
            features,
            ..self.clone()
        }
    }

    pub(crate) fn check_rows(&self, rows: &[usize]) -> Result<(), CohortError> {
        match rows.iter().find(|&&i| i >= self.n()) {
            Some(&index) => Err(CohortError::RowOutOfRange { index, n: self.n() }),
            None => Ok(()),
        }
    }

    /// SHA-256 over a canonical encoding of the full cohort content.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let put_str = |h: &mut Sha256, s: &str| {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        };
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.m() as u64).to_le_bytes());
        for name in &self.feature_names {
            put_str(&mut h, name);
        }
        for i in 0..self.n() {
            put_str(&mut h, &self.ids[i]);
            for v in self.features.row(i) {
                h.update(v.to_bits().to_le_bytes());
            }
            h.update(self.rating[i].to_bits().to_le_bytes());
            match &self.binary_label {
                Some(l) => h.update([l[i]]),
                None => h.update([0xff]),
            }
        }
        hex::encode(h.finalize().as_slice())
    }
}

/// Which CSV columns carry the identifier, rating and label; all other
/// columns are features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub id: String,
    pub rating: String,
    /// Label column name. When the named column is absent from the header
    /// the cohort is loaded without labels.
    pub label: Option<String>,
}

impl Default for ColumnRoles {
    fn default() -> Self {
        Self {
            id: "id".into(),
            rating: "da".into(),
            label: Some("label".into()),
        }
    }
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a cohort from a headed, comma-separated UTF-8 file.
pub fn load_cohort(path: impl AsRef<Path>, roles: &ColumnRoles) -> Result<Cohort, CohortError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CohortError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_cohort(BufReader::new(file), roles)
}

/// Reads a cohort from any CSV byte stream.
pub fn read_cohort<R: std::io::Read>(reader: R, roles: &ColumnRoles) -> Result<Cohort, CohortError> {
    if roles.id == roles.rating {
        return Err(CohortError::ConflictingRoles(roles.id.clone()));
    }
    if let Some(l) = &roles.label {
        if *l == roles.id || *l == roles.rating {
            return Err(CohortError::ConflictingRoles(l.clone()));
        }
    }

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    {
        let mut seen = HashMap::new();
        for h in &header {
            if seen.insert(h.as_str(), ()).is_some() {
                return Err(CohortError::DuplicateColumn(h.clone()));
            }
        }
    }
    let find = |name: &str| header.iter().position(|h| h == name);
    let id_col = find(&roles.id).ok_or_else(|| CohortError::MissingColumn(roles.id.clone()))?;
    let rating_col =
        find(&roles.rating).ok_or_else(|| CohortError::MissingColumn(roles.rating.clone()))?;
    let label_col = roles.label.as_deref().and_then(find);
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != id_col && c != rating_col && Some(c) != label_col)
        .collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| header[c].clone()).collect();

    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut rating = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    let mut first_line: HashMap<String, u64> = HashMap::new();

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());

        let id = record[id_col].to_owned();
        if let Some(&first) = first_line.get(&id) {
            return Err(CohortError::DuplicateId {
                line,
                first_line: first,
                id,
            });
        }
        first_line.insert(id.clone(), line);

        let raw = &record[rating_col];
        let r = parse_finite(raw).ok_or_else(|| CohortError::NonNumeric {
            line,
            column: roles.rating.clone(),
            value: raw.to_owned(),
        })?;
        if !(RATING_MIN..=RATING_MAX).contains(&r) {
            return Err(CohortError::RatingOutOfRange { line, value: r });
        }

        if let (Some(c), Some(out)) = (label_col, labels.as_mut()) {
            let raw = &record[c];
            let label = match parse_finite(raw) {
                Some(0.0) => 0u8,
                Some(1.0) => 1u8,
                _ => {
                    return Err(CohortError::InvalidLabel {
                        line,
                        value: raw.to_owned(),
                    })
                }
            };
            out.push(label);
        }

        for (&c, name) in feature_cols.iter().zip(&feature_names) {
            let raw = &record[c];
            let v = parse_finite(raw).ok_or_else(|| CohortError::NonNumeric {
                line,
                column: name.clone(),
                value: raw.to_owned(),
            })?;
            data.push(v);
        }
        ids.push(id);
        rating.push(r);
    }

    let n = ids.len();
    let features = Matrix::from_vec(n, feature_names.len(), data);
    Cohort::new(ids, feature_names, features, rating, labels)
}

/// Writes the cohort as CSV with columns `id`, features..., `da`, and `label`
/// when labels are present. Values are written in shortest round-trip form.
pub fn write_cohort_csv(cohort: &Cohort, path: impl AsRef<Path>) -> Result<(), CohortError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| CohortError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = BufWriter::new(file);
    write_cohort_to(cohort, &mut out)?;
    out.flush().map_err(|source| CohortError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_cohort_to<W: Write>(cohort: &Cohort, out: W) -> Result<(), CohortError> {
    let defaults = ColumnRoles::default();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![defaults.id.clone()];
    header.extend(cohort.feature_names.iter().cloned());
    header.push(defaults.rating.clone());
    if cohort.binary_label.is_some() {
        header.push(defaults.label.clone().unwrap_or_default());
    }
    w.write_record(&header)?;
    for i in 0..cohort.n() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(cohort.ids[i].clone());
        rec.extend(cohort.features.row(i).iter().map(|v| v.to_string()));
        rec.push(cohort.rating[i].to_string());
        if let Some(l) = &cohort.binary_label {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CohortError::Csv(e.into()))?;
    Ok(())
}

/// Per-feature z-score statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns with zero spread over the fitting rows. They map to 0.
    pub constant: Vec<bool>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Stats that leave data unchanged.
    pub fn identity(m: usize) -> Self {
        Self {
            means: vec![0.0; m],
            stds: vec![1.0; m],
            constant: vec![false; m],
        }
    }

    #[inline]
    pub fn transform_value(&self, j: usize, x: f64) -> f64 {
        if self.constant[j] {
            0.0
        } else {
            (x - self.means[j]) / self.stds[j]
        }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &x)| self.transform_value(j, x))
            .collect()
    }
}

/// Fits means and population standard deviations over `rows` only.
pub fn fit_norm_stats(cohort: &Cohort, rows: &[usize]) -> Result<NormStats, CohortError> {
    if rows.is_empty() {
        return Err(CohortError::EmptySubset);
    }
    cohort.check_rows(rows)?;
    let m = cohort.m();
    let x = cohort.features();
    let count = rows.len() as f64;

    let mut means = vec![0.0; m];
    for &i in rows {
        for (mean, v) in means.iter_mut().zip(x.row(i)) {
            *mean += v;
        }
    }
    means.iter_mut().for_each(|v| *v /= count);

    let mut var = vec![0.0; m];
    for &i in rows {
        for ((acc, v), mean) in var.iter_mut().zip(x.row(i)).zip(&means) {
            let d = v - mean;
            *acc += d * d;
        }
    }
    let stds: Vec<f64> = var.iter().map(|v| (v / count).sqrt()).collect();
    let constant = stds
        .iter()
        .zip(&means)
        .map(|(&s, &mu)| s <= 1e-12 * mu.abs().max(1.0))
        .collect();
    Ok(NormStats {
        means,
        stds,
        constant,
    })
}

/// Applies `stats` to every row. Rating and label are carried over untouched.
pub fn apply_norm(cohort: &Cohort, stats: &NormStats) -> Result<Cohort, CohortError> {
    if stats.dim() != cohort.m() {
        return Err(CohortError::DimensionMismatch {
            expected: cohort.m(),
            found: stats.dim(),
        });
    }
    let mut z = cohort.features().clone();
    for i in 0..z.rows() {
        for (j, v) in z.row_mut(i).iter_mut().enumerate() {
            *v = stats.transform_value(j, *v);
        }
    }
    Ok(cohort.with_features(z))
}
