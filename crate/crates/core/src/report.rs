//! Report serialization. Output contains no timestamps and uses a fixed
//! field order, so identical reports give identical bytes.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::cohort::Cohort;
use crate::eval::{EvalReport, OofScores};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("score vector has {got} entries, cohort has {expected}")]
    Length { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (expected json or csv)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Serializes a report to bytes in the given format.
pub fn render(report: &EvalReport, format: Format) -> Result<Vec<u8>, ReportError> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report).map_err(|source| ReportError::Json {
                path: PathBuf::new(),
                source,
            })?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "method",
                "run_index",
                "delta",
                "seed",
                "correlation",
                "spearman",
                "auc",
                "mean_nonzero",
            ])?;
            for r in &report.records {
                w.write_record([
                    r.method.to_string(),
                    r.run_index.to_string(),
                    opt(r.delta),
                    r.seed.to_string(),
                    opt(r.correlation),
                    opt(r.spearman),
                    opt(r.auc),
                    opt(r.mean_nonzero),
                ])?;
            }
            w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))
        }
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    let io = |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.flush().map_err(io)
}

/// Writes the report to `path`: pretty JSON, or CSV with one row per record.
pub fn emit_report(report: &EvalReport, path: impl AsRef<Path>, format: Format) -> Result<(), ReportError> {
    write_bytes(path.as_ref(), &render(report, format)?)
}

/// Reads a JSON report written by [`emit_report`].
pub fn load_report(path: impl AsRef<Path>) -> Result<EvalReport, ReportError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Long-format out-of-fold scores: `id,method,run,delta,score`.
pub fn write_oof_scores(cohort: &Cohort, scores: &[OofScores], path: impl AsRef<Path>) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "method", "run", "delta", "score"])?;
    for s in scores {
        if s.scores.len() != cohort.n() {
            return Err(ReportError::Length {
                expected: cohort.n(),
                got: s.scores.len(),
            });
        }
        for (id, v) in cohort.ids().iter().zip(&s.scores) {
            w.write_record([
                id.clone(),
                s.method.to_string(),
                s.run_index.to_string(),
                opt(s.delta),
                v.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    write_bytes(path.as_ref(), &bytes)
}

/// `id,score` rows for the given cohort rows.
pub fn write_scores<W: Write>(cohort: &Cohort, rows: &[usize], scores: &[f64], out: W) -> Result<(), ReportError> {
    if rows.len() != scores.len() {
        return Err(ReportError::Length {
            expected: rows.len(),
            got: scores.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "score"])?;
    for (&i, v) in rows.iter().zip(scores) {
        w.write_record([cohort.ids()[i].as_str(), &v.to_string()])?;
    }
    w.flush().map_err(|e| ReportError::Csv(e.into()))?;
    Ok(())
}
