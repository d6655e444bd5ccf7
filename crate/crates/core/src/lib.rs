//! Align a subjective continuous rating with objective feature measurements.
//!
//! The central model is a pairwise ranking SVM trained only on patient pairs
//! whose ratings differ by at least `delta`. Its weight vector is L1-regularized,
//! so the resulting score `w·x` is sparse and keeps an approximate order of the
//! rating. Around it the crate provides:
//!
//! - [`cohort`]: CSV ingestion, validation and per-fold z-score normalization
//! - [`pairing`]: the delta-thresholded pairwise difference set
//! - [`optim`]: coordinate-descent solvers for L1-regularized linear losses
//! - [`models`]: ranking SVM, lasso, linear SVR and classifier SVM with inner-CV tuning
//! - [`eval`]: metrics and the repeated cross-validation harness
//! - [`synthgen`]: synthetic cohorts with a planted latent severity
//! - [`report`]: deterministic JSON/CSV serialization of evaluation reports

pub mod cohort;
pub mod eval;
pub mod matrix;
pub mod models;
pub mod optim;
pub mod pairing;
pub mod report;
mod seed;
pub mod synthgen;

pub use cohort::{Cohort, ColumnRoles, NormStats};
pub use eval::{EvalReport, ExperimentConfig, MethodTag, RunRecord};
pub use matrix::Matrix;
pub use models::{HyperSearchSpec, LinearModel, Method, TrainOptions};
pub use optim::{FitResult, Loss, SolverConfig};
pub use pairing::PairSet;
pub use synthgen::{GeneratorConfig, SynthCohort};

/// Default rating-difference threshold, in rating (VAS) units.
pub const DEFAULT_DELTA: f64 = 15.0;
/// Default number of outer cross-validation folds.
pub const DEFAULT_FOLDS: usize = 5;
/// Default number of repeated cross-validation runs.
pub const DEFAULT_RUNS: usize = 100;
/// Default base seed for experiments.
pub const DEFAULT_BASE_SEED: u64 = 42;
