//! The four linear methods compared by the harness, and their tuning.
//!
//! - `ranking_svm`: squared-hinge SVM on delta-thresholded pair differences,
//!   no intercept. Its score `w·x` orders patients by predicted rating.
//! - `linear_regression`: lasso on the rating.
//! - `svr`: squared epsilon-insensitive regression on the rating.
//! - `classifier_svm`: squared-hinge SVM on the binary label.
//!
//! All are L1-regularized. The loss weight `c` is chosen per fit by an inner
//! cross-validation over a log-spaced grid, taking the smallest `c` whose mean
//! criterion is within one standard error of the best.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{apply_norm, fit_norm_stats, Cohort, CohortError, NormStats};
use crate::eval::folds::{kfold, stratified_kfold};
use crate::eval::metrics::roc_auc;
use crate::matrix::dot;
use crate::optim::{self, FitResult, Loss, OptimError, Problem, SolverConfig, ZERO_GUARD};
use crate::pairing::{build_pairs, subsample_pairs, PairSet, PairingError, DEFAULT_PAIR_CAP};
use crate::seed;

/// Default tube half-width for `svr`, in rating units.
pub const DEFAULT_SVR_EPSILON: f64 = 1.0;

const TAG_PAIR_CAP: u64 = 1;
const TAG_INNER_SPLIT: u64 = 2;
const TAG_SOLVER: u64 = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("classifier_svm needs a binary label column")]
    MissingLabel,
    #[error("model has {expected} weights but cohort has {found} features")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameter search: {0}")]
    InvalidSearch(String),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RankingSvm,
    LinearRegression,
    Svr,
    ClassifierSvm,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::RankingSvm,
        Method::LinearRegression,
        Method::Svr,
        Method::ClassifierSvm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::RankingSvm => "ranking_svm",
            Method::LinearRegression => "linear_regression",
            Method::Svr => "svr",
            Method::ClassifierSvm => "classifier_svm",
        }
    }

    pub fn loss(self) -> Loss {
        match self {
            Method::RankingSvm | Method::ClassifierSvm => Loss::SquaredHinge,
            Method::LinearRegression => Loss::Squared,
            Method::Svr => Loss::EpsilonInsensitive,
        }
    }

    pub fn default_criterion(self) -> Criterion {
        match self {
            Method::RankingSvm => Criterion::PairwiseAccuracy,
            Method::LinearRegression | Method::Svr => Criterion::Mse,
            Method::ClassifierSvm => Criterion::Auc,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    PairwiseAccuracy,
    Mse,
    Auc,
}

impl Criterion {
    fn higher_is_better(self) -> bool {
        !matches!(self, Criterion::Mse)
    }
}

/// How the ranking model's inner cross-validation splits its data.
///
/// Splitting pairs puts pairs that share a patient on both sides of the
/// split, which rewards memorizing noise features of those patients and
/// selects large, dense models. Splitting patients is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSplit {
    /// Split the pair set itself.
    Pairs,
    /// Split patients, then pair within each side.
    Patients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSearchSpec {
    /// Candidate values of `c`, strictly increasing.
    pub c_grid: Vec<f64>,
    pub inner_folds: usize,
    /// `None` uses the method's default criterion.
    pub criterion: Option<Criterion>,
    pub inner_split: InnerSplit,
    /// Skip the search and use this `c`.
    pub fixed_c: Option<f64>,
}

/// `2^-10, 2^-9, ..., 2^4`.
pub fn default_c_grid() -> Vec<f64> {
    (-10..=4).map(|k| 2f64.powi(k)).collect()
}

impl Default for HyperSearchSpec {
    fn default() -> Self {
        Self {
            c_grid: default_c_grid(),
            inner_folds: 3,
            criterion: None,
            inner_split: InnerSplit::Patients,
            fixed_c: None,
        }
    }
}

impl HyperSearchSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidSearch(m.into()));
        if self.c_grid.is_empty() {
            return bad("c grid is empty");
        }
        if self.c_grid.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return bad("c grid values must be positive");
        }
        if self.c_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("c grid must be strictly increasing");
        }
        if self.inner_folds < 2 {
            return bad("inner_folds must be at least 2");
        }
        if let Some(c) = self.fixed_c {
            if !(c.is_finite() && c > 0.0) {
                return bad("fixed c must be positive");
            }
        }
        Ok(())
    }

    fn criterion_for(&self, method: Method) -> Criterion {
        self.criterion.unwrap_or(method.default_criterion())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub pair_cap: usize,
    pub svr_epsilon: f64,
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            pair_cap: DEFAULT_PAIR_CAP,
            svr_epsilon: DEFAULT_SVR_EPSILON,
            tol: optim::DEFAULT_TOL,
            max_epochs: optim::DEFAULT_MAX_EPOCHS,
        }
    }
}

impl TrainOptions {
    fn solver(&self, method: Method, c: f64, seed: u64) -> SolverConfig {
        SolverConfig::new(c, method.loss())
            .with_intercept(method != Method::RankingSvm)
            .with_epsilon(if method == Method::Svr { self.svr_epsilon } else { 0.0 })
            .with_tol(self.tol)
            .with_max_epochs(self.max_epochs)
            .with_seed(seed)
    }
}

/// A fitted linear scorer together with the normalization it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub method: Method,
    pub delta_used: Option<f64>,
    /// Selected grid value. For ranking_svm the solver weight on the pair
    /// loss is `c_used` times [`pair_loss_scale`].
    pub c_used: f64,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub norm_stats: NormStats,
    pub converged: bool,
}

impl LinearModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let s = std::fs::read_to_string(path)?;
        let model: LinearModel = serde_json::from_str(&s)?;
        if model.weights.len() != model.norm_stats.dim()
            || model.feature_names.len() != model.weights.len()
        {
            return Err(ModelError::DimensionMismatch {
                expected: model.weights.len(),
                found: model.norm_stats.dim(),
            });
        }
        Ok(model)
    }
}

/// Trains the pairwise ranking model on `rows`: normalize on `rows`, pair at
/// `delta`, tune `c` on the pairs, refit on all pairs. The intercept is 0.
pub fn fit_ranking_svm(
    cohort: &Cohort,
    rows: &[usize],
    delta: f64,
    search: &HyperSearchSpec,
    opts: &TrainOptions,
    seed: u64,
) -> Result<LinearModel, ModelError> {
    search.validate()?;
    let stats = fit_norm_stats(cohort, rows)?;
    let z = apply_norm(cohort, &stats)?;
    let pairs = ranking_pairs(&z, rows, delta, opts, seed)?;
    let c = match search.fixed_c {
        Some(c) => c,
        None => select_c_ranking(&z, rows, &pairs, delta, search, opts, seed)?,
    };
    let problem = Problem::new(&pairs.diffs, &pairs.signs, Loss::SquaredHinge)?;
    let fit = problem.fit(
        &opts.solver(
            Method::RankingSvm,
            c * pair_loss_scale(&pairs),
            seed::derive(seed, &[TAG_SOLVER]),
        ),
        None,
    )?;
    Ok(assemble(Method::RankingSvm, cohort, stats, fit, c, Some(delta)))
}

/// Trains one of the non-ranking methods on `rows`, with an unpenalized
/// intercept.
pub fn fit_baseline(
    cohort: &Cohort,
    rows: &[usize],
    method: Method,
    search: &HyperSearchSpec,
    opts: &TrainOptions,
    seed: u64,
) -> Result<LinearModel, ModelError> {
    if method == Method::RankingSvm {
        return Err(ModelError::InvalidSearch(
            "ranking_svm needs a delta; use fit_ranking_svm".into(),
        ));
    }
    search.validate()?;
    let targets = targets(cohort, method)?;
    let stats = fit_norm_stats(cohort, rows)?;
    let z = apply_norm(cohort, &stats)?;
    let c = match search.fixed_c {
        Some(c) => c,
        None => select_c_rows(&z, &targets, rows, method, search, opts, seed)?,
    };
    let x = z.features().select_rows(rows);
    let y: Vec<f64> = rows.iter().map(|&i| targets[i]).collect();
    let problem = Problem::new(&x, &y, method.loss())?;
    let fit = problem.fit(&opts.solver(method, c, seed::derive(seed, &[TAG_SOLVER])), None)?;
    Ok(assemble(method, cohort, stats, fit, c, None))
}

/// Dispatches to [`fit_ranking_svm`] or [`fit_baseline`].
pub fn fit_method(
    cohort: &Cohort,
    rows: &[usize],
    method: Method,
    delta: f64,
    search: &HyperSearchSpec,
    opts: &TrainOptions,
    seed: u64,
) -> Result<LinearModel, ModelError> {
    match method {
        Method::RankingSvm => fit_ranking_svm(cohort, rows, delta, search, opts, seed),
        _ => fit_baseline(cohort, rows, method, search, opts, seed),
    }
}

/// Runs only the hyperparameter search and returns the chosen `c`.
pub fn select_c(
    cohort: &Cohort,
    rows: &[usize],
    method: Method,
    delta: f64,
    search: &HyperSearchSpec,
    opts: &TrainOptions,
    seed: u64,
) -> Result<f64, ModelError> {
    search.validate()?;
    if let Some(c) = search.fixed_c {
        return Ok(c);
    }
    let stats = fit_norm_stats(cohort, rows)?;
    let z = apply_norm(cohort, &stats)?;
    match method {
        Method::RankingSvm => {
            let pairs = ranking_pairs(&z, rows, delta, opts, seed)?;
            select_c_ranking(&z, rows, &pairs, delta, search, opts, seed)
        }
        _ => {
            let t = targets(cohort, method)?;
            select_c_rows(&z, &t, rows, method, search, opts, seed)
        }
    }
}

/// `w·x + b` for each of `rows`, after applying the model's normalization.
pub fn score(model: &LinearModel, cohort: &Cohort, rows: &[usize]) -> Result<Vec<f64>, ModelError> {
    if model.weights.len() != cohort.m() || model.norm_stats.dim() != cohort.m() {
        return Err(ModelError::DimensionMismatch {
            expected: model.weights.len(),
            found: cohort.m(),
        });
    }
    cohort.check_rows(rows)?;
    let x = cohort.features();
    Ok(rows
        .iter()
        .map(|&i| {
            let z = model.norm_stats.transform_row(x.row(i));
            dot(&z, &model.weights) + model.intercept
        })
        .collect())
}

/// Number of weights with `|w| > 1e-10`; the intercept is not counted.
pub fn nonzero_count(model: &LinearModel) -> usize {
    model.weights.iter().filter(|w| w.abs() > ZERO_GUARD).count()
}

fn assemble(
    method: Method,
    cohort: &Cohort,
    norm_stats: NormStats,
    fit: FitResult,
    c: f64,
    delta_used: Option<f64>,
) -> LinearModel {
    LinearModel {
        method,
        delta_used,
        c_used: c,
        feature_names: cohort.feature_names().to_vec(),
        weights: fit.weights,
        intercept: if method == Method::RankingSvm { 0.0 } else { fit.intercept },
        norm_stats,
        converged: fit.converged,
    }
}

/// Weight applied to the summed pair loss: one over the distinct rows the
/// pairs involve. The pair count grows roughly quadratically with the rows,
/// so with the raw `c` the ranking loss would swamp the penalty and a `c`
/// tuned on an inner fold would not transfer to the larger refit. Dividing
/// by the rows keeps the growth linear, as for the row-level baselines, while
/// a larger `delta` (fewer pairs per patient) still means a lighter loss term.
pub fn pair_loss_scale(pairs: &PairSet) -> f64 {
    let mut rows: Vec<usize> = pairs.index_pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
    rows.sort_unstable();
    rows.dedup();
    1.0 / rows.len() as f64
}

fn ranking_pairs(
    z: &Cohort,
    rows: &[usize],
    delta: f64,
    opts: &TrainOptions,
    seed: u64,
) -> Result<PairSet, ModelError> {
    let pairs = build_pairs(z, rows, delta)?;
    Ok(subsample_pairs(
        &pairs,
        opts.pair_cap,
        seed::derive(seed, &[TAG_PAIR_CAP]),
    ))
}

/// Per-patient regression or classification targets.
fn targets(cohort: &Cohort, method: Method) -> Result<Vec<f64>, ModelError> {
    match method {
        Method::ClassifierSvm => {
            let labels = cohort.binary_label().ok_or(ModelError::MissingLabel)?;
            Ok(labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect())
        }
        _ => Ok(cohort.rating().to_vec()),
    }
}

/// Fits the whole grid in increasing `c`, warm-starting each fit from the
/// previous solution, and returns one fitted point per grid value.
fn fit_path(
    problem: &Problem,
    method: Method,
    grid: &[f64],
    scale: f64,
    opts: &TrainOptions,
    seed: u64,
) -> Result<Vec<FitResult>, ModelError> {
    let mut out: Vec<FitResult> = Vec::with_capacity(grid.len());
    for &c in grid {
        let warm = out.last().map(|r| (r.weights.as_slice(), r.intercept));
        out.push(problem.fit(&opts.solver(method, c * scale, seed), warm)?);
    }
    Ok(out)
}

/// Fraction of pairs whose sign is reproduced by `w·d`; a zero score counts half.
fn pairwise_accuracy(pairs: &PairSet, w: &[f64]) -> f64 {
    let hits: f64 = (0..pairs.len())
        .map(|p| {
            let s = dot(pairs.diffs.row(p), w);
            if s == 0.0 {
                0.5
            } else if s.signum() == pairs.signs[p] {
                1.0
            } else {
                0.0
            }
        })
        .sum();
    hits / pairs.len() as f64
}

fn select_c_ranking(
    z: &Cohort,
    rows: &[usize],
    pairs: &PairSet,
    delta: f64,
    search: &HyperSearchSpec,
    opts: &TrainOptions,
    seed: u64,
) -> Result<f64, ModelError> {
    let grid = &search.c_grid;
    let k = search.inner_folds;
    let split_seed = seed::derive(seed, &[TAG_INNER_SPLIT]);
    let solver_seed = seed::derive(seed, &[TAG_SOLVER]);
    let criterion = search.criterion_for(Method::RankingSvm);
    let mut table: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];

    let mut evaluate = |train: &PairSet, test: &PairSet| -> Result<(), ModelError> {
        let problem = Problem::new(&train.diffs, &train.signs, Loss::SquaredHinge)?;
        let path = fit_path(&problem, Method::RankingSvm, grid, pair_loss_scale(train), opts, solver_seed)?;
        for (col, fit) in table.iter_mut().zip(&path) {
            let v = match criterion {
                Criterion::PairwiseAccuracy => pairwise_accuracy(test, &fit.weights),
                Criterion::Mse => mean_squared_margin_error(test, &fit.weights),
                Criterion::Auc => pair_auc(test, &fit.weights),
            };
            col.push(v);
        }
        Ok(())
    };

    match search.inner_split {
        InnerSplit::Pairs => {
            if grid.len() == 1 || pairs.len() < k {
                return Ok(fallback_c(grid));
            }
            let all: Vec<usize> = (0..pairs.len()).collect();
            for test_idx in kfold(&all, k, split_seed) {
                let train_idx = complement(&all, &test_idx);
                evaluate(&pairs.select(&train_idx), &pairs.select(&test_idx))?;
            }
        }
        InnerSplit::Patients => {
            if grid.len() == 1 || rows.len() < 2 * k {
                return Ok(fallback_c(grid));
            }
            for test_rows in kfold(rows, k, split_seed) {
                let train_rows = complement(rows, &test_rows);
                let (Ok(train), Ok(test)) = (
                    build_pairs(z, &train_rows, delta),
                    build_pairs(z, &test_rows, delta),
                ) else {
                    continue;
                };
                let train = subsample_pairs(&train, opts.pair_cap, seed::derive(seed, &[TAG_PAIR_CAP]));
                evaluate(&train, &test)?;
            }
        }
    }
    Ok(choose_c(grid, &table, criterion.higher_is_better()))
}

fn mean_squared_margin_error(pairs: &PairSet, w: &[f64]) -> f64 {
    let s: f64 = (0..pairs.len())
        .map(|p| (pairs.signs[p] - dot(pairs.diffs.row(p), w)).powi(2))
        .sum();
    s / pairs.len() as f64
}

fn pair_auc(pairs: &PairSet, w: &[f64]) -> f64 {
    // Pair scores against their sign: a pair set is its own two-class problem.
    let scores: Vec<f64> = (0..pairs.len()).map(|p| dot(pairs.diffs.row(p), w)).collect();
    let labels: Vec<u8> = pairs.signs.iter().map(|&s| u8::from(s > 0.0)).collect();
    roc_auc(&scores, &labels).unwrap_or_else(|_| pairwise_accuracy(pairs, w))
}

fn select_c_rows(
    z: &Cohort,
    targets: &[f64],
    rows: &[usize],
    method: Method,
    search: &HyperSearchSpec,
    opts: &TrainOptions,
    seed: u64,
) -> Result<f64, ModelError> {
    let grid = &search.c_grid;
    let k = search.inner_folds;
    if grid.len() == 1 || rows.len() < 2 * k {
        return Ok(fallback_c(grid));
    }
    let criterion = search.criterion_for(method);
    let split_seed = seed::derive(seed, &[TAG_INNER_SPLIT]);
    let solver_seed = seed::derive(seed, &[TAG_SOLVER]);
    let folds = if method == Method::ClassifierSvm {
        let labels: Vec<u8> = rows.iter().map(|&i| u8::from(targets[i] > 0.0)).collect();
        stratified_kfold(rows, &labels, k, split_seed)
    } else {
        kfold(rows, k, split_seed)
    };

    let mut table: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    for test_rows in &folds {
        let train_rows = complement(rows, test_rows);
        let x = z.features().select_rows(&train_rows);
        let y: Vec<f64> = train_rows.iter().map(|&i| targets[i]).collect();
        let problem = Problem::new(&x, &y, method.loss())?;
        let path = fit_path(&problem, method, grid, 1.0, opts, solver_seed)?;

        let test_x = z.features().select_rows(test_rows);
        let test_y: Vec<f64> = test_rows.iter().map(|&i| targets[i]).collect();
        let mut fold_scores = Vec::with_capacity(grid.len());
        for fit in &path {
            let pred: Vec<f64> = (0..test_x.rows())
                .map(|i| dot(test_x.row(i), &fit.weights) + fit.intercept)
                .collect();
            let v = match criterion {
                Criterion::Mse => {
                    pred.iter().zip(&test_y).map(|(p, t)| (p - t).powi(2)).sum::<f64>()
                        / pred.len() as f64
                }
                Criterion::Auc => {
                    let labels: Vec<u8> = test_y.iter().map(|&t| u8::from(t > 0.0)).collect();
                    match roc_auc(&pred, &labels) {
                        Ok(a) => a,
                        Err(_) => break,
                    }
                }
                Criterion::PairwiseAccuracy => concordance(&pred, &test_y),
            };
            fold_scores.push(v);
        }
        // a held-out fold with one class cannot be scored by AUC
        if fold_scores.len() == grid.len() {
            for (col, v) in table.iter_mut().zip(fold_scores) {
                col.push(v);
            }
        }
    }
    if table[0].is_empty() {
        return Ok(fallback_c(grid));
    }
    Ok(choose_c(grid, &table, criterion.higher_is_better()))
}

/// Fraction of target-discordant pairs ordered correctly by `pred`.
fn concordance(pred: &[f64], target: &[f64]) -> f64 {
    let mut hits = 0.0;
    let mut total = 0usize;
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            let t = target[i] - target[j];
            if t == 0.0 {
                continue;
            }
            total += 1;
            let p = pred[i] - pred[j];
            if p == 0.0 {
                hits += 0.5;
            } else if p.signum() == t.signum() {
                hits += 1.0;
            }
        }
    }
    if total == 0 {
        0.5
    } else {
        hits / total as f64
    }
}

/// Used when the data are too small to cross-validate: the weakest
/// regularization on the grid.
fn fallback_c(grid: &[f64]) -> f64 {
    *grid.last().expect("validated non-empty grid")
}

/// One-standard-error rule: among grid values whose mean criterion is within
/// one standard error of the best mean, the smallest `c` (sparsest model).
pub(crate) fn choose_c(grid: &[f64], table: &[Vec<f64>], higher_is_better: bool) -> f64 {
    let stats: Vec<(f64, f64)> = table.iter().map(|v| mean_and_se(v)).collect();
    let better = |a: f64, b: f64| if higher_is_better { a > b } else { a < b };
    let mut best = 0;
    for (i, s) in stats.iter().enumerate() {
        if better(s.0, stats[best].0) {
            best = i;
        }
    }
    let (best_mean, best_se) = stats[best];
    let chosen = stats
        .iter()
        .position(|&(m, _)| {
            if higher_is_better {
                m >= best_mean - best_se
            } else {
                m <= best_mean + best_se
            }
        })
        .unwrap_or(best);
    grid[chosen]
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn complement(all: &[usize], remove: &[usize]) -> Vec<usize> {
    let mut drop = remove.to_vec();
    drop.sort_unstable();
    all.iter()
        .copied()
        .filter(|i| drop.binary_search(i).is_err())
        .collect()
}
