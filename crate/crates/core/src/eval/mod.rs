//! Out-of-fold scoring, repeated cross-validation studies and the delta sweep.
//!
//! Every unit of work (one method in one run) derives its seeds from the run
//! seed alone, so executing units in parallel gives the same report as
//! executing them one after another.

pub mod folds;
pub mod metrics;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Cohort;
use crate::models::{
    self, fit_method, nonzero_count, HyperSearchSpec, LinearModel, Method, ModelError, TrainOptions,
};
use crate::pairing::PairingError;
use crate::seed;
use metrics::{pearson, roc_auc, spearman, MetricError};

const TAG_SPLIT: u64 = 11;
const TAG_MODEL: u64 = 12;
const TAG_GLOBAL: u64 = 13;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("fold {fold}: training rows yield no pairs at delta {delta}")]
    EmptyFold { fold: usize, delta: f64 },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error("run {run}, {method}: {source}")]
    Run {
        run: usize,
        method: MethodTag,
        #[source]
        source: Box<EvalError>,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// A fitted method, or the raw rating used directly as a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    RankingSvm,
    LinearRegression,
    Svr,
    ClassifierSvm,
    RawDa,
}

impl MethodTag {
    pub const ALL: [MethodTag; 5] = [
        MethodTag::RankingSvm,
        MethodTag::LinearRegression,
        MethodTag::Svr,
        MethodTag::ClassifierSvm,
        MethodTag::RawDa,
    ];

    pub fn model(self) -> Option<Method> {
        match self {
            MethodTag::RankingSvm => Some(Method::RankingSvm),
            MethodTag::LinearRegression => Some(Method::LinearRegression),
            MethodTag::Svr => Some(Method::Svr),
            MethodTag::ClassifierSvm => Some(Method::ClassifierSvm),
            MethodTag::RawDa => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self.model() {
            Some(m) => m.as_str(),
            None => "raw_da",
        }
    }
}

impl From<Method> for MethodTag {
    fn from(m: Method) -> Self {
        match m {
            Method::RankingSvm => MethodTag::RankingSvm,
            Method::LinearRegression => MethodTag::LinearRegression,
            Method::Svr => MethodTag::Svr,
            Method::ClassifierSvm => MethodTag::ClassifierSvm,
        }
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodTag::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Settings shared by a single-delta experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub methods: Vec<MethodTag>,
    pub delta: f64,
    pub folds: usize,
    pub runs: usize,
    pub base_seed: u64,
    /// Stratify outer folds by the binary label.
    pub stratified: bool,
    /// Tune `c` once per run on the whole cohort instead of inside each fold.
    pub global_tuning: bool,
    pub search: HyperSearchSpec,
    pub options: TrainOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: MethodTag::ALL.to_vec(),
            delta: crate::DEFAULT_DELTA,
            folds: crate::DEFAULT_FOLDS,
            runs: crate::DEFAULT_RUNS,
            base_seed: crate::DEFAULT_BASE_SEED,
            stratified: false,
            global_tuning: false,
            search: HyperSearchSpec::default(),
            options: TrainOptions::default(),
        }
    }
}

/// Settings for a sweep of the ranking model over several deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub deltas: Vec<f64>,
    pub folds: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub stratified: bool,
    pub global_tuning: bool,
    pub search: HyperSearchSpec,
    pub options: TrainOptions,
}

impl SweepConfig {
    fn experiment(&self, delta: f64) -> ExperimentConfig {
        ExperimentConfig {
            methods: vec![MethodTag::RankingSvm],
            delta,
            folds: self.folds,
            runs: self.runs,
            base_seed: self.base_seed,
            stratified: self.stratified,
            global_tuning: self.global_tuning,
            search: self.search.clone(),
            options: self.options.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfigEcho {
    Experiment(ExperimentConfig),
    DeltaSweep(SweepConfig),
}

/// Metrics of one method in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: MethodTag,
    pub run_index: usize,
    /// Pearson correlation of the out-of-fold score with the rating;
    /// `None` when the score is constant.
    pub correlation: Option<f64>,
    pub spearman: Option<f64>,
    /// ROC-AUC against the binary label; `None` without a usable label.
    pub auc: Option<f64>,
    /// Mean nonzero weight count across the run's fold models (`None` for raw_da).
    pub mean_nonzero: Option<f64>,
    pub delta: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; `None` below two values.
    pub std: Option<f64>,
}

impl Summary {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        let count = v.len();
        if count == 0 {
            return Self {
                count,
                mean: None,
                std: None,
            };
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let std = (count > 1).then(|| {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        });
        Self {
            count,
            mean: Some(mean),
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: MethodTag,
    pub delta: Option<f64>,
    pub runs: usize,
    pub correlation: Summary,
    pub spearman: Summary,
    pub auc: Summary,
    pub mean_nonzero: Summary,
}

/// A failed delta in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub delta: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_echo: ConfigEcho,
    pub cohort_fingerprint: String,
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
    pub failures: Vec<Failure>,
}

impl EvalReport {
    /// Per-(method, delta) summaries, in order of first appearance in `records`.
    pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
        let mut keys: Vec<(MethodTag, Option<u64>)> = Vec::new();
        for r in records {
            let key = (r.method, r.delta.map(f64::to_bits));
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(method, dbits)| {
                let group: Vec<&RunRecord> = records
                    .iter()
                    .filter(|r| r.method == method && r.delta.map(f64::to_bits) == dbits)
                    .collect();
                Aggregate {
                    method,
                    delta: dbits.map(f64::from_bits),
                    runs: group.len(),
                    correlation: Summary::of(group.iter().filter_map(|r| r.correlation)),
                    spearman: Summary::of(group.iter().filter_map(|r| r.spearman)),
                    auc: Summary::of(group.iter().filter_map(|r| r.auc)),
                    mean_nonzero: Summary::of(group.iter().filter_map(|r| r.mean_nonzero)),
                }
            })
            .collect()
    }

    pub fn aggregate_for(&self, method: MethodTag, delta: Option<f64>) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && (delta.is_none() || a.delta == delta))
    }
}

/// Out-of-fold scores of one cross-validation pass.
#[derive(Debug, Clone)]
pub struct CvOutput {
    /// One score per cohort row, each from a model that did not train on it.
    pub scores: Vec<f64>,
    /// Fold index that held out each row.
    pub fold_of: Vec<usize>,
    pub models: Vec<LinearModel>,
}

/// Out-of-fold scores for export.
#[derive(Debug, Clone, PartialEq)]
pub struct OofScores {
    pub method: MethodTag,
    pub run_index: usize,
    pub delta: Option<f64>,
    pub scores: Vec<f64>,
}

/// Seeded outer folds over all cohort rows.
pub fn outer_folds(cohort: &Cohort, folds: usize, seed: u64, stratified: bool) -> Vec<Vec<usize>> {
    let rows = cohort.all_rows();
    let split_seed = seed::derive(seed, &[TAG_SPLIT]);
    match (stratified, cohort.binary_label()) {
        (true, Some(labels)) => folds::stratified_kfold(&rows, labels, folds, split_seed),
        _ => folds::kfold(&rows, folds, split_seed),
    }
}

/// Fits `method` on each fold's complement and scores the held-out rows.
#[allow(clippy::too_many_arguments)]
pub fn cross_val_scores(
    cohort: &Cohort,
    method: Method,
    delta: f64,
    search: &HyperSearchSpec,
    options: &TrainOptions,
    folds: usize,
    seed: u64,
    stratified: bool,
) -> Result<CvOutput, EvalError> {
    if folds < 2 {
        return Err(EvalError::InvalidConfig("folds must be at least 2".into()));
    }
    if cohort.n() < folds {
        return Err(EvalError::InvalidConfig(format!(
            "{} rows cannot fill {} folds",
            cohort.n(),
            folds
        )));
    }
    let n = cohort.n();
    let mut scores = vec![f64::NAN; n];
    let mut fold_of = vec![usize::MAX; n];
    let mut models_out = Vec::with_capacity(folds);
    for (f, test) in outer_folds(cohort, folds, seed, stratified).iter().enumerate() {
        let train: Vec<usize> = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
        let model_seed = seed::derive(seed, &[TAG_MODEL, f as u64]);
        let model = fit_method(cohort, &train, method, delta, search, options, model_seed)
            .map_err(|e| match e {
                ModelError::Pairing(PairingError::EmptyPairSet { delta }) => {
                    EvalError::EmptyFold { fold: f, delta }
                }
                other => EvalError::Fold {
                    fold: f,
                    source: other,
                },
            })?;
        let s = models::score(&model, cohort, test)?;
        for (&i, v) in test.iter().zip(s) {
            scores[i] = v;
            fold_of[i] = f;
        }
        models_out.push(model);
    }
    Ok(CvOutput {
        scores,
        fold_of,
        models: models_out,
    })
}

fn validate(cohort: &Cohort, cfg: &ExperimentConfig) -> Result<(), EvalError> {
    let bad = |m: String| Err(EvalError::InvalidConfig(m));
    if cfg.runs == 0 {
        return bad("runs must be at least 1".into());
    }
    if cfg.methods.is_empty() {
        return bad("no methods selected".into());
    }
    if cfg.folds < 2 || cohort.n() < cfg.folds {
        return bad(format!("cannot split {} rows into {} folds", cohort.n(), cfg.folds));
    }
    if !(cfg.delta.is_finite() && cfg.delta >= 0.0) {
        return bad(format!("delta must be non-negative, got {}", cfg.delta));
    }
    if cfg.methods.contains(&MethodTag::ClassifierSvm) && cohort.binary_label().is_none() {
        return bad("classifier_svm requires a binary label column".into());
    }
    cfg.search.validate()?;
    Ok(())
}

/// Methods actually evaluated: the configured list, with raw_da appended
/// whenever the cohort has labels.
fn effective_methods(cohort: &Cohort, cfg: &ExperimentConfig) -> Vec<MethodTag> {
    let mut out: Vec<MethodTag> = Vec::new();
    for &m in &cfg.methods {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if cohort.binary_label().is_some() && !out.contains(&MethodTag::RawDa) {
        out.push(MethodTag::RawDa);
    }
    out
}

fn run_unit(
    cohort: &Cohort,
    cfg: &ExperimentConfig,
    run: usize,
    tag: MethodTag,
) -> Result<(RunRecord, Vec<f64>), EvalError> {
    let run_seed = cfg.base_seed.wrapping_add(run as u64);
    let rating = cohort.rating();
    let label_auc = |s: &[f64]| cohort.binary_label().and_then(|l| roc_auc(s, l).ok());
    let (scores, mean_nonzero) = match tag.model() {
        None => (rating.to_vec(), None),
        Some(method) => {
            let mut search = cfg.search.clone();
            if cfg.global_tuning && search.fixed_c.is_none() {
                let c = models::select_c(
                    cohort,
                    &cohort.all_rows(),
                    method,
                    cfg.delta,
                    &search,
                    &cfg.options,
                    seed::derive(run_seed, &[TAG_GLOBAL]),
                )?;
                search.fixed_c = Some(c);
            }
            let cv = cross_val_scores(
                cohort,
                method,
                cfg.delta,
                &search,
                &cfg.options,
                cfg.folds,
                run_seed,
                cfg.stratified,
            )?;
            let nz = cv.models.iter().map(nonzero_count).sum::<usize>() as f64
                / cv.models.len() as f64;
            (cv.scores, Some(nz))
        }
    };
    let record = RunRecord {
        method: tag,
        run_index: run,
        correlation: pearson(&scores, rating).ok(),
        spearman: spearman(&scores, rating).ok(),
        auc: label_auc(&scores),
        mean_nonzero,
        delta: Some(cfg.delta),
        seed: run_seed,
    };
    Ok((record, scores))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, EvalError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))
}

fn experiment_records(
    cohort: &Cohort,
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<(Vec<RunRecord>, Vec<OofScores>), EvalError> {
    validate(cohort, cfg)?;
    let methods = effective_methods(cohort, cfg);
    let units: Vec<(usize, MethodTag)> = (0..cfg.runs)
        .flat_map(|r| methods.iter().map(move |&m| (r, m)))
        .collect();
    let results: Vec<Result<(RunRecord, Vec<f64>), EvalError>> = pool(jobs)?.install(|| {
        units
            .par_iter()
            .map(|&(run, tag)| {
                run_unit(cohort, cfg, run, tag).map_err(|e| EvalError::Run {
                    run,
                    method: tag,
                    source: Box::new(e),
                })
            })
            .collect()
    });
    let mut records = Vec::with_capacity(results.len());
    let mut oof = Vec::with_capacity(results.len());
    for r in results {
        let (rec, scores) = r?;
        oof.push(OofScores {
            method: rec.method,
            run_index: rec.run_index,
            delta: rec.delta,
            scores,
        });
        records.push(rec);
    }
    Ok((records, oof))
}

/// Repeated cross-validation: run `r` uses seed `base_seed + r` for its
/// folds and models, shared by every method.
pub fn run_experiment(cohort: &Cohort, cfg: &ExperimentConfig, jobs: usize) -> Result<EvalReport, EvalError> {
    run_experiment_with_scores(cohort, cfg, jobs).map(|(r, _)| r)
}

/// [`run_experiment`], also returning the out-of-fold scores of every unit.
pub fn run_experiment_with_scores(
    cohort: &Cohort,
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<(EvalReport, Vec<OofScores>), EvalError> {
    let (records, oof) = experiment_records(cohort, cfg, jobs)?;
    let report = EvalReport {
        config_echo: ConfigEcho::Experiment(cfg.clone()),
        cohort_fingerprint: cohort.fingerprint(),
        aggregates: EvalReport::aggregate(&records),
        records,
        failures: Vec::new(),
    };
    Ok((report, oof))
}

/// Runs the ranking model at each delta with the same per-run seeds. A delta
/// that fails is recorded in `failures` and the sweep moves on.
pub fn sweep_delta(cohort: &Cohort, cfg: &SweepConfig, jobs: usize) -> Result<EvalReport, EvalError> {
    sweep_delta_with_scores(cohort, cfg, jobs).map(|(r, _)| r)
}

pub fn sweep_delta_with_scores(
    cohort: &Cohort,
    cfg: &SweepConfig,
    jobs: usize,
) -> Result<(EvalReport, Vec<OofScores>), EvalError> {
    if cfg.deltas.is_empty() {
        return Err(EvalError::InvalidConfig("no deltas given".into()));
    }
    let mut records = Vec::new();
    let mut oof = Vec::new();
    let mut failures = Vec::new();
    for &delta in &cfg.deltas {
        let exp = cfg.experiment(delta);
        match experiment_records(cohort, &exp, jobs) {
            Ok((r, s)) => {
                records.extend(r);
                oof.extend(s);
            }
            Err(e @ EvalError::InvalidConfig(_)) => return Err(e),
            Err(e) => failures.push(Failure {
                delta: Some(delta),
                message: e.to_string(),
            }),
        }
    }
    let report = EvalReport {
        config_echo: ConfigEcho::DeltaSweep(cfg.clone()),
        cohort_fingerprint: cohort.fingerprint(),
        aggregates: EvalReport::aggregate(&records),
        records,
        failures,
    };
    Ok((report, oof))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, GeneratorConfig};

    fn small_cohort(seed: u64) -> Cohort {
        generate(&GeneratorConfig {
            n: 60,
            m: 8,
            k_informative: 3,
            correlated_extras: 1,
            seed,
            ..Default::default()
        })
        .unwrap()
        .cohort
    }

    fn quick_search() -> HyperSearchSpec {
        HyperSearchSpec {
            c_grid: vec![0.01, 0.1, 1.0],
            ..Default::default()
        }
    }

    #[test]
    fn cv_covers_every_row_once() {
        let c = small_cohort(1);
        let cv = cross_val_scores(
            &c,
            Method::RankingSvm,
            15.0,
            &quick_search(),
            &TrainOptions::default(),
            5,
            3,
            false,
        )
        .unwrap();
        assert_eq!(cv.models.len(), 5);
        assert!(cv.scores.iter().all(|s| s.is_finite()));
        let mut counts = [0usize; 5];
        for &f in &cv.fold_of {
            counts[f] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 60);
        assert!(counts.iter().all(|&k| k == 12));
    }

    #[test]
    fn cv_is_deterministic() {
        let c = small_cohort(2);
        let run = || {
            cross_val_scores(
                &c,
                Method::Svr,
                15.0,
                &quick_search(),
                &TrainOptions::default(),
                5,
                9,
                true,
            )
            .unwrap()
            .scores
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_fold_is_reported() {
        let c = small_cohort(3);
        let err = cross_val_scores(
            &c,
            Method::RankingSvm,
            100.5,
            &quick_search(),
            &TrainOptions::default(),
            5,
            1,
            false,
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::EmptyFold { fold: 0, .. }), "{err}");
    }

    #[test]
    fn one_run_one_method_gives_two_records() {
        let c = small_cohort(4);
        let cfg = ExperimentConfig {
            methods: vec![MethodTag::RankingSvm],
            runs: 1,
            search: quick_search(),
            ..Default::default()
        };
        let rep = run_experiment(&c, &cfg, 1).unwrap();
        assert_eq!(rep.records.len(), 2);
        assert_eq!(rep.records[1].method, MethodTag::RawDa);
        let raw = &rep.records[1];
        assert_eq!(raw.correlation, Some(1.0));
        assert_eq!(
            raw.auc,
            Some(roc_auc(c.rating(), c.binary_label().unwrap()).unwrap())
        );
        assert_eq!(raw.mean_nonzero, None);
        assert_eq!(rep.aggregates, EvalReport::aggregate(&rep.records));
    }

    #[test]
    fn single_delta_sweep_matches_experiment() {
        let c = small_cohort(5);
        let sweep = SweepConfig {
            deltas: vec![15.0],
            folds: 3,
            runs: 2,
            base_seed: 8,
            stratified: false,
            global_tuning: false,
            search: quick_search(),
            options: TrainOptions::default(),
        };
        let a = sweep_delta(&c, &sweep, 1).unwrap();
        let b = run_experiment(&c, &sweep.experiment(15.0), 1).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.aggregates, b.aggregates);
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let c = small_cohort(6);
        let sweep = SweepConfig {
            deltas: vec![10.0, 100.5],
            folds: 3,
            runs: 1,
            base_seed: 1,
            stratified: false,
            global_tuning: false,
            search: quick_search(),
            options: TrainOptions::default(),
        };
        let rep = sweep_delta(&c, &sweep, 1).unwrap();
        assert_eq!(rep.failures.len(), 1);
        assert_eq!(rep.failures[0].delta, Some(100.5));
        assert!(rep.records.iter().all(|r| r.delta == Some(10.0)));
    }

    #[test]
    fn jobs_do_not_change_output() {
        let c = small_cohort(7);
        let cfg = ExperimentConfig {
            methods: vec![MethodTag::RankingSvm, MethodTag::Svr],
            runs: 3,
            folds: 3,
            search: quick_search(),
            global_tuning: true,
            ..Default::default()
        };
        assert_eq!(
            run_experiment(&c, &cfg, 1).unwrap(),
            run_experiment(&c, &cfg, 4).unwrap()
        );
    }
}
