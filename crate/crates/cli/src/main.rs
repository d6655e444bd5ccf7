//! `rankalign` command-line tool.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or model errors.

use std::error::Error;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rankalign::cohort::{load_cohort, Cohort, ColumnRoles};
use rankalign::eval::{run_experiment_with_scores, sweep_delta_with_scores, ExperimentConfig, MethodTag, SweepConfig};
use rankalign::models::{self, default_c_grid, fit_method, HyperSearchSpec, InnerSplit, LinearModel, Method, TrainOptions};
use rankalign::pairing::DEFAULT_PAIR_CAP;
use rankalign::report::{emit_report, write_oof_scores, write_scores, Format};
use rankalign::synthgen::{generate, write_cohort, GeneratorConfig};
use rankalign::{DEFAULT_BASE_SEED, DEFAULT_DELTA, DEFAULT_FOLDS, DEFAULT_RUNS};

#[derive(Parser, Debug)]
#[command(name = "rankalign", version, about = "Sparse ranking scores aligned with a noisy subjective rating")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic cohort with a hidden severity.
    Generate(GenerateArgs),
    /// Fit one model on a whole cohort and save it as JSON.
    Fit(FitArgs),
    /// Score a cohort with a saved model.
    Score(ScoreArgs),
    /// Repeated cross-validation comparison of the methods.
    Evaluate(EvaluateArgs),
    /// Ranking model stability over several deltas.
    SweepDelta(SweepArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, default_value_t = 391)]
    n: usize,
    #[arg(long, default_value_t = 30)]
    m: usize,
    /// Number of informative features.
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    correlated_extras: usize,
    /// Rating noise standard deviation, in rating units.
    #[arg(long, default_value_t = 10.0)]
    rating_noise: f64,
    #[arg(long, default_value_t = 0.5)]
    feature_noise: f64,
    #[arg(long, default_value_t = 0.35)]
    prevalence: f64,
    #[arg(long, default_value_t = 0.05)]
    label_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write `<stem>.truth.json` with the latent severity and support.
    #[arg(long)]
    sidecar: bool,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ColumnArgs {
    #[arg(long, default_value = "id")]
    id_col: String,
    #[arg(long, default_value = "da")]
    rating_col: String,
    #[arg(long, default_value = "label")]
    label_col: String,
    /// Ignore any label column.
    #[arg(long)]
    no_label: bool,
}

impl ColumnArgs {
    fn roles(&self) -> ColumnRoles {
        ColumnRoles {
            id: self.id_col.clone(),
            rating: self.rating_col.clone(),
            label: (!self.no_label).then(|| self.label_col.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Pairs,
    Patients,
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// Comma-separated, strictly increasing candidate values of c
    /// [default: 2^-10 ... 2^4].
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    /// Skip the search and use this c.
    #[arg(long)]
    fixed_c: Option<f64>,
    #[arg(long, default_value_t = 3)]
    inner_folds: usize,
    /// How the ranking model's inner CV splits its data.
    #[arg(long, value_enum, default_value_t = SplitArg::Patients)]
    inner_split: SplitArg,
    /// Maximum pairs per ranking fit (uniform subsample above it).
    #[arg(long, default_value_t = DEFAULT_PAIR_CAP)]
    pair_cap: usize,
    #[arg(long, default_value_t = models::DEFAULT_SVR_EPSILON)]
    svr_epsilon: f64,
}

impl SearchArgs {
    fn spec(&self) -> HyperSearchSpec {
        HyperSearchSpec {
            c_grid: self.c_grid.clone().unwrap_or_else(default_c_grid),
            inner_folds: self.inner_folds,
            criterion: None,
            inner_split: match self.inner_split {
                SplitArg::Pairs => InnerSplit::Pairs,
                SplitArg::Patients => InnerSplit::Patients,
            },
            fixed_c: self.fixed_c,
        }
    }

    fn options(&self) -> TrainOptions {
        TrainOptions {
            pair_cap: self.pair_cap,
            svr_epsilon: self.svr_epsilon,
            ..TrainOptions::default()
        }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, default_value = "ranking_svm", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_BASE_SEED)]
    seed: u64,
    #[command(flatten)]
    columns: ColumnArgs,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, short)]
    input: PathBuf,
    /// CSV destination; standard output when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Args, Debug)]
struct ProtocolArgs {
    #[arg(long, default_value_t = DEFAULT_FOLDS as u64, value_parser = clap::value_parser!(u64).range(2..))]
    folds: u64,
    #[arg(long, default_value_t = DEFAULT_RUNS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    /// Base seed; run r uses seed + r.
    #[arg(long, default_value_t = DEFAULT_BASE_SEED)]
    seed: u64,
    /// Stratify outer folds by the binary label.
    #[arg(long)]
    stratified: bool,
    /// Tune c once per run on the whole cohort instead of inside each fold.
    #[arg(long)]
    global_tuning: bool,
    /// Worker threads [default: available cores]. Output does not depend on it.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Report format [default: from the output extension, else json].
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
    /// Also write per-patient out-of-fold scores as CSV.
    #[arg(long)]
    scores_output: Option<PathBuf>,
}

impl ProtocolArgs {
    fn jobs(&self) -> usize {
        self.jobs
            .map(|j| j as usize)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    fn format(&self, output: &Path) -> Format {
        self.format.unwrap_or_else(|| match output.extension().and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            _ => Format::Json,
        })
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Comma-separated methods; raw_da is added whenever labels exist.
    #[arg(long, value_delimiter = ',', value_parser = parse_method_tag,
          default_value = "ranking_svm,linear_regression,svr,classifier_svm")]
    methods: Vec<MethodTag>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[command(flatten)]
    columns: ColumnArgs,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    deltas: Vec<f64>,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[command(flatten)]
    columns: ColumnArgs,
    #[command(flatten)]
    search: SearchArgs,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_method_tag(s: &str) -> Result<MethodTag, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

type AnyError = Box<dyn Error>;

/// Failure of a subcommand, with the exit code it maps to.
enum Failure {
    Usage(String),
    Data(AnyError),
}

impl<E: Error + 'static> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(Box::new(e))
    }
}

fn context<E: Error + 'static>(what: impl FnOnce() -> String) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Data(format!("{}: {}", what(), chain(&e)).into())
}

fn chain(e: &dyn Error) -> String {
    let mut s = e.to_string();
    let mut cur = e.source();
    while let Some(c) = cur {
        let msg = c.to_string();
        if !s.contains(&msg) {
            s.push_str(": ");
            s.push_str(&msg);
        }
        cur = c.source();
    }
    s
}

fn load(path: &Path, columns: &ColumnArgs) -> Result<Cohort, Failure> {
    load_cohort(path, &columns.roles()).map_err(context(|| "cannot load cohort".into()))
}

fn check_delta(delta: f64) -> Result<(), Failure> {
    if delta.is_finite() && delta >= 0.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("delta must be a non-negative number, got {delta}")))
    }
}

fn check_search(search: &SearchArgs) -> Result<(), Failure> {
    search.spec().validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if search.pair_cap == 0 {
        return Err(Failure::Usage("--pair-cap must be at least 1".into()));
    }
    if !(search.svr_epsilon.is_finite() && search.svr_epsilon >= 0.0) {
        return Err(Failure::Usage("--svr-epsilon must be non-negative".into()));
    }
    Ok(())
}

fn cmd_generate(a: &GenerateArgs) -> Result<(), Failure> {
    let cfg = GeneratorConfig {
        n: a.n,
        m: a.m,
        k_informative: a.k,
        rating_noise_std: a.rating_noise,
        feature_noise_std: a.feature_noise,
        prevalence_target: a.prevalence,
        label_noise_rate: a.label_noise,
        correlated_extras: a.correlated_extras,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let synth = generate(&cfg)?;
    let sidecar = write_cohort(&synth, &a.output, a.sidecar)
        .map_err(context(|| format!("cannot write {}", a.output.display())))?;
    eprintln!(
        "wrote {} patients x {} features to {}",
        synth.cohort.n(),
        synth.cohort.m(),
        a.output.display()
    );
    if let Some(p) = sidecar {
        eprintln!("wrote ground truth to {}", p.display());
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<(), Failure> {
    check_delta(a.delta)?;
    check_search(&a.search)?;
    let cohort = load(&a.input, &a.columns)?;
    let model = fit_method(
        &cohort,
        &cohort.all_rows(),
        a.method,
        a.delta,
        &a.search.spec(),
        &a.search.options(),
        a.seed,
    )
    .map_err(context(|| format!("cannot fit {}", a.method)))?;
    model
        .save(&a.output)
        .map_err(context(|| format!("cannot write {}", a.output.display())))?;
    eprintln!(
        "{}: c = {}, {} of {} weights nonzero{}",
        model.method,
        model.c_used,
        models::nonzero_count(&model),
        model.weights.len(),
        if model.converged { "" } else { " (solver did not converge)" }
    );
    Ok(())
}

fn cmd_score(a: &ScoreArgs) -> Result<(), Failure> {
    let model = LinearModel::load(&a.model)
        .map_err(context(|| format!("cannot load model {}", a.model.display())))?;
    let cohort = load(&a.input, &a.columns)?;
    if cohort.feature_names() != model.feature_names.as_slice() {
        return Err(Failure::Data(
            format!(
                "feature columns of {} do not match the model's ({} vs {} columns, or different names/order)",
                a.input.display(),
                cohort.m(),
                model.feature_names.len()
            )
            .into(),
        ));
    }
    let rows = cohort.all_rows();
    let scores = models::score(&model, &cohort, &rows)?;
    match &a.output {
        Some(path) => {
            let f = fs::File::create(path)
                .map_err(context(|| format!("cannot create {}", path.display())))?;
            write_scores(&cohort, &rows, &scores, io::BufWriter::new(f))?;
        }
        None => write_scores(&cohort, &rows, &scores, io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), Failure> {
    check_delta(a.delta)?;
    check_search(&a.search)?;
    let cohort = load(&a.input, &a.columns)?;
    let cfg = ExperimentConfig {
        methods: a.methods.clone(),
        delta: a.delta,
        folds: a.protocol.folds as usize,
        runs: a.protocol.runs as usize,
        base_seed: a.protocol.seed,
        stratified: a.protocol.stratified,
        global_tuning: a.protocol.global_tuning,
        search: a.search.spec(),
        options: a.search.options(),
    };
    let (report, oof) = run_experiment_with_scores(&cohort, &cfg, a.protocol.jobs())?;
    emit_report(&report, &a.output, a.protocol.format(&a.output))?;
    if let Some(p) = &a.protocol.scores_output {
        write_oof_scores(&cohort, &oof, p)?;
    }
    for ag in &report.aggregates {
        eprintln!(
            "{:<18} auc {}  corr {}  nonzero {}",
            ag.method.to_string(),
            fmt_mean(ag.auc.mean),
            fmt_mean(ag.correlation.mean),
            fmt_mean(ag.mean_nonzero.mean)
        );
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), Failure> {
    for &d in &a.deltas {
        check_delta(d)?;
    }
    check_search(&a.search)?;
    let cohort = load(&a.input, &a.columns)?;
    let cfg = SweepConfig {
        deltas: a.deltas.clone(),
        folds: a.protocol.folds as usize,
        runs: a.protocol.runs as usize,
        base_seed: a.protocol.seed,
        stratified: a.protocol.stratified,
        global_tuning: a.protocol.global_tuning,
        search: a.search.spec(),
        options: a.search.options(),
    };
    let (report, oof) = sweep_delta_with_scores(&cohort, &cfg, a.protocol.jobs())?;
    emit_report(&report, &a.output, a.protocol.format(&a.output))?;
    if let Some(p) = &a.protocol.scores_output {
        write_oof_scores(&cohort, &oof, p)?;
    }
    for ag in report.aggregates.iter().filter(|g| g.method == MethodTag::RankingSvm) {
        eprintln!(
            "delta {:<6} auc {}  corr {}  nonzero {}",
            ag.delta.map_or("-".to_string(), |d| d.to_string()),
            fmt_mean(ag.auc.mean),
            fmt_mean(ag.correlation.mean),
            fmt_mean(ag.mean_nonzero.mean)
        );
    }
    for f in &report.failures {
        eprintln!("delta {}: {}", f.delta.map_or("-".to_string(), |d| d.to_string()), f.message);
    }
    Ok(())
}

fn fmt_mean(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Score(a) => cmd_score(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::SweepDelta(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {}", chain(e.as_ref()));
            ExitCode::from(2)
        }
    }
}
