//! `l0qsvm`: train, evaluate and inspect sparse quadratic-surface SVMs.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use l0qsvm::harness::export::{boundary_grid, feature_box, write_b_magnitudes, write_w_magnitudes};
use l0qsvm::harness::{
    accuracy, cross_validate, ellipse, fit_classifier, holdout_search, iris, load_csv, load_unlabeled_csv,
    sweep_k, Dataset, ExperimentConfig, FitOptions,
};
use l0qsvm::{Classifier, Loss, PdConfig, QsvmError, QuadraticSurfaceModel, Result, VoteRule};
use log::info;

#[derive(Parser)]
#[command(
    name = "l0qsvm",
    version,
    about = "Sparse quadratic-surface SVMs with an exact nonzero budget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a classifier and write it as JSON.
    Train(TrainArgs),
    /// Classify the rows of a CSV with a saved classifier.
    Predict(PredictArgs),
    /// Stratified cross-validation with a random search in every fold.
    Cv(CvArgs),
    /// Random search on a single stratified 75/25 split.
    Search(SearchArgs),
    /// Cross-validated accuracy for a range of budgets at fixed C.
    SweepK(SweepArgs),
    /// Write plot data as tab-separated tables.
    Export {
        #[command(subcommand)]
        kind: ExportKind,
    },
}

#[derive(Subcommand)]
enum ExportKind {
    /// Decision values on a regular grid over the active features.
    Boundary(BoundaryArgs),
    /// |W| and |b| tables, one pair per binary model.
    Magnitudes(MagnitudeArgs),
    /// Per-step penalty-loop trace of a fresh fit.
    Trace(TraceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Hinge,
    Ls,
}

impl From<LossArg> for Loss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Hinge => Loss::Hinge,
            LossArg::Ls => Loss::Quadratic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    Iris,
    Ellipse,
}

#[derive(Clone, Copy, ValueEnum)]
enum VoteArg {
    Argmax,
    SignMajority,
}

impl From<VoteArg> for VoteRule {
    fn from(v: VoteArg) -> Self {
        match v {
            VoteArg::Argmax => VoteRule::Argmax,
            VoteArg::SignMajority => VoteRule::SignMajority,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Headed CSV file.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    data: Option<PathBuf>,
    /// Name of the label column in --data.
    #[arg(long, default_value = "label")]
    label: String,
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
    /// Sample size of the built-in ellipse set (multiple of 4).
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Gap around the built-in ellipse's boundary.
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
}

impl DataArgs {
    fn load(&self, seed: u64) -> Result<Dataset> {
        match (self.builtin, &self.data) {
            (Some(Builtin::Iris), _) => Ok(iris()),
            (Some(Builtin::Ellipse), _) => ellipse(self.points, self.margin, seed),
            (None, Some(path)) => load_csv(path, &self.label),
            (None, None) => Err(QsvmError::Config("either --data or --builtin is required".into())),
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "hinge")]
    loss: LossArg,
    /// Misclassification weight.
    #[arg(long = "c", default_value_t = 1.0)]
    c: f64,
    /// Nonzero budget over W's lower triangle and b.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = PdConfig::default().rho0)]
    rho0: f64,
    #[arg(long, default_value_t = PdConfig::default().beta)]
    beta: f64,
    #[arg(long, default_value_t = PdConfig::default().eps_inner)]
    eps_inner: f64,
    #[arg(long, default_value_t = PdConfig::default().eps_outer)]
    eps_outer: f64,
    #[arg(long, default_value_t = PdConfig::default().max_outer)]
    max_outer: usize,
    #[arg(long, default_value_t = PdConfig::default().max_inner)]
    max_inner: usize,
}

impl SolverArgs {
    /// Without `--k` the budget defaults to `min(2n, d)`.
    fn config(&self, n: usize) -> PdConfig {
        let d = n * (n + 3) / 2;
        PdConfig {
            rho0: self.rho0,
            beta: self.beta,
            eps_inner: self.eps_inner,
            eps_outer: self.eps_outer,
            c: self.c,
            k: self.k.unwrap_or((2 * n).min(d)),
            loss: self.loss.into(),
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            ..PdConfig::default()
        }
    }
}

#[derive(Args)]
struct SearchSpace {
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1e-2)]
    c_min: f64,
    #[arg(long, default_value_t = 1e2)]
    c_max: f64,
    /// Largest budget drawn; defaults to min(2n, d).
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, value_enum, default_value = "argmax")]
    vote: VoteArg,
    /// Run folds and trials on one thread (results are identical).
    #[arg(long)]
    sequential: bool,
}

impl SearchSpace {
    fn config(&self, solver: &SolverArgs, n: usize, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            folds: self.folds,
            trials: self.trials,
            c_range: (self.c_min, self.c_max),
            k_range: self.k_max.map(|k| (1, k)),
            seed,
            pd: solver.config(n),
            vote: self.vote.into(),
            parallel: !self.sequential,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value = "argmax")]
    vote: VoteArg,
    /// Keep the last iterate when the penalty loop hits --max-outer.
    #[arg(long)]
    accept_unconverged: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Classifier JSON destination; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Label column; when given, accuracy is reported.
    #[arg(long)]
    label: Option<String>,
    /// Predictions destination; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    space: SearchSpace,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for report.json, folds.tsv and trials.tsv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    space: SearchSpace,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trial log destination; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Budgets 1..=k-max are swept; defaults to min(2n, d).
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    sequential: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelSource {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated feature names; defaults to x1, x2, ...
    #[arg(long, value_delimiter = ',')]
    names: Option<Vec<String>>,
}

#[derive(Args)]
struct BoundaryArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Headed CSV whose feature ranges bound the grid; otherwise mean ± 3 sd.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    label: String,
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    #[arg(long, default_value_t = 2)]
    dims: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MagnitudeArgs {
    #[command(flatten)]
    source: ModelSource,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let QsvmError::SearchFailure { log, .. } = &e {
                for line in log {
                    eprintln!("  {line}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => train(args),
        Command::Predict(args) => predict(args),
        Command::Cv(args) => cv(args),
        Command::Search(args) => search(args),
        Command::SweepK(args) => sweep(args),
        Command::Export { kind } => match kind {
            ExportKind::Boundary(args) => export_boundary(args),
            ExportKind::Magnitudes(args) => export_magnitudes(args),
            ExportKind::Trace(args) => export_trace(args),
        },
    }
}

/// `path` or stdout, buffered.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_file(path: &Path, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write(&mut out)?;
    out.flush()?;
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let data = args.data.load(args.seed)?;
    let config = args.solver.config(data.n());
    let options = FitOptions {
        vote: args.vote.into(),
        accept_unconverged: args.accept_unconverged,
    };
    let trained = fit_classifier(&data, &config, options)?;
    eprintln!(
        "trained {} model(s) on {} rows; training accuracy {:.4}",
        trained.outcomes.len(),
        data.m(),
        accuracy(&trained.classifier, &data)?
    );
    let mut out = sink(args.out.as_deref())?;
    writeln!(out, "{}", trained.classifier.to_json())?;
    out.flush()?;
    Ok(())
}

fn load_classifier(path: &Path) -> Result<Classifier> {
    let text =
        fs::read_to_string(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    Classifier::from_json(&text)
}

fn predict(args: PredictArgs) -> Result<()> {
    let classifier = load_classifier(&args.model)?;
    let (x, labels) = match &args.label {
        Some(label) => {
            let data = load_csv(&args.data, label)?;
            (data.x, Some(data.labels))
        }
        None => (load_unlabeled_csv(&args.data)?.1, None),
    };
    if x.ncols() != classifier.n() {
        return Err(QsvmError::InvalidData(format!(
            "model expects {} features, file has {}",
            classifier.n(),
            x.ncols()
        )));
    }
    let mut out = sink(args.out.as_deref())?;
    writeln!(out, "prediction")?;
    let mut hits = 0;
    for i in 0..x.nrows() {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let class = classifier.predict(&row)?;
        if labels.as_ref().is_some_and(|l| l[i] == class) {
            hits += 1;
        }
        writeln!(out, "{class}")?;
    }
    out.flush()?;
    if labels.is_some() {
        eprintln!(
            "accuracy {:.4} ({hits}/{})",
            hits as f64 / x.nrows() as f64,
            x.nrows()
        );
    }
    Ok(())
}

fn cv(args: CvArgs) -> Result<()> {
    let data = args.data.load(args.seed)?;
    let config = args.space.config(&args.solver, data.n(), args.seed);
    let report = cross_validate(&data, &config)?;
    for f in &report.fold_reports {
        info!(
            "fold {}: C={} k={} test accuracy {}",
            f.fold, f.best_c, f.best_k, f.test_accuracy
        );
    }
    println!(
        "{} {:?}: accuracy {:.4} ± {:.4}",
        report.dataset, report.loss, report.mean, report.std
    );
    if let Some(dir) = args.out {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("report.json"), report.to_json() + "\n")?;
        write_file(&dir.join("folds.tsv"), |w| report.write_folds_tsv(w))?;
        write_file(&dir.join("trials.tsv"), |w| report.write_trials_tsv(w))?;
    }
    Ok(())
}

fn search(args: SearchArgs) -> Result<()> {
    let data = args.data.load(args.seed)?;
    let config = args.space.config(&args.solver, data.n(), args.seed);
    let outcome = holdout_search(&data, &config)?;
    let best = &outcome.best;
    eprintln!(
        "best: C={} k={} validation accuracy {:.4}",
        best.c,
        best.k,
        best.validation_accuracy.unwrap_or(0.0)
    );
    let mut out = sink(args.out.as_deref())?;
    outcome.write_tsv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let data = args.data.load(args.seed)?;
    let n = data.n();
    let k_max = args.k_max.unwrap_or((2 * n).min(n * (n + 3) / 2));
    let config = ExperimentConfig {
        folds: args.folds,
        seed: args.seed,
        pd: args.solver.config(n),
        parallel: !args.sequential,
        ..ExperimentConfig::default()
    };
    let table = sweep_k(&data, &config, &(1..=k_max).collect::<Vec<_>>())?;
    let mut out = sink(args.out.as_deref())?;
    table.write_tsv(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Each binary model with a file-name suffix: empty for a binary
/// classifier, `_<class>` for one-vs-rest.
fn named_models(classifier: &Classifier) -> Vec<(String, &QuadraticSurfaceModel)> {
    match classifier {
        Classifier::Binary { model, .. } => vec![(String::new(), model)],
        Classifier::OneVsRest(ovr) => ovr
            .classes()
            .iter()
            .zip(ovr.models())
            .map(|(class, model)| (format!("_{class}"), model))
            .collect(),
    }
}

fn feature_names(given: Option<Vec<String>>, n: usize) -> Result<Vec<String>> {
    match given {
        Some(names) if names.len() != n => Err(QsvmError::Config(format!(
            "{} names given for {n} features",
            names.len()
        ))),
        Some(names) => Ok(names),
        None => Ok((1..=n).map(|j| format!("x{j}")).collect()),
    }
}

fn export_boundary(args: BoundaryArgs) -> Result<()> {
    let classifier = load_classifier(&args.source.model)?;
    let n = classifier.n();
    let (bounds, header) = match &args.data {
        Some(path) => {
            let data = load_csv(path, &args.label)?;
            if data.n() != n {
                return Err(QsvmError::InvalidData(format!(
                    "model expects {n} features, file has {}",
                    data.n()
                )));
            }
            (Some(feature_box(&data, 0.05)), Some(data.feature_names))
        }
        None => (None, None),
    };
    let names = feature_names(args.source.names.or(header), n)?;
    fs::create_dir_all(&args.out)?;
    for (suffix, model) in named_models(&classifier) {
        let bounds = bounds.clone().unwrap_or_else(|| {
            let s = model.standardizer();
            s.mean
                .iter()
                .zip(&s.scale)
                .map(|(m, sd)| (m - 3.0 * sd, m + 3.0 * sd))
                .collect()
        });
        let grid = boundary_grid(model, &bounds, args.resolution, args.dims, &names)?;
        write_file(&args.out.join(format!("boundary{suffix}.tsv")), |w| {
            grid.write_tsv(w)
        })?;
    }
    Ok(())
}

fn export_magnitudes(args: MagnitudeArgs) -> Result<()> {
    let classifier = load_classifier(&args.source.model)?;
    let names = feature_names(args.source.names, classifier.n())?;
    fs::create_dir_all(&args.out)?;
    for (suffix, model) in named_models(&classifier) {
        write_file(&args.out.join(format!("W{suffix}.tsv")), |w| {
            write_w_magnitudes(model, &names, w)
        })?;
        write_file(&args.out.join(format!("b{suffix}.tsv")), |w| {
            write_b_magnitudes(model, &names, w)
        })?;
    }
    Ok(())
}

fn export_trace(args: TraceArgs) -> Result<()> {
    let data = args.data.load(args.seed)?;
    let config = args.solver.config(data.n());
    let options = FitOptions {
        accept_unconverged: true,
        ..FitOptions::default()
    };
    let trained = fit_classifier(&data, &config, options)?;
    fs::create_dir_all(&args.out)?;
    let suffixes: Vec<String> = named_models(&trained.classifier)
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    for (suffix, outcome) in suffixes.iter().zip(&trained.outcomes) {
        write_file(&args.out.join(format!("trace{suffix}.tsv")), |w| {
            outcome.trace.write_tsv(w)
        })?;
    }
    Ok(())
}
