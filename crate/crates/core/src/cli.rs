//! Command-line front end: `train`, `eval`, `synth recovery|link` and `project`.
//!
//! Exit codes: 0 success, 2 bad flags, 3 unreadable or corrupt files, 4 a
//! training or evaluation precondition failed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::constraints::{
    neighbors_triplets, random_label_triplets, read_triplets_file, write_links,
    write_triplets_file,
};
use crate::error::{Error, Result};
use crate::evaluation::{knn_error, link_auc};
use crate::experiments::{link_data, recovery_data, run_link, run_recovery, LinkConfig, RecoveryConfig};
use crate::model::{DotProduct, Model};
use crate::objective::ConstraintSet;
use crate::solver::{write_history, Goal, Oracle, Solver, SolverConfig, Validator};
use crate::sparse_data::{read_libsvm_file, write_libsvm_file, Dataset, FeatureScaler};

pub const EXIT_FLAGS: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "hdsl", version, about = "Sparse bilinear similarity learning")]
pub struct Cli {
    /// Worker threads for parallel loops.
    #[arg(long, global = true, env = "HDSL_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a similarity from triplet constraints.
    Train(TrainArgs),
    /// k-NN error and size of a model.
    Eval(EvalArgs),
    /// Generate (and optionally run) a synthetic experiment.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Map points into the model's low-dimensional space.
    Project(ProjectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    Exact,
    Minibatch,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintSource {
    /// Nearest same-label targets against nearest other-label impostors.
    Neighbors,
    /// Random same-label and other-label points.
    RandomLabel,
    /// Triplets read from `--triplets`.
    File,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, value_enum, default_value_t = OracleKind::Exact)]
    pub oracle: OracleKind,
    /// Constraints sampled per iteration by the approximate oracles.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub ls_tol: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub gap_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub eval_every: u64,
    /// Sequential, bit-reproducible runs (always honored).
    #[arg(long)]
    pub deterministic: bool,
}

impl SolverArgs {
    fn oracle(&self, n_constraints: usize) -> Oracle {
        oracle_of(self.oracle, self.batch).capped(n_constraints.max(1))
    }

    fn config(&self, n_constraints: usize) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            max_iters: self.iters,
            oracle: self.oracle(n_constraints),
            line_search_tol: self.ls_tol,
            gap_tol: self.gap_tol,
            seed: self.seed,
            patience: self.patience,
            eval_every: self.eval_every as usize,
            deterministic: self.deterministic,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Training data in LIBSVM format.
    #[arg(long)]
    pub data: PathBuf,
    /// Feature count; inferred from the data when absent.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_enum, default_value_t = ConstraintSource::Neighbors)]
    pub constraints: ConstraintSource,
    /// Triplet file for `--constraints file`.
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub targets: usize,
    #[arg(long, default_value_t = 5)]
    pub impostors: usize,
    #[arg(long, default_value_t = 20)]
    pub per_instance: usize,
    /// Scale every feature by its largest absolute training value.
    #[arg(long)]
    pub scale: bool,
    /// Labeled validation data for early stopping on k-NN error.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON-lines history; defaults to `<out>.history.jsonl`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Model file; the plain dot product is used when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub scale: bool,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Support recovery from truth-derived triplets.
    Recovery(RecoveryArgs),
    /// Link prediction on power-law sparse samples.
    Link(LinkArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RecoveryArgs {
    #[arg(long, default_value_t = 2000)]
    pub d: usize,
    #[arg(long, default_value_t = 100)]
    pub bases: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 30_000)]
    pub triplets: usize,
    #[arg(long, default_value_t = 0.02)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 9.0)]
    pub concentration: f64,
    /// Draw truth bases from two diagonal blocks.
    #[arg(long)]
    pub blocks: bool,
    #[arg(long, default_value_t = 100.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, value_enum, default_value_t = OracleKind::Heuristic)]
    pub oracle: OracleKind,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub eval_every: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "recovery")]
    pub out_dir: PathBuf,
    /// Train and print recovery AUCs along the way.
    #[arg(long)]
    pub run: bool,
}

#[derive(Debug, Clone, Args)]
pub struct LinkArgs {
    #[arg(long, default_value_t = 50_000)]
    pub d: usize,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Links in each of the train, validation and test splits.
    #[arg(long, default_value_t = 1000)]
    pub links: usize,
    #[arg(long, default_value_t = 4)]
    pub per_link: usize,
    /// Mean feature density; follows the built-in schedule in `d` when absent.
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub exponent: f64,
    #[arg(long, default_value_t = 0.1)]
    pub min_freq: f64,
    #[arg(long, default_value_t = 100)]
    pub bases: usize,
    #[arg(long, default_value_t = 0.05)]
    pub top_frac: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, value_enum, default_value_t = OracleKind::Heuristic)]
    pub oracle: OracleKind,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub eval_every: u64,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "link")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub run: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Parse { .. } | Error::ModelFormat(_) => EXIT_IO,
        _ => EXIT_SOLVER,
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FLAGS } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

type CliResult<T> = std::result::Result<T, (i32, String)>;

trait Context<T> {
    /// Tags an error with its exit code and, for file errors, the path.
    fn at(self, path: &Path) -> CliResult<T>;
    fn code(self) -> CliResult<T>;
}

impl<T> Context<T> for Result<T> {
    fn at(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| {
            let code = exit_code(&e);
            // a file that parses but is invalid is still a corrupt input
            let code = if matches!(e, Error::InvalidModel(_) | Error::InvalidDataset(_) | Error::InvalidVector(_)) {
                EXIT_IO
            } else {
                code
            };
            (code, format!("{}: {e}", path.display()))
        })
    }

    fn code(self) -> CliResult<T> {
        self.map_err(|e| (exit_code(&e), e.to_string()))
    }
}

fn flag_error<T>(msg: impl Into<String>) -> CliResult<T> {
    Err((EXIT_FLAGS, msg.into()))
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return flag_error("--threads must be positive");
        }
        // the pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Synth(SynthCommand::Recovery(a)) => cmd_synth_recovery(&a),
        Command::Synth(SynthCommand::Link(a)) => cmd_synth_link(&a),
        Command::Project(a) => cmd_project(&a),
    }
}

fn read_data(path: &Path, dim: Option<usize>) -> CliResult<Dataset> {
    read_libsvm_file(path, dim).at(path)
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| (EXIT_IO, format!("{}: {e}", path.display())))
}

fn print_json(v: &serde_json::Value) {
    println!("{v}");
}

/// Aligns two datasets on the larger feature count.
fn align(a: Dataset, b: Dataset) -> CliResult<(Dataset, Dataset)> {
    let dim = a.dim().max(b.dim());
    Ok((a.with_dim(dim).code()?, b.with_dim(dim).code()?))
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    if !(a.solver.lambda > 0.0) {
        return flag_error("--lambda must be positive");
    }
    let mut train = read_data(&a.data, a.dim)?;
    let mut val = match &a.val {
        Some(p) => Some(read_data(p, a.dim)?),
        None => None,
    };
    if let Some(v) = val.take() {
        let (t, v) = align(train, v)?;
        train = t;
        val = Some(v);
    }
    if a.scale {
        let scaler = FeatureScaler::fit(&train);
        train = scaler.apply(&train);
        val = val.map(|v| scaler.apply(&v));
    }
    let triplets = match a.constraints {
        ConstraintSource::Neighbors => {
            neighbors_triplets(&train, a.targets, a.impostors, &DotProduct).code()?.triplets
        }
        ConstraintSource::RandomLabel => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.solver.seed);
            random_label_triplets(&train, a.per_instance, &mut rng).code()?.triplets
        }
        ConstraintSource::File => {
            let Some(p) = &a.triplets else {
                return flag_error("--constraints file needs --triplets");
            };
            read_triplets_file(p).at(p)?
        }
    };
    let cs = ConstraintSet::new(&train, triplets).code()?;
    let cfg = a.solver.config(cs.len());
    let solver = Solver::new(&cs, cfg).code()?;
    let out = match &val {
        Some(v) => {
            if a.k == 0 || a.k > train.len() {
                return flag_error(format!("--k must lie in 1..={}", train.len()));
            }
            let validator = Validator::new(Goal::Minimize, |m: &Model| {
                knn_error(m, &train, v, a.k).unwrap_or(f64::NAN)
            });
            solver.run(Some(validator)).code()?
        }
        None => solver.run(None).code()?,
    };
    out.model.save(&a.out).at(&a.out)?;
    let history_path = a.history.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".history.jsonl");
        PathBuf::from(p)
    });
    let mut w = create(&history_path)?;
    write_history(&out.history, &mut w).at(&history_path)?;
    w.flush().map_err(|e| (EXIT_IO, e.to_string()))?;
    let last = out.history.last().expect("history has the initial iterate");
    print_json(&json!({
        "constraints": cs.len(),
        "iterations": last.k,
        "stop": out.stop.to_string(),
        "best_iter": out.best_iter,
        "objective": last.objective,
        "gap": last.gap,
        "atoms": out.model.num_atoms(),
        "features": out.model.active_features().len(),
    }));
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let train = read_data(&a.train, a.dim)?;
    let test = read_data(&a.test, a.dim)?;
    let (mut train, mut test) = align(train, test)?;
    if a.scale {
        let scaler = FeatureScaler::fit(&train);
        train = scaler.apply(&train);
        test = scaler.apply(&test);
    }
    let report = match &a.model {
        Some(p) => {
            let model = Model::load(p).at(p)?;
            if model.dim() < train.dim() {
                return Err((EXIT_SOLVER, format!("model has {} features, data has {}", model.dim(), train.dim())));
            }
            let train = train.with_dim(model.dim()).code()?;
            let test = test.with_dim(model.dim()).code()?;
            json!({
                "knn_error": knn_error(&model, &train, &test, a.k).code()?,
                "k": a.k,
                "atoms": model.num_atoms(),
                "features": model.active_features().len(),
                "nnz": model.nnz(),
            })
        }
        None => json!({
            "knn_error": knn_error(&DotProduct, &train, &test, a.k).code()?,
            "k": a.k,
            "atoms": null,
            "features": train.dim(),
            "nnz": train.dim(),
        }),
    };
    print_json(&report);
    Ok(())
}

fn oracle_of(kind: OracleKind, batch: u64) -> Oracle {
    let size = batch as usize;
    match kind {
        OracleKind::Exact => Oracle::Exact,
        OracleKind::Minibatch => Oracle::MiniBatch { size },
        OracleKind::Heuristic => Oracle::Heuristic { size },
    }
}

fn make_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| (EXIT_IO, format!("{}: {e}", dir.display())))
}

pub fn cmd_synth_recovery(a: &RecoveryArgs) -> CliResult<()> {
    let cfg = RecoveryConfig {
        dim: a.d,
        n_bases: a.bases,
        concentration: a.concentration,
        blocks: a.blocks,
        n_samples: a.n,
        sparsity: a.sparsity,
        n_triplets: a.triplets,
        alpha: a.alpha,
        lambda: a.lambda,
        iters: a.iters,
        oracle: oracle_of(a.oracle, a.batch),
        eval_every: a.eval_every as usize,
        seed: a.seed,
    };
    let data = recovery_data(&cfg).code()?;
    make_dir(&a.out_dir)?;
    let samples = a.out_dir.join("samples.svm");
    write_libsvm_file(&data.samples, &samples).at(&samples)?;
    let truth = a.out_dir.join("truth.hdsl");
    data.truth.save(&truth).at(&truth)?;
    let triplets = a.out_dir.join("triplets.txt");
    write_triplets_file(&data.triplets, &triplets).at(&triplets)?;
    if !a.run {
        print_json(&json!({
            "samples": samples, "truth": truth, "triplets": triplets,
            "atoms": data.truth.num_atoms(),
        }));
        return Ok(());
    }
    let report = run_recovery(&cfg, &data).code()?;
    for p in &report.curve {
        print_json(&serde_json::to_value(p).expect("serializable"));
    }
    let model = a.out_dir.join("model.hdsl");
    report.model.save(&model).at(&model)?;
    let hist = a.out_dir.join("history.jsonl");
    let mut w = create(&hist)?;
    write_history(&report.history, &mut w).at(&hist)?;
    w.flush().map_err(|e| (EXIT_IO, e.to_string()))?;
    Ok(())
}

pub fn cmd_synth_link(a: &LinkArgs) -> CliResult<()> {
    let cfg = LinkConfig {
        dim: a.d,
        n_samples: a.n,
        sparsity: a.sparsity,
        exponent: a.exponent,
        min_freq: a.min_freq,
        n_bases: a.bases,
        top_frac: a.top_frac,
        n_train: a.links,
        n_val: a.links,
        n_test: a.links,
        per_link: a.per_link,
        lambda: a.lambda,
        iters: a.iters,
        oracle: oracle_of(a.oracle, a.batch),
        eval_every: a.eval_every as usize,
        patience: a.patience,
        seed: a.seed,
        ..LinkConfig::default()
    };
    let data = link_data(&cfg).code()?;
    make_dir(&a.out_dir)?;
    let samples = a.out_dir.join("samples.svm");
    write_libsvm_file(&data.samples, &samples).at(&samples)?;
    let truth = a.out_dir.join("truth.hdsl");
    data.truth.save(&truth).at(&truth)?;
    for (name, links) in [("train", &data.train), ("val", &data.val), ("test", &data.test)] {
        let p = a.out_dir.join(format!("links_{name}.txt"));
        let mut w = create(&p)?;
        write_links(links, &mut w).at(&p)?;
        w.flush().map_err(|e| (EXIT_IO, e.to_string()))?;
    }
    let triplets = a.out_dir.join("triplets.txt");
    write_triplets_file(&data.triplets, &triplets).at(&triplets)?;
    if !a.run {
        print_json(&json!({
            "samples": samples, "truth": truth, "triplets": triplets,
            "train_links": data.train.len(), "constraints": data.triplets.len(),
        }));
        return Ok(());
    }
    let report = run_link(&cfg, &data).code()?;
    let model = a.out_dir.join("model.hdsl");
    report.model.save(&model).at(&model)?;
    let hist = a.out_dir.join("history.jsonl");
    let mut w = create(&hist)?;
    write_history(&report.history, &mut w).at(&hist)?;
    w.flush().map_err(|e| (EXIT_IO, e.to_string()))?;
    print_json(&json!({
        "val_auc": report.val_auc,
        "test_auc": report.test_auc,
        "dot_test_auc": link_auc(&DotProduct, &data.samples, &data.test).code()?,
        "best_iter": report.best_iter,
        "stop": report.stop.to_string(),
        "atoms": report.model.num_atoms(),
        "seconds": report.seconds,
    }));
    Ok(())
}

/// Dense rows of the projection in LIBSVM layout, zeros included so the
/// output dimension survives a round trip.
pub fn cmd_project(a: &ProjectArgs) -> CliResult<()> {
    let model = Model::load(&a.model).at(&a.model)?;
    let data = read_data(&a.data, None)?;
    if data.dim() > model.dim() {
        return Err((EXIT_SOLVER, format!("data has {} features, model {}", data.dim(), model.dim())));
    }
    let data = data.with_dim(model.dim()).code()?;
    let map = model.factorize();
    let mut w = create(&a.out)?;
    let io = |e: std::io::Error| (EXIT_IO, format!("{}: {e}", a.out.display()));
    for (i, p) in data.points().iter().enumerate() {
        let row = map.project(p).code()?;
        write!(w, "{}", data.label(i).unwrap_or(0)).map_err(io)?;
        for (j, v) in row.iter().enumerate() {
            write!(w, " {}:{}", j + 1, v).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}
