//! Command-line front end: `gen`, `train`, `predict`, `eval`, `saa`, `bench`.
//!
//! Options come from an optional TOML run file (`--config`) and are
//! overridden by flags. Exit codes: 0 success, 1 usage, 2 data, 3 budget.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{self, Baseline, BaselineDims};
use crate::catalog::RailcarCatalog;
use crate::checkpoint::Checkpoint;
use crate::evaluation::{time_predictions, EvalReport, Timing};
use crate::instances::{build_dataset, stream_rng, Booking, DataClass, DatasetSpec, Manifest, Split};
use crate::language::{Lexicon, Pair};
use crate::nmt::{self, Nmt, NmtDims};
use crate::oracle::{SolutionDescription, SolverConfig};
use crate::saa::{saa_bound, saa_predict, SaaConfig};
use crate::training::{history_text, ModelError, Objective, TrainConfig, Trainer};

pub const THREADS_ENV: &str = "LOADCAST_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Budget(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Budget(_) => 3,
        }
    }
}

fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Nmt,
    Baseline,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `toy`, `default10` or a catalog file path.
    pub catalog: Option<String>,
    pub class: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub model: Option<ModelKind>,
    pub width: Option<usize>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub scenarios: Option<Vec<usize>>,
    pub node_budget: Option<u64>,
    pub train: TrainConfig,
    pub nmt: NmtDims,
    pub baseline: BaselineDims,
    /// Initial weight range of the NMT model.
    pub init_scale: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(data(path.display()))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "loadcast", version, about = "Predict tactical railcar load plans")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Catalog: `toy`, `default10` or a file path.
    #[arg(long, global = true)]
    pub catalog: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (falls back to LOADCAST_THREADS).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample, solve and write a tokenized dataset.
    Gen {
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        /// Oracle search-node limit per instance.
        #[arg(long)]
        node_budget: Option<u64>,
    },
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from `train.state` in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop (resumably) after this many seconds.
        #[arg(long)]
        time_limit: Option<f64>,
    },
    /// Predict target phrases for a source file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        width: Option<usize>,
    },
    /// Score predictions against gold target phrases.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value = "model")]
        label: String,
    },
    /// Sample-average predictions and their accuracy per scenario count.
    Saa {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Comma-separated scenario counts.
        #[arg(long, value_delimiter = ',')]
        scenarios: Option<Vec<usize>>,
        /// Use only the first N observations.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        node_budget: Option<u64>,
    },
    /// Per-instance prediction latency.
    Bench {
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        width: Option<usize>,
        /// Also time SAA with these scenario counts.
        #[arg(long, value_delimiter = ',')]
        scenarios: Option<Vec<usize>>,
        #[arg(long)]
        limit: Option<usize>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let jobs = cli.common.jobs.or(config.jobs).or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()));
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // Only the first call in a process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let catalog = load_catalog(cli.common.catalog.as_deref().or(config.catalog.as_deref()).unwrap_or("default10"))?;
    let seed = cli.common.seed.or(config.seed);
    let out = cli.common.out.clone().or(config.out.clone());
    let budget = |flag: Option<u64>| SolverConfig { node_budget: flag.or(config.node_budget).unwrap_or(SolverConfig::default().node_budget) };
    match cli.command {
        Command::Gen { class, n, node_budget } => {
            let class = class.or(config.class.clone()).ok_or_else(|| CliError::Usage("gen needs --class".into()))?;
            let class = DataClass::by_name(&class).ok_or_else(|| CliError::Usage(format!("unknown class {class:?}")))?;
            let n = n.or(config.n).ok_or_else(|| CliError::Usage("gen needs --n".into()))?;
            let spec = DatasetSpec::new(class, n, require_seed(seed)?);
            let dir = out.ok_or_else(|| CliError::Usage("gen needs --out".into()))?;
            let manifest = cmd_gen(&spec, &catalog, &budget(node_budget), &dir)?;
            let [a, b, c] = manifest.split_sizes;
            println!("class {} train {a} valid {b} test {c} budget-limited {}", manifest.class.name, manifest.budget_exhausted.len());
            Ok(())
        }
        Command::Train { data: dir, model, epochs, resume, time_limit } => {
            let mut train = config.train.clone();
            train.seed = require_seed(seed)?;
            if let Some(e) = epochs {
                train.max_epochs = e;
            }
            let opts = TrainOptions {
                model: model.or(config.model).unwrap_or_default(),
                train,
                nmt: config.nmt,
                baseline: config.baseline.clone(),
                init_scale: config.init_scale.unwrap_or(0.1),
                resume,
                time_limit,
            };
            let out = out.ok_or_else(|| CliError::Usage("train needs --out".into()))?;
            let history = cmd_train(&dir, &catalog, &opts, &out)?;
            print!("{history}");
            Ok(())
        }
        Command::Predict { checkpoint, input, width } => {
            let model = LoadedModel::load(&checkpoint, &catalog)?;
            let text = read(&input)?;
            let output = cmd_predict(&model, &text, width.or(config.width).unwrap_or(5))?;
            emit(out.as_deref(), &output)
        }
        Command::Eval { pred, gold, label } => {
            let report = cmd_eval(&read(&pred)?, &read(&gold)?, &catalog, &label)?;
            match out {
                Some(p) => write(&p, &EvalReport::to_csv(std::slice::from_ref(&report)))?,
                None => print!("{}", EvalReport::to_csv(std::slice::from_ref(&report))),
            }
            print!("{report}");
            Ok(())
        }
        Command::Saa { input, gold, scenarios, limit, node_budget } => {
            let mut observations = read_observations(&read(&input)?, &read(&gold)?, &catalog)?;
            observations.truncate(limit.unwrap_or(usize::MAX));
            let config = SaaConfig {
                scenarios: scenarios.or(config.scenarios.clone()).unwrap_or_else(|| SaaConfig::default().scenarios),
                seed: require_seed(seed)?,
                solver: budget(node_budget),
            };
            let report = saa_bound(&observations, &config, &catalog).map_err(|e| match e {
                crate::saa::SaaError::Config(m) => CliError::Usage(m),
                e => CliError::Data(e.to_string()),
            })?;
            match out {
                Some(p) => write(&p, &report.to_csv())?,
                None => print!("{}", report.to_csv()),
            }
            print!("{report}");
            Ok(())
        }
        Command::Bench { checkpoint, input, width, scenarios, limit } => {
            let mut bookings = read_bookings(&read(&input)?, &Lexicon::new(&catalog))?;
            bookings.truncate(limit.unwrap_or(usize::MAX));
            let models = checkpoint.iter().map(|c| LoadedModel::load(c, &catalog)).collect::<Result<Vec<_>, _>>()?;
            let saa = match scenarios.or(config.scenarios.clone()) {
                Some(s) => Some((s, require_seed(seed)?)),
                None => None,
            };
            let rows = cmd_bench(&models, &bookings, width.or(config.width).unwrap_or(5), saa, &catalog)?;
            let csv = bench_csv(&rows);
            match out {
                Some(p) => write(&p, &csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}

fn require_seed(seed: Option<u64>) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::Usage("a seed is required (--seed or `seed` in the run file)".into()))
}

/// Resolves `toy`, `default10` or a catalog file.
pub fn load_catalog(spec: &str) -> Result<RailcarCatalog, CliError> {
    match spec {
        "toy" => Ok(RailcarCatalog::toy()),
        "default10" => Ok(RailcarCatalog::default10()),
        path => RailcarCatalog::load(path).map_err(|e| CliError::Data(e.to_string())),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(data(path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(data(path.display()))
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_gen(spec: &DatasetSpec, catalog: &RailcarCatalog, solver: &SolverConfig, dir: &Path) -> Result<Manifest, CliError> {
    build_dataset(spec, catalog, solver, dir).map(|f| f.manifest).map_err(|e| CliError::Data(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub model: ModelKind,
    pub train: TrainConfig,
    pub nmt: NmtDims,
    pub baseline: BaselineDims,
    pub init_scale: f64,
    pub resume: bool,
    pub time_limit: Option<f64>,
}

/// Reads `{split}.src`/`{split}.tgt` of a dataset directory, checking the
/// manifest's catalog.
pub fn read_split(dir: &Path, split: Split, lexicon: &Lexicon) -> Result<Vec<Pair>, CliError> {
    let mp = dir.join("dataset.manifest");
    let manifest: Manifest = toml::from_str(&read(&mp)?).map_err(data(mp.display()))?;
    if manifest.catalog_hash != lexicon.catalog().hash() {
        return Err(CliError::Data(format!(
            "{} was generated with catalog {:?}, not {:?}",
            dir.display(),
            manifest.catalog,
            lexicon.catalog().name()
        )));
    }
    let src = dir.join(format!("{}.src", split.name()));
    let tgt = dir.join(format!("{}.tgt", split.name()));
    lexicon.read_corpus(&read(&src)?, &read(&tgt)?).map_err(data(src.display()))
}

/// Trains and writes `model.ckpt`, `history.txt`, `train.state` and the
/// effective `run.toml` under `out`; the baseline also gets
/// `{train,valid}.expanded`. Returns the history text.
pub fn cmd_train(dir: &Path, catalog: &RailcarCatalog, opts: &TrainOptions, out: &Path) -> Result<String, CliError> {
    opts.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let lexicon = Lexicon::new(catalog);
    let train = read_split(dir, Split::Train, &lexicon)?;
    let valid = read_split(dir, Split::Valid, &lexicon)?;
    fs::create_dir_all(out).map_err(data(out.display()))?;
    let run = RunConfig {
        model: Some(opts.model),
        seed: Some(opts.train.seed),
        train: opts.train.clone(),
        nmt: opts.nmt,
        baseline: opts.baseline.clone(),
        init_scale: Some(opts.init_scale),
        catalog: Some(catalog.name().to_string()),
        ..Default::default()
    };
    write(&out.join("run.toml"), &toml::to_string(&run).expect("run file serializes"))?;
    match opts.model {
        ModelKind::Nmt => {
            let model = Nmt::new(&lexicon, opts.nmt, opts.train.seed, opts.init_scale);
            train_loop(model, &train, &valid, opts, out)
        }
        ModelKind::Baseline => {
            let train = baseline::transform_dataset(&train, &lexicon).map_err(data("expanding training data"))?;
            let valid = baseline::transform_dataset(&valid, &lexicon).map_err(data("expanding validation data"))?;
            write(&out.join("train.expanded"), &baseline::expanded_to_text(&train, &lexicon))?;
            write(&out.join("valid.expanded"), &baseline::expanded_to_text(&valid, &lexicon))?;
            let model = Baseline::new(&lexicon, &opts.baseline, opts.train.seed, 1.0);
            train_loop(model, &train, &valid, opts, out)
        }
    }
}

fn model_err(e: ModelError) -> CliError {
    match e {
        ModelError::Config(m) => CliError::Usage(m),
        e => CliError::Data(e.to_string()),
    }
}

fn train_loop<O: Objective>(model: O, train: &[O::Example], valid: &[O::Example], opts: &TrainOptions, out: &Path) -> Result<String, CliError> {
    let state_path = out.join("train.state");
    let mut trainer = if opts.resume {
        let state = Checkpoint::load(&state_path).map_err(data(state_path.display()))?;
        Trainer::resume(model, opts.train.clone(), &state).map_err(model_err)?
    } else {
        Trainer::new(model, opts.train.clone()).map_err(model_err)?
    };
    let start = Instant::now();
    let mut over_budget = false;
    while !trainer.should_stop() {
        trainer.train_epoch(train, valid).map_err(model_err)?;
        trainer.state().save(&state_path, true).map_err(data(state_path.display()))?;
        write(&out.join("history.txt"), &history_text(trainer.history()))?;
        if opts.time_limit.is_some_and(|t| start.elapsed().as_secs_f64() > t) && !trainer.should_stop() {
            over_budget = true;
            break;
        }
    }
    let done = trainer.finish();
    let ckpt = out.join("model.ckpt");
    done.model.checkpoint().save(&ckpt, false).map_err(data(ckpt.display()))?;
    let history = history_text(&done.history);
    if over_budget {
        return Err(CliError::Budget(format!(
            "time limit reached after {} epochs; continue with --resume",
            done.history.len()
        )));
    }
    Ok(history)
}

/// A trained model of either kind.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Nmt(Nmt),
    Baseline(Baseline),
}

impl LoadedModel {
    pub fn load(path: &Path, catalog: &RailcarCatalog) -> Result<Self, CliError> {
        let ckpt = Checkpoint::load(path).map_err(data(path.display()))?;
        let lexicon = Lexicon::new(catalog);
        let err = data(path.display());
        match ckpt.kind.as_str() {
            nmt::KIND => Nmt::from_checkpoint(&ckpt, &lexicon).map(LoadedModel::Nmt).map_err(err),
            baseline::KIND => Baseline::from_checkpoint(&ckpt, &lexicon).map(LoadedModel::Baseline).map_err(err),
            other => Err(CliError::Data(format!("{}: unknown model kind {other:?}", path.display()))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            LoadedModel::Nmt(_) => "nmt",
            LoadedModel::Baseline(_) => "baseline",
        }
    }

    pub fn lexicon(&self) -> &Lexicon {
        match self {
            LoadedModel::Nmt(m) => m.lexicon(),
            LoadedModel::Baseline(m) => m.lexicon(),
        }
    }

    pub fn predict(&self, booking: &Booking, width: usize) -> Result<SolutionDescription, ModelError> {
        match self {
            LoadedModel::Nmt(m) => m.predict(booking, width),
            LoadedModel::Baseline(m) => m.generate(booking, width),
        }
    }
}

pub fn read_bookings(text: &str, lexicon: &Lexicon) -> Result<Vec<Booking>, CliError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let tokens = lexicon.source().parse(line).map_err(data(format!("source line {}", i + 1)))?;
            lexicon.decode_input(&tokens).map_err(data(format!("source line {}", i + 1)))
        })
        .collect()
}

fn read_descriptions(text: &str, lexicon: &Lexicon, what: &str) -> Result<Vec<SolutionDescription>, CliError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let tokens = lexicon.target().parse(line).map_err(data(format!("{what} line {}", i + 1)))?;
            lexicon.decode_output(&tokens).map_err(data(format!("{what} line {}", i + 1)))
        })
        .collect()
}

fn read_observations(src: &str, tgt: &str, catalog: &RailcarCatalog) -> Result<Vec<(Booking, SolutionDescription)>, CliError> {
    let lexicon = Lexicon::new(catalog);
    let pairs = lexicon.read_corpus(src, tgt).map_err(data("observations"))?;
    pairs
        .into_iter()
        .map(|p| Ok((p.booking, lexicon.decode_output(&p.target).map_err(data("observations"))?)))
        .collect()
}

/// One target phrase per source line.
pub fn cmd_predict(model: &LoadedModel, src: &str, width: usize) -> Result<String, CliError> {
    if width == 0 {
        return Err(CliError::Usage("--width must be at least 1".into()));
    }
    let lexicon = model.lexicon();
    let bookings = read_bookings(src, lexicon)?;
    let lines: Vec<String> = bookings
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let d = model.predict(b, width).map_err(data(format!("prediction for line {}", i + 1)))?;
            let tokens = lexicon.encode_output(&d).map_err(data(format!("prediction for line {}", i + 1)))?;
            Ok(lexicon.target().render(&tokens))
        })
        .collect::<Result<_, CliError>>()?;
    Ok(lines.iter().map(|l| format!("{l}\n")).collect())
}

pub fn cmd_eval(pred: &str, gold: &str, catalog: &RailcarCatalog, label: &str) -> Result<EvalReport, CliError> {
    let lexicon = Lexicon::new(catalog);
    let predicted = read_descriptions(pred, &lexicon, "prediction")?;
    let actual = read_descriptions(gold, &lexicon, "gold")?;
    if predicted.len() != actual.len() {
        return Err(CliError::Data(format!("{} predictions for {} gold lines", predicted.len(), actual.len())));
    }
    let pairs: Vec<_> = actual.into_iter().zip(predicted).collect();
    EvalReport::new(label, &pairs, catalog, None).map_err(|e| CliError::Data(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub timing: Timing,
}

/// Times each model (and optionally SAA) on every booking, one at a time.
pub fn cmd_bench(
    models: &[LoadedModel],
    bookings: &[Booking],
    width: usize,
    saa: Option<(Vec<usize>, u64)>,
    catalog: &RailcarCatalog,
) -> Result<Vec<BenchRow>, CliError> {
    let mut rows = Vec::new();
    for m in models {
        let (results, timing) = time_predictions(bookings, |b| m.predict(b, width));
        if let Some(e) = results.into_iter().find_map(Result::err) {
            return Err(CliError::Data(e.to_string()));
        }
        rows.push(BenchRow { method: format!("{} beam {width}", m.label()), timing });
    }
    if let Some((scenarios, seed)) = saa {
        let solver = SolverConfig::default();
        for n in scenarios {
            let indexed: Vec<(usize, &Booking)> = bookings.iter().enumerate().collect();
            let (results, timing) =
                time_predictions(&indexed, |(i, b)| saa_predict(b, n, &mut stream_rng(seed, *i as u64), catalog, &solver));
            if let Some(e) = results.into_iter().find_map(Result::err) {
                return Err(CliError::Data(e.to_string()));
            }
            rows.push(BenchRow { method: format!("saa {n}"), timing });
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("method,n,time_mean_s,time_std_s\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.6e},{:.6e}", r.method, r.timing.n, r.timing.mean, r.timing.std);
    }
    s
}
