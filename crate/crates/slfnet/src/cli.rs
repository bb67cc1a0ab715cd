//! Subcommands of the `slfnet` binary. Each returns an [`Exit`] code; all
//! machine-readable output goes to `out` as JSON or JSON Lines.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use slfnet_core::data::split_dataset;
use slfnet_core::encoders::Vocab;
use slfnet_core::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
use slfnet_core::loss::compute_loss;
use slfnet_core::metrics::evaluate;
use slfnet_core::synth::generate_synthetic;
use slfnet_core::train::{train_model, EpochLog};
use slfnet_core::{decode, render_slf, Error, Model, NlcExample, ParamStore, TrainConfig};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::dataset::{load_dataset, write_dataset};
use crate::embeddings::load_pretrained_embeddings;
use crate::error::IoError;
use crate::run_config::RunConfigFile;

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    CheckFailed = 1,
    Usage = 2,
    Divergence = 3,
}

#[derive(Debug, Parser)]
#[command(name = "slfnet", version, about = "Train and run a slot-filling command parser")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic JSON Lines dataset.
    GenData(GenDataArgs),
    /// Split a dataset 6:2:2, train, and write the best-dev checkpoint and log.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a dataset.
    Eval(EvalArgs),
    /// Parse one command given its tokens and dependency heads.
    Predict(PredictArgs),
    /// Compare analytic and finite-difference gradients of the full loss.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Run config; the grammar section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for `checkpoint.json` and `train_log.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Dev,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Whitespace-tokenized command.
    #[arg(long)]
    pub text: String,
    /// Comma-separated dependency head per token; the root points at itself.
    #[arg(long)]
    pub heads: String,
    /// Also print per-head distributions as one JSON line.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Add 1 to the first analytic gradient entry of this parameter.
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            exit: Exit::Usage,
            message: message.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Core(c) => c.into(),
            other => Failure::usage(other.to_string()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match e {
            Error::Divergence { .. } => Exit::Divergence,
            _ => Exit::Usage,
        };
        Failure {
            exit,
            message: e.to_string(),
        }
    }
}

fn write_err(e: std::io::Error) -> Failure {
    Failure::usage(format!("cannot write output: {e}"))
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer(&mut *out, value).map_err(|e| Failure::usage(e.to_string()))?;
    writeln!(out).map_err(write_err)
}

/// Run one parsed command. Returns the exit code; failure messages go to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let result = match cli.command {
        Command::GenData(a) => gen_data(&a, out),
        Command::Train(a) => train(&a, out),
        Command::Eval(a) => eval(&a, out),
        Command::Predict(a) => predict(&a, out),
        Command::GradCheck(a) => grad_check_cmd(&a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.exit
        }
    }
}

#[derive(Serialize)]
struct GenSummary {
    n: usize,
    k_histogram: BTreeMap<usize, usize>,
    vocab_size: usize,
}

fn gen_data(a: &GenDataArgs, out: &mut dyn Write) -> Result<Exit, Failure> {
    let cfg = RunConfigFile::load_or_default(a.config.as_deref())?;
    if a.n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    let examples = generate_synthetic(&cfg.grammar, a.n)?;
    let file = fs::File::create(&a.out)
        .map_err(|e| Failure::usage(format!("{}: {e}", a.out.display())))?;
    write_dataset(std::io::BufWriter::new(file), &examples)
        .map_err(|e| Failure::usage(format!("{}: {e}", a.out.display())))?;
    let mut k_histogram = BTreeMap::new();
    for ex in &examples {
        *k_histogram.entry(ex.groups.len()).or_insert(0) += 1;
    }
    let summary = GenSummary {
        n: examples.len(),
        k_histogram,
        // includes the unknown-token entry
        vocab_size: Vocab::from_examples(&examples).len(),
    };
    emit(out, &summary)?;
    Ok(Exit::Success)
}

#[derive(Serialize)]
struct TrainSummary {
    best_epoch: usize,
    dev_accuracy: f64,
    train: usize,
    dev: usize,
    test: usize,
    checkpoint: PathBuf,
    log: PathBuf,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    random_embeddings: Vec<String>,
}

fn train(a: &TrainArgs, out: &mut dyn Write) -> Result<Exit, Failure> {
    let cfg = RunConfigFile::load_or_default(a.config.as_deref())?;
    let data = load_dataset(&a.data, cfg.train.k_max)?;
    let split = split_dataset(&data, cfg.train.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::usage(format!("{}: {e}", a.out.display())))?;
    let checkpoint = a.out.join("checkpoint.json");
    let log_path = a.out.join("train_log.jsonl");

    let vocab = Vocab::from_examples(&split.train);
    let mut random_embeddings = Vec::new();
    let model = match &cfg.paths.embeddings {
        Some(path) => {
            let (table, report) = load_pretrained_embeddings(path, &vocab, cfg.train.seed)?;
            random_embeddings = report.random;
            Model::with_embeddings(cfg.train.clone(), table)?
        }
        None => Model::new(cfg.train.clone(), vocab)?,
    };

    let mut log = Vec::new();
    let mut write_failed = None;
    let on_epoch = |entry: &EpochLog| {
        if let Err(e) = emit(out, entry) {
            write_failed.get_or_insert(e);
        }
        log.push(entry.clone());
    };
    let outcome = train_model(model, &split.train, &split.dev, on_epoch);
    if let Some(f) = write_failed {
        return Err(f);
    }
    let outcome = outcome?;
    let mut text = Vec::new();
    for entry in &log {
        serde_json::to_writer(&mut text, entry).map_err(|e| Failure::usage(e.to_string()))?;
        text.push(b'\n');
    }
    fs::write(&log_path, text).map_err(|e| Failure::usage(format!("{}: {e}", log_path.display())))?;
    save_checkpoint(&checkpoint, &outcome.best)?;
    let summary = TrainSummary {
        best_epoch: outcome.best_epoch,
        dev_accuracy: outcome.log[outcome.best_epoch - 1].dev_accuracy,
        train: split.train.len(),
        dev: split.dev.len(),
        test: split.test.len(),
        checkpoint,
        log: log_path,
        random_embeddings,
    };
    emit(out, &summary)?;
    Ok(Exit::Success)
}

fn select_split(data: Vec<NlcExample>, which: SplitName, seed: u64) -> Result<Vec<NlcExample>, Failure> {
    if which == SplitName::All {
        return Ok(data);
    }
    let split = split_dataset(&data, seed)?;
    Ok(match which {
        SplitName::Train => split.train,
        SplitName::Dev => split.dev,
        _ => split.test,
    })
}

fn eval(a: &EvalArgs, out: &mut dyn Write) -> Result<Exit, Failure> {
    let model = load_checkpoint(&a.checkpoint)?;
    let data = load_dataset(&a.data, model.config.k_max)?;
    let examples = select_split(data, a.split, model.config.seed)?;
    let report = evaluate(&model, &examples)?;
    emit(out, &report)?;
    Ok(Exit::Success)
}

fn parse_heads(text: &str) -> Result<Vec<usize>, Failure> {
    text.split(',')
        .map(|h| {
            h.trim()
                .parse::<usize>()
                .map_err(|e| Failure::usage(format!("--heads entry {h:?}: {e}")))
        })
        .collect()
}

fn predict(a: &PredictArgs, out: &mut dyn Write) -> Result<Exit, Failure> {
    let tokens: Vec<String> = a.text.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(Failure::usage("--text has no tokens"));
    }
    let heads = parse_heads(&a.heads)?;
    if heads.len() != tokens.len() {
        return Err(Failure::usage(format!(
            "--heads has {} entries for {} tokens",
            heads.len(),
            tokens.len()
        )));
    }
    slfnet_core::data::validate_heads(&heads).map_err(|e| Failure::usage(format!("--heads: {e}")))?;
    let model = load_checkpoint(&a.checkpoint)?;
    let parse = decode(&tokens, &heads, &model)?;
    let rendered = render_slf(&parse.groups, &tokens);
    if !rendered.is_empty() {
        writeln!(out, "{rendered}").map_err(write_err)?;
    }
    if a.trace {
        emit(out, &parse.trace)?;
    }
    Ok(Exit::Success)
}

#[derive(Serialize)]
struct GroupResult {
    group: &'static str,
    parameters: usize,
    max_rel_error: f64,
    worst_parameter: String,
    passed: bool,
}

#[derive(Serialize)]
struct GradCheckSummary<'a> {
    passed: bool,
    example: &'a str,
    step: f64,
    tolerance: f64,
    groups: Vec<GroupResult>,
}

/// First example of exactly four tokens from the configured grammar.
fn grad_check_example(cfg: &RunConfigFile, seed: u64) -> Result<NlcExample, Failure> {
    let mut grammar = cfg.grammar.clone();
    grammar.seed = seed;
    generate_synthetic(&grammar, 500)?
        .into_iter()
        .find(|e| e.len() == 4)
        .ok_or_else(|| Failure::usage("grammar produced no 4-token example in 500 draws"))
}

/// Group the per-parameter report by the model's parameter groups.
fn group_results(model: &Model, report: &GradCheckReport) -> Vec<GroupResult> {
    model
        .parameter_groups()
        .into_iter()
        .map(|(group, ids)| {
            let checks: Vec<_> = ids.iter().map(|id| &report.params[id.index()]).collect();
            let worst = checks
                .iter()
                .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
                .expect("non-empty group");
            GroupResult {
                group,
                parameters: checks.len(),
                max_rel_error: worst.max_rel_error,
                worst_parameter: worst.name.clone(),
                passed: checks.iter().all(|c| c.failures == 0),
            }
        })
        .collect()
}

/// Full-loss gradient check at d = 8 on a 4-token synthetic example.
pub fn full_model_grad_check(
    train: &TrainConfig,
    example: &NlcExample,
    config: &GradCheckConfig,
) -> slfnet_core::Result<(Model, GradCheckReport)> {
    let cfg = TrainConfig {
        d: 8,
        ..train.clone()
    };
    let model = Model::new(cfg, Vocab::from_examples(std::slice::from_ref(example)))?;
    let f = |store: &ParamStore| {
        let mut m = model.clone();
        m.params = store.clone();
        let out = compute_loss(example, &m)?;
        Ok((out.graph, out.loss))
    };
    let report = grad_check(&model.params, f, config)?;
    Ok((model, report))
}

fn grad_check_cmd(a: &GradCheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<Exit, Failure> {
    let cfg = RunConfigFile::load_or_default(a.config.as_deref())?;
    let example = grad_check_example(&cfg, a.seed)?;
    let train = TrainConfig {
        seed: a.seed,
        ..cfg.train.clone()
    };
    let mut check = GradCheckConfig::new(a.step, a.tolerance);
    check.corrupt = a.corrupt.clone();
    let (model, report) = full_model_grad_check(&train, &example, &check)?;
    let summary = GradCheckSummary {
        passed: report.passed(),
        example: &example.tokens.join(" "),
        step: a.step,
        tolerance: a.tolerance,
        groups: group_results(&model, &report),
    };
    emit(out, &summary)?;
    if report.passed() {
        return Ok(Exit::Success);
    }
    for p in report.worst() {
        let _ = writeln!(
            err,
            "gradient check failed: {} max relative error {:.3e} at index {} (analytic {:.6e}, numeric {:.6e})",
            p.name, p.max_rel_error, p.worst_index, p.analytic, p.numeric
        );
    }
    Ok(Exit::CheckFailed)
}
