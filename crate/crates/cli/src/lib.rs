//! The `tkgqa` command line.

pub mod commands;
mod settings;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use settings::{parse_list, Settings};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config: exit 1.
    Usage(String),
    /// The work itself failed: exit 2.
    Pipeline(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Pipeline(_) => 2,
        }
    }
}

pub(crate) fn pipeline_err(context: &str) -> impl Fn(&dyn std::fmt::Display) -> CliError + '_ {
    move |e| CliError::Pipeline(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "tkgqa", version, about = "Temporal knowledge-graph question answering")]
pub struct Cli {
    /// Optional key = value file supplying defaults for any long flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed every fact of a graph into a store file.
    BuildStore(BuildStoreArgs),
    /// Train encoder parameters on question/fact pairs.
    Train(TrainArgs),
    /// Ask the backend for a plan and print it.
    Plan(PlanArgs),
    /// Answer one question.
    Ask(AskArgs),
    /// Score a dataset, optionally over several fact counts.
    Eval(EvalArgs),
    /// Turn a saved trace into a script table that replays it.
    ReplayScript(ReplayArgs),
    /// Write the bundled case-study and ablation-suite data.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct BuildStoreArgs {
    #[arg(long)]
    pub kg: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub kg: Option<PathBuf>,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// InfoNCE temperature [default: 0.01]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Learning rate [default: 1e-4]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: 2]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 16]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed for negatives, shuffling and initialization [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub buckets: Option<usize>,
    #[arg(long)]
    pub prompt_len: Option<usize>,
    /// CSV of the mean loss after each epoch.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub question: Option<String>,
    /// Backend config file, or `rule_planner`.
    #[arg(long)]
    pub backend: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct PipelineArgs {
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Backend config file, or `rule_planner`.
    #[arg(long)]
    pub backend: Option<String>,
    /// Semantic weight in the combined score [default: 0.2]
    #[arg(long)]
    pub mu: Option<f64>,
    /// Facts kept per retrieval [default: 20]
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Facts pulled from the store before re-ranking [default: 100]
    #[arg(long)]
    pub search_k: Option<usize>,
    #[arg(long)]
    pub no_plan: bool,
    #[arg(long)]
    pub no_rank: bool,
    #[arg(long)]
    pub no_retrieve: bool,
    #[arg(long)]
    pub no_prompt: bool,
    #[arg(long)]
    pub no_rerank: bool,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    #[arg(long)]
    pub question: Option<String>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Write the execution trace as JSON.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Cutoffs [default: 1,3,10]
    #[arg(long)]
    pub k: Option<String>,
    /// Evaluate once per fact count, e.g. 5,10,15,20,25.
    #[arg(long)]
    pub sweep_n: Option<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Questions evaluated in parallel [default: 1]
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Record mean wall time per question.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 50]
    #[arg(long)]
    pub questions: Option<usize>,
}

/// Parses `argv` and runs the subcommand, returning the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let (CliError::Usage(m) | CliError::Pipeline(m)) = &e;
            let _ = writeln!(err, "error: {m}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    match cli.command {
        Command::BuildStore(a) => commands::build_store(&settings, a, out),
        Command::Train(a) => commands::train(&settings, a, out),
        Command::Plan(a) => commands::plan(&settings, a, out),
        Command::Ask(a) => commands::ask(&settings, a, out, err),
        Command::Eval(a) => commands::eval(&settings, a, out),
        Command::ReplayScript(a) => commands::replay_script(&settings, a, out),
        Command::Synth(a) => commands::synth(&settings, a, out),
    }
}
