//! `gazequery` command line: argument parsing, config merging, run
//! manifests and the exit-code contract (0 ok, 1 domain error, 2 usage).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod analyze;
pub mod config;
pub mod error;
pub mod eval;
pub mod localize;
pub mod manifest;
pub mod replay;
pub mod respond;
pub mod synth;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gazequery", version, about = "Gaze-assisted query resolution over egocentric recordings")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML config; explicit flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for query-level parallelism.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Log more on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic session.
    Synth(synth::SynthArgs),
    /// Gaze/speech coordination statistics as CSV and JSON.
    Analyze(analyze::AnalyzeArgs),
    /// Key frames, gaze points, regions and interest objects per query.
    Localize(localize::LocalizeArgs),
    /// Run pipeline variants and write one result file per query.
    Respond(respond::RespondArgs),
    /// Score result files against ground truth.
    Eval(eval::EvalArgs),
    /// Re-run a recorded `respond` from fixtures and compare outputs.
    Replay(replay::ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Analyze(_) => "analyze",
            Command::Localize(_) => "localize",
            Command::Respond(_) => "respond",
            Command::Eval(_) => "eval",
            Command::Replay(_) => "replay",
        }
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ =
        tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).with_target(false).try_init();
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.global.verbose);
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let report = CliError::report(&e, cli.command.name());
            eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
            1
        }
    }
}

pub fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let file = config::FileConfig::load(cli.global.config.as_deref())?;
    let g = &cli.global;
    match &cli.command {
        Command::Synth(a) => synth::run(a, g, &file),
        Command::Analyze(a) => analyze::run(a, g, &file),
        Command::Localize(a) => localize::run(a, g, &file),
        Command::Respond(a) => respond::run(a, g, &file),
        Command::Eval(a) => eval::run(a, g, &file),
        Command::Replay(a) => replay::run(a, g, &file),
    }
}
