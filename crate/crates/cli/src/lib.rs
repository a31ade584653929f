//! `pournet`: synthesize pours, train and evaluate the height regressor,
//! run closed-loop pouring and verify gradients.

mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use pouring_core::model::EncoderKind;
use serde::Serialize;
use serde_json::{Map, Value};

pub use config::RunConfig;
pub use error::CliError;

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("POURNET_GIT_DESCRIBE"), ")");

fn d() -> RunConfig {
    RunConfig::default()
}

#[derive(Debug, Parser)]
#[command(name = "pournet", version = VERSION, about = "Audio-based liquid height estimation for robotic pouring")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
#[command(next_help_heading = "Global options")]
pub struct GlobalArgs {
    /// TOML file with run options; flags given on the command line win
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value_os_t = d().out)]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = d().seed)]
    pub seed: u64,
    /// Worker threads [default: one per core]; 1 makes runs bit-reproducible
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Progress on stderr
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a dataset of pours (WAV, ground-truth trace, manifest)
    Synth(SynthArgs),
    /// Train a model on a synthesized dataset
    Train(TrainArgs),
    /// Compare checkpoints on a dataset
    Eval(EvalArgs),
    /// Closed-loop pouring episodes in simulation
    Pour(PourArgs),
    /// Check back-propagated gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Number of pours
    #[arg(long, default_value_t = d().pours)]
    pub pours: usize,
    /// Sample rate of the written WAV files, Hz
    #[arg(long, default_value_t = d().sample_rate)]
    pub sample_rate: u32,
    /// Containers to cycle through
    #[arg(long, value_delimiter = ',', default_values_t = d().containers)]
    pub containers: Vec<String>,
    /// TOML file with additional [[container]] entries
    #[arg(long)]
    pub container_library: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory (contains manifest.jsonl)
    #[arg(long, default_value_os_t = d().data)]
    pub data: PathBuf,
    /// Encoder: lstm, gru or fc
    #[arg(long, default_value_t = d().kind)]
    pub kind: EncoderKind,
    #[arg(long, default_value_t = d().hidden)]
    pub hidden: usize,
    /// Width of the regression head's hidden layer
    #[arg(long, default_value_t = d().head_hidden)]
    pub head_hidden: usize,
    /// Weight of the monotonicity loss
    #[arg(long, default_value_t = d().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = d().clip_seconds)]
    pub clip_seconds: f64,
    #[arg(long, default_value_t = d().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = d().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = d().epochs)]
    pub epochs: usize,
    /// Fraction of recordings held out for validation
    #[arg(long, default_value_t = d().val_fraction)]
    pub val_fraction: f64,
    /// Clips cut per second of recording
    #[arg(long, default_value_t = d().count_per_second)]
    pub count_per_second: f64,
    /// Network output unit, mm
    #[arg(long, default_value_t = d().label_scale_mm)]
    pub label_scale_mm: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Dataset directory (contains manifest.jsonl)
    #[arg(long, default_value_os_t = d().data)]
    pub data: PathBuf,
    /// Checkpoint as NAME=PATH or PATH; repeat to compare several
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<String>,
    /// Clips cut per second of recording
    #[arg(long, default_value_t = d().count_per_second)]
    pub count_per_second: f64,
    /// TOML file with additional [[container]] entries
    #[arg(long)]
    pub container_library: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PourArgs {
    /// Checkpoint driving the controller (not needed with --oracle)
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = d().container)]
    pub container: String,
    /// Target air-column lengths, mm
    #[arg(long, value_delimiter = ',', default_values_t = d().target_mm)]
    pub target_mm: Vec<f64>,
    /// Pours per target
    #[arg(long, default_value_t = d().repeats)]
    pub repeats: usize,
    /// Delay between the stop decision and the flow stopping, s
    #[arg(long, default_value_t = d().actuator_delay_s)]
    pub actuator_delay_s: f64,
    /// No stop decisions before this much audio, s
    #[arg(long, default_value_t = d().warmup_s)]
    pub warmup_s: f64,
    /// Feed the exact air column instead of a model estimate
    #[arg(long)]
    pub oracle: bool,
    /// TOML file with additional [[container]] entries
    #[arg(long)]
    pub container_library: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    /// Encoder kinds to check
    #[arg(long = "kinds", value_name = "KINDS", value_delimiter = ',', default_values_t = d().gradcheck_kinds)]
    pub gradcheck_kinds: Vec<EncoderKind>,
    /// Spectrogram bins per frame
    #[arg(long = "input", value_name = "BINS", default_value_t = d().gradcheck_input)]
    pub gradcheck_input: usize,
    /// Recurrent and head width
    #[arg(long = "hidden", value_name = "WIDTH", default_value_t = d().gradcheck_hidden)]
    pub gradcheck_hidden: usize,
    /// Sequence lengths to check
    #[arg(long = "frames", value_name = "T", value_delimiter = ',', default_values_t = d().gradcheck_frames)]
    pub gradcheck_frames: Vec<usize>,
    /// Seeds per (kind, length), starting at --seed
    #[arg(long = "seeds", value_name = "N", default_value_t = d().gradcheck_seeds)]
    pub gradcheck_seeds: u64,
    /// Largest accepted relative error
    #[arg(long = "tolerance", value_name = "REL", default_value_t = d().gradcheck_tolerance)]
    pub gradcheck_tolerance: f64,
    /// Test fixture: corrupt the analytic gradient of this tensor
    #[arg(long, hide = true)]
    pub corrupt_gradient: Option<String>,
}

/// The subset of `args` whose flags were typed on the command line.
fn explicit(levels: &[&ArgMatches], args: &impl Serialize) -> Result<Map<String, Value>, CliError> {
    let Value::Object(all) = serde_json::to_value(args)? else {
        unreachable!("argument structs serialize to objects")
    };
    Ok(all
        .into_iter()
        .filter(|(k, _)| {
            levels.iter().any(|m| matches!(m.try_get_raw(k), Ok(Some(_))) && m.value_source(k) == Some(ValueSource::CommandLine))
        })
        .collect())
}

fn resolve(cli: &Cli, matches: &ArgMatches) -> Result<RunConfig, CliError> {
    let (_, sub) = matches.subcommand().expect("a subcommand is required");
    let levels = [matches, sub];
    let mut flags = explicit(&levels, &cli.global)?;
    flags.extend(match &cli.command {
        Command::Synth(a) => explicit(&levels, a)?,
        Command::Train(a) => explicit(&levels, a)?,
        Command::Eval(a) => explicit(&levels, a)?,
        Command::Pour(a) => explicit(&levels, a)?,
        Command::Gradcheck(a) => explicit(&levels, a)?,
    });
    RunConfig::resolve(cli.global.config.as_deref(), flags)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = resolve(&cli, &matches).and_then(|config| {
        if let Some(n) = config.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        }
        commands::dispatch(&cli.command, &config)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
