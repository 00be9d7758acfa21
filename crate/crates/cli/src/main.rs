//! Operator surface for the desk-scale travel-agent RL stack.
//!
//! Subcommands: `gen-world` (seeded world files), `gen-data` (benchmarks,
//! RL pools, and cold-start distillation), `train` (behavior cloning plus
//! replay-augmented RL with ablation switches), `eval` (final pass rate by
//! split and difficulty), and `inspect` (pretty-print one trajectory).
//!
//! Exit codes: 0 success, 2 usage error, 1 runtime error.

mod commands;
mod config;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "deeptravel",
    version,
    about = "Deterministic travel-agent RL sandbox and trainer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded world file and print its digest.
    GenWorld(GenWorldArgs),
    /// Synthesize queries, grade difficulty, and emit benchmark/training
    /// pools plus a cold-start teacher dataset.
    GenData(GenDataArgs),
    /// Behavior-clone (optional) and run replay-augmented RL training.
    Train(TrainArgs),
    /// Greedy-decode a benchmark and report final pass rates.
    Eval(EvalArgs),
    /// Pretty-print one persisted trajectory.
    Inspect(InspectArgs),
}

#[derive(clap::Args)]
pub struct GenWorldArgs {
    /// World seed (the DEEPTRAVEL_SEED environment variable overrides this).
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub cities: usize,
    #[arg(long, default_value_t = 30)]
    pub days: u32,
    /// First day of the schedule horizon (ISO date).
    #[arg(long)]
    pub start_date: Option<chrono::NaiveDate>,
    /// Probability that an ordered city pair has a flight link.
    #[arg(long, default_value_t = 0.85)]
    pub flight_link_prob: f64,
    /// Probability that an ordered city pair has a train link.
    #[arg(long, default_value_t = 0.85)]
    pub train_link_prob: f64,
    /// Probability that a record is sold out at refresh.
    #[arg(long, default_value_t = 0.08)]
    pub sold_out_rate: f64,
    /// Output world file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct GenDataArgs {
    /// World file produced by gen-world.
    #[arg(long)]
    pub world: PathBuf,
    /// Split spec: `name=constrained|unconstrained:easy/medium/hard`, comma
    /// separated. An empty spec writes nothing and exits 0.
    #[arg(long, default_value = "")]
    pub splits: String,
    /// Probe policy: oracle | uniform | noisy:<oracle_prob> | params:<file>.
    #[arg(long, default_value = "noisy:0.35")]
    pub probe: String,
    #[arg(long, default_value_t = 8)]
    pub probe_samples: usize,
    #[arg(long, default_value_t = 450)]
    pub train_count: usize,
    #[arg(long, default_value_t = 50)]
    pub val_count: usize,
    #[arg(long, default_value_t = 1000)]
    pub teacher_count: usize,
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    /// Stride-subsample cap for constrained queries before scoring.
    #[arg(long)]
    pub max_constrained_pool: Option<usize>,
    #[arg(long)]
    pub max_unconstrained_pool: Option<usize>,
    /// JSON file with {"allow": [ids], "deny": [ids]} manual overrides.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    /// Departure-day offsets from the world start date.
    #[arg(long, default_value = "2,6,10,14,18,22", value_delimiter = ',')]
    pub date_offsets: Vec<u32>,
    #[arg(long, default_value = "1,2,3", value_delimiter = ',')]
    pub trip_lengths: Vec<u32>,
    /// Budget constraint values, whole yuan.
    #[arg(long, default_value = "1500,2500", value_delimiter = ',')]
    pub budgets_yuan: Vec<i64>,
    #[arg(long, default_value = "riverside", value_delimiter = ',')]
    pub hotel_prefs: Vec<String>,
    /// Transport mode constraint values (flight, train).
    #[arg(long, default_value = "train", value_delimiter = ',')]
    pub mode_prefs: Vec<String>,
    /// Destination landmarks offered as POI requirements.
    #[arg(long, default_value_t = 1)]
    pub poi_landmarks: usize,
    /// Arrival deadline values, HH:MM.
    #[arg(long, default_value = "15:00", value_delimiter = ',')]
    pub deadlines: Vec<String>,
    /// Skip cold-start distillation of the teacher pool.
    #[arg(long)]
    pub skip_distill: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    /// Full method.
    None,
    /// Replay disabled: the buffer fills but is never sampled.
    NoEr,
    /// Skip the behavior-cloning cold start.
    NoCs,
    /// Trajectory-level verifier forced to pass.
    NoTraj,
    /// Turn-level verifier forced to pass.
    NoTurn,
}

#[derive(clap::Args)]
pub struct TrainArgs {
    /// Flat TOML config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub world: PathBuf,
    /// Training query pool (JSON lines).
    #[arg(long)]
    pub data: PathBuf,
    /// Teacher trajectory dataset for the cold start.
    #[arg(long)]
    pub cold_start: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Ablation::None)]
    pub ablation: Ablation,
    /// Resume from a checkpoint file.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Override a config key, e.g. --set total_steps=100. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct EvalArgs {
    /// Policy parameters file.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub world: PathBuf,
    /// Benchmark query files; repeatable.
    #[arg(long, required = true)]
    pub benchmark: Vec<PathBuf>,
    /// Write the per-cell JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub max_turns: usize,
}

#[derive(clap::Args)]
pub struct InspectArgs {
    /// Trajectory JSON-lines file.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Zero-based line index.
    #[arg(long)]
    pub index: usize,
    /// Query pool to join on query id for re-verification.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Print full segment bodies instead of truncating.
    #[arg(long)]
    pub full: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenWorld(args) => commands::gen_world(args),
        Command::GenData(args) => commands::gen_data(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Inspect(args) => commands::inspect(args),
    };
    match result {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(1)
        }
    }
}
