//! `ace`: pipeline stages over line-delimited corpus files.
//!
//! Every stage prints one `#ace {...}` JSON summary line on stdout.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod cmd;
mod config;
mod report;

use cmd::filter::FilterArgs;
use cmd::judge::JudgeCmdArgs;
use cmd::refine::{BonArgs, PairsArgs, SelectHardArgs};
use cmd::reward::RewardCmd;
use cmd::stats::StatsArgs;
use cmd::synthesize::SynthesizeArgs;
use config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(
    name = "ace",
    version,
    about = "Test-case-driven reward construction for code generation"
)]
struct Cli {
    /// TOML file with [llm], [limits], [rl], `parallelism` and `fraction` defaults
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Log progress to stderr (repeat for debug output)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn seed programs into questions with assert tests
    Synthesize(SynthesizeArgs),
    /// Drop tests an oracle program fails, and tasks left with fewer than five
    Filter(FilterArgs),
    /// Run every candidate program against its task's tests
    Judge(JudgeCmdArgs),
    /// Build preference pairs from evaluations
    Pairs(PairsArgs),
    /// Keep the tasks with low mean and high variance of pass rate
    SelectHard(SelectHardArgs),
    /// Summarize corpus files
    Stats(StatsArgs),
    /// Pick the highest-scoring sample per task
    Bon(BonArgs),
    /// Reward-model and policy-gradient quantities
    #[command(subcommand)]
    Reward(RewardCmd),
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = PipelineConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Synthesize(a) => cmd::synthesize::run(a, &cfg),
        Command::Filter(a) => cmd::filter::run(a, &cfg),
        Command::Judge(a) => cmd::judge::run(a, &cfg),
        Command::Pairs(a) => cmd::refine::pairs(a),
        Command::SelectHard(a) => cmd::refine::select_hard(a, &cfg),
        Command::Stats(a) => cmd::stats::run(a),
        Command::Bon(a) => cmd::refine::bon(a),
        Command::Reward(c) => cmd::reward::run(c, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
