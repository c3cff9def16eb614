use std::path::PathBuf;

use ace_core::corpus::{load_records, save_records, CandidateProgram, Task};
use ace_core::judge::{evaluate_matrix, resolve_runner};
use ace_core::refine::pass_rate_report;
use anyhow::Result;
use clap::Args;
use serde_json::json;

use crate::config::{JudgeArgs, PipelineConfig};
use crate::report::emit;

#[derive(Args, Debug)]
pub struct JudgeCmdArgs {
    /// Tasks file supplying the tests
    #[arg(long)]
    pub tasks: PathBuf,
    /// Candidate programs file
    #[arg(long)]
    pub programs: PathBuf,
    /// Output evaluations file, sorted by task and sample
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub judge: JudgeArgs,
}

pub fn run(args: &JudgeCmdArgs, cfg: &PipelineConfig) -> Result<()> {
    let limits = args.judge.limits(cfg)?;
    let runner = resolve_runner(args.judge.runner.as_deref())?;
    let tasks: Vec<Task> = load_records(&args.tasks)?;
    let programs: Vec<CandidateProgram> = load_records(&args.programs)?;
    let unfiltered = tasks.iter().filter(|t| !t.filtered).count();
    if unfiltered > 0 {
        log::warn!("{unfiltered} task(s) have not been through test filtering");
    }

    let records = evaluate_matrix(
        &tasks,
        &programs,
        limits,
        &runner,
        args.judge.parallelism(cfg),
    )?;
    save_records(&records, &args.out)?;

    let report = pass_rate_report(&records);
    if let Some(r) = &report {
        print!("{r}");
    }
    emit(
        "judge",
        json!({
            "tasks": tasks.len(),
            "programs": programs.len(),
            "evals": records.len(),
            "report": report,
        }),
    );
    Ok(())
}
