use std::path::PathBuf;

use ace_core::corpus::{
    dataset_stats, load_records, CandidateProgram, EvalRecord, Header, PreferencePair, Record,
    SeedExample, Task,
};
use ace_core::refine::{pass_rate_report, TaskPassStats};
use ace_core::{RewardModel, Trajectory};
use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::{json, Map, Value};

use super::refine::BonPick;
use crate::report::emit;

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Corpus files of any kind; tasks and pairs files are combined into one dataset table
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

fn count<R: Record>(path: &PathBuf) -> Result<usize> {
    Ok(load_records::<R>(path)?.len())
}

pub fn run(args: &StatsArgs) -> Result<()> {
    let mut tasks: Vec<Task> = Vec::new();
    let mut pairs: Vec<PreferencePair> = Vec::new();
    let mut evals: Vec<EvalRecord> = Vec::new();
    let (mut saw_tasks, mut saw_pairs) = (false, false);
    let mut files = Map::new();

    for path in &args.files {
        let header = Header::read(path)?
            .with_context(|| format!("{} is empty; cannot tell its kind", path.display()))?;
        let n = match header.schema.as_str() {
            "tasks" => {
                saw_tasks = true;
                let mut v: Vec<Task> = load_records(path)?;
                let n = v.len();
                tasks.append(&mut v);
                n
            }
            "pairs" => {
                saw_pairs = true;
                let mut v: Vec<PreferencePair> = load_records(path)?;
                let n = v.len();
                pairs.append(&mut v);
                n
            }
            "evals" => {
                let mut v: Vec<EvalRecord> = load_records(path)?;
                let n = v.len();
                evals.append(&mut v);
                n
            }
            "seeds" => count::<SeedExample>(path)?,
            "programs" => count::<CandidateProgram>(path)?,
            "hard" => count::<TaskPassStats>(path)?,
            "rmtoy" => count::<RewardModel>(path)?,
            "trajectories" => count::<Trajectory>(path)?,
            "bon" => count::<BonPick>(path)?,
            other => bail!("{}: unknown schema `{other}`", path.display()),
        };
        files.insert(
            path.display().to_string(),
            json!({ "schema": header.schema, "records": n }),
        );
    }

    let mut summary = json!({ "files": Value::Object(files) });
    if saw_tasks {
        let report = dataset_stats(&tasks, saw_pairs.then_some(pairs.as_slice()));
        println!("{report}");
        summary["dataset"] = json!(report);
    } else if saw_pairs {
        println!("{:<18} | {:>10}", "# Pairs", pairs.len());
        summary["pairs"] = json!(pairs.len());
    }
    if !evals.is_empty() {
        if let Some(report) = pass_rate_report(&evals) {
            print!("{report}");
            summary["pass_rates"] = json!(report);
        }
    }
    emit("stats", summary);
    Ok(())
}
