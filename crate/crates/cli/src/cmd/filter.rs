use std::collections::HashMap;
use std::path::PathBuf;

use ace_core::corpus::{
    dataset_stats, load_records, save_records, CandidateProgram, EvalRecord, Task,
};
use ace_core::judge::{evaluate_matrix, resolve_runner};
use ace_core::refine::filter_tests;
use ace_core::synth::{build_oracle_prompt, extract_program, run_batch, BatchOptions, ChatRequest};
use anyhow::{Context, Result};
use clap::Args;
use serde_json::json;

use crate::config::{JudgeArgs, LlmArgs, PipelineConfig};
use crate::report::emit;

#[derive(Args, Debug)]
pub struct FilterArgs {
    /// Unfiltered tasks file
    #[arg(long)]
    pub tasks: PathBuf,
    /// Output file for tasks that keep at least five tests
    #[arg(long)]
    pub out: PathBuf,
    /// Precomputed oracle evaluations, one per task (lowest sample index wins).
    /// Without it, oracles are taken from each task or requested from the LLM and judged live.
    #[arg(long, value_name = "FILE")]
    pub oracle_evals: Option<PathBuf>,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[command(flatten)]
    pub judge: JudgeArgs,
}

pub fn run(args: &FilterArgs, cfg: &PipelineConfig) -> Result<()> {
    let tasks: Vec<Task> = load_records(&args.tasks)?;
    let oracles = match &args.oracle_evals {
        Some(path) => {
            let records: Vec<EvalRecord> = load_records(path)?;
            first_per_task(records)
        }
        None => live_oracles(&tasks, args, cfg)?,
    };

    let mut kept = Vec::new();
    let (mut missing, mut dropped) = (0usize, 0usize);
    for task in &tasks {
        let Some(oracle) = oracles.get(&task.task_id) else {
            log::warn!("task {}: no oracle evaluation; skipped", task.task_id);
            missing += 1;
            continue;
        };
        match filter_tests(task, oracle).with_context(|| format!("task {}", task.task_id))? {
            Some(t) => kept.push(t),
            None => {
                log::info!(
                    "task {}: fewer than five tests survive; dropped",
                    task.task_id
                );
                dropped += 1;
            }
        }
    }
    save_records(&kept, &args.out)?;

    let before = dataset_stats(&tasks, None);
    let after = dataset_stats(&kept, None);
    println!("{before}");
    println!("{after}");
    emit(
        "filter",
        json!({
            "tasks_in": tasks.len(),
            "tasks_out": kept.len(),
            "dropped_below_min": dropped,
            "missing_oracle": missing,
            "before": before,
            "after": after,
        }),
    );
    Ok(())
}

fn first_per_task(records: Vec<EvalRecord>) -> HashMap<String, EvalRecord> {
    let mut out: HashMap<String, EvalRecord> = HashMap::new();
    for r in records {
        match out.get(&r.task_id) {
            Some(prev) if prev.sample_index <= r.sample_index => {
                log::warn!(
                    "task {}: ignoring extra oracle sample {}",
                    r.task_id,
                    r.sample_index
                )
            }
            _ => {
                out.insert(r.task_id.clone(), r);
            }
        }
    }
    out
}

/// Oracle programs come from the task itself or, failing that, from the LLM.
fn live_oracles(
    tasks: &[Task],
    args: &FilterArgs,
    cfg: &PipelineConfig,
) -> Result<HashMap<String, EvalRecord>> {
    let limits = args.judge.limits(cfg)?;
    let runner = resolve_runner(args.judge.runner.as_deref())?;
    let mut programs: Vec<CandidateProgram> = Vec::new();
    let oracle = |task: &Task, text: String| CandidateProgram {
        task_id: task.task_id.clone(),
        sample_index: 0,
        source_text: text,
        generator_tag: "oracle".into(),
        sampling_temperature: None,
        extra: Default::default(),
    };

    let need: Vec<&Task> = tasks
        .iter()
        .filter(|t| t.oracle_program.is_none())
        .collect();
    for t in tasks {
        if let Some(p) = &t.oracle_program {
            programs.push(oracle(t, p.clone()));
        }
    }
    if !need.is_empty() {
        let (client, llm, _) = args.llm.client(&cfg.llm)?;
        let responses = run_batch(
            &need,
            |t| {
                Ok(ChatRequest {
                    tag: t.task_id.clone(),
                    messages: build_oracle_prompt(t)?,
                })
            },
            client.as_ref(),
            &BatchOptions::from(&llm),
        );
        for (task, response) in need.iter().zip(responses) {
            match response
                .map_err(anyhow::Error::from)
                .and_then(|r| Ok(extract_program(&r)?))
            {
                Ok(text) => programs.push(oracle(task, text)),
                Err(e) => log::warn!("task {}: no oracle program: {e}", task.task_id),
            }
        }
    }

    let parallelism = args.judge.parallelism(cfg);
    let records = evaluate_matrix(tasks, &programs, limits, &runner, parallelism)?;
    Ok(first_per_task(records))
}
