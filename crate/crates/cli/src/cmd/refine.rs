use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use ace_core::corpus::{
    load_records, save_records, CandidateProgram, EvalRecord, Extra, Record, Task,
};
use ace_core::refine::{all_task_stats, build_all_pairs, group_by_task, select_hard_subset};
use ace_core::rewardmath::{best_of_n, featurize};
use ace_core::RewardModel;
use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::report::emit;

#[derive(Args, Debug)]
pub struct PairsArgs {
    /// Evaluations file
    #[arg(long)]
    pub evals: PathBuf,
    /// Programs file; when given, pairs repeating an earlier (positive, negative) text are dropped
    #[arg(long)]
    pub programs: Option<PathBuf>,
    /// Output pairs file
    #[arg(long)]
    pub out: PathBuf,
}

pub fn pairs(args: &PairsArgs) -> Result<()> {
    let records: Vec<EvalRecord> = load_records(&args.evals)?;
    let programs: Vec<CandidateProgram> = match &args.programs {
        Some(p) => load_records(p)?,
        None => Vec::new(),
    };
    let pairs = build_all_pairs(&records, &programs);
    save_records(&pairs, &args.out)?;
    let with_pairs = pairs
        .iter()
        .map(|p| p.task_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    emit(
        "pairs",
        json!({
            "tasks": group_by_task(&records).len(),
            "tasks_with_pairs": with_pairs,
            "evals": records.len(),
            "pairs": pairs.len(),
        }),
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct SelectHardArgs {
    /// Evaluations file (several samples per task)
    #[arg(long)]
    pub evals: PathBuf,
    /// Share of tasks to keep [default: 0.25]
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Output file of per-task statistics for the kept tasks, hardest first
    #[arg(long)]
    pub out: PathBuf,
}

pub fn select_hard(args: &SelectHardArgs, cfg: &PipelineConfig) -> Result<()> {
    let fraction = args.fraction.or(cfg.fraction).unwrap_or(0.25);
    let records: Vec<EvalRecord> = load_records(&args.evals)?;
    let stats = all_task_stats(&records);
    let ids = select_hard_subset(&stats, fraction)?;
    let by_id: HashMap<&str, _> = stats.iter().map(|s| (s.task_id.as_str(), s)).collect();
    let kept: Vec<_> = ids.iter().map(|id| by_id[id.as_str()].clone()).collect();
    save_records(&kept, &args.out)?;
    emit(
        "select-hard",
        json!({ "tasks": stats.len(), "selected": kept.len(), "fraction": fraction }),
    );
    Ok(())
}

/// One Best-of-N choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonPick {
    pub task_id: String,
    pub sample_index: u32,
    pub score: f64,
    pub candidates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all_pass: Option<bool>,
    #[serde(flatten, default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: Extra,
}

impl Record for BonPick {
    const SCHEMA: &'static str = "bon";
}

#[derive(Args, Debug)]
pub struct BonArgs {
    /// Evaluations file; without --model the pass rates themselves are the scores
    #[arg(long)]
    pub evals: Option<PathBuf>,
    /// Linear reward model (from `reward bt-train`) used to score programs
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Tasks file (required with --model)
    #[arg(long, requires = "model")]
    pub tasks: Option<PathBuf>,
    /// Programs file (required with --model)
    #[arg(long, requires = "model")]
    pub programs: Option<PathBuf>,
    /// Output file of one pick per task
    #[arg(long)]
    pub out: PathBuf,
}

pub fn bon(args: &BonArgs) -> Result<()> {
    let records: Vec<EvalRecord> = match &args.evals {
        Some(p) => load_records(p)?,
        None => Vec::new(),
    };
    let evals: HashMap<(&str, u32), &EvalRecord> = records
        .iter()
        .map(|r| ((r.task_id.as_str(), r.sample_index), r))
        .collect();

    // Candidates per task as (sample_index, score), in ascending sample order.
    let mut candidates: BTreeMap<String, Vec<(u32, f64)>> = BTreeMap::new();
    match &args.model {
        Some(model_path) => {
            let (Some(tasks_path), Some(programs_path)) = (&args.tasks, &args.programs) else {
                bail!("--model needs --tasks and --programs");
            };
            let mut models: Vec<RewardModel> = load_records(model_path)?;
            let model = models
                .pop()
                .with_context(|| format!("{} holds no model", model_path.display()))?;
            let tasks: Vec<Task> = load_records(tasks_path)?;
            let questions: HashMap<&str, &str> = tasks
                .iter()
                .map(|t| (t.task_id.as_str(), t.question_text.as_str()))
                .collect();
            let programs: Vec<CandidateProgram> = load_records(programs_path)?;
            for p in &programs {
                let q = questions.get(p.task_id.as_str()).with_context(|| {
                    format!("program {}#{} has no task", p.task_id, p.sample_index)
                })?;
                let score = model.score(&featurize(q, &p.source_text, model.dim()))?;
                candidates
                    .entry(p.task_id.clone())
                    .or_default()
                    .push((p.sample_index, score));
            }
        }
        None => {
            if args.evals.is_none() {
                bail!("pass --evals (pass rates as scores) or --model with --tasks and --programs");
            }
            for r in &records {
                candidates
                    .entry(r.task_id.clone())
                    .or_default()
                    .push((r.sample_index, r.pass_rate));
            }
        }
    }

    let mut picks = Vec::with_capacity(candidates.len());
    for (task_id, mut cands) in candidates {
        cands.sort_by_key(|c| c.0);
        let scores: Vec<f64> = cands.iter().map(|c| c.1).collect();
        let best = best_of_n(&scores).with_context(|| format!("task {task_id}"))?;
        let (sample_index, score) = cands[best];
        let eval = evals.get(&(task_id.as_str(), sample_index));
        picks.push(BonPick {
            pass_rate: eval.map(|r| r.pass_rate),
            all_pass: eval.map(|r| r.all_pass()),
            task_id,
            sample_index,
            score,
            candidates: cands.len(),
            extra: Extra::new(),
        });
    }
    save_records(&picks, &args.out)?;

    let mut summary = json!({ "tasks": picks.len() });
    if !records.is_empty() && !picks.is_empty() {
        let n = picks.len() as f64;
        let judged: Vec<&BonPick> = picks.iter().filter(|p| p.pass_rate.is_some()).collect();
        let oracle = group_by_task(&records)
            .values()
            .filter(|rs| rs.iter().any(|r| r.all_pass()))
            .count() as f64;
        summary["mean_selected_pass_rate"] = json!(
            judged.iter().filter_map(|p| p.pass_rate).sum::<f64>() / judged.len().max(1) as f64
        );
        summary["selected_all_pass_fraction"] =
            json!(judged.iter().filter(|p| p.all_pass == Some(true)).count() as f64 / n);
        summary["oracle_all_pass_fraction"] = json!(oracle / n);
    }
    emit("bon", summary);
    Ok(())
}
