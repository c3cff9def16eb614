use std::collections::HashSet;
use std::path::PathBuf;

use ace_core::corpus::{load_records, save_records, Provenance, SeedExample, Task};
use ace_core::synth::{
    build_synthesis_prompt, keep_seed, parse_synthesis_response, run_batch, BatchOptions,
    ChatRequest, PromptMode,
};
use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use serde_json::json;

use crate::config::{LlmArgs, PipelineConfig};
use crate::report::emit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// With-instruction prompt when the seed has an instruction, program-only otherwise
    Auto,
    WithInstruction,
    ProgramOnly,
}

impl ModeArg {
    fn for_seed(self, seed: &SeedExample) -> PromptMode {
        match self {
            ModeArg::Auto => PromptMode::for_seed(seed),
            ModeArg::WithInstruction => PromptMode::WithInstruction,
            ModeArg::ProgramOnly => PromptMode::ProgramOnly,
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    /// Seed examples file
    #[arg(long)]
    pub seeds: PathBuf,
    /// Output tasks file (unfiltered)
    #[arg(long)]
    pub out: PathBuf,
    /// Prompt variant
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub llm: LlmArgs,
}

pub fn run(args: &SynthesizeArgs, cfg: &PipelineConfig) -> Result<()> {
    let seeds: Vec<SeedExample> = load_records(&args.seeds)?;
    let kept: Vec<&SeedExample> = seeds.iter().filter(|s| keep_seed(s)).collect();
    log::info!(
        "{} of {} seeds define a function or class",
        kept.len(),
        seeds.len()
    );

    let mut tasks = Vec::new();
    let (mut parse_failures, mut request_failures, mut duplicates) = (0usize, 0usize, 0usize);
    if !kept.is_empty() {
        let (client, llm, label) = args.llm.client(&cfg.llm)?;
        let responses = run_batch(
            &kept,
            |s| {
                Ok(ChatRequest {
                    tag: s.seed_id.clone(),
                    messages: build_synthesis_prompt(s, args.mode.for_seed(s))?,
                })
            },
            client.as_ref(),
            &BatchOptions::from(&llm),
        );
        let mut seen = HashSet::new();
        for (seed, response) in kept.iter().zip(responses) {
            let text = match response {
                Ok(t) => t,
                Err(e) => {
                    log::warn!("seed {}: {e}", seed.seed_id);
                    request_failures += 1;
                    continue;
                }
            };
            let parsed = match parse_synthesis_response(&text) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("seed {}: {e}", seed.seed_id);
                    parse_failures += 1;
                    continue;
                }
            };
            for w in &parsed.parse_warnings {
                log::debug!("seed {}: {w}", seed.seed_id);
            }
            let provenance = Provenance {
                seed_id: seed.seed_id.clone(),
                source_tag: Some(seed.source_tag),
                mode: Some(args.mode.for_seed(seed).as_str().into()),
                model: Some(label.clone()),
                ..Default::default()
            };
            let task = Task::new(parsed.question, parsed.tests, provenance);
            if seen.insert(task.task_id.clone()) {
                tasks.push(task);
            } else {
                log::warn!("seed {}: duplicate question {}", seed.seed_id, task.task_id);
                duplicates += 1;
            }
        }
    }

    emit(
        "synthesize",
        json!({
            "seeds_read": seeds.len(),
            "kept": kept.len(),
            "synthesized": tasks.len(),
            "parse_failures": parse_failures,
            "request_failures": request_failures,
            "duplicates": duplicates,
        }),
    );
    if tasks.is_empty() {
        bail!(
            "no task was synthesized; nothing written to {}",
            args.out.display()
        );
    }
    save_records(&tasks, &args.out)?;
    Ok(())
}
