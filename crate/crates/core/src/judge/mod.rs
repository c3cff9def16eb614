//! Judging candidate programs by running each test in its own child process.
//!
//! The child is an external runner speaking a one-line JSON protocol:
//!
//! ```text
//! stdin : {"program": str, "test": str, "cpu_ms": int, "mem_mb": int}\n
//! stdout: {"status": "pass"|"fail"|"error"|"timeout"|"resource_exceeded", "duration_ms": int, "message": str}\n
//! ```

mod sandbox;

pub use sandbox::run_job;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{CandidateProgram, EvalRecord, Task, TestOutcome, TestStatus};
use crate::pool::map_ordered;

/// Environment variable naming the runner executable.
pub const ENV_RUNNER: &str = "ACE_RUNNER";
/// Name looked up on `PATH` when no runner is configured.
pub const DEFAULT_RUNNER: &str = "ace-runner";

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("runner {0} does not exist")]
    RunnerMissing(PathBuf),
    #[error("runner {path} cannot be executed: {detail}")]
    RunnerNotExecutable { path: PathBuf, detail: String },
    #[error(
        "no runner configured: pass --runner, set {ENV_RUNNER}, or put {DEFAULT_RUNNER} on PATH"
    )]
    NoRunner,
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
    #[error("program {task_id}#{sample_index} references unknown task")]
    DanglingTask { task_id: String, sample_index: u32 },
    #[error("sample {task_id}#{sample_index} appears more than once")]
    DuplicateSample { task_id: String, sample_index: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub cpu_time_ms: u64,
    pub wall_time_ms: u64,
    pub memory_mb: u64,
    pub max_output_bytes: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            cpu_time_ms: 5_000,
            wall_time_ms: 10_000,
            memory_mb: 512,
            max_output_bytes: 64 * 1024,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.cpu_time_ms == 0
            || self.wall_time_ms == 0
            || self.memory_mb == 0
            || self.max_output_bytes == 0
        {
            return Err(JudgeError::InvalidLimits(
                "all limits must be positive".into(),
            ));
        }
        if self.wall_time_ms < self.cpu_time_ms {
            return Err(JudgeError::InvalidLimits(format!(
                "wall_time_ms ({}) must be >= cpu_time_ms ({})",
                self.wall_time_ms, self.cpu_time_ms
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandboxJob {
    pub program_text: String,
    pub test_source: String,
    pub limits: Limits,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SandboxResult {
    pub status: TestStatus,
    pub duration_ms: u64,
    pub message: String,
}

impl From<SandboxResult> for TestOutcome {
    fn from(r: SandboxResult) -> Self {
        TestOutcome::new(r.status, r.duration_ms, r.message)
    }
}

/// Resolves the runner from an explicit path, then `ACE_RUNNER`, then `ace-runner` on `PATH`.
pub fn resolve_runner(explicit: Option<&Path>) -> Result<PathBuf, JudgeError> {
    let configured = explicit.map(Path::to_path_buf).or_else(|| {
        std::env::var_os(ENV_RUNNER)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    });
    let name = configured.unwrap_or_else(|| PathBuf::from(DEFAULT_RUNNER));
    if name.components().count() > 1 || name.is_absolute() {
        return if name.is_file() {
            Ok(name)
        } else {
            Err(JudgeError::RunnerMissing(name))
        };
    }
    let found = std::env::var_os("PATH")
        .into_iter()
        .flat_map(|p| std::env::split_paths(&p).collect::<Vec<_>>())
        .map(|dir| dir.join(&name))
        .find(|p| p.is_file());
    match found {
        Some(p) => Ok(p),
        None if name.is_file() => Ok(name),
        None if explicit.is_none() && std::env::var_os(ENV_RUNNER).is_none() => {
            Err(JudgeError::NoRunner)
        }
        None => Err(JudgeError::RunnerMissing(name)),
    }
}

fn check_runner(runner: &Path) -> Result<(), JudgeError> {
    if runner.is_file() {
        Ok(())
    } else {
        Err(JudgeError::RunnerMissing(runner.to_path_buf()))
    }
}

fn judge_one(program: &str, test: &str, limits: Limits, runner: &Path) -> TestOutcome {
    let job = SandboxJob {
        program_text: program.to_string(),
        test_source: test.to_string(),
        limits,
    };
    match run_job(&job, runner) {
        Ok(r) => r.into(),
        Err(e) => TestOutcome::new(TestStatus::Error, 0, e.to_string()),
    }
}

/// Runs every test of `task` against one program. Outcomes follow `task.tests` order.
pub fn evaluate_program(
    task: &Task,
    program: &CandidateProgram,
    limits: Limits,
    runner: &Path,
    parallelism: usize,
) -> Result<EvalRecord, JudgeError> {
    limits.validate()?;
    check_runner(runner)?;
    if task.tests.is_empty() {
        log::warn!(
            "task {} has no tests; record will be degenerate",
            task.task_id
        );
    }
    let outcomes = map_ordered(&task.tests, parallelism, |_, test| {
        judge_one(&program.source_text, test, limits, runner)
    });
    Ok(EvalRecord::new(
        task.task_id.clone(),
        program.sample_index,
        outcomes,
    ))
}

/// Judges every program against its task's tests, sharing one pool of
/// `parallelism` child-process slots. Records come back sorted by
/// `(task_id, sample_index)`.
pub fn evaluate_matrix(
    tasks: &[Task],
    programs: &[CandidateProgram],
    limits: Limits,
    runner: &Path,
    parallelism: usize,
) -> Result<Vec<EvalRecord>, JudgeError> {
    limits.validate()?;
    let by_id: HashMap<&str, &Task> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut seen = HashSet::new();
    for p in programs {
        if !by_id.contains_key(p.task_id.as_str()) {
            return Err(JudgeError::DanglingTask {
                task_id: p.task_id.clone(),
                sample_index: p.sample_index,
            });
        }
        if !seen.insert((p.task_id.as_str(), p.sample_index)) {
            return Err(JudgeError::DuplicateSample {
                task_id: p.task_id.clone(),
                sample_index: p.sample_index,
            });
        }
    }
    if programs.is_empty() {
        return Ok(Vec::new());
    }
    check_runner(runner)?;

    let mut ordered: Vec<&CandidateProgram> = programs.iter().collect();
    ordered.sort_by(|a, b| (&a.task_id, a.sample_index).cmp(&(&b.task_id, b.sample_index)));

    let jobs: Vec<(usize, &str)> = ordered
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| {
            by_id[p.task_id.as_str()]
                .tests
                .iter()
                .map(move |t| (pi, t.as_str()))
        })
        .collect();
    let mut outcomes = map_ordered(&jobs, parallelism, |_, &(pi, test)| {
        judge_one(&ordered[pi].source_text, test, limits, runner)
    })
    .into_iter();

    Ok(ordered
        .iter()
        .map(|p| {
            let n = by_id[p.task_id.as_str()].tests.len();
            if n == 0 {
                log::warn!("task {} has no tests; record will be degenerate", p.task_id);
            }
            EvalRecord::new(
                p.task_id.clone(),
                p.sample_index,
                outcomes.by_ref().take(n).collect(),
            )
        })
        .collect())
}

/// 1.0 when every test passed, else 0.0. A record with no outcomes scores 0.0.
pub fn binary_reward(record: &EvalRecord) -> f64 {
    if record.outcomes.is_empty() {
        log::warn!(
            "degenerate record {}#{} has no outcomes; reward 0.0",
            record.task_id,
            record.sample_index
        );
        return 0.0;
    }
    if record.outcomes.iter().all(|o| o.status.is_pass()) {
        1.0
    } else {
        0.0
    }
}
