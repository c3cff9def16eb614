//! Record types for every pipeline stage and their line-delimited persistence.
//!
//! Each file starts with a header line `{"schema":"<kind>","version":"1.0"}`
//! followed by one JSON object per line. Unknown fields on any record are kept
//! in its `extra` map and written back unchanged.

mod io;
mod stats;

pub use io::{load_records, save_records, CorpusError, Header, Record, SCHEMA_MAJOR};
pub use stats::{dataset_stats, StatsReport, SubsetStats};

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::scalar::ExactRate;

/// Opaque passthrough fields.
pub type Extra = Map<String, Value>;

/// Upper bound on a stored [`TestOutcome::message`], in bytes.
pub const MAX_MESSAGE_BYTES: usize = 4096;

/// Seed corpus a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Evol,
    Oss,
    Stack,
}

impl SourceTag {
    pub const ALL: [SourceTag; 3] = [SourceTag::Evol, SourceTag::Oss, SourceTag::Stack];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Evol => "evol",
            SourceTag::Oss => "oss",
            SourceTag::Stack => "stack",
        }
    }

    /// Column heading used in dataset reports.
    pub fn display_name(self) -> &'static str {
        match self {
            SourceTag::Evol => "Evol",
            SourceTag::Oss => "OSS",
            SourceTag::Stack => "Stack Python",
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedExample {
    pub seed_id: String,
    /// Absent for raw-function seeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    pub program_text: String,
    pub source_tag: SourceTag,
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Extra,
}

/// Where a task came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<SourceTag>,
    /// Prompt variant used during synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Extra,
}

/// A refined question with its assert-style tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub question_text: String,
    pub tests: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_program: Option<String>,
    pub provenance: Provenance,
    #[serde(default)]
    pub filtered: bool,
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Extra,
}

/// Minimum number of surviving tests for a filtered task.
pub const MIN_FILTERED_TESTS: usize = 5;

impl Task {
    /// Builds an unfiltered task, deriving the id from the source tag and question.
    pub fn new(question_text: String, tests: Vec<String>, provenance: Provenance) -> Self {
        let tag = provenance.source_tag;
        Task {
            task_id: task_id_for(tag, &question_text),
            question_text,
            tests: tests.into_iter().map(|t| t.trim().to_string()).collect(),
            oracle_program: None,
            provenance,
            filtered: false,
            extra: Extra::new(),
        }
    }

    pub fn source_tag(&self) -> Option<SourceTag> {
        self.provenance.source_tag.or_else(|| {
            let prefix = self.task_id.split('-').next()?;
            SourceTag::ALL.into_iter().find(|t| t.as_str() == prefix)
        })
    }
}

/// `<source_tag>-<first 16 hex chars of sha256(question)>`.
///
/// Tasks without a known source use the prefix `task`.
pub fn task_id_for(tag: Option<SourceTag>, question_text: &str) -> String {
    let digest = Sha256::digest(question_text.as_bytes());
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    let prefix = tag.map(SourceTag::as_str).unwrap_or("task");
    format!("{prefix}-{hex}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProgram {
    pub task_id: String,
    pub sample_index: u32,
    /// May be empty for a degenerate sample.
    pub source_text: String,
    pub generator_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_temperature: Option<f64>,
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Extra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
    Timeout,
    ResourceExceeded,
}

impl TestStatus {
    pub fn is_pass(self) -> bool {
        self == TestStatus::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub status: TestStatus,
    pub duration_ms: u64,
    pub message: String,
}

impl TestOutcome {
    pub fn new(status: TestStatus, duration_ms: u64, message: impl Into<String>) -> Self {
        TestOutcome {
            status,
            duration_ms,
            message: truncate_utf8(message.into(), MAX_MESSAGE_BYTES),
        }
    }
}

/// Truncates to at most `max` bytes on a char boundary.
pub fn truncate_utf8(mut s: String, max: usize) -> String {
    if s.len() > max {
        let mut cut = max;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
    s
}

/// Judged outcome of one program against one task's tests.
///
/// The pass rate is stored both as an exact count pair and as a real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task_id: String,
    pub sample_index: u32,
    pub outcomes: Vec<TestOutcome>,
    pub passed: u64,
    pub total: u64,
    pub pass_rate: f64,
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Extra,
}

impl EvalRecord {
    pub fn new(task_id: impl Into<String>, sample_index: u32, outcomes: Vec<TestOutcome>) -> Self {
        let passed = outcomes.iter().filter(|o| o.status.is_pass()).count() as u64;
        let total = outcomes.len() as u64;
        let mut record = EvalRecord {
            task_id: task_id.into(),
            sample_index,
            outcomes,
            passed,
            total,
            pass_rate: 0.0,
            extra: Extra::new(),
        };
        record.pass_rate = record.exact_rate().to_f64_lossy();
        record
    }

    /// `passed / total`; zero for a record with no outcomes.
    pub fn exact_rate(&self) -> ExactRate {
        if self.total == 0 {
            ExactRate::new(0, 1)
        } else {
            ExactRate::new(self.passed, self.total)
        }
    }

    pub fn all_pass(&self) -> bool {
        self.total > 0 && self.passed == self.total
    }
}

trait RatioToF64 {
    fn to_f64_lossy(&self) -> f64;
}

impl RatioToF64 for ExactRate {
    fn to_f64_lossy(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

/// Ordered (positive, negative) program pair for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub task_id: String,
    pub positive_index: u32,
    pub negative_index: u32,
    pub s_pos: f64,
    pub s_neg: f64,
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Extra,
}

impl Record for SeedExample {
    const SCHEMA: &'static str = "seeds";

    fn validate(&self) -> Result<(), String> {
        if self.program_text.is_empty() {
            return Err(format!("seed {} has empty program_text", self.seed_id));
        }
        Ok(())
    }
}

impl Record for Task {
    const SCHEMA: &'static str = "tasks";

    fn validate(&self) -> Result<(), String> {
        if self.filtered && self.tests.len() < MIN_FILTERED_TESTS {
            return Err(format!(
                "task {} is marked filtered but has {} tests (< {MIN_FILTERED_TESTS})",
                self.task_id,
                self.tests.len()
            ));
        }
        Ok(())
    }
}

impl Record for CandidateProgram {
    const SCHEMA: &'static str = "programs";
}

impl Record for EvalRecord {
    const SCHEMA: &'static str = "evals";

    fn validate(&self) -> Result<(), String> {
        let passed = self.outcomes.iter().filter(|o| o.status.is_pass()).count() as u64;
        if passed != self.passed || self.outcomes.len() as u64 != self.total {
            return Err(format!(
                "record {}#{}: counts {}/{} disagree with outcomes {}/{}",
                self.task_id,
                self.sample_index,
                self.passed,
                self.total,
                passed,
                self.outcomes.len()
            ));
        }
        let expected = self.exact_rate().to_f64_lossy();
        if (expected - self.pass_rate).abs() > 1e-12 {
            return Err(format!(
                "record {}#{}: pass_rate {} != {}/{}",
                self.task_id, self.sample_index, self.pass_rate, self.passed, self.total
            ));
        }
        Ok(())
    }
}

impl Record for PreferencePair {
    const SCHEMA: &'static str = "pairs";

    fn validate(&self) -> Result<(), String> {
        if self.positive_index == self.negative_index {
            return Err(format!("pair on {} uses one sample twice", self.task_id));
        }
        Ok(())
    }
}
