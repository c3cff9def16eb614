//! Question/test synthesis through a chat-completion endpoint.
//!
//! Prompt construction and response parsing are pure; transport lives in
//! [`client`] and bounded-concurrency execution in [`batch`].

mod batch;
mod client;

pub use batch::{run_batch, BatchError, BatchOptions, RetryPolicy};
pub use client::{
    ChatClient, ClientError, FixtureClient, HttpChatClient, LlmConfig, Secret, ENV_API_BASE,
    ENV_API_KEY, ENV_MODEL,
};

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{SeedExample, Task};

const SYSTEM_TEMPLATE: &str = include_str!("../../templates/synth_system.txt");
const WITH_INSTRUCTION_TEMPLATE: &str = include_str!("../../templates/synth_with_instruction.txt");
const PROGRAM_ONLY_TEMPLATE: &str = include_str!("../../templates/synth_program_only.txt");
const ORACLE_TEMPLATE: &str = include_str!("../../templates/oracle_user.txt");

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("seed {seed_id} has no instruction but with_instruction mode was requested")]
    MissingInstruction { seed_id: String },
    #[error("no object with `question` and `tests` found in response")]
    NoObject { raw_response: String },
    #[error("response had no valid assert tests ({} dropped)", warnings.len())]
    NoValidTests {
        raw_response: String,
        warnings: Vec<String>,
    },
    #[error("task {task_id} has an empty question")]
    EmptyQuestion { task_id: String },
    #[error("empty response text")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// One request in a batch. `tag` identifies the item (seed or task id) for
/// fixture lookup and logging; it is not sent over the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub tag: String,
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    WithInstruction,
    ProgramOnly,
}

impl PromptMode {
    /// `WithInstruction` when the seed carries one, otherwise `ProgramOnly`.
    pub fn for_seed(seed: &SeedExample) -> Self {
        if seed.instruction.is_some() {
            PromptMode::WithInstruction
        } else {
            PromptMode::ProgramOnly
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::WithInstruction => "with_instruction",
            PromptMode::ProgramOnly => "program_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub question: String,
    pub tests: Vec<String>,
    pub raw_response: String,
    pub parse_warnings: Vec<String>,
}

static DEFINITION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^[ \t]*(?:(?:async[ \t]+)?def[ \t]+[A-Za-z_]\w*[ \t]*\(|class[ \t]+[A-Za-z_]\w*[ \t]*[:(])")
        .unwrap()
});

/// Keeps seeds whose program defines at least one function or class.
pub fn keep_seed(seed: &SeedExample) -> bool {
    DEFINITION.is_match(&seed.program_text)
}

/// Substitutes `{name}` slots in a single left-to-right pass; inserted values
/// are never rescanned.
fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out =
        String::with_capacity(template.len() + slots.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    loop {
        let next = slots
            .iter()
            .filter_map(|(name, value)| {
                let token = format!("{{{name}}}");
                rest.find(&token).map(|pos| (pos, token.len(), *value))
            })
            .min_by_key(|(pos, _, _)| *pos);
        match next {
            Some((pos, len, value)) => {
                out.push_str(&rest[..pos]);
                out.push_str(value);
                rest = &rest[pos + len..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

fn longest_backtick_run(text: &str) -> usize {
    let mut best = 0;
    let mut cur = 0;
    for c in text.chars() {
        if c == '`' {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 0;
        }
    }
    best
}

/// Fences the template's code block with more backticks than the program
/// contains, so embedded fences cannot close it early.
fn fenced_template(template: &str, program: &str) -> String {
    let run = longest_backtick_run(program);
    if run < 3 {
        template.to_string()
    } else {
        template.replace("```", &"`".repeat(run + 1))
    }
}

/// Builds the system + user conversation that turns a seed into a question with tests.
pub fn build_synthesis_prompt(
    seed: &SeedExample,
    mode: PromptMode,
) -> Result<Vec<Message>, SynthError> {
    let user = match mode {
        PromptMode::WithInstruction => {
            let instruction =
                seed.instruction
                    .as_deref()
                    .ok_or_else(|| SynthError::MissingInstruction {
                        seed_id: seed.seed_id.clone(),
                    })?;
            let template = fenced_template(WITH_INSTRUCTION_TEMPLATE, &seed.program_text);
            fill(
                &template,
                &[
                    ("instruction", instruction),
                    ("program", &seed.program_text),
                ],
            )
        }
        PromptMode::ProgramOnly => {
            let template = fenced_template(PROGRAM_ONLY_TEMPLATE, &seed.program_text);
            fill(&template, &[("program", &seed.program_text)])
        }
    };
    Ok(vec![Message::system(SYSTEM_TEMPLATE), Message::user(user)])
}

/// Builds the prompt asking a stronger model for one reference solution.
pub fn build_oracle_prompt(task: &Task) -> Result<Vec<Message>, SynthError> {
    if task.question_text.trim().is_empty() {
        return Err(SynthError::EmptyQuestion {
            task_id: task.task_id.clone(),
        });
    }
    Ok(vec![
        Message::system(SYSTEM_TEMPLATE),
        Message::user(fill(ORACLE_TEMPLATE, &[("question", &task.question_text)])),
    ])
}

/// `assert` followed by whitespace or `(`.
pub fn is_assert_source(test: &str) -> bool {
    match test.trim().strip_prefix("assert") {
        Some(rest) => rest.starts_with(|c: char| c.is_whitespace() || c == '('),
        None => false,
    }
}

/// Extracts the first JSON object with a string `question` and an array `tests`.
///
/// Fences and surrounding prose are skipped. Non-assert tests are dropped with a
/// warning; at least one test must survive.
pub fn parse_synthesis_response(text: &str) -> Result<SynthesisResult, SynthError> {
    for (pos, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[pos..]).into_iter::<Value>();
        let Some(Ok(Value::Object(obj))) = stream.next() else {
            continue;
        };
        let (Some(Value::String(question)), Some(Value::Array(raw_tests))) =
            (obj.get("question"), obj.get("tests"))
        else {
            continue;
        };
        if question.trim().is_empty() {
            continue;
        }
        let mut tests = Vec::new();
        let mut warnings = Vec::new();
        for (i, t) in raw_tests.iter().enumerate() {
            match t {
                Value::String(s) if is_assert_source(s) => tests.push(s.trim().to_string()),
                Value::String(s) => {
                    warnings.push(format!("test {i} is not an assert statement: {s:?}"))
                }
                other => warnings.push(format!("test {i} is not a string: {other}")),
            }
        }
        if tests.is_empty() {
            return Err(SynthError::NoValidTests {
                raw_response: text.to_string(),
                warnings,
            });
        }
        return Ok(SynthesisResult {
            question: question.trim().to_string(),
            tests,
            raw_response: text.to_string(),
            parse_warnings: warnings,
        });
    }
    Err(SynthError::NoObject {
        raw_response: text.to_string(),
    })
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Returns the body of the first fenced code block, or the trimmed text when
/// there is none (or the block is empty).
pub fn extract_program(text: &str) -> Result<String, SynthError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(SynthError::EmptyInput);
    }
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        if is_fence(line) {
            let body: Vec<&str> = lines.by_ref().take_while(|l| !is_fence(l)).collect();
            let body = body.join("\n");
            let body = body.trim_matches('\n');
            if !body.trim().is_empty() {
                return Ok(body.to_string());
            }
            break;
        }
    }
    Ok(trimmed.to_string())
}
