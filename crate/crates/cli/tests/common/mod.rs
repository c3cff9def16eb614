//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ace_core::corpus::{CandidateProgram, Extra, Provenance, SourceTag, Task};
use serde_json::Value;

pub fn ace() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ace"));
    for var in [
        "ACE_RUNNER",
        "ACE_LLM_API_BASE",
        "ACE_LLM_API_KEY",
        "ACE_LLM_MODEL",
        "RUST_LOG",
    ] {
        c.env_remove(var);
    }
    c
}

pub fn run(args: &[&str]) -> Output {
    ace().args(args).output().expect("spawn ace")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The JSON object of the single `#ace ` line.
pub fn summary(o: &Output) -> Value {
    let out = stdout(o);
    let lines: Vec<&str> = out
        .lines()
        .filter_map(|l| l.strip_prefix("#ace "))
        .collect();
    assert_eq!(
        lines.len(),
        1,
        "expected one summary line in:\n{out}\nstderr:\n{}",
        stderr(o)
    );
    serde_json::from_str(lines[0]).unwrap()
}

pub fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, format!("#!/bin/sh\n{body}")).unwrap();
    fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
    path
}

/// A test tagged `#<m>` passes iff the program contains `ok:<m>;`.
/// Programs containing CRASH error out; `delay=<secs>` in the job sleeps first.
pub const MARKER_RUNNER: &str = r#"IFS= read -r line
d=$(printf '%s' "$line" | sed -n 's/.*delay=\([0-9.]*\).*/\1/p')
[ -n "$d" ] && sleep "$d"
case "$line" in
  *CRASH*) echo '{"status":"error","duration_ms":3,"message":"Traceback: boom"}'; exit 0 ;;
esac
m=$(printf '%s' "$line" | sed -n 's/.*"test":"[^"]*#\([a-z0-9]*\)".*/\1/p')
if [ -n "$m" ] && printf '%s' "$line" | grep -q "ok:$m;"; then
  echo '{"status":"pass","duration_ms":1,"message":""}'
else
  echo '{"status":"fail","duration_ms":2,"message":"AssertionError"}'
fi
"#;

pub fn marker_runner(dir: &Path) -> PathBuf {
    script(dir, "runner", MARKER_RUNNER)
}

pub fn tests_tagged(n: usize) -> Vec<String> {
    (1..=n)
        .map(|i| format!("assert f({i}) == {i}  #t{i}"))
        .collect()
}

/// A program passing exactly the tests whose tags are listed.
pub fn passing(tags: impl IntoIterator<Item = usize>) -> String {
    let marks: String = tags.into_iter().map(|i| format!("ok:t{i};")).collect();
    format!("def f(x):\n    return x  # {marks}")
}

pub fn task(question: &str, tests: Vec<String>, tag: SourceTag) -> Task {
    Task::new(
        question.into(),
        tests,
        Provenance {
            seed_id: format!("seed-{question}"),
            source_tag: Some(tag),
            ..Default::default()
        },
    )
}

pub fn program(task_id: &str, idx: u32, text: impl Into<String>) -> CandidateProgram {
    CandidateProgram {
        task_id: task_id.into(),
        sample_index: idx,
        source_text: text.into(),
        generator_tag: "toy".into(),
        sampling_temperature: Some(1.0),
        extra: Extra::new(),
    }
}

pub fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}
