use std::io::{Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{JudgeError, SandboxJob, SandboxResult};
use crate::corpus::{truncate_utf8, TestStatus, MAX_MESSAGE_BYTES};

/// Request line written to the runner's stdin.
#[derive(Debug, Serialize)]
struct WireJob<'a> {
    program: &'a str,
    test: &'a str,
    cpu_ms: u64,
    mem_mb: u64,
}

/// Response line read from the runner's stdout.
#[derive(Debug, Deserialize)]
struct WireVerdict {
    status: TestStatus,
    duration_ms: u64,
    #[serde(default)]
    message: String,
}

/// Reads everything, keeping at most `cap` bytes. Keeps draining past the cap
/// so the child never blocks on a full pipe.
fn drain_capped(mut src: impl Read, cap: usize) -> (Vec<u8>, bool) {
    let mut kept = Vec::new();
    let mut truncated = false;
    let mut buf = [0u8; 8192];
    loop {
        match src.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                let room = cap.saturating_sub(kept.len());
                if n > room {
                    truncated = true;
                }
                kept.extend_from_slice(&buf[..n.min(room)]);
            }
        }
    }
    (kept, truncated)
}

fn kill_group(pgid: u32) {
    // SAFETY: plain syscall; ESRCH when the group is already gone is expected.
    unsafe {
        libc::killpg(pgid as libc::pid_t, libc::SIGKILL);
    }
}

fn wait_with_deadline(child: &mut Child, wall: Duration) -> std::io::Result<Option<ExitStatus>> {
    let start = Instant::now();
    let mut nap = Duration::from_millis(1);
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        let elapsed = start.elapsed();
        if elapsed >= wall {
            return Ok(None);
        }
        thread::sleep(nap.min(wall - elapsed));
        nap = (nap * 2).min(Duration::from_millis(10));
    }
}

fn tail(bytes: &[u8], max: usize) -> String {
    let text = String::from_utf8_lossy(bytes);
    let text = text.trim();
    if text.len() <= max {
        return text.to_string();
    }
    let mut start = text.len() - max;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    text[start..].to_string()
}

/// Runs one job in a fresh child process group.
///
/// The orchestrator's wall clock is authoritative: past `wall_time_ms` the whole
/// group is killed and the result is `timeout`. Any surviving group members are
/// killed after the runner exits. A misbehaving runner yields `error`, never `Err`.
pub fn run_job(job: &SandboxJob, runner: &Path) -> Result<SandboxResult, JudgeError> {
    if !runner.is_file() {
        return Err(JudgeError::RunnerMissing(runner.to_path_buf()));
    }
    let limits = job.limits;
    let request = serde_json::to_string(&WireJob {
        program: &job.program_text,
        test: &job.test_source,
        cpu_ms: limits.cpu_time_ms,
        mem_mb: limits.memory_mb,
    })
    .expect("job serializes")
        + "\n";

    let cpu_secs = limits.cpu_time_ms.div_ceil(1000) as libc::rlim_t + 1;
    let mut cmd = Command::new(runner);
    cmd.stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    // SAFETY: setrlimit is async-signal-safe and touches only the child.
    unsafe {
        cmd.pre_exec(move || {
            let lim = libc::rlimit {
                rlim_cur: cpu_secs,
                rlim_max: cpu_secs + 1,
            };
            libc::setrlimit(libc::RLIMIT_CPU, &lim);
            Ok(())
        });
    }

    let start = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e)
            if e.kind() == std::io::ErrorKind::NotFound
                || e.kind() == std::io::ErrorKind::PermissionDenied =>
        {
            return Err(JudgeError::RunnerNotExecutable {
                path: runner.to_path_buf(),
                detail: e.to_string(),
            })
        }
        Err(e) => {
            return Ok(SandboxResult {
                status: TestStatus::Error,
                duration_ms: 0,
                message: format!("failed to spawn runner: {e}"),
            })
        }
    };
    let pgid = child.id();
    let cap = limits.max_output_bytes as usize;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(request.as_bytes());
    });
    let stdout = child.stdout.take().expect("piped stdout");
    let out_reader = thread::spawn(move || drain_capped(stdout, cap));
    let stderr = child.stderr.take().expect("piped stderr");
    let err_reader = thread::spawn(move || drain_capped(stderr, cap));

    let waited = wait_with_deadline(&mut child, Duration::from_millis(limits.wall_time_ms));
    let exit = match waited {
        Ok(Some(status)) => Some(status),
        Ok(None) | Err(_) => {
            kill_group(pgid);
            let _ = child.wait();
            None
        }
    };
    // Reap whatever the runner left behind in its group.
    kill_group(pgid);
    let elapsed_ms = start.elapsed().as_millis() as u64;
    let _ = writer.join();
    let (out, out_truncated) = out_reader.join().unwrap_or_default();
    let (err, _) = err_reader.join().unwrap_or_default();

    let Some(exit) = exit else {
        return Ok(SandboxResult {
            status: TestStatus::Timeout,
            duration_ms: elapsed_ms,
            message: format!("wall time limit of {} ms exceeded", limits.wall_time_ms),
        });
    };

    let first_line = out.split(|&b| b == b'\n').next().unwrap_or_default();
    if let Ok(verdict) = serde_json::from_slice::<WireVerdict>(first_line) {
        return Ok(SandboxResult {
            status: verdict.status,
            duration_ms: verdict.duration_ms,
            message: truncate_utf8(verdict.message, MAX_MESSAGE_BYTES),
        });
    }

    let signal = exit.signal();
    let status = match signal {
        Some(libc::SIGXCPU) | Some(libc::SIGKILL) => TestStatus::ResourceExceeded,
        _ => TestStatus::Error,
    };
    let mut message = match signal {
        Some(sig) => format!("runner killed by signal {sig} without a verdict"),
        None => format!("runner exited with {exit} without a parseable verdict"),
    };
    if out_truncated {
        message.push_str(&format!("; stdout exceeded {cap} bytes"));
    }
    if !out.is_empty() {
        message.push_str(&format!("; stdout: {}", tail(&out, 512)));
    }
    if !err.is_empty() {
        message.push_str(&format!("; stderr: {}", tail(&err, 1024)));
    }
    Ok(SandboxResult {
        status,
        duration_ms: elapsed_ms,
        message: truncate_utf8(message, MAX_MESSAGE_BYTES),
    })
}
