//! Test filtering, preference-pair selection, pass-rate statistics and hard-subset selection.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    CandidateProgram, EvalRecord, Extra, PreferencePair, Record, Task, MIN_FILTERED_TESTS,
};
use crate::scalar::PassScalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefineError {
    #[error("oracle record for {task_id} has {outcomes} outcomes but the task has {tests} tests")]
    Misaligned {
        task_id: String,
        tests: usize,
        outcomes: usize,
    },
    #[error("oracle record is for {found}, expected {expected}")]
    TaskMismatch { expected: String, found: String },
    #[error("pass@k needs 1 <= k <= n and c <= n (n={n}, c={c}, k={k})")]
    PassAtK { n: u64, c: u64, k: u64 },
    #[error("no records to summarize")]
    Empty,
    #[error("fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
}

/// Keeps the tests the oracle passed, in their original order.
///
/// Returns `None` when fewer than five tests survive.
pub fn filter_tests(task: &Task, oracle: &EvalRecord) -> Result<Option<Task>, RefineError> {
    if oracle.task_id != task.task_id {
        return Err(RefineError::TaskMismatch {
            expected: task.task_id.clone(),
            found: oracle.task_id.clone(),
        });
    }
    if oracle.outcomes.len() != task.tests.len() {
        return Err(RefineError::Misaligned {
            task_id: task.task_id.clone(),
            tests: task.tests.len(),
            outcomes: oracle.outcomes.len(),
        });
    }
    let tests: Vec<String> = task
        .tests
        .iter()
        .zip(&oracle.outcomes)
        .filter(|(_, o)| o.status.is_pass())
        .map(|(t, _)| t.clone())
        .collect();
    if tests.len() < MIN_FILTERED_TESTS {
        return Ok(None);
    }
    Ok(Some(Task {
        tests,
        filtered: true,
        ..task.clone()
    }))
}

/// Preference-pair admission: `s_pos > s_neg + 0.4`, `s_pos > 0.8` and `s_neg > 0`, all strict.
pub fn pair_select<T: PassScalar>(s_pos: T, s_neg: T) -> bool {
    s_pos > s_neg + T::from_ratio(2, 5) && s_pos > T::from_ratio(4, 5) && s_neg > T::zero()
}

/// Emits every admissible ordered pair among one task's samples.
///
/// Rates are compared exactly. When `programs` supplies source text, a pair
/// whose (positive, negative) texts repeat an earlier pair is dropped. Output
/// is sorted by `(positive_index, negative_index)`. All records must share a task.
pub fn build_pairs(records: &[EvalRecord], programs: &[CandidateProgram]) -> Vec<PreferencePair> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    debug_assert!(records.iter().all(|r| r.task_id == first.task_id));
    let text: HashMap<u32, &str> = programs
        .iter()
        .filter(|p| p.task_id == first.task_id)
        .map(|p| (p.sample_index, p.source_text.as_str()))
        .collect();

    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.sample_index);

    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let mut out = Vec::new();
    for pos in &sorted {
        for neg in &sorted {
            if pos.sample_index == neg.sample_index
                || !pair_select(pos.exact_rate(), neg.exact_rate())
            {
                continue;
            }
            if let (Some(a), Some(b)) = (text.get(&pos.sample_index), text.get(&neg.sample_index)) {
                if !seen.insert((a, b)) {
                    continue;
                }
            }
            out.push(PreferencePair {
                task_id: first.task_id.clone(),
                positive_index: pos.sample_index,
                negative_index: neg.sample_index,
                s_pos: pos.pass_rate,
                s_neg: neg.pass_rate,
                extra: Extra::new(),
            });
        }
    }
    out
}

/// Groups records by task and builds pairs for each, in task-id order.
pub fn build_all_pairs(
    records: &[EvalRecord],
    programs: &[CandidateProgram],
) -> Vec<PreferencePair> {
    group_by_task(records)
        .into_iter()
        .flat_map(|(task_id, rs)| {
            let owned: Vec<EvalRecord> = rs.into_iter().cloned().collect();
            let progs: Vec<CandidateProgram> = programs
                .iter()
                .filter(|p| p.task_id == task_id)
                .cloned()
                .collect();
            build_pairs(&owned, &progs)
        })
        .collect()
}

/// Records grouped by task id, groups in lexicographic id order.
pub fn group_by_task(records: &[EvalRecord]) -> BTreeMap<&str, Vec<&EvalRecord>> {
    let mut groups: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.task_id.as_str()).or_default().push(r);
    }
    groups
}

/// Unbiased pass@k, `1 - C(n-c, k) / C(n, k)`, as a running product.
pub fn pass_at_k<F: Float>(n: u64, c: u64, k: u64) -> Result<F, RefineError> {
    if k == 0 || k > n || c > n {
        return Err(RefineError::PassAtK { n, c, k });
    }
    if n - c < k {
        return Ok(F::one());
    }
    let k_f = F::from(k).unwrap();
    let miss = (n - c + 1..=n).fold(F::one(), |acc, i| {
        acc * (F::one() - k_f / F::from(i).unwrap())
    });
    Ok(F::one() - miss)
}

/// Per-task pass-rate summary across samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPassStats {
    pub task_id: String,
    pub pass_rates: Vec<f64>,
    pub mean_pass_rate: f64,
    /// Population variance.
    pub variance: f64,
    /// Fraction of samples that passed every test.
    pub all_pass_fraction: f64,
    #[serde(flatten, default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: Extra,
}

impl Record for TaskPassStats {
    const SCHEMA: &'static str = "hard";
}

/// Summarizes one task's samples, counting a sample as all-pass when `all_pass_by` holds.
pub fn task_stats_by(
    records: &[&EvalRecord],
    all_pass_by: impl Fn(&EvalRecord) -> bool,
) -> Result<TaskPassStats, RefineError> {
    let first = records.first().ok_or(RefineError::Empty)?;
    let rates: Vec<f64> = records.iter().map(|r| r.pass_rate).collect();
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let variance = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let all_pass = records.iter().filter(|r| all_pass_by(r)).count() as f64 / n;
    Ok(TaskPassStats {
        task_id: first.task_id.clone(),
        pass_rates: rates,
        mean_pass_rate: mean,
        variance,
        all_pass_fraction: all_pass,
        extra: Extra::new(),
    })
}

/// [`task_stats_by`] with the exact `passed == total` test.
pub fn task_stats(records: &[&EvalRecord]) -> Result<TaskPassStats, RefineError> {
    task_stats_by(records, EvalRecord::all_pass)
}

/// Stats for every task in `records`, in task-id order.
pub fn all_task_stats(records: &[EvalRecord]) -> Vec<TaskPassStats> {
    group_by_task(records)
        .into_values()
        .map(|rs| task_stats(&rs).expect("groups are non-empty"))
        .collect()
}

/// Competition ranks (ties share the lowest rank) of `keys` under `cmp`.
fn min_ranks<K>(keys: &[K], cmp: impl Fn(&K, &K) -> Ordering) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| cmp(&keys[a], &keys[b]));
    let mut ranks = vec![0; keys.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = if pos > 0 && cmp(&keys[order[pos - 1]], &keys[i]) == Ordering::Equal {
            ranks[order[pos - 1]]
        } else {
            pos
        };
    }
    ranks
}

/// Picks the hardest `ceil(fraction * N)` tasks.
///
/// Score = rank of mean pass rate (ascending) + rank of variance (descending);
/// lower is harder, ties broken by task id. Output is in that order.
pub fn select_hard_subset(
    stats: &[TaskPassStats],
    fraction: f64,
) -> Result<Vec<String>, RefineError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(RefineError::BadFraction(fraction));
    }
    if stats.is_empty() {
        return Ok(Vec::new());
    }
    let means: Vec<f64> = stats.iter().map(|s| s.mean_pass_rate).collect();
    let vars: Vec<f64> = stats.iter().map(|s| s.variance).collect();
    let mean_rank = min_ranks(&means, |a, b| a.total_cmp(b));
    let var_rank = min_ranks(&vars, |a, b| b.total_cmp(a));
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| {
        (mean_rank[a] + var_rank[a])
            .cmp(&(mean_rank[b] + var_rank[b]))
            .then_with(|| stats[a].task_id.cmp(&stats[b].task_id))
    });
    let keep = (fraction * stats.len() as f64).ceil() as usize;
    Ok(order
        .into_iter()
        .take(keep.min(stats.len()))
        .map(|i| stats[i].task_id.clone())
        .collect())
}

/// Dataset-level pass-rate summary over an evaluation matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassRateReport {
    pub tasks: usize,
    /// Smallest sample count over tasks; pass@k is reported for k up to this.
    pub samples_per_task: usize,
    pub pass_at_k: Vec<(u64, f64)>,
    /// Mean over every (task, sample) pass rate.
    pub avg_test_case_pass: f64,
    /// Fraction of tasks where every sample passed every test.
    pub all_samples_pass_fraction: f64,
}

pub const REPORT_KS: [u64; 4] = [1, 4, 8, 16];

pub fn pass_rate_report(records: &[EvalRecord]) -> Option<PassRateReport> {
    if records.is_empty() {
        return None;
    }
    let groups = group_by_task(records);
    let samples = groups.values().map(Vec::len).min().unwrap_or(0);
    let pass_at_k = REPORT_KS
        .iter()
        .filter(|&&k| k as usize <= samples)
        .map(|&k| {
            let mean = groups
                .values()
                .map(|rs| {
                    let c = rs.iter().filter(|r| r.all_pass()).count() as u64;
                    pass_at_k::<f64>(rs.len() as u64, c, k).expect("k <= n by construction")
                })
                .sum::<f64>()
                / groups.len() as f64;
            (k, mean)
        })
        .collect();
    let avg = records.iter().map(|r| r.pass_rate).sum::<f64>() / records.len() as f64;
    let all = groups
        .values()
        .filter(|rs| rs.iter().all(|r| r.all_pass()))
        .count() as f64
        / groups.len() as f64;
    Some(PassRateReport {
        tasks: groups.len(),
        samples_per_task: samples,
        pass_at_k,
        avg_test_case_pass: avg,
        all_samples_pass_fraction: all,
    })
}

impl fmt::Display for PassRateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.pass_at_k {
            writeln!(f, "{:<56} {:>7.2}%", format!("Pass @ {k}"), v * 100.0)?;
        }
        writeln!(
            f,
            "{:<56} {:>7.2}%",
            "Avg Test Case Pass %",
            self.avg_test_case_pass * 100.0
        )?;
        writeln!(
            f,
            "{:<56} {:>7.2}%",
            format!(
                "% Question Where All {} Inferences Pass All Test Cases",
                self.samples_per_task
            ),
            self.all_samples_pass_fraction * 100.0
        )
    }
}
