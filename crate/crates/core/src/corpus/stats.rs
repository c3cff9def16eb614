use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use super::{PreferencePair, SourceTag, Task};

/// One column of a dataset report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetStats {
    pub subset: String,
    pub examples: usize,
    /// Absent when the subset has no tasks.
    pub avg_test_cases: Option<f64>,
    /// Present only when pairs were supplied.
    pub pairs: Option<usize>,
}

/// Dataset-level counts: examples, mean tests per task and pairs, per source subset and overall.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    /// `true` when every task carries `filtered = true`.
    pub after_filtering: bool,
    pub subsets: Vec<SubsetStats>,
}

impl StatsReport {
    pub fn overall(&self) -> &SubsetStats {
        self.subsets
            .last()
            .expect("overall column is always present")
    }
}

fn column(name: &str, tasks: &[&Task], pairs: Option<usize>) -> SubsetStats {
    let avg = if tasks.is_empty() {
        None
    } else {
        Some(tasks.iter().map(|t| t.tests.len() as f64).sum::<f64>() / tasks.len() as f64)
    };
    SubsetStats {
        subset: name.to_string(),
        examples: tasks.len(),
        avg_test_cases: avg,
        pairs,
    }
}

/// Summarizes tasks (and optionally their preference pairs) per source subset.
///
/// Subsets with no tasks are omitted; the last column is always `Overall`.
pub fn dataset_stats(tasks: &[Task], pairs: Option<&[PreferencePair]>) -> StatsReport {
    let mut by_tag: BTreeMap<SourceTag, Vec<&Task>> = BTreeMap::new();
    let mut tag_of: HashMap<&str, SourceTag> = HashMap::new();
    for t in tasks {
        if let Some(tag) = t.source_tag() {
            by_tag.entry(tag).or_default().push(t);
            tag_of.insert(&t.task_id, tag);
        }
    }
    let pair_count = |tag: Option<SourceTag>| {
        pairs.map(|ps| {
            ps.iter()
                .filter(|p| tag.is_none() || tag_of.get(p.task_id.as_str()).copied() == tag)
                .count()
        })
    };
    let mut subsets: Vec<SubsetStats> = by_tag
        .iter()
        .map(|(tag, ts)| column(tag.display_name(), ts, pair_count(Some(*tag))))
        .collect();
    let all: Vec<&Task> = tasks.iter().collect();
    subsets.push(column("Overall", &all, pair_count(None)));
    StatsReport {
        after_filtering: !tasks.is_empty() && tasks.iter().all(|t| t.filtered),
        subsets,
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stage = if self.after_filtering {
            "After Filtering"
        } else {
            "Before Filtering"
        };
        let width = self
            .subsets
            .iter()
            .map(|s| s.subset.len())
            .max()
            .unwrap_or(0)
            .max(10);
        write!(f, "{:<18}", "Subset")?;
        for s in &self.subsets {
            write!(f, " | {:>width$}", s.subset)?;
        }
        writeln!(f)?;
        writeln!(f, "{stage}")?;
        write!(f, "{:<18}", "# Examples")?;
        for s in &self.subsets {
            write!(f, " | {:>width$}", s.examples)?;
        }
        writeln!(f)?;
        write!(f, "{:<18}", "# Avg Test Cases")?;
        for s in &self.subsets {
            match s.avg_test_cases {
                Some(v) => write!(f, " | {:>width$.2}", v)?,
                None => write!(f, " | {:>width$}", "-")?,
            }
        }
        writeln!(f)?;
        if self.subsets.iter().any(|s| s.pairs.is_some()) {
            write!(f, "{:<18}", "# Pairs")?;
            for s in &self.subsets {
                match s.pairs {
                    Some(v) => write!(f, " | {:>width$}", v)?,
                    None => write!(f, " | {:>width$}", "-")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
