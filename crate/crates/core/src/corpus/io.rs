use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Highest schema major version this build reads.
pub const SCHEMA_MAJOR: u32 = 1;
const SCHEMA_VERSION: &str = "1.0";

/// A record kind that can be persisted in a line-delimited file.
pub trait Record: Serialize + DeserializeOwned {
    /// Schema name written to (and required in) the file header.
    const SCHEMA: &'static str;

    /// Record-level invariant check run on load.
    fn validate(&self) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: malformed {schema} record: {detail}")]
    Malformed {
        path: PathBuf,
        line: usize,
        schema: &'static str,
        detail: String,
    },
    #[error("{path}: expected schema `{expected}`, file declares `{found}`")]
    WrongSchema {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("{path}: schema version {found} is newer than supported major {SCHEMA_MAJOR}")]
    UnsupportedVersion { path: PathBuf, found: String },
}

/// First line of every corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub version: String,
}

impl Header {
    pub fn for_schema(schema: &str) -> Self {
        Header {
            schema: schema.to_string(),
            version: SCHEMA_VERSION.to_string(),
        }
    }

    pub fn major(&self) -> Option<u32> {
        self.version.split('.').next()?.parse().ok()
    }

    /// Reads just the header of a corpus file. `None` for an empty file.
    pub fn read(path: &Path) -> Result<Option<Header>, CorpusError> {
        let file = File::open(path).map_err(|source| io_err(path, source))?;
        let mut lines = BufReader::new(file).lines();
        match lines.next() {
            None => Ok(None),
            Some(line) => {
                let line = line.map_err(|source| io_err(path, source))?;
                if line.trim().is_empty() {
                    return Ok(None);
                }
                serde_json::from_str(&line)
                    .map(Some)
                    .map_err(|e| CorpusError::Malformed {
                        path: path.to_path_buf(),
                        line: 1,
                        schema: "header",
                        detail: e.to_string(),
                    })
            }
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads every record of kind `R` from `path`, in file order.
///
/// A zero-length file is an empty list. Line numbers in errors are 1-based
/// physical lines (the header is line 1).
pub fn load_records<R: Record>(path: impl AsRef<Path>) -> Result<Vec<R>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| io_err(path, source))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| io_err(path, source))?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            let header: Header =
                serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                    path: path.to_path_buf(),
                    line: lineno,
                    schema: R::SCHEMA,
                    detail: format!("bad header: {e}"),
                })?;
            if header.schema != R::SCHEMA {
                return Err(CorpusError::WrongSchema {
                    path: path.to_path_buf(),
                    expected: R::SCHEMA,
                    found: header.schema,
                });
            }
            match header.major() {
                Some(major) if major <= SCHEMA_MAJOR => {}
                _ => {
                    return Err(CorpusError::UnsupportedVersion {
                        path: path.to_path_buf(),
                        found: header.version,
                    })
                }
            }
            saw_header = true;
            continue;
        }
        let record: R = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: lineno,
            schema: R::SCHEMA,
            detail: e.to_string(),
        })?;
        record.validate().map_err(|detail| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: lineno,
            schema: R::SCHEMA,
            detail,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Writes `records` to `path` atomically (temp file in the same directory, then rename).
pub fn save_records<R: Record>(
    records: &[R],
    path: impl AsRef<Path>,
) -> Result<usize, CorpusError> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if path.is_dir() {
        return Err(io_err(
            path,
            std::io::Error::new(std::io::ErrorKind::IsADirectory, "target is a directory"),
        ));
    }
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|source| io_err(path, source))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        let header =
            serde_json::to_string(&Header::for_schema(R::SCHEMA)).expect("header serializes");
        writeln!(w, "{header}").map_err(|source| io_err(path, source))?;
        for record in records {
            let line = serde_json::to_string(record).map_err(|e| CorpusError::Malformed {
                path: path.to_path_buf(),
                line: 0,
                schema: R::SCHEMA,
                detail: e.to_string(),
            })?;
            writeln!(w, "{line}").map_err(|source| io_err(path, source))?;
        }
        w.flush().map_err(|source| io_err(path, source))?;
    }
    tmp.as_file()
        .sync_all()
        .map_err(|source| io_err(path, source))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EvalRecord, Provenance, Task, TestOutcome, TestStatus};
    use std::fs;

    fn task(q: &str, n: usize) -> Task {
        Task::new(
            q.into(),
            (0..n).map(|i| format!("assert f({i}) == {i}")).collect(),
            Provenance::default(),
        )
    }

    #[test]
    fn empty_file_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        fs::write(&p, "").unwrap();
        assert!(load_records::<Task>(&p).unwrap().is_empty());
    }

    #[test]
    fn three_tasks_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let tasks = vec![task("a", 1), task("b", 2), task("c", 3)];
        assert_eq!(save_records(&tasks, &p).unwrap(), 3);
        assert_eq!(load_records::<Task>(&p).unwrap(), tasks);
    }

    #[test]
    fn truncated_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        save_records(&[task("a", 1), task("b", 1)], &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let cut = &lines[1][..lines[1].len() / 2];
        lines[1] = cut;
        fs::write(&p, lines.join("\n")).unwrap();
        let err = load_records::<Task>(&p).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("tasks"), "{err}");
    }

    #[test]
    fn wrong_schema_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        save_records(&[task("a", 1)], &p).unwrap();
        let err = load_records::<EvalRecord>(&p).unwrap_err();
        assert!(matches!(err, CorpusError::WrongSchema { .. }));
    }

    #[test]
    fn newer_major_rejected_older_minor_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        fs::write(&p, "{\"schema\":\"tasks\",\"version\":\"2.0\"}\n").unwrap();
        assert!(matches!(
            load_records::<Task>(&p),
            Err(CorpusError::UnsupportedVersion { .. })
        ));
        fs::write(&p, "{\"schema\":\"tasks\",\"version\":\"1.7\"}\n").unwrap();
        assert!(load_records::<Task>(&p).unwrap().is_empty());
    }

    #[test]
    fn save_empty_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        assert_eq!(save_records::<EvalRecord>(&[], &p).unwrap(), 0);
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(Header::read(&p).unwrap().unwrap().schema, "evals");
    }

    #[test]
    fn save_to_directory_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(save_records(&[task("a", 1)], dir.path()).is_err());
    }

    #[test]
    fn unknown_fields_survive() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        let rec = EvalRecord::new("t", 0, vec![TestOutcome::new(TestStatus::Pass, 1, "")]);
        let mut line = serde_json::to_value(&rec).unwrap();
        line["annotator"] = serde_json::json!({"name": "x", "score": 3});
        fs::write(
            &p,
            format!("{{\"schema\":\"evals\",\"version\":\"1.0\"}}\n{line}\n"),
        )
        .unwrap();
        let loaded = load_records::<EvalRecord>(&p).unwrap();
        assert_eq!(loaded[0].extra["annotator"]["score"], 3);
        let p2 = dir.path().join("e2.jsonl");
        save_records(&loaded, &p2).unwrap();
        assert_eq!(load_records::<EvalRecord>(&p2).unwrap(), loaded);
    }

    #[test]
    fn inconsistent_pass_rate_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        let mut rec = EvalRecord::new("t", 0, vec![TestOutcome::new(TestStatus::Pass, 1, "")]);
        rec.pass_rate = 0.5;
        save_records(&[rec], &p).unwrap();
        assert!(matches!(
            load_records::<EvalRecord>(&p),
            Err(CorpusError::Malformed { line: 2, .. })
        ));
    }
}
