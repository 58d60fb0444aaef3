//! Line-delimited JSON input with reject collection.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A line that failed to parse or validate. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JsonlOutcome<T> {
    pub items: Vec<T>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt dataset: {malformed} of {total} lines malformed")]
    Corrupt { malformed: usize, total: usize },
}

pub fn read_jsonl<T, F>(path: impl AsRef<Path>, validate: F) -> Result<JsonlOutcome<T>, JsonlError>
where
    T: DeserializeOwned,
    F: FnMut(&T) -> Result<(), String>,
{
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| JsonlError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_jsonl(&text, validate)
}

/// Parses each non-blank line as `T`. Lines that fail to parse or fail
/// `validate` become rejects; more than half rejected is an error.
pub fn parse_jsonl<T, F>(text: &str, mut validate: F) -> Result<JsonlOutcome<T>, JsonlError>
where
    T: DeserializeOwned,
    F: FnMut(&T) -> Result<(), String>,
{
    let mut items = Vec::new();
    let mut rejects = Vec::new();
    let mut total = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let parsed = serde_json::from_str::<T>(line)
            .map_err(|e| e.to_string())
            .and_then(|item| validate(&item).map(|_| item));
        match parsed {
            Ok(item) => items.push(item),
            Err(reason) => rejects.push(Reject { line: i + 1, reason }),
        }
    }
    if rejects.len() * 2 > total {
        return Err(JsonlError::Corrupt {
            malformed: rejects.len(),
            total,
        });
    }
    Ok(JsonlOutcome { items, rejects })
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> std::io::Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).map_err(std::io::Error::other)?);
        out.push('\n');
    }
    std::fs::write(path, out)
}
