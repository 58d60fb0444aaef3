//! Lenient readers for agent output.

use serde::de::DeserializeOwned;

use super::types::SocratesDimension;

/// Bodies of ``` fenced blocks, in order. An unterminated final fence runs
/// to the end of the text.
pub fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        // skip an info string such as `json`
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find("```") {
            Some(end) => {
                blocks.push(&body[..end]);
                rest = &body[end + 3..];
            }
            None => {
                blocks.push(body);
                break;
            }
        }
    }
    blocks
}

/// First candidate that deserializes as `T`: each fenced block, then the
/// whole text, then the outermost `{...}` span.
pub fn parse_structured<T: DeserializeOwned>(text: &str) -> Option<T> {
    let mut candidates: Vec<&str> = fenced_blocks(text);
    candidates.push(text);
    if let (Some(a), Some(b)) = (text.find('{'), text.rfind('}')) {
        if a < b {
            candidates.push(&text[a..=b]);
        }
    }
    candidates
        .into_iter()
        .find_map(|c| serde_json::from_str(c.trim()).ok())
}

/// True if any line, trimmed, equals `sentinel`.
pub fn has_sentinel(text: &str, sentinel: &str) -> bool {
    text.lines().any(|l| l.trim() == sentinel)
}

pub const SOCRATES_TAG: &str = "SOCRATES:";

/// Splits collector output into the question draft and the dimensions named
/// on `SOCRATES:` tag lines. Sentinel lines are dropped.
pub fn split_collector_output(text: &str, sentinel: &str) -> (String, Vec<SocratesDimension>) {
    let mut dims = Vec::new();
    let mut kept = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t == sentinel {
            continue;
        }
        if let Some(rest) = t.strip_prefix(SOCRATES_TAG) {
            dims.extend(rest.split([',', ';']).filter_map(SocratesDimension::parse));
            continue;
        }
        kept.push(line);
    }
    (kept.join("\n").trim().to_string(), dims)
}

/// Planner replies such as "none needed" mean no data is relevant.
pub fn declines_data(text: &str) -> bool {
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .to_lowercase();
    first.starts_with("none") || first.starts_with("no data") || first.starts_with("no health data")
}
