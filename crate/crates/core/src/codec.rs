//! JSON helpers: canonical (sorted-key) documents and line-delimited records.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Serializes with object keys in sorted order. `serde_json::Map` is a
/// `BTreeMap` in this build, so a round trip through `Value` sorts every level.
pub fn to_canonical_value<T: Serialize>(value: &T) -> Result<serde_json::Value> {
    serde_json::to_value(value).map_err(|e| Error::json("canonical encode", e))
}

/// Compact canonical JSON on a single line.
pub fn to_canonical_line<T: Serialize>(value: &T) -> Result<String> {
    let v = to_canonical_value(value)?;
    serde_json::to_string(&v).map_err(|e| Error::json("canonical encode", e))
}

/// Pretty canonical JSON with a trailing newline.
pub fn to_canonical_pretty<T: Serialize>(value: &T) -> Result<String> {
    let v = to_canonical_value(value)?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::json("canonical encode", e))?;
    s.push('\n');
    Ok(s)
}

pub fn write_canonical_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_canonical_pretty(value)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Reads non-blank lines of a JSONL file as raw values.
pub fn read_jsonl_values(path: &Path) -> Result<Vec<serde_json::Value>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e))?;
        out.push(v);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_jsonl_values(path)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            serde_json::from_value(v)
                .map_err(|e| Error::json(format!("{} record {}", path.display(), i + 1), e))
        })
        .collect()
}

/// Writes one canonical JSON record per line, with an optional leading header.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    header: Option<&serde_json::Value>,
    records: &[T],
) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    if let Some(h) = header {
        let line = to_canonical_line(h)?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    for r in records {
        let line = to_canonical_line(r)?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
