//! Tweet records and JSON Lines I/O.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::labels::ActivityLabel;

/// One post. `tokens` is filled by the tokenizer when empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    pub author_id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<String>,
    #[serde(default, alias = "pos_tags", skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ActivityLabel>,
    /// Local time offset from UTC in minutes, used for time encoding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utc_offset_minutes: Option<i32>,
}

impl TweetRecord {
    pub fn new(id: impl Into<String>, author_id: impl Into<String>, timestamp: DateTime<Utc>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            author_id: author_id.into(),
            timestamp,
            text: text.into(),
            tokens: Vec::new(),
            pos: None,
            location_category: None,
            location_type: None,
            label: None,
            utc_offset_minutes: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        if let Some(p) = &self.pos {
            if !self.tokens.is_empty() && p.len() != self.tokens.len() {
                return Err(Error::Data(format!(
                    "record {}: {} POS tags for {} tokens",
                    self.id,
                    p.len(),
                    self.tokens.len()
                )));
            }
        }
        Ok(())
    }
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads tweet records and checks POS alignment.
pub fn read_records(path: &Path) -> Result<Vec<TweetRecord>> {
    let recs: Vec<TweetRecord> = read_jsonl(path)?;
    for r in &recs {
        r.check()?;
    }
    Ok(recs)
}

/// Reads tweet records, skipping lines that fail to parse or check. The
/// skipped lines come back as errors carrying their line numbers.
pub fn read_records_lenient(path: &Path) -> Result<(Vec<TweetRecord>, Vec<Error>)> {
    let file = fs::File::open(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<TweetRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.check().map(|_| r).map_err(|e| e.to_string()));
        match parsed {
            Ok(r) => out.push(r),
            Err(message) => bad.push(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            }),
        }
    }
    Ok((out, bad))
}
