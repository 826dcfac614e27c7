//! On-disk formats.
//!
//! * Embeddings: binary `EMB1` container. Header is the 4-byte magic, a
//!   little-endian `u32` version (1), then `u64` n and `u64` dim, followed by
//!   `n·dim` little-endian `f32` values in row-major order.
//! * Scores: UTF-8 CSV `index,score`, optional header line.
//! * Similarity: UTF-8 CSV `row,col,weight`, optional header line; the
//!   symmetric closure is applied on load.
//! * Selections and reports: JSON documents. The selection layout is
//!   described by `schema/selection.schema.json` and checked by
//!   [`validate_selection_value`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::problem::{EmbeddingMatrix, ScoreVector, SparseSimilarity};
use crate::scoring::load_scores;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";
pub const EMBEDDING_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub const TOOL_VERSION: &str = concat!("infomax ", env!("CARGO_PKG_VERSION"));

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::input(format!("output path '{}' has no file name", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn encode_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data().len() * 4);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.n() as u64).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u64).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "embedding file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != EMBEDDING_MAGIC {
        return Err(Error::Format("embedding file does not start with magic EMB1".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != EMBEDDING_VERSION {
        return Err(Error::Format(format!("unsupported embedding file version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let dim = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let expected = n
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("embedding shape {n}x{dim} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != expected {
        return Err(Error::Format(format!(
            "embedding payload is {} bytes, expected {expected} for {n}x{dim}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    EmbeddingMatrix::new(n as usize, dim as usize, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    decode_embeddings(&fs::read(path)?)
}

pub fn write_embeddings(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    write_atomic(path, &encode_embeddings(m))
}

/// Splits CSV text into numeric records of exactly `columns` fields.
/// A first line that does not parse as numbers is treated as a header.
fn parse_table(text: &str, columns: usize, what: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != columns {
            return Err(Error::Format(format!(
                "{what} line {line_no}: expected {columns} comma-separated fields, found {}",
                fields.len()
            )));
        }
        if rows.is_empty() && i == first_content_line(text) && fields[0].parse::<usize>().is_err() {
            continue;
        }
        rows.push((line_no, fields));
    }
    Ok(rows)
}

fn first_content_line(text: &str) -> usize {
    text.lines().position(|l| !l.trim().is_empty()).unwrap_or(0)
}

fn field<T: std::str::FromStr>(value: &str, line: usize, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Format(format!("{what} line {line}: cannot parse '{value}'")))
}

/// `(index, score)` rows of a score table.
pub fn parse_score_rows(text: &str) -> Result<Vec<(usize, f64)>> {
    parse_table(text, 2, "score file")?
        .into_iter()
        .map(|(line, f)| Ok((field(&f[0], line, "score file")?, field(&f[1], line, "score file")?)))
        .collect()
}

pub fn parse_scores(text: &str) -> Result<ScoreVector> {
    let rows = parse_score_rows(text)?;
    load_scores(&rows).map_err(|e| match e {
        Error::Input(m) => Error::Format(format!("score file {m}")),
        other => other,
    })
}

pub fn read_scores(path: &Path) -> Result<ScoreVector> {
    parse_scores(&fs::read_to_string(path)?)
}

pub fn format_scores(scores: &ScoreVector) -> String {
    let mut out = String::from("index,score\n");
    for (i, v) in scores.values().iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

pub fn parse_similarity(text: &str, n: usize) -> Result<SparseSimilarity> {
    let mut triplets = Vec::new();
    for (line, f) in parse_table(text, 3, "similarity file")? {
        triplets.push((
            field(&f[0], line, "similarity file")?,
            field(&f[1], line, "similarity file")?,
            field(&f[2], line, "similarity file")?,
        ));
    }
    SparseSimilarity::from_triplets(n, triplets).map_err(|e| match e {
        Error::Input(m) => Error::Format(format!("similarity file {m}")),
        other => other,
    })
}

pub fn read_similarity(path: &Path, n: usize) -> Result<SparseSimilarity> {
    parse_similarity(&fs::read_to_string(path)?, n)
}

/// Stored entries as `row,col,weight`, both directions included.
pub fn format_similarity(k: &SparseSimilarity) -> String {
    let mut out = String::from("row,col,weight\n");
    for (z, s, w) in k.triplets() {
        out.push_str(&format!("{z},{s},{w}\n"));
    }
    out
}

/// A selection written by `select` or `baseline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    pub tool_version: String,
    /// Seconds since the Unix epoch. Not covered by reproducibility checks.
    pub timestamp: u64,
    pub selected: Vec<usize>,
    pub objective: f64,
    pub params: Map<String, Value>,
    pub trace: Vec<f64>,
}

pub fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl SelectionFile {
    pub fn new(selected: Vec<usize>, objective: f64, params: Map<String, Value>, trace: Vec<f64>) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            timestamp: unix_timestamp(),
            selected,
            objective,
            params,
            trace,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Format(format!("selection file: {e}")))?;
        validate_selection_value(&value)?;
        serde_json::from_value(value).map_err(|e| Error::Format(format!("selection file: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }
}

/// Checks a parsed document against the selection schema: required keys with
/// the right types, non-negative integer indices in strictly ascending order.
pub fn validate_selection_value(value: &Value) -> Result<()> {
    let bad = |m: &str| Err(Error::Format(format!("selection file: {m}")));
    let Some(obj) = value.as_object() else {
        return bad("top level must be an object");
    };
    for key in ["tool_version", "timestamp", "selected", "objective", "params", "trace"] {
        if !obj.contains_key(key) {
            return bad(&format!("missing key '{key}'"));
        }
    }
    if !obj["tool_version"].is_string() {
        return bad("'tool_version' must be a string");
    }
    if !obj["timestamp"].is_u64() {
        return bad("'timestamp' must be a non-negative integer");
    }
    if !obj["objective"].is_number() {
        return bad("'objective' must be a number");
    }
    if !obj["params"].is_object() {
        return bad("'params' must be an object");
    }
    match obj["trace"].as_array() {
        Some(t) if t.iter().all(Value::is_number) => {}
        _ => return bad("'trace' must be an array of numbers"),
    }
    let Some(sel) = obj["selected"].as_array() else {
        return bad("'selected' must be an array");
    };
    let mut prev: Option<u64> = None;
    for v in sel {
        let Some(i) = v.as_u64() else {
            return bad("'selected' entries must be non-negative integers");
        };
        if prev.is_some_and(|p| p >= i) {
            return bad("'selected' must be strictly ascending");
        }
        prev = Some(i);
    }
    Ok(())
}

/// Histogram as `bin,lo,hi,count`.
pub fn format_histogram(h: &crate::pipeline::Histogram) -> String {
    let edges = h.edges();
    let mut out = String::from("bin,lo,hi,count\n");
    for (b, c) in h.counts.iter().enumerate() {
        out.push_str(&format!("{b},{},{},{c}\n", edges[b], edges[b + 1]));
    }
    out
}
