//! Parsing and validation of the input exports.
//!
//! Every parser is total over its input: each non-blank line becomes exactly
//! one record or exactly one [`Diagnostic`]. A run aborts only when the share
//! of rejected lines exceeds [`ParseOptions::max_error_rate`].

mod events;
mod tables;
mod tweets;
mod xdr;

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub use events::{validate_refs, CompactEvent, EventTable, IngestSummary, ValidationReport};
pub use tables::{
    parse_reference_tables, CellRegistry, CellSite, Granularity, ReferencePaths, ReferenceTables,
    RegionIndex, Subscriber, SubscriberTable,
};
pub use tweets::{parse_tweets, write_tweets_ndjson, GeoPoint, Tweet};
pub use xdr::{parse_xdr, write_xdr_csv, Encoding, EventKind, XdrEvent};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{rejected} of {lines} lines rejected ({:.3}%), above the {:.3}% error budget; first: {first}", rate * 100.0, limit * 100.0)]
    ErrorBudgetExceeded { rejected: usize, lines: usize, rate: f64, limit: f64, first: String },
    #[error("{table}: missing header line")]
    MissingHeader { table: &'static str },
    #[error("{table}: header lacks required column `{column}`")]
    MissingColumn { table: &'static str, column: &'static str },
    #[error("{table}: duplicate key `{key}`")]
    DuplicateKey { table: &'static str, key: String },
    #[error("{table} line {line}: {reason}")]
    BadRow { table: &'static str, line: usize, reason: String },
    #[error("{table} line {line}: unknown `{column}` value `{value}`")]
    UnknownEnumValue { table: &'static str, line: usize, column: &'static str, value: String },
    #[error("events reference {} cell id(s) missing from the registry: {}", .0.len(), .0.join(", "))]
    UnresolvedCells(Vec<String>),
}

impl IngestError {
    pub(crate) fn csv(table: &'static str, line: usize, err: csv::Error) -> Self {
        IngestError::BadRow { table, line, reason: err.to_string() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io { path: path.into(), source }
    }
}

/// A rejected input line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based physical line number, header included.
    pub line: usize,
    pub field: Option<&'static str>,
    pub reason: String,
}

impl Diagnostic {
    pub(crate) fn new(line: usize, field: Option<&'static str>, reason: impl Into<String>) -> Self {
        Self { line, field, reason: reason.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.field {
            Some(field) => write!(f, "line {}: field `{}`: {}", self.line, field, self.reason),
            None => write!(f, "line {}: {}", self.line, self.reason),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParseOptions {
    /// Abort when rejected / total exceeds this fraction.
    pub max_error_rate: f64,
    /// Accepted timestamps, `[start, end)` epoch seconds.
    pub horizon: Option<(i64, i64)>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { max_error_rate: 0.01, horizon: None }
    }
}

/// Records plus the diagnostics for every rejected line.
#[derive(Clone, Debug, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub diagnostics: Vec<Diagnostic>,
    /// Non-blank data lines seen (header excluded).
    pub lines: usize,
}

impl<T> Parsed<T> {
    pub fn rejected(&self) -> usize {
        self.diagnostics.len()
    }
}

pub(crate) fn check_budget(lines: usize, diagnostics: &[Diagnostic], opts: &ParseOptions) -> Result<(), IngestError> {
    if lines == 0 || diagnostics.is_empty() {
        return Ok(());
    }
    let rate = diagnostics.len() as f64 / lines as f64;
    if rate > opts.max_error_rate {
        return Err(IngestError::ErrorBudgetExceeded {
            rejected: diagnostics.len(),
            lines,
            rate,
            limit: opts.max_error_rate,
            first: diagnostics[0].to_string(),
        });
    }
    Ok(())
}

/// Splits `body` into up to `parts` newline-aligned chunks, each paired with the
/// physical line number of its first line.
pub(crate) fn line_chunks(body: &[u8], first_line: usize, parts: usize) -> Vec<(&[u8], usize)> {
    let parts = parts.max(1);
    let target = body.len() / parts + 1;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    let mut line = first_line;
    while start < body.len() {
        let mut end = (start + target).min(body.len());
        while end < body.len() && body[end - 1] != b'\n' {
            end += 1;
        }
        let chunk = &body[start..end];
        out.push((chunk, line));
        line += chunk.iter().filter(|&&b| b == b'\n').count();
        start = end;
    }
    out
}

/// Iterates `(line_number, line)` over a chunk, stripping `\r\n` and skipping blank lines.
pub(crate) fn lines_of(chunk: &[u8], first_line: usize) -> impl Iterator<Item = (usize, &[u8])> {
    chunk
        .split(|&b| b == b'\n')
        .enumerate()
        .map(move |(i, l)| (first_line + i, l.strip_suffix(b"\r").unwrap_or(l)))
        .filter(|(_, l)| !l.iter().all(u8::is_ascii_whitespace))
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>, IngestError> {
    std::fs::read(path).map_err(|e| IngestError::io(path, e))
}
