//! Checks published files for counts in `(0, k)`.
//!
//! Any CSV field that parses as an integer, and any integer JSON number, is
//! treated as a count. Writers therefore print floats with decimals and
//! times as text.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::PrivacyError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub file: PathBuf,
    /// `row R col C` for CSV, a JSON pointer for JSON.
    pub location: String,
    pub value: i64,
}

fn small(v: i64, k: u64) -> bool {
    v > 0 && (v as u64) < k
}

fn scan_json(v: &serde_json::Value, path: &mut String, k: u64, file: &Path, out: &mut Vec<Violation>) {
    match v {
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64().or_else(|| n.as_u64().map(|u| u.min(i64::MAX as u64) as i64)) {
                if small(i, k) {
                    out.push(Violation { file: file.to_path_buf(), location: path.clone(), value: i });
                }
            }
        }
        serde_json::Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                let len = path.len();
                path.push_str(&format!("/{i}"));
                scan_json(item, path, k, file, out);
                path.truncate(len);
            }
        }
        serde_json::Value::Object(map) => {
            for (key, item) in map {
                let len = path.len();
                path.push('/');
                path.push_str(key);
                scan_json(item, path, k, file, out);
                path.truncate(len);
            }
        }
        _ => {}
    }
}

pub fn scan_file(path: &Path, k: u64) -> Result<Vec<Violation>, PrivacyError> {
    let unreadable = |reason: String| PrivacyError::Unreadable { path: path.display().to_string(), reason };
    let bytes = std::fs::read(path).map_err(|source| PrivacyError::Io { path: path.display().to_string(), source })?;
    let mut out = Vec::new();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes.as_slice());
            for (r, rec) in rdr.records().enumerate() {
                let rec = rec.map_err(|e| unreadable(e.to_string()))?;
                for (c, field) in rec.iter().enumerate() {
                    if let Ok(v) = field.trim().parse::<i64>() {
                        if small(v, k) {
                            out.push(Violation { file: path.to_path_buf(), location: format!("row {r} col {c}"), value: v });
                        }
                    }
                }
            }
        }
        Some("json") => {
            let v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| unreadable(e.to_string()))?;
            scan_json(&v, &mut String::new(), k, path, &mut out);
        }
        _ => return Err(unreadable("only .csv and .json may be published".into())),
    }
    Ok(out)
}

/// Scans every file under `dir`, in path order.
pub fn scan_dir(dir: &Path, k: u64) -> Result<Vec<Violation>, PrivacyError> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|source| PrivacyError::Io { path: d.display().to_string(), source })?;
        for e in entries {
            let p = e.map_err(|source| PrivacyError::Io { path: d.display().to_string(), source })?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(scan_file(&f, k)?);
    }
    Ok(out)
}
