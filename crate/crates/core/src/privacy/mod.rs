//! Small-cell suppression, keyed pseudonyms, a scan over published files and
//! the whitelisted aggregate query service.

mod query;
mod render;
mod scan;

use std::collections::BTreeMap;
use std::fmt;

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize, Serializer};
use sha2::Sha256;
use thiserror::Error;

use crate::ingest::Granularity;

pub use query::{answer_query, STORE_FILE, FlowGroup, QueryError, QuerySpec, Store, StoreMeta, StoredFlow, Template};
pub use render::{
    antenna_table, dest_presence_table, dest_table, drops_table, estimates_json, extreme_table, flow_table, flows_sankey,
    group_table, lang_daily_table, lang_table, province_table, sentiment_table, venn_json, Table, Value,
};
pub use scan::{scan_dir, scan_file, Violation};

pub const MOBILE_KEY_ENV: &str = "BORDER_FLUX_MOBILE_KEY";
pub const SOCIAL_KEY_ENV: &str = "BORDER_FLUX_SOCIAL_KEY";

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("k must be at least 2, got {0}")]
    BadK(u64),
    #[error("pseudonym key missing: set {0}")]
    MissingKey(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {reason}")]
    Unreadable { path: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacyPolicy {
    pub k: u64,
    pub spatial_floor: Granularity,
}

impl Default for PrivacyPolicy {
    fn default() -> Self {
        PrivacyPolicy { k: 10, spatial_floor: Granularity::Province }
    }
}

impl PrivacyPolicy {
    pub fn validate(&self) -> Result<(), PrivacyError> {
        if self.k < 2 {
            return Err(PrivacyError::BadK(self.k));
        }
        Ok(())
    }

    pub fn cell(&self, count: u64) -> Cell {
        if count < self.k {
            Cell::Suppressed(self.k)
        } else {
            Cell::Count(count)
        }
    }
}

/// A published count, or the marker `<k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Count(u64),
    Suppressed(u64),
}

impl Cell {
    pub fn count(&self) -> Option<u64> {
        match self {
            Cell::Count(n) => Some(*n),
            Cell::Suppressed(_) => None,
        }
    }

    pub fn is_suppressed(&self) -> bool {
        matches!(self, Cell::Suppressed(_))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Count(n) => write!(f, "{n}"),
            Cell::Suppressed(k) => write!(f, "<{k}"),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Count(n) => s.serialize_u64(*n),
            Cell::Suppressed(_) => s.collect_str(self),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SuppressedTable<K: Ord> {
    pub cells: BTreeMap<K, Cell>,
    /// Sum over published cells only.
    pub total: Cell,
    /// True when any cell was withheld, so `total` undercounts.
    pub partial: bool,
}

/// Replaces every count below `k` with the marker. Zero counts are withheld
/// too.
pub fn suppress<K: Ord + Clone>(table: &BTreeMap<K, u64>, policy: &PrivacyPolicy) -> SuppressedTable<K> {
    let cells: BTreeMap<K, Cell> = table.iter().map(|(k, &n)| (k.clone(), policy.cell(n))).collect();
    let published: u64 = cells.values().filter_map(Cell::count).sum();
    SuppressedTable { partial: cells.values().any(Cell::is_suppressed), total: policy.cell(published), cells }
}

/// Keyed HMAC-SHA256 pseudonyms, truncated to 128 bits.
#[derive(Clone)]
pub struct Pseudonymizer {
    key: Vec<u8>,
}

impl fmt::Debug for Pseudonymizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Pseudonymizer(<redacted>)")
    }
}

impl Pseudonymizer {
    pub fn new(key: impl Into<Vec<u8>>) -> Option<Self> {
        let key = key.into();
        (!key.is_empty()).then_some(Pseudonymizer { key })
    }

    pub fn from_env(var: &str) -> Result<Self, PrivacyError> {
        std::env::var(var).ok().and_then(Pseudonymizer::new).ok_or_else(|| PrivacyError::MissingKey(var.to_string()))
    }

    pub fn token(&self, raw_id: &str) -> String {
        let mut mac = Hmac::<Sha256>::new_from_slice(&self.key).expect("hmac accepts any key length");
        mac.update(raw_id.as_bytes());
        hex::encode(&mac.finalize().into_bytes()[..16])
    }
}

/// Separate keys so mobile and social pseudonyms cannot be joined.
#[derive(Clone, Debug)]
pub struct Secrets {
    pub mobile: Pseudonymizer,
    pub social: Pseudonymizer,
}

impl Secrets {
    pub fn from_env() -> Result<Self, PrivacyError> {
        Ok(Secrets { mobile: Pseudonymizer::from_env(MOBILE_KEY_ENV)?, social: Pseudonymizer::from_env(SOCIAL_KEY_ENV)? })
    }
}
