//! Whitelisted aggregate queries over a completed run's store.
//!
//! The store holds unsuppressed aggregates and lives with the operator, apart
//! from the published directory. Every answer passes through the same
//! suppression and rendering as the published files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::render::{flow_table, group_table, lang_daily_table, lang_table, province_table, sentiment_table, Table};
use super::{PrivacyError, PrivacyPolicy};
use crate::clock::DateRange;
use crate::ingest::Granularity;
use crate::mobility::{FlowMatrix, GroupSeries, ProvinceCounts};
use crate::sentiment::Moments;
use crate::social::ActivityCounts;

pub const STORE_FILE: &str = "store.bin";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowGroup {
    #[default]
    All,
    Visa,
    NoVisa,
}

impl FlowGroup {
    pub const ALL: [FlowGroup; 3] = [FlowGroup::All, FlowGroup::Visa, FlowGroup::NoVisa];

    pub fn as_str(&self) -> &'static str {
        match self {
            FlowGroup::All => "all",
            FlowGroup::Visa => "visa",
            FlowGroup::NoVisa => "novisa",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredFlow {
    pub group: FlowGroup,
    pub matrix: FlowMatrix,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMeta {
    /// Policy of the run that built the store; the service answers with it.
    pub policy: PrivacyPolicy,
    pub granularity: Granularity,
    pub horizon: Option<DateRange>,
    pub backfill: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Store {
    pub meta: StoreMeta,
    pub groups: Option<GroupSeries>,
    pub provinces: Vec<ProvinceCounts>,
    pub flows: Vec<StoredFlow>,
    pub activity: Option<ActivityCounts>,
    pub sentiment_weekly: BTreeMap<(String, String), Moments>,
}

impl Store {
    pub fn save(&self, dir: &Path) -> Result<(), PrivacyError> {
        let io = |source| PrivacyError::Io { path: dir.display().to_string(), source };
        std::fs::create_dir_all(dir).map_err(io)?;
        let bytes = bincode::serialize(self).expect("store is serializable");
        std::fs::write(dir.join(STORE_FILE), bytes).map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self, PrivacyError> {
        let path = dir.join(STORE_FILE);
        let bytes = std::fs::read(&path).map_err(|source| PrivacyError::Io { path: path.display().to_string(), source })?;
        bincode::deserialize(&bytes).map_err(|e| PrivacyError::Unreadable { path: path.display().to_string(), reason: e.to_string() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    GroupTimeseries,
    FlowMatrix,
    ProvinceCounts,
    LangCounts,
    SentimentWeekly,
}

impl Template {
    pub const ALL: [Template; 5] =
        [Template::GroupTimeseries, Template::FlowMatrix, Template::ProvinceCounts, Template::LangCounts, Template::SentimentWeekly];

    pub fn as_str(&self) -> &'static str {
        match self {
            Template::GroupTimeseries => "group_timeseries",
            Template::FlowMatrix => "flow_matrix",
            Template::ProvinceCounts => "province_counts",
            Template::LangCounts => "lang_counts",
            Template::SentimentWeekly => "sentiment_weekly",
        }
    }
}

impl FromStr for Template {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL.into_iter().find(|t| t.as_str() == s).ok_or(QueryError::TemplateNotAllowed)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub template: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("TEMPLATE_NOT_ALLOWED")]
    TemplateNotAllowed,
    #[error("GRANULARITY_DENIED")]
    GranularityDenied,
    #[error("INVALID_PARAMS")]
    InvalidParams(String),
    #[error("NOT_AVAILABLE")]
    NotAvailable,
}

impl QueryError {
    pub fn code(&self) -> &'static str {
        match self {
            QueryError::TemplateNotAllowed => "TEMPLATE_NOT_ALLOWED",
            QueryError::GranularityDenied => "GRANULARITY_DENIED",
            QueryError::InvalidParams(_) => "INVALID_PARAMS",
            QueryError::NotAvailable => "NOT_AVAILABLE",
        }
    }

    pub fn body(&self) -> serde_json::Value {
        json!({"error": self.code()})
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupParams {
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowParams {
    date_a: NaiveDate,
    date_b: NaiveDate,
    #[serde(default)]
    group: FlowGroup,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvinceParams {
    date: NaiveDate,
    granularity: Option<Granularity>,
}

#[derive(Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum LangGranularity {
    #[default]
    Total,
    Daily,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LangParams {
    #[serde(default)]
    granularity: LangGranularity,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SentimentParams {
    language: Option<String>,
}

fn params<T: DeserializeOwned>(v: &serde_json::Value) -> Result<T, QueryError> {
    let v = if v.is_null() { json!({}) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| QueryError::InvalidParams(e.to_string()))
}

/// Rolls `Province/District` names up to provinces.
fn to_provinces(p: &ProvinceCounts) -> ProvinceCounts {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for (name, n) in &p.counts {
        *counts.entry(name.split('/').next().unwrap_or(name).to_string()).or_default() += n;
    }
    ProvinceCounts { counts, ..p.clone() }
}

fn answer_table(spec: &QuerySpec, store: &Store, policy: &PrivacyPolicy) -> Result<Table, QueryError> {
    match spec.template.parse::<Template>()? {
        Template::GroupTimeseries => {
            let p: GroupParams = params(&spec.params)?;
            let g = store.groups.as_ref().ok_or(QueryError::NotAvailable)?;
            let (Some(first), Some(last)) = (g.rows.first(), g.rows.last()) else { return Err(QueryError::NotAvailable) };
            let (from, to) = (p.from.unwrap_or(first.date), p.to.unwrap_or(last.date));
            if from > to || from < first.date || to > last.date {
                return Err(QueryError::InvalidParams(format!("{from}..{to} outside {}..{}", first.date, last.date)));
            }
            let sub = GroupSeries {
                cohort_size: g.cohort_size,
                rows: g.rows.iter().filter(|r| r.date >= from && r.date <= to).copied().collect(),
            };
            Ok(group_table(&sub, policy, !store.meta.backfill))
        }
        Template::FlowMatrix => {
            let p: FlowParams = params(&spec.params)?;
            if p.date_a >= p.date_b {
                return Err(QueryError::InvalidParams("date_a must precede date_b".into()));
            }
            let f = store
                .flows
                .iter()
                .find(|f| f.group == p.group && f.matrix.date_a == p.date_a && f.matrix.date_b == p.date_b)
                .ok_or(QueryError::NotAvailable)?;
            Ok(flow_table(p.group.as_str(), &f.matrix, policy))
        }
        Template::ProvinceCounts => {
            let p: ProvinceParams = params(&spec.params)?;
            let g = p.granularity.unwrap_or(store.meta.granularity);
            if g.is_finer_than(policy.spatial_floor) {
                return Err(QueryError::GranularityDenied);
            }
            if g.is_finer_than(store.meta.granularity) {
                return Err(QueryError::NotAvailable);
            }
            let row = store.provinces.iter().find(|r| r.date == p.date).ok_or(QueryError::NotAvailable)?;
            let row = if g == store.meta.granularity { row.clone() } else { to_provinces(row) };
            Ok(province_table(&[row], policy))
        }
        Template::LangCounts => {
            let p: LangParams = params(&spec.params)?;
            let a = store.activity.as_ref().ok_or(QueryError::NotAvailable)?;
            Ok(match p.granularity {
                LangGranularity::Total => lang_table(a, policy),
                LangGranularity::Daily => lang_daily_table(a, policy),
            })
        }
        Template::SentimentWeekly => {
            let p: SentimentParams = params(&spec.params)?;
            let rows: BTreeMap<(String, String), Moments> = store
                .sentiment_weekly
                .iter()
                .filter(|((lang, _), _)| p.language.as_ref().is_none_or(|l| l == lang))
                .map(|(k, m)| (k.clone(), *m))
                .collect();
            Ok(sentiment_table(&rows, "iso_week", policy))
        }
    }
}

/// `{"policy": {...}, "data": [rows]}`, or the error code to return.
pub fn answer_query(spec: &QuerySpec, store: &Store, policy: &PrivacyPolicy) -> Result<serde_json::Value, QueryError> {
    let table = answer_table(spec, store, policy)?;
    Ok(json!({
        "policy": {"k": policy.k, "spatial_floor": policy.spatial_floor},
        "data": table.json_rows(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ymd;
    use crate::mobility::GroupRow;

    fn store() -> Store {
        let rows = (0..5)
            .map(|i| GroupRow {
                date: ymd(2020, 3, 1) + chrono::Days::new(i),
                visa_border: 30 - i,
                visa_other: 5,
                novisa_border: 12,
                novisa_other: 11,
                lost: i,
                unobserved: 0,
            })
            .collect();
        Store {
            meta: StoreMeta { granularity: Granularity::District, backfill: true, ..Default::default() },
            groups: Some(GroupSeries { cohort_size: 58, rows }),
            provinces: vec![ProvinceCounts {
                date: ymd(2020, 3, 1),
                counts: [("Edirne/Merkez".to_string(), 8), ("Edirne/Ipsala".to_string(), 7), ("Istanbul/Fatih".to_string(), 20)].into(),
                lost: 0,
                unobserved: 0,
            }],
            ..Default::default()
        }
    }

    fn q(template: &str, params: serde_json::Value) -> QuerySpec {
        QuerySpec { template: template.into(), params }
    }

    #[test]
    fn unknown_template() {
        let err = answer_query(&q("raw_events", json!({})), &store(), &PrivacyPolicy::default()).unwrap_err();
        assert_eq!(err.code(), "TEMPLATE_NOT_ALLOWED");
        assert_eq!(err.body().to_string(), r#"{"error":"TEMPLATE_NOT_ALLOWED"}"#);
    }

    #[test]
    fn granularity_floor() {
        let spec = q("province_counts", json!({"date": "2020-03-01", "granularity": "district"}));
        assert_eq!(answer_query(&spec, &store(), &PrivacyPolicy::default()).unwrap_err(), QueryError::GranularityDenied);
        let open = PrivacyPolicy { spatial_floor: Granularity::District, ..Default::default() };
        assert!(answer_query(&spec, &store(), &open).is_ok());
    }

    #[test]
    fn districts_roll_up() {
        let spec = q("province_counts", json!({"date": "2020-03-01", "granularity": "province"}));
        let v = answer_query(&spec, &store(), &PrivacyPolicy::default()).unwrap();
        assert_eq!(v["data"][0], json!({"date": "2020-03-01", "region": "Edirne", "count": 15}));
    }

    #[test]
    fn group_range_and_policy_header() {
        let spec = q("group_timeseries", json!({"from": "2020-03-02", "to": "2020-03-03"}));
        let v = answer_query(&spec, &store(), &PrivacyPolicy::default()).unwrap();
        assert_eq!(v["policy"], json!({"k": 10, "spatial_floor": "province"}));
        assert_eq!(v["data"].as_array().unwrap().len(), 2);
        assert_eq!(v["data"][0]["visa_other"], "<10");
    }

    #[test]
    fn bad_params() {
        let p = PrivacyPolicy::default();
        let bad = q("group_timeseries", json!({"from": "2020-03-04", "to": "2020-03-02"}));
        assert_eq!(answer_query(&bad, &store(), &p).unwrap_err().code(), "INVALID_PARAMS");
        let extra = q("group_timeseries", json!({"subscriber": "x"}));
        assert_eq!(answer_query(&extra, &store(), &p).unwrap_err().code(), "INVALID_PARAMS");
        let missing = q("flow_matrix", json!({"date_a": "2020-03-01", "date_b": "2020-03-05"}));
        assert_eq!(answer_query(&missing, &store(), &p).unwrap_err().code(), "NOT_AVAILABLE");
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        store().save(dir.path()).unwrap();
        assert_eq!(Store::load(dir.path()).unwrap(), store());
    }
}
