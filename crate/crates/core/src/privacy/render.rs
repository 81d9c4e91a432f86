//! Post-suppression tables shared by the published files and query answers.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{DateTime, FixedOffset};
use serde::{Serialize, Serializer};
use serde_json::json;

use super::{Cell, PrivacyPolicy};
use crate::clock::LocalClock;
use crate::mobility::{AntennaCount, CrossingEstimate, Drop, FlowMatrix, GroupSeries, ProvinceCounts};
use crate::policy::{Destination, LanguageGroup};
use crate::sentiment::{ExtremeStats, Moments};
use crate::social::{overlap_regions, ActivityCounts, DestinationReport};

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Text(String),
    Cell(Cell),
    Float(f64),
}

impl Value {
    fn text(s: impl ToString) -> Self {
        Value::Text(s.to_string())
    }

    fn csv_field(&self) -> String {
        match self {
            Value::Text(s) => s.clone(),
            Value::Cell(c) => c.to_string(),
            Value::Float(x) => format!("{x:.6}"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Text(t) => s.serialize_str(t),
            Value::Cell(c) => c.serialize(s),
            Value::Float(x) => s.serialize_f64(*x),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Value::csv_field))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        buf
    }

    /// One JSON object per row.
    pub fn json_rows(&self) -> Vec<serde_json::Value> {
        self.rows
            .iter()
            .map(|row| {
                let obj: serde_json::Map<String, serde_json::Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.to_string(), serde_json::to_value(v).expect("plain values")))
                    .collect();
                serde_json::Value::Object(obj)
            })
            .collect()
    }
}

pub fn group_table(g: &GroupSeries, policy: &PrivacyPolicy, with_unobserved: bool) -> Table {
    let mut cols = vec!["date", "visa_border", "visa_other", "novisa_border", "novisa_other", "lost"];
    if with_unobserved {
        cols.push("unobserved");
    }
    let mut t = Table::new(&cols);
    for r in &g.rows {
        let mut row = vec![Value::text(r.date)];
        row.extend(r.counts().iter().map(|&n| Value::Cell(policy.cell(n))));
        if with_unobserved {
            row.push(Value::Cell(policy.cell(r.unobserved)));
        }
        t.rows.push(row);
    }
    t
}

/// `date,region,count`, with LOST (and UNOBSERVED when non-zero) rows.
pub fn province_table(rows: &[ProvinceCounts], policy: &PrivacyPolicy) -> Table {
    let mut t = Table::new(&["date", "region", "count"]);
    for p in rows {
        for (region, &n) in &p.counts {
            t.rows.push(vec![Value::text(p.date), Value::text(region), Value::Cell(policy.cell(n))]);
        }
        t.rows.push(vec![Value::text(p.date), Value::text("LOST"), Value::Cell(policy.cell(p.lost))]);
        if p.unobserved > 0 {
            t.rows.push(vec![Value::text(p.date), Value::text("UNOBSERVED"), Value::Cell(policy.cell(p.unobserved))]);
        }
    }
    t
}

pub fn flow_table(group: &str, m: &FlowMatrix, policy: &PrivacyPolicy) -> Table {
    let mut t = Table::new(&["group", "date_a", "date_b", "origin", "destination", "count"]);
    for c in &m.cells {
        t.rows.push(vec![
            Value::text(group),
            Value::text(m.date_a),
            Value::text(m.date_b),
            Value::text(&c.origin),
            Value::text(&c.destination),
            Value::Cell(policy.cell(c.count)),
        ]);
    }
    t
}

/// Sankey form: node ids are `name@date`.
pub fn flows_sankey(matrices: &[&FlowMatrix], policy: &PrivacyPolicy) -> serde_json::Value {
    let mut nodes: Vec<String> = Vec::new();
    let mut links = Vec::new();
    for m in matrices {
        for c in &m.cells {
            let source = format!("{}@{}", c.origin, m.date_a);
            let target = format!("{}@{}", c.destination, m.date_b);
            for id in [&source, &target] {
                if !nodes.contains(id) {
                    nodes.push(id.clone());
                }
            }
            links.push(json!({"source": source, "target": target, "value": policy.cell(c.count)}));
        }
    }
    nodes.sort();
    json!({"nodes": nodes.iter().map(|id| json!({"id": id})).collect::<Vec<_>>(), "links": links})
}

fn local_time(ts: i64, clock: &LocalClock) -> String {
    let offset = FixedOffset::east_opt(clock.offset_secs()).expect("validated offset");
    DateTime::from_timestamp(ts, 0).expect("in range").with_timezone(&offset).to_rfc3339()
}

pub fn antenna_table(counts: &[AntennaCount], clock: &LocalClock, policy: &PrivacyPolicy) -> Table {
    let mut t = Table::new(&["cell_id", "bucket_start", "devices"]);
    for c in counts {
        t.rows.push(vec![Value::text(&c.cell_id), Value::Text(local_time(c.bucket_start, clock)), Value::Cell(policy.cell(c.devices))]);
    }
    t
}

pub fn drops_table(drops: &[Drop], policy: &PrivacyPolicy) -> Table {
    let mut t = Table::new(&["date", "relative_drop", "previous", "current"]);
    for d in drops {
        t.rows.push(vec![
            Value::text(d.date),
            Value::Float(d.relative_drop),
            Value::Cell(policy.cell(d.previous)),
            Value::Cell(policy.cell(d.current)),
        ]);
    }
    t
}

/// A small lost count would be recoverable from the interval, so all three
/// counts go together.
pub fn estimates_json(estimates: &[CrossingEstimate], policy: &PrivacyPolicy) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = estimates
        .iter()
        .map(|e| {
            let hide = e.lost_at_border < policy.k || e.low < policy.k;
            let cell = |n: u64| if hide { Cell::Suppressed(policy.k) } else { policy.cell(n) };
            json!({
                "group": e.group.as_str(),
                "lost_at_border": cell(e.lost_at_border),
                "share": e.share,
                "churn_floor": e.churn_floor,
                "low": cell(e.low),
                "high": cell(e.high),
            })
        })
        .collect();
    serde_json::Value::Array(rows)
}

pub fn lang_table(a: &ActivityCounts, policy: &PrivacyPolicy) -> Table {
    let mut t = Table::new(&["language_group", "tweets", "users"]);
    for (g, c) in &a.total {
        t.rows.push(vec![Value::text(g.as_str()), Value::Cell(policy.cell(c.tweets)), Value::Cell(policy.cell(c.users))]);
    }
    t
}

pub fn lang_daily_table(a: &ActivityCounts, policy: &PrivacyPolicy) -> Table {
    let mut t = Table::new(&["date", "language_group", "tweets", "users"]);
    for ((d, g), c) in &a.daily {
        t.rows.push(vec![
            Value::text(d),
            Value::text(g.as_str()),
            Value::Cell(policy.cell(c.tweets)),
            Value::Cell(policy.cell(c.users)),
        ]);
    }
    t
}

pub fn dest_table(r: &DestinationReport, policy: &PrivacyPolicy) -> Table {
    let mut t = Table::new(&["language_group", "destination", "users"]);
    for ((g, d), &n) in &r.counts {
        t.rows.push(vec![Value::text(g.as_str()), Value::text(d.as_str()), Value::Cell(policy.cell(n))]);
    }
    t
}

pub fn dest_presence_table(r: &DestinationReport, policy: &PrivacyPolicy) -> Table {
    let mut t = Table::new(&["border_users", "present", "disappeared"]);
    t.rows.push([r.border_users, r.present, r.disappeared].iter().map(|&n| Value::Cell(policy.cell(n))).collect());
    t
}

pub fn venn_json(r: &DestinationReport, policy: &PrivacyPolicy) -> serde_json::Value {
    let regions = |names: Vec<Vec<&'static str>>, counts: Vec<u64>| -> Vec<serde_json::Value> {
        names.into_iter().zip(counts).map(|(set, n)| json!({"set": set, "count": policy.cell(n)})).collect()
    };
    let lang = overlap_regions(r.user_groups.values(), LanguageGroup::ALL);
    let dest = overlap_regions(r.user_destinations.values(), Destination::ALL);
    json!([
        {
            "dimension": "language",
            "regions": regions(
                lang.iter().map(|v| v.set.iter().map(|g| g.as_str()).collect()).collect(),
                lang.iter().map(|v| v.count).collect(),
            ),
        },
        {
            "dimension": "destination",
            "regions": regions(
                dest.iter().map(|v| v.set.iter().map(|d| d.as_str()).collect()).collect(),
                dest.iter().map(|v| v.count).collect(),
            ),
        },
    ])
}

/// `language,<bucket>,mean,variance,n`. Rows with n below k keep only the
/// marker.
pub fn sentiment_table(
    moments: &BTreeMap<(String, String), Moments>,
    bucket_column: &'static str,
    policy: &PrivacyPolicy,
) -> Table {
    let mut t = Table::new(&["language", bucket_column, "mean", "variance", "n"]);
    for ((lang, bucket), m) in moments {
        let n = policy.cell(m.n);
        let (mean, var) = if n.is_suppressed() {
            (Value::text(""), Value::text(""))
        } else {
            (Value::Float(m.mean()), Value::Float(m.variance()))
        };
        t.rows.push(vec![Value::text(lang), Value::text(bucket), mean, var, Value::Cell(n)]);
    }
    t
}

pub fn extreme_table(stats: &BTreeMap<String, ExtremeStats>, policy: &PrivacyPolicy) -> Table {
    let mut t = Table::new(&["language", "tokens", "extreme", "percent"]);
    for (lang, s) in stats {
        let (tokens, extreme) = (policy.cell(s.tokens), policy.cell(s.extreme));
        let percent = if tokens.is_suppressed() || extreme.is_suppressed() { String::new() } else { s.percent() };
        t.rows.push(vec![Value::text(lang), Value::Cell(tokens), Value::Cell(extreme), Value::Text(percent)]);
    }
    t
}
