//! Analysis population: foreign subscribers seen at the border provinces in
//! the selection window, restricted to the most common nationalities.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{ymd, DateRange, LocalClock};
use crate::ingest::{CellRegistry, EventTable, SubscriberTable};
use crate::policy::{MobilityClass, VisaPolicy};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CohortError {
    #[error("cohort spec: top_k must be at least 1")]
    ZeroTopK,
    #[error("cohort spec: border_provinces is empty")]
    NoBorderProvinces,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub border_provinces: BTreeSet<String>,
    pub window: DateRange,
    pub top_k: usize,
    /// Nationals of the host country are never part of the mobile cohort.
    pub home_nationality: String,
    /// Write `audit/cohort.csv` with pseudonymous members.
    pub audit: bool,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            border_provinces: ["Edirne", "Kırklareli"].into_iter().map(String::from).collect(),
            window: DateRange::new(ymd(2020, 2, 25), ymd(2020, 3, 25)).expect("ordered"),
            top_k: 20,
            home_nationality: "TUR".into(),
            audit: false,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<(), CohortError> {
        if self.top_k == 0 {
            return Err(CohortError::ZeroTopK);
        }
        if self.border_provinces.is_empty() {
            return Err(CohortError::NoBorderProvinces);
        }
        Ok(())
    }
}

/// Subscribers (table indices) with at least one event at a border-province
/// cell on a local date inside the window. Raw events, not placements.
pub fn select_border_cohort(
    events: &EventTable,
    registry: &CellRegistry,
    spec: &CohortSpec,
    clock: &LocalClock,
) -> BTreeSet<u32> {
    let border_cell: Vec<bool> = registry.sites().iter().map(|s| spec.border_provinces.contains(&s.province)).collect();
    let (lo, hi) = spec.window.epoch_bounds(clock);
    events
        .events
        .iter()
        .filter(|e| e.ts >= lo && e.ts < hi && border_cell[e.cell as usize])
        .map(|e| e.subscriber)
        .collect()
}

/// The `k` nationalities with the most subscribers; ties at the boundary go to
/// the lower alpha-3 code.
pub fn top_k_nationalities<'a, I>(nationalities: I, k: usize) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for n in nationalities {
        *counts.entry(n).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(k).map(|(n, _)| n.to_string()).collect()
}

/// Visa class of a normalized nationality; `None` means unknown.
pub fn assign_visa_class(nationality: &str, policy: &VisaPolicy) -> Option<MobilityClass> {
    policy.get(nationality)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub class: MobilityClass,
    pub nationality: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohort {
    /// Keyed by subscriber-table index.
    pub members: BTreeMap<u32, Member>,
    pub nationalities: BTreeSet<String>,
    pub warnings: Vec<String>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn class_of(&self, subscriber: u32) -> Option<MobilityClass> {
        self.members.get(&subscriber).map(|m| m.class)
    }

    pub fn contains(&self, subscriber: u32) -> bool {
        self.members.contains_key(&subscriber)
    }

    pub fn class_sizes(&self) -> BTreeMap<MobilityClass, usize> {
        let mut out = BTreeMap::new();
        for m in self.members.values() {
            *out.entry(m.class).or_default() += 1;
        }
        out
    }

    /// Audit listing `subscriber_id,class,nationality`.
    pub fn write_csv<W: Write>(&self, subscribers: &SubscriberTable, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subscriber_id", "class", "nationality"])?;
        let mut rows: Vec<_> =
            self.members.iter().map(|(s, m)| (subscribers.get(*s).subscriber_id.as_str(), m)).collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        for (id, m) in rows {
            w.write_record([id, m.class.as_str(), &m.nationality])?;
        }
        w.flush()
    }
}

/// Border presence → foreign only → top-k nationalities → visa class.
pub fn build_cohort(
    events: &EventTable,
    registry: &CellRegistry,
    subscribers: &SubscriberTable,
    visa: &VisaPolicy,
    spec: &CohortSpec,
    clock: &LocalClock,
) -> Result<Cohort, CohortError> {
    spec.validate()?;
    let mut warnings = Vec::new();
    let present = select_border_cohort(events, registry, spec, clock);
    if present.is_empty() {
        warnings.push(format!("no subscriber observed at {:?} during {}", spec.border_provinces, spec.window));
    }
    let foreign: Vec<u32> =
        present.into_iter().filter(|&s| subscribers.get(s).nationality != spec.home_nationality).collect();
    let nationalities = top_k_nationalities(foreign.iter().map(|&s| subscribers.get(s).nationality.as_str()), spec.top_k);

    let mut members = BTreeMap::new();
    let mut unknown: BTreeMap<&str, usize> = BTreeMap::new();
    for s in foreign {
        let nationality = &subscribers.get(s).nationality;
        if !nationalities.contains(nationality) {
            continue;
        }
        match assign_visa_class(nationality, visa) {
            Some(class) => {
                members.insert(s, Member { class, nationality: nationality.clone() });
            }
            None => *unknown.entry(nationality).or_default() += 1,
        }
    }
    for (n, count) in unknown {
        warnings.push(format!("nationality `{n}` missing from visa policy: {count} subscriber(s) excluded"));
    }
    Ok(Cohort { members, nationalities, warnings })
}
