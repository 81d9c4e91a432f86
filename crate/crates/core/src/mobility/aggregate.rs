use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{DayState, MobilityError, PlacementSeries};
use crate::clock::DateRange;
use crate::cohort::Cohort;
use crate::ingest::RegionIndex;
use crate::policy::MobilityClass;

/// One date of the five-group series. `unobserved` is non-zero only with
/// back-fill disabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRow {
    pub date: NaiveDate,
    pub visa_border: u64,
    pub visa_other: u64,
    pub novisa_border: u64,
    pub novisa_other: u64,
    pub lost: u64,
    #[serde(default)]
    pub unobserved: u64,
}

impl GroupRow {
    pub fn total(&self) -> u64 {
        self.visa_border + self.visa_other + self.novisa_border + self.novisa_other + self.lost + self.unobserved
    }

    pub fn counts(&self) -> [u64; 5] {
        [self.visa_border, self.visa_other, self.novisa_border, self.novisa_other, self.lost]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSeries {
    pub cohort_size: u64,
    pub rows: Vec<GroupRow>,
}

impl GroupSeries {
    pub const COLUMNS: [&'static str; 5] = ["visa_border", "visa_other", "novisa_border", "novisa_other", "lost"];

    /// Members still in the data on each date.
    pub fn active_counts(&self) -> Vec<(NaiveDate, u64)> {
        self.rows.iter().map(|r| (r.date, r.total() - r.lost)).collect()
    }

    pub fn row(&self, date: NaiveDate) -> Option<&GroupRow> {
        self.rows.iter().find(|r| r.date == date)
    }
}

const SLOTS: usize = 6;

fn slot(state: DayState, class: MobilityClass, border: &[bool]) -> usize {
    match (state, class) {
        (DayState::At(r), MobilityClass::Visa) if border[r as usize] => 0,
        (DayState::At(_), MobilityClass::Visa) => 1,
        (DayState::At(r), MobilityClass::NoVisa) if border[r as usize] => 2,
        (DayState::At(_), MobilityClass::NoVisa) => 3,
        (DayState::Lost, _) => 4,
        (DayState::Unobserved, _) => 5,
    }
}

fn add_rows(mut a: Vec<[u64; SLOTS]>, b: Vec<[u64; SLOTS]>) -> Vec<[u64; SLOTS]> {
    for (x, y) in a.iter_mut().zip(b) {
        for k in 0..SLOTS {
            x[k] += y[k];
        }
    }
    a
}

/// Per-date counts of Visa / No-Visa members at border vs other regions plus
/// cumulative lost. Series of non-members are skipped.
pub fn group_timeseries(
    series: &[PlacementSeries],
    cohort: &Cohort,
    border_regions: &BTreeSet<u32>,
    regions: &RegionIndex,
    horizon: &DateRange,
    backfill: bool,
) -> GroupSeries {
    let border: Vec<bool> = (0..regions.len() as u32).map(|r| border_regions.contains(&r)).collect();
    let days = horizon.len_days();
    let members: Vec<(&PlacementSeries, MobilityClass)> =
        series.iter().filter_map(|s| cohort.class_of(s.subscriber).map(|c| (s, c))).collect();
    let counts = members
        .par_iter()
        .fold(
            || vec![[0u64; SLOTS]; days],
            |mut acc, (s, class)| {
                for (d, date) in horizon.days().enumerate() {
                    acc[d][slot(s.state_on(date, backfill), *class, &border)] += 1;
                }
                acc
            },
        )
        .reduce(|| vec![[0u64; SLOTS]; days], add_rows);
    let rows = horizon
        .days()
        .zip(counts)
        .map(|(date, c)| GroupRow {
            date,
            visa_border: c[0],
            visa_other: c[1],
            novisa_border: c[2],
            novisa_other: c[3],
            lost: c[4],
            unobserved: c[5],
        })
        .collect();
    GroupSeries { cohort_size: members.len() as u64, rows }
}

/// Non-lost members per region on one date; lost members reported apart.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvinceCounts {
    pub date: NaiveDate,
    pub counts: BTreeMap<String, u64>,
    pub lost: u64,
    #[serde(default)]
    pub unobserved: u64,
}

impl ProvinceCounts {
    pub fn total(&self) -> u64 {
        self.counts.values().sum::<u64>() + self.lost + self.unobserved
    }
}

pub fn province_counts<'a, I>(series: I, regions: &RegionIndex, date: NaiveDate, backfill: bool) -> ProvinceCounts
where
    I: IntoIterator<Item = &'a PlacementSeries>,
{
    let mut out = ProvinceCounts { date, ..Default::default() };
    let mut by_region = vec![0u64; regions.len()];
    for s in series {
        match s.state_on(date, backfill) {
            DayState::At(r) => by_region[r as usize] += 1,
            DayState::Lost => out.lost += 1,
            DayState::Unobserved => out.unobserved += 1,
        }
    }
    out.counts = by_region
        .into_iter()
        .enumerate()
        .filter(|(_, n)| *n > 0)
        .map(|(r, n)| (regions.name(r as u32).to_string(), n))
        .collect();
    out
}

/// Province counts for every horizon date in one pass.
pub fn province_counts_all(
    series: &[PlacementSeries],
    regions: &RegionIndex,
    horizon: &DateRange,
    backfill: bool,
) -> Vec<ProvinceCounts> {
    let width = regions.len() + 2;
    let days = horizon.len_days();
    let grid = series
        .par_iter()
        .fold(
            || vec![0u64; days * width],
            |mut acc, s| {
                for (d, date) in horizon.days().enumerate() {
                    let k = match s.state_on(date, backfill) {
                        DayState::At(r) => r as usize,
                        DayState::Lost => width - 2,
                        DayState::Unobserved => width - 1,
                    };
                    acc[d * width + k] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; days * width],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    horizon
        .days()
        .enumerate()
        .map(|(d, date)| {
            let row = &grid[d * width..(d + 1) * width];
            ProvinceCounts {
                date,
                counts: row[..width - 2]
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| **n > 0)
                    .map(|(r, n)| (regions.name(r as u32).to_string(), *n))
                    .collect(),
                lost: row[width - 2],
                unobserved: row[width - 1],
            }
        })
        .collect()
}

/// Sankey endpoint.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowNode {
    Region(String),
    Lost,
    Unobserved,
}

impl FlowNode {
    pub const LOST: &'static str = "LOST";
    pub const UNOBSERVED: &'static str = "UNOBSERVED";

    fn from_state(state: DayState, regions: &RegionIndex) -> Self {
        match state {
            DayState::At(r) => FlowNode::Region(regions.name(r).to_string()),
            DayState::Lost => FlowNode::Lost,
            DayState::Unobserved => FlowNode::Unobserved,
        }
    }
}

impl fmt::Display for FlowNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowNode::Region(r) => f.write_str(r),
            FlowNode::Lost => f.write_str(Self::LOST),
            FlowNode::Unobserved => f.write_str(Self::UNOBSERVED),
        }
    }
}

impl Serialize for FlowNode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FlowNode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(match s.as_str() {
            Self::LOST => FlowNode::Lost,
            Self::UNOBSERVED => FlowNode::Unobserved,
            _ => FlowNode::Region(s),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowCell {
    pub origin: FlowNode,
    pub destination: FlowNode,
    pub count: u64,
}

/// Origin → destination member counts between two dates, with a LOST sink.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowMatrix {
    pub date_a: NaiveDate,
    pub date_b: NaiveDate,
    /// Sorted by (origin, destination); zero cells omitted.
    pub cells: Vec<FlowCell>,
}

impl FlowMatrix {
    pub fn total(&self) -> u64 {
        self.cells.iter().map(|c| c.count).sum()
    }

    pub fn get(&self, origin: &FlowNode, destination: &FlowNode) -> u64 {
        self.cells.iter().find(|c| &c.origin == origin && &c.destination == destination).map_or(0, |c| c.count)
    }

    pub fn row_marginals(&self) -> BTreeMap<FlowNode, u64> {
        let mut m = BTreeMap::new();
        for c in &self.cells {
            *m.entry(c.origin.clone()).or_default() += c.count;
        }
        m
    }

    pub fn column_marginals(&self) -> BTreeMap<FlowNode, u64> {
        let mut m = BTreeMap::new();
        for c in &self.cells {
            *m.entry(c.destination.clone()).or_default() += c.count;
        }
        m
    }
}

/// Each member contributes exactly one (state at `date_a`, state at `date_b`) pair.
pub fn flow_matrix<'a, I>(
    series: I,
    regions: &RegionIndex,
    horizon: &DateRange,
    date_a: NaiveDate,
    date_b: NaiveDate,
    backfill: bool,
) -> Result<FlowMatrix, MobilityError>
where
    I: IntoIterator<Item = &'a PlacementSeries>,
{
    if date_a >= date_b || !horizon.contains(date_a) || !horizon.contains(date_b) {
        return Err(MobilityError::InvalidFlowDates { date_a, date_b, horizon: *horizon });
    }
    let mut cells: BTreeMap<(DayState, DayState), u64> = BTreeMap::new();
    for s in series {
        *cells.entry((s.state_on(date_a, backfill), s.state_on(date_b, backfill))).or_default() += 1;
    }
    let mut named: BTreeMap<(FlowNode, FlowNode), u64> = BTreeMap::new();
    for ((a, b), n) in cells {
        named.insert((FlowNode::from_state(a, regions), FlowNode::from_state(b, regions)), n);
    }
    Ok(FlowMatrix {
        date_a,
        date_b,
        cells: named.into_iter().map(|((origin, destination), count)| FlowCell { origin, destination, count }).collect(),
    })
}

impl PartialOrd for DayState {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DayState {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let key = |s: &DayState| match s {
            DayState::At(r) => (0, *r),
            DayState::Lost => (1, 0),
            DayState::Unobserved => (2, 0),
        };
        key(self).cmp(&key(other))
    }
}

/// Lost members of `class` whose last placement was in a border region.
pub fn lost_at_border(
    series: &[PlacementSeries],
    cohort: &Cohort,
    border_regions: &BTreeSet<u32>,
    class: MobilityClass,
) -> u64 {
    series
        .iter()
        .filter(|s| s.is_lost() && cohort.class_of(s.subscriber) == Some(class) && border_regions.contains(&s.last_region()))
        .count() as u64
}
