use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::{date_from_day_number, DateRange, LocalClock};
use crate::ingest::{EventTable, RegionIndex};

/// One event reduced to what placement needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Observation {
    pub ts: i64,
    pub region: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Observed,
    Carried,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub region: u32,
    pub status: Status,
}

/// Where a subscriber stands on a given horizon date.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DayState {
    At(u32),
    Lost,
    /// Before the first observation with back-fill disabled.
    Unobserved,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementSeries {
    pub subscriber: u32,
    pub first_obs: NaiveDate,
    pub last_obs: NaiveDate,
    /// One entry per date in `first_obs..=last_obs`.
    pub placements: Vec<Placement>,
    /// `last_obs + 1` when the subscriber stays silent to the horizon end.
    pub lost_date: Option<NaiveDate>,
}

impl PlacementSeries {
    pub fn is_lost(&self) -> bool {
        self.lost_date.is_some()
    }

    pub fn placement_on(&self, date: NaiveDate) -> Option<Placement> {
        if date < self.first_obs || date > self.last_obs {
            return None;
        }
        Some(self.placements[(date - self.first_obs).num_days() as usize])
    }

    pub fn last_region(&self) -> u32 {
        self.placements.last().expect("series is never empty").region
    }

    /// With `backfill`, dates before the first observation count at the first
    /// observed region.
    pub fn state_on(&self, date: NaiveDate, backfill: bool) -> DayState {
        if let Some(p) = self.placement_on(date) {
            return DayState::At(p.region);
        }
        if date < self.first_obs {
            return if backfill { DayState::At(self.placements[0].region) } else { DayState::Unobserved };
        }
        match self.lost_date {
            Some(l) if date >= l => DayState::Lost,
            _ => DayState::Unobserved,
        }
    }
}

type Tally = Vec<(u32, u32, i64)>;

fn place_with(tally: &mut Tally, obs: &[Observation]) -> Option<u32> {
    tally.clear();
    for o in obs {
        match tally.iter_mut().find(|t| t.0 == o.region) {
            Some(t) => {
                t.1 += 1;
                t.2 = t.2.max(o.ts);
            }
            None => tally.push((o.region, 1, o.ts)),
        }
    }
    // Most events; ties to the region holding the latest event; then lowest id.
    tally.iter().max_by(|a, b| a.1.cmp(&b.1).then(a.2.cmp(&b.2)).then(b.0.cmp(&a.0))).map(|t| t.0)
}

/// Majority region of one subscriber-day. Ties go to the region of the
/// chronologically last event among the tied regions.
pub fn daily_placement(obs: &[Observation]) -> Option<u32> {
    place_with(&mut Vec::new(), obs)
}

/// Builds the series from observations sorted by `(ts, region)`.
fn assemble(subscriber: u32, sorted: &[Observation], horizon: &DateRange, clock: &LocalClock) -> Option<PlacementSeries> {
    let (lo, hi) = horizon.epoch_bounds(clock);
    let start = sorted.partition_point(|o| o.ts < lo);
    let end = sorted.partition_point(|o| o.ts < hi);
    let obs = &sorted[start..end];
    if obs.is_empty() {
        return None;
    }
    let mut tally = Tally::new();
    let mut placements: Vec<Placement> = Vec::new();
    let first_day = clock.day_number(obs[0].ts);
    let mut i = 0;
    while i < obs.len() {
        let day = clock.day_number(obs[i].ts);
        let mut j = i + 1;
        while j < obs.len() && clock.day_number(obs[j].ts) == day {
            j += 1;
        }
        let region = place_with(&mut tally, &obs[i..j]).expect("non-empty day");
        let offset = (day - first_day) as usize;
        if let Some(prev) = placements.last().copied() {
            placements.resize(offset, Placement { region: prev.region, status: Status::Carried });
        }
        placements.push(Placement { region, status: Status::Observed });
        i = j;
    }
    let first_obs = date_from_day_number(first_day);
    let last_obs = first_obs + Days::new(placements.len() as u64 - 1);
    let lost_date = (last_obs < horizon.end()).then(|| last_obs + Days::new(1));
    Some(PlacementSeries { subscriber, first_obs, last_obs, placements, lost_date })
}

/// Placement series of one subscriber over `horizon`; `None` when the
/// subscriber has no event inside it.
pub fn build_series(
    subscriber: u32,
    events: &[Observation],
    horizon: &DateRange,
    clock: &LocalClock,
) -> Option<PlacementSeries> {
    let mut sorted = events.to_vec();
    sorted.sort_unstable();
    assemble(subscriber, &sorted, horizon, clock)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesSet {
    /// Sorted by subscriber.
    pub series: Vec<PlacementSeries>,
    /// Requested subscribers with no event in the horizon.
    pub without_events: Vec<u32>,
}

impl SeriesSet {
    pub fn get(&self, subscriber: u32) -> Option<&PlacementSeries> {
        self.series.binary_search_by_key(&subscriber, |s| s.subscriber).ok().map(|i| &self.series[i])
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

/// Series for every subscriber in `members`, built in parallel per subscriber.
pub fn build_all_series(
    table: &EventTable,
    members: &BTreeSet<u32>,
    regions: &RegionIndex,
    horizon: &DateRange,
    clock: &LocalClock,
) -> SeriesSet {
    let Some(&max) = members.iter().next_back() else {
        return SeriesSet::default();
    };
    let mut wanted = vec![false; max as usize + 1];
    for &m in members {
        wanted[m as usize] = true;
    }
    let (lo, hi) = horizon.epoch_bounds(clock);
    let mut obs: Vec<(u32, Observation)> = table
        .events
        .par_iter()
        .filter(|e| e.ts >= lo && e.ts < hi && wanted.get(e.subscriber as usize).copied().unwrap_or(false))
        .map(|e| (e.subscriber, Observation { ts: e.ts, region: regions.of_cell(e.cell) }))
        .collect();
    obs.par_sort_unstable();

    let runs: Vec<&[(u32, Observation)]> = obs.chunk_by(|a, b| a.0 == b.0).collect();
    let series: Vec<PlacementSeries> = runs
        .par_iter()
        .map_init(Vec::new, |buf, run| {
            buf.clear();
            buf.extend(run.iter().map(|(_, o)| *o));
            assemble(run[0].0, buf, horizon, clock).expect("run lies inside horizon")
        })
        .collect();
    let seen: BTreeSet<u32> = series.iter().map(|s| s.subscriber).collect();
    let without_events = members.iter().copied().filter(|m| !seen.contains(m)).collect();
    SeriesSet { series, without_events }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ymd;
    use std::collections::HashMap;

    fn o(ts: i64, region: u32) -> Observation {
        Observation { ts, region }
    }

    /// Count-and-argmax over the raw list, written independently of `place_with`.
    fn brute_force(obs: &[Observation]) -> Option<u32> {
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for x in obs {
            *counts.entry(x.region).or_default() += 1;
        }
        let best = *counts.values().max()?;
        let tied: Vec<u32> = counts.iter().filter(|(_, &c)| c == best).map(|(&r, _)| r).collect();
        let latest = obs.iter().filter(|x| tied.contains(&x.region)).map(|x| x.ts).max()?;
        obs.iter().filter(|x| tied.contains(&x.region) && x.ts == latest).map(|x| x.region).min()
    }

    #[test]
    fn strict_majority() {
        let obs = [o(1, 0), o(2, 0), o(3, 0), o(4, 1), o(5, 1)];
        assert_eq!(daily_placement(&obs), Some(0));
    }

    #[test]
    fn single_event() {
        assert_eq!(daily_placement(&[o(9, 7)]), Some(7));
        assert_eq!(daily_placement(&[]), None);
    }

    #[test]
    fn tie_goes_to_latest_event() {
        // 2 events each; the chronologically last one is in region 1.
        let obs = [o(10, 0), o(20, 1), o(30, 0), o(40, 1)];
        assert_eq!(daily_placement(&obs), brute_force(&obs));
        assert_eq!(daily_placement(&obs), Some(1));
        let rev = [o(40, 1), o(10, 0), o(30, 0), o(20, 1)];
        assert_eq!(daily_placement(&rev), Some(1));
    }

    proptest::proptest! {
        #[test]
        fn placement_matches_brute_force(raw in proptest::collection::vec((0i64..50, 0u32..4), 1..30)) {
            let obs: Vec<_> = raw.iter().map(|&(t, r)| o(t, r)).collect();
            proptest::prop_assert_eq!(daily_placement(&obs), brute_force(&obs));
        }
    }

    fn horizon(days: u64) -> DateRange {
        DateRange::new(ymd(2020, 3, 1), ymd(2020, 3, 1) + Days::new(days - 1)).unwrap()
    }

    fn on(day: u64, hour: i64, region: u32) -> Observation {
        let clock = LocalClock::default();
        o(clock.day_start(ymd(2020, 3, 1) + Days::new(day - 1)) + hour * 3600, region)
    }

    #[test]
    fn trailing_silence_marks_lost() {
        let s = build_series(1, &[on(1, 1, 0), on(2, 1, 0)], &horizon(10), &LocalClock::default()).unwrap();
        assert_eq!(s.placements.len(), 2);
        assert_eq!(s.last_obs, ymd(2020, 3, 2));
        assert_eq!(s.lost_date, Some(ymd(2020, 3, 3)));
        assert_eq!(s.state_on(ymd(2020, 3, 3), true), DayState::Lost);
        assert_eq!(s.state_on(ymd(2020, 3, 10), true), DayState::Lost);
    }

    #[test]
    fn every_day_observed() {
        let obs: Vec<_> = (1..=5).map(|d| on(d, 2, 3)).collect();
        let s = build_series(1, &obs, &horizon(5), &LocalClock::default()).unwrap();
        assert!(!s.is_lost());
        assert!(s.placements.iter().all(|p| p.status == Status::Observed));
    }

    #[test]
    fn inner_gap_is_carried() {
        let obs = [on(1, 1, 0), on(2, 1, 2), on(5, 1, 1)];
        let s = build_series(1, &obs, &horizon(5), &LocalClock::default()).unwrap();
        let got: Vec<_> = s.placements.iter().map(|p| (p.region, p.status)).collect();
        // Brute-force fill: walk days, remembering the last observed region.
        let observed: HashMap<u64, u32> = [(1, 0), (2, 2), (5, 1)].into();
        let mut last = None;
        let expected: Vec<_> = (1..=5)
            .map(|d| match observed.get(&d) {
                Some(&r) => {
                    last = Some(r);
                    (r, Status::Observed)
                }
                None => (last.unwrap(), Status::Carried),
            })
            .collect();
        assert_eq!(got, expected);
        assert!(!s.is_lost());
    }

    #[test]
    fn events_outside_horizon_ignored() {
        let clock = LocalClock::default();
        let before = o(clock.day_start(ymd(2020, 2, 20)), 9);
        let s = build_series(1, &[before, on(3, 0, 1)], &horizon(3), &clock).unwrap();
        assert_eq!(s.first_obs, ymd(2020, 3, 3));
        assert_eq!(s.state_on(ymd(2020, 3, 1), true), DayState::At(1));
        assert_eq!(s.state_on(ymd(2020, 3, 1), false), DayState::Unobserved);
        assert!(build_series(1, &[before], &horizon(3), &clock).is_none());
    }

    #[test]
    fn local_midnight_splits_days() {
        let clock = LocalClock::default();
        let midnight = clock.day_start(ymd(2020, 3, 2));
        let s = build_series(1, &[o(midnight - 1, 0), o(midnight, 1)], &horizon(2), &clock).unwrap();
        assert_eq!(s.placements.iter().map(|p| p.region).collect::<Vec<_>>(), vec![0, 1]);
    }
}
