//! Local-day arithmetic over UTC epoch seconds.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SECS_PER_DAY: i64 = 86_400;
/// Days from 0001-01-01 (CE day 1) to 1970-01-01.
const UNIX_EPOCH_CE_DAYS: i32 = 719_163;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClockError {
    #[error("invalid UTC offset `{0}`, expected `+HH:MM`, `-HH:MM` or `UTC`")]
    BadOffset(String),
    #[error("date range starts after it ends: {start} > {end}")]
    Inverted { start: NaiveDate, end: NaiveDate },
}

/// Maps epoch seconds onto calendar days of a fixed UTC offset.
///
/// Days are "24-hour blocks" in local time; the default offset is UTC+03:00.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LocalClock {
    offset_secs: i32,
}

impl Default for LocalClock {
    fn default() -> Self {
        Self { offset_secs: 3 * 3600 }
    }
}

impl LocalClock {
    pub const UTC: LocalClock = LocalClock { offset_secs: 0 };

    pub fn from_offset_secs(offset_secs: i32) -> Self {
        Self { offset_secs }
    }

    pub fn offset_secs(&self) -> i32 {
        self.offset_secs
    }

    /// Local day number, counted from 1970-01-01.
    #[inline]
    pub fn day_number(&self, ts: i64) -> i32 {
        (ts + self.offset_secs as i64).div_euclid(SECS_PER_DAY) as i32
    }

    #[inline]
    pub fn date_of(&self, ts: i64) -> NaiveDate {
        date_from_day_number(self.day_number(ts))
    }

    /// Epoch seconds of local midnight starting `date`.
    pub fn day_start(&self, date: NaiveDate) -> i64 {
        day_number_of(date) as i64 * SECS_PER_DAY - self.offset_secs as i64
    }
}

impl FromStr for LocalClock {
    type Err = ClockError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("utc") || t == "Z" {
            return Ok(LocalClock::UTC);
        }
        let bad = || ClockError::BadOffset(s.to_string());
        let (sign, rest) = match t.as_bytes().first() {
            Some(b'+') => (1, &t[1..]),
            Some(b'-') => (-1, &t[1..]),
            _ => return Err(bad()),
        };
        let (h, m) = rest.split_once(':').ok_or_else(bad)?;
        if h.len() != 2 || m.len() != 2 {
            return Err(bad());
        }
        let h: i32 = h.parse().map_err(|_| bad())?;
        let m: i32 = m.parse().map_err(|_| bad())?;
        if h > 14 || m > 59 {
            return Err(bad());
        }
        Ok(LocalClock::from_offset_secs(sign * (h * 3600 + m * 60)))
    }
}

impl fmt::Display for LocalClock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.offset_secs < 0 { '-' } else { '+' };
        let abs = self.offset_secs.abs();
        write!(f, "{sign}{:02}:{:02}", abs / 3600, (abs % 3600) / 60)
    }
}

impl Serialize for LocalClock {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LocalClock {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn date_from_day_number(day: i32) -> NaiveDate {
    NaiveDate::from_num_days_from_ce_opt(day + UNIX_EPOCH_CE_DAYS).expect("day number in chrono range")
}

pub fn day_number_of(date: NaiveDate) -> i32 {
    date.num_days_from_ce() - UNIX_EPOCH_CE_DAYS
}

/// ISO-8601 week label, e.g. `2020-W10`.
pub fn iso_week_label(date: NaiveDate) -> String {
    let w = date.iso_week();
    format!("{}-W{:02}", w.year(), w.week())
}

/// Inclusive calendar-date interval, serialized as `["start", "end"]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "(NaiveDate, NaiveDate)", into = "(NaiveDate, NaiveDate)")]
pub struct DateRange {
    start: NaiveDate,
    end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, ClockError> {
        if start > end {
            return Err(ClockError::Inverted { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.end
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Number of days, both ends included.
    pub fn len_days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take(self.len_days())
    }

    /// Position of `date` inside the range.
    pub fn offset_of(&self, date: NaiveDate) -> Option<usize> {
        self.contains(date).then(|| (date - self.start).num_days() as usize)
    }

    pub fn nth(&self, offset: usize) -> NaiveDate {
        self.start + Days::new(offset as u64)
    }

    /// Smallest range covering both.
    pub fn union(&self, other: &DateRange) -> DateRange {
        DateRange { start: self.start.min(other.start), end: self.end.max(other.end) }
    }

    /// `[start, end)` in epoch seconds under `clock`.
    pub fn epoch_bounds(&self, clock: &LocalClock) -> (i64, i64) {
        (clock.day_start(self.start), clock.day_start(self.end) + SECS_PER_DAY)
    }
}

impl TryFrom<(NaiveDate, NaiveDate)> for DateRange {
    type Error = ClockError;

    fn try_from((start, end): (NaiveDate, NaiveDate)) -> Result<Self, Self::Error> {
        DateRange::new(start, end)
    }
}

impl From<DateRange> for (NaiveDate, NaiveDate) {
    fn from(r: DateRange) -> Self {
        (r.start, r.end)
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// `NaiveDate` literal helper for fixtures and defaults.
pub fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn turkish_local_day_starts_at_21_utc() {
        let clock = LocalClock::default();
        // 2020-02-28T21:00:00Z is midnight 2020-02-29 in UTC+03:00.
        let ts = 1_582_923_600;
        assert_eq!(clock.date_of(ts), ymd(2020, 2, 29));
        assert_eq!(clock.date_of(ts - 1), ymd(2020, 2, 28));
        assert_eq!(clock.day_start(ymd(2020, 2, 29)), ts);
    }

    #[test]
    fn negative_timestamps_floor() {
        assert_eq!(LocalClock::UTC.date_of(-1), ymd(1969, 12, 31));
    }

    #[test]
    fn offsets_parse_and_print() {
        let c: LocalClock = "+03:00".parse().unwrap();
        assert_eq!(c.offset_secs(), 10_800);
        assert_eq!(c.to_string(), "+03:00");
        assert_eq!("-05:30".parse::<LocalClock>().unwrap().offset_secs(), -19_800);
        assert_eq!("UTC".parse::<LocalClock>().unwrap(), LocalClock::UTC);
        assert!("03:00".parse::<LocalClock>().is_err());
        assert!("+3".parse::<LocalClock>().is_err());
    }

    #[test]
    fn range_len_and_offsets() {
        let r = DateRange::new(ymd(2020, 2, 28), ymd(2020, 6, 15)).unwrap();
        assert_eq!(r.len_days(), 109);
        assert_eq!(r.days().count(), 109);
        assert_eq!(r.offset_of(ymd(2020, 3, 1)), Some(2));
        assert_eq!(r.offset_of(ymd(2020, 6, 16)), None);
        assert_eq!(r.nth(2), ymd(2020, 3, 1));
        assert!(DateRange::new(ymd(2020, 3, 2), ymd(2020, 3, 1)).is_err());
    }

    #[test]
    fn iso_week_uses_iso_year() {
        assert_eq!(iso_week_label(ymd(2020, 3, 2)), "2020-W10");
        assert_eq!(iso_week_label(ymd(2021, 1, 1)), "2020-W53");
    }
}
