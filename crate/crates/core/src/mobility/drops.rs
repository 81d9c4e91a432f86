use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::MobilityError;
use crate::policy::MobilityClass;

/// Which day-over-day decreases to report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropRule {
    /// Every decrease of at least this fraction.
    Threshold(f64),
    /// The N largest decreases.
    TopN(usize),
}

impl Default for DropRule {
    fn default() -> Self {
        DropRule::TopN(5)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drop {
    pub date: NaiveDate,
    pub previous: u64,
    pub current: u64,
    pub relative_drop: f64,
}

/// Day-over-day decreases in `counts`, largest first; equal drops keep the
/// earlier date first.
pub fn detect_drops(counts: &[(NaiveDate, u64)], rule: DropRule) -> Vec<Drop> {
    let mut drops: Vec<Drop> = counts
        .windows(2)
        .filter(|w| w[1].1 < w[0].1)
        .map(|w| Drop {
            date: w[1].0,
            previous: w[0].1,
            current: w[1].1,
            relative_drop: (w[0].1 - w[1].1) as f64 / w[0].1.max(1) as f64,
        })
        .collect();
    drops.sort_by(|a, b| b.relative_drop.total_cmp(&a.relative_drop).then(a.date.cmp(&b.date)));
    match rule {
        DropRule::Threshold(t) => drops.retain(|d| d.relative_drop >= t),
        DropRule::TopN(n) => drops.truncate(n),
    }
    drops
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingInterval {
    pub low: u64,
    pub high: u64,
}

/// Scales the lost-at-border count by the operator's market share. The upper
/// end assumes every lost subscriber crossed; the lower end assumes only
/// `churn_floor` of them did.
pub fn estimate_crossings(lost: i64, share: f64, churn_floor: f64) -> Result<CrossingInterval, MobilityError> {
    if lost < 0 {
        return Err(MobilityError::NegativeLost(lost));
    }
    for (name, value) in [("share", share), ("churn_floor", churn_floor)] {
        if !(value > 0.0 && value <= 1.0) {
            return Err(MobilityError::BadFraction { name, value });
        }
    }
    let high = lost as f64 / share;
    Ok(CrossingInterval { low: (high * churn_floor).round() as u64, high: high.round() as u64 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingEstimate {
    pub group: MobilityClass,
    pub lost_at_border: u64,
    pub share: f64,
    pub churn_floor: f64,
    pub low: u64,
    pub high: u64,
}

impl CrossingEstimate {
    pub fn new(group: MobilityClass, lost_at_border: u64, share: f64, churn_floor: f64) -> Result<Self, MobilityError> {
        let i = estimate_crossings(lost_at_border as i64, share, churn_floor)?;
        Ok(CrossingEstimate { group, lost_at_border, share, churn_floor, low: i.low, high: i.high })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ymd;
    use proptest::prelude::*;

    fn series(values: &[u64]) -> Vec<(NaiveDate, u64)> {
        values.iter().enumerate().map(|(i, &v)| (ymd(2020, 3, 1) + chrono::Days::new(i as u64), v)).collect()
    }

    #[test]
    fn largest_drop_first() {
        let d = detect_drops(&series(&[100, 90, 45, 45, 40]), DropRule::TopN(1));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].date, ymd(2020, 3, 3));
        assert_eq!(d[0].relative_drop, 0.5);
    }

    #[test]
    fn threshold_and_ties() {
        let d = detect_drops(&series(&[100, 50, 50, 25, 30]), DropRule::Threshold(0.5));
        assert_eq!(d.iter().map(|d| d.date).collect::<Vec<_>>(), vec![ymd(2020, 3, 2), ymd(2020, 3, 4)]);
    }

    #[test]
    fn no_drops_in_flat_or_rising() {
        assert!(detect_drops(&series(&[5, 5, 6, 9]), DropRule::TopN(3)).is_empty());
        assert!(detect_drops(&[], DropRule::TopN(3)).is_empty());
    }

    #[test]
    fn crossing_interval_reference() {
        assert_eq!(estimate_crossings(10_000, 0.5, 0.5).unwrap(), CrossingInterval { low: 10_000, high: 20_000 });
        assert_eq!(estimate_crossings(0, 0.5, 0.5).unwrap(), CrossingInterval { low: 0, high: 0 });
    }

    #[test]
    fn crossing_rejects_bad_inputs() {
        assert_eq!(estimate_crossings(-1, 0.5, 0.5), Err(MobilityError::NegativeLost(-1)));
        assert!(matches!(estimate_crossings(1, 0.0, 0.5), Err(MobilityError::BadFraction { name: "share", .. })));
        assert!(matches!(estimate_crossings(1, 0.5, 1.5), Err(MobilityError::BadFraction { name: "churn_floor", .. })));
    }

    proptest! {
        #[test]
        fn interval_is_ordered(lost in 0i64..1_000_000, share in 0.01f64..=1.0, cf in 0.01f64..=1.0) {
            let i = estimate_crossings(lost, share, cf).unwrap();
            prop_assert!(i.low <= i.high);
            prop_assert!(i.high >= lost as u64);
        }

        #[test]
        fn drops_are_positive_and_sorted(values in proptest::collection::vec(0u64..50, 0..30)) {
            let d = detect_drops(&series(&values), DropRule::TopN(usize::MAX));
            for w in d.windows(2) {
                prop_assert!(w[0].relative_drop >= w[1].relative_drop);
            }
            prop_assert!(d.iter().all(|d| d.relative_drop > 0.0 && d.relative_drop <= 1.0));
        }
    }
}
