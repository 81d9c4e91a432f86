//! Mobility indicators from daily placements.
//!
//! A subscriber's day is placed at the region receiving most of its events
//! that local day. Silent days inside the observed span carry the last
//! observed region forward; silence that lasts to the end of the horizon
//! marks the subscriber lost from the day after the last observation.

mod aggregate;
mod antenna;
mod drops;
mod placement;

use thiserror::Error;

pub use aggregate::{
    flow_matrix, group_timeseries, lost_at_border, province_counts, province_counts_all, FlowCell, FlowMatrix,
    FlowNode, GroupRow, GroupSeries, ProvinceCounts,
};
pub use antenna::{antenna_counts, AntennaCount};
pub use drops::{detect_drops, estimate_crossings, CrossingEstimate, CrossingInterval, Drop, DropRule};
pub use placement::{
    build_all_series, build_series, daily_placement, DayState, Observation, Placement, PlacementSeries, SeriesSet,
    Status,
};

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("flow dates must satisfy date_a < date_b inside {horizon}: got {date_a} and {date_b}")]
    InvalidFlowDates { date_a: chrono::NaiveDate, date_b: chrono::NaiveDate, horizon: crate::DateRange },
    #[error("date {0} outside the horizon")]
    OutsideHorizon(chrono::NaiveDate),
    #[error("lost subscriber count must be non-negative, got {0}")]
    NegativeLost(i64),
    #[error("{name} must lie in (0, 1], got {value}")]
    BadFraction { name: &'static str, value: f64 },
    #[error("antenna bucket must be at least 60 seconds, got {0}")]
    BucketTooSmall(i64),
}
