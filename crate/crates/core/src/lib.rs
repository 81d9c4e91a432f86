//! # border-flux
//!
//! Deterministic indicators for sudden cross-border mobility, computed from
//! operator event records (xDR) and geotagged posts, and published only as
//! k-suppressed aggregates.
//!
//! The crate is organised as a staged pipeline:
//!
//! - [`ingest`]: typed parsing of event, reference-table and tweet exports, with
//!   per-line diagnostics and referential integrity checks.
//! - [`cohort`]: border-presence selection, top-k nationalities, Visa / No-Visa split.
//! - [`mobility`]: daily majority placement, carry-forward, lost subscribers,
//!   five-group series, province counts, flows, antenna counts, drops, crossing bounds.
//! - [`social`]: geofencing, `und` resolution, language groups, destinations, overlaps.
//! - [`sentiment`]: dual-polarity lexicon scoring and daily / weekly moments.
//! - [`privacy`]: pseudonymization, small-cell suppression, output scanning and
//!   the whitelisted-template query service.
//! - [`synth`]: synthetic worlds with a ground-truth manifest.
//! - [`pipeline`]: configuration and stage orchestration.

pub mod clock;
pub mod cohort;
pub mod ingest;
pub mod mobility;
pub mod pipeline;
pub mod policy;
pub mod privacy;
pub mod sentiment;
pub mod social;
pub mod synth;

pub use clock::{DateRange, LocalClock};
pub use policy::{Destination, LanguageGroup, MobilityClass};
