//! Geotagged posts: fence filtering, `und` language resolution, language
//! group activity, follow-up destinations and user-set overlaps.

mod fence;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fence::{geofilter, BBox, CountryPolygons, FenceStats, FenceVerdict, GeoFence, Territory};

use crate::clock::{DateRange, LocalClock};
use crate::ingest::Tweet;
use crate::policy::{Destination, DestinationPolicy, LanguageGroup, LanguageGroupPolicy};

#[derive(Debug, Error, PartialEq)]
pub enum SocialError {
    #[error("fence: {0}")]
    Fence(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserLanguageProfile {
    pub counts: BTreeMap<String, u64>,
    pub resolved_und: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndReport {
    pub profiles: BTreeMap<String, UserLanguageProfile>,
    pub resolved_tweets: u64,
    /// `und` tweets of users who never posted a labelled tweet.
    pub unresolved_tweets: u64,
    pub unresolved_users: u64,
}

/// The user's most frequent labelled language. Ties go to the language of the
/// latest labelled tweet, ordered by `(ts, id)`, among the tied languages.
fn majority_language(tweets: &[&Tweet]) -> (BTreeMap<String, u64>, Option<String>) {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for t in tweets.iter().filter(|t| !t.is_und()) {
        *counts.entry(t.lang.clone()).or_default() += 1;
    }
    let Some(&best) = counts.values().max() else { return (counts, None) };
    let tied: BTreeSet<&str> = counts.iter().filter(|(_, &n)| n == best).map(|(l, _)| l.as_str()).collect();
    let pick = tweets
        .iter()
        .filter(|t| tied.contains(t.lang.as_str()))
        .max_by(|a, b| (a.ts, &a.id).cmp(&(b.ts, &b.id)))
        .map(|t| t.lang.clone());
    (counts, pick)
}

/// Relabels each `und` tweet with its user's majority language. Tweets of
/// users with no labelled tweet keep `und`.
pub fn resolve_und(tweets: &mut [Tweet]) -> UndReport {
    let mut by_user: HashMap<&str, Vec<&Tweet>> = HashMap::new();
    for t in tweets.iter() {
        by_user.entry(t.user.as_str()).or_default().push(t);
    }
    let profiles: BTreeMap<String, UserLanguageProfile> = by_user
        .par_iter()
        .map(|(user, ts)| {
            let (counts, pick) = majority_language(ts);
            let has_und = ts.iter().any(|t| t.is_und());
            (user.to_string(), UserLanguageProfile { counts, resolved_und: pick.filter(|_| has_und) })
        })
        .collect();
    let mut report = UndReport::default();
    for t in tweets.iter_mut().filter(|t| t.is_und()) {
        match &profiles[&t.user].resolved_und {
            Some(lang) => {
                t.lang = lang.clone();
                report.resolved_tweets += 1;
            }
            None => report.unresolved_tweets += 1,
        }
    }
    report.unresolved_users = profiles.values().filter(|p| p.counts.is_empty()).count() as u64;
    report.profiles = profiles;
    report
}

pub fn map_language_group(lang: &str, policy: &LanguageGroupPolicy) -> Option<LanguageGroup> {
    policy.get(lang)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupActivity {
    pub tweets: u64,
    pub users: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityCounts {
    /// Always holds all three groups.
    pub total: BTreeMap<LanguageGroup, GroupActivity>,
    /// Every (date, group) of the period, zero-filled.
    pub daily: BTreeMap<(NaiveDate, LanguageGroup), GroupActivity>,
    pub unresolved: u64,
    pub unassigned: u64,
    pub outside_period: u64,
}

/// Tweets and distinct users per language group, overall and per local day.
pub fn activity_counts(tweets: &[Tweet], policy: &LanguageGroupPolicy, period: &DateRange, clock: &LocalClock) -> ActivityCounts {
    let mut out = ActivityCounts::default();
    let mut users: BTreeMap<LanguageGroup, BTreeSet<&str>> = BTreeMap::new();
    let mut daily_users: BTreeMap<(NaiveDate, LanguageGroup), BTreeSet<&str>> = BTreeMap::new();
    for g in LanguageGroup::ALL {
        out.total.insert(g, GroupActivity::default());
        for d in period.days() {
            out.daily.insert((d, g), GroupActivity::default());
        }
    }
    for t in tweets {
        let date = clock.date_of(t.ts);
        if !period.contains(date) {
            out.outside_period += 1;
            continue;
        }
        if t.is_und() {
            out.unresolved += 1;
            continue;
        }
        let Some(g) = map_language_group(&t.lang, policy) else {
            out.unassigned += 1;
            continue;
        };
        out.total.get_mut(&g).unwrap().tweets += 1;
        out.daily.get_mut(&(date, g)).unwrap().tweets += 1;
        users.entry(g).or_default().insert(&t.user);
        daily_users.entry((date, g)).or_default().insert(&t.user);
    }
    for (g, u) in users {
        out.total.get_mut(&g).unwrap().users = u.len() as u64;
    }
    for (k, u) in daily_users {
        out.daily.get_mut(&k).unwrap().users = u.len() as u64;
    }
    out
}

/// Destination class of a tweet's own location. Countries missing from the
/// policy table count as Other; `None` when no country can be determined.
pub fn classify_destination(
    tweet: &Tweet,
    policy: &DestinationPolicy,
    countries: Option<&CountryPolygons>,
) -> Option<Destination> {
    let country = match (&tweet.country, tweet.point, countries) {
        (Some(c), _, _) => c.as_str(),
        (None, Some(p), Some(polys)) => polys.locate(p)?,
        _ => return None,
    };
    Some(policy.get(country).unwrap_or(Destination::Other))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DestinationReport {
    /// Distinct users per (group, destination) co-occurring on one tweet;
    /// all nine cells present.
    pub counts: BTreeMap<(LanguageGroup, Destination), u64>,
    pub border_users: u64,
    /// Border users with at least one located follow-up tweet.
    pub present: u64,
    pub disappeared: u64,
    pub user_groups: BTreeMap<String, BTreeSet<LanguageGroup>>,
    pub user_destinations: BTreeMap<String, BTreeSet<Destination>>,
    pub unlocated_tweets: u64,
    pub unassigned_tweets: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn destination_matrix(
    tweets: &[Tweet],
    border_users: &BTreeSet<String>,
    period: &DateRange,
    clock: &LocalClock,
    lang_policy: &LanguageGroupPolicy,
    dest_policy: &DestinationPolicy,
    countries: Option<&CountryPolygons>,
) -> DestinationReport {
    let mut out = DestinationReport { border_users: border_users.len() as u64, ..Default::default() };
    let mut cells: BTreeMap<(LanguageGroup, Destination), BTreeSet<&str>> = BTreeMap::new();
    let mut present: BTreeSet<&str> = BTreeSet::new();
    for t in tweets {
        if !border_users.contains(&t.user) || !period.contains(clock.date_of(t.ts)) {
            continue;
        }
        let Some(dest) = classify_destination(t, dest_policy, countries) else {
            out.unlocated_tweets += 1;
            continue;
        };
        present.insert(&t.user);
        out.user_destinations.entry(t.user.clone()).or_default().insert(dest);
        let group = if t.is_und() { None } else { map_language_group(&t.lang, lang_policy) };
        let Some(group) = group else {
            out.unassigned_tweets += 1;
            continue;
        };
        out.user_groups.entry(t.user.clone()).or_default().insert(group);
        cells.entry((group, dest)).or_default().insert(&t.user);
    }
    for g in LanguageGroup::ALL {
        for d in Destination::ALL {
            out.counts.insert((g, d), cells.get(&(g, d)).map_or(0, |s| s.len() as u64));
        }
    }
    out.present = present.len() as u64;
    out.disappeared = out.border_users - out.present;
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VennRegion<T> {
    pub set: Vec<T>,
    pub count: u64,
}

/// Counts for the seven non-empty regions over a three-element universe, in
/// bitmask order (bit i set ⇔ `universe[i]` in the set). Empty sets are skipped.
pub fn overlap_regions<'a, T, I>(sets: I, universe: [T; 3]) -> Vec<VennRegion<T>>
where
    T: Ord + Copy + 'a,
    I: IntoIterator<Item = &'a BTreeSet<T>>,
{
    let mut counts = [0u64; 8];
    for s in sets {
        let mask = universe.iter().enumerate().filter(|(_, u)| s.contains(u)).fold(0, |m, (i, _)| m | (1 << i));
        counts[mask] += 1;
    }
    (1..8)
        .map(|mask| VennRegion {
            set: universe.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, u)| *u).collect(),
            count: counts[mask],
        })
        .collect()
}
