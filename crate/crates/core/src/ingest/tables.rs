use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::policy::{
    normalize_country, read_destinations, read_language_groups, read_visa_policy, DestinationPolicy,
    LanguageGroupPolicy, VisaPolicy,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSite {
    pub cell_id: String,
    pub province: String,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub district: Option<String>,
    pub lat: f64,
    pub lon: f64,
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty()))
}

/// Spatial unit placements are aggregated to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Province,
    District,
}

impl Granularity {
    pub fn is_finer_than(self, other: Granularity) -> bool {
        matches!((self, other), (Granularity::District, Granularity::Province))
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Granularity::Province => "province",
            Granularity::District => "district",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "province" => Ok(Granularity::Province),
            "district" => Ok(Granularity::District),
            other => Err(other.to_string()),
        }
    }
}

/// Cell id → site lookup.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellRegistry {
    sites: Vec<CellSite>,
    #[serde(skip)]
    by_id: HashMap<String, u32>,
}

impl CellRegistry {
    pub fn from_sites(sites: Vec<CellSite>) -> Result<Self, IngestError> {
        let mut by_id = HashMap::with_capacity(sites.len());
        for (i, s) in sites.iter().enumerate() {
            let line = i + 2;
            if s.cell_id.is_empty() {
                return Err(IngestError::BadRow { table: "cells", line, reason: "empty cell_id".into() });
            }
            if s.province.is_empty() {
                return Err(IngestError::BadRow { table: "cells", line, reason: "empty province".into() });
            }
            if !(-90.0..=90.0).contains(&s.lat) || !(-180.0..=180.0).contains(&s.lon) {
                return Err(IngestError::BadRow {
                    table: "cells",
                    line,
                    reason: format!("coordinates ({}, {}) out of range", s.lat, s.lon),
                });
            }
            if by_id.insert(s.cell_id.clone(), i as u32).is_some() {
                return Err(IngestError::DuplicateKey { table: "cells", key: s.cell_id.clone() });
            }
        }
        Ok(Self { sites, by_id })
    }

    /// Reads `cell_id,province,district,lat,lon`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut sites = Vec::new();
        for (n, rec) in rdr.deserialize::<CellSite>().enumerate() {
            sites.push(rec.map_err(|e| IngestError::csv("cells", n + 2, e))?);
        }
        Self::from_sites(sites)
    }

    pub fn lookup(&self, cell_id: &str) -> Option<u32> {
        self.by_id.get(cell_id).copied()
    }

    pub fn site(&self, idx: u32) -> &CellSite {
        &self.sites[idx as usize]
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[CellSite] {
        &self.sites
    }

    pub fn regions(&self, granularity: Granularity) -> RegionIndex {
        RegionIndex::build(self, granularity)
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.by_id = self.sites.iter().enumerate().map(|(i, s)| (s.cell_id.clone(), i as u32)).collect();
    }
}

/// Dense region ids for one granularity. Ids follow the sorted order of
/// region names, so comparing ids compares names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionIndex {
    granularity: Granularity,
    names: Vec<String>,
    provinces: Vec<String>,
    of_cell: Vec<u32>,
}

impl RegionIndex {
    fn region_name(site: &CellSite, granularity: Granularity) -> String {
        match (granularity, &site.district) {
            (Granularity::District, Some(d)) => format!("{}/{}", site.province, d),
            _ => site.province.clone(),
        }
    }

    fn build(registry: &CellRegistry, granularity: Granularity) -> Self {
        let mut province_of: BTreeMap<String, String> = BTreeMap::new();
        for s in registry.sites() {
            province_of.entry(Self::region_name(s, granularity)).or_insert_with(|| s.province.clone());
        }
        let names: Vec<String> = province_of.keys().cloned().collect();
        let provinces: Vec<String> = province_of.into_values().collect();
        let id_of: HashMap<&str, u32> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i as u32)).collect();
        let of_cell = registry.sites().iter().map(|s| id_of[Self::region_name(s, granularity).as_str()]).collect();
        Self { granularity, names, provinces, of_cell }
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    #[inline]
    pub fn of_cell(&self, cell: u32) -> u32 {
        self.of_cell[cell as usize]
    }

    pub fn name(&self, region: u32) -> &str {
        &self.names[region as usize]
    }

    pub fn province_of(&self, region: u32) -> &str {
        &self.provinces[region as usize]
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok().map(|i| i as u32)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Regions lying in any of `provinces`.
    pub fn within_provinces(&self, provinces: &BTreeSet<String>) -> BTreeSet<u32> {
        (0..self.names.len() as u32).filter(|&r| provinces.contains(self.province_of(r))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscriber {
    pub subscriber_id: String,
    pub nationality: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriberTable {
    rows: Vec<Subscriber>,
    #[serde(skip)]
    by_id: HashMap<String, u32>,
}

impl SubscriberTable {
    pub fn from_rows(rows: Vec<Subscriber>) -> Result<Self, IngestError> {
        let mut by_id = HashMap::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.subscriber_id.is_empty() {
                return Err(IngestError::BadRow { table: "subscribers", line: i + 2, reason: "empty subscriber_id".into() });
            }
            if by_id.insert(r.subscriber_id.clone(), i as u32).is_some() {
                return Err(IngestError::DuplicateKey { table: "subscribers", key: r.subscriber_id.clone() });
            }
        }
        Ok(Self { rows, by_id })
    }

    /// Reads `subscriber_id,nationality`; nationality is upper-cased.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (n, rec) in rdr.deserialize::<Subscriber>().enumerate() {
            let mut s = rec.map_err(|e| IngestError::csv("subscribers", n + 2, e))?;
            s.nationality = normalize_country(&s.nationality);
            rows.push(s);
        }
        Self::from_rows(rows)
    }

    pub fn lookup(&self, subscriber_id: &str) -> Option<u32> {
        self.by_id.get(subscriber_id).copied()
    }

    pub fn get(&self, idx: u32) -> &Subscriber {
        &self.rows[idx as usize]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Subscriber] {
        &self.rows
    }

    /// Rewrites every id in place (row order, and so indices, are kept).
    pub fn map_ids(&mut self, f: impl Fn(&str) -> String) {
        for r in &mut self.rows {
            r.subscriber_id = f(&r.subscriber_id);
        }
        self.rebuild_index();
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.by_id = self.rows.iter().enumerate().map(|(i, r)| (r.subscriber_id.clone(), i as u32)).collect();
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferencePaths {
    pub cells: PathBuf,
    pub subscribers: PathBuf,
    pub visa_policy: PathBuf,
    pub lang_groups: PathBuf,
    pub destinations: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTables {
    pub cells: CellRegistry,
    pub subscribers: SubscriberTable,
    pub visa: VisaPolicy,
    pub lang_groups: LanguageGroupPolicy,
    pub destinations: DestinationPolicy,
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|e| IngestError::io(path, e))
}

/// Loads every lookup table; any duplicate key or unknown class value is fatal.
pub fn parse_reference_tables(paths: &ReferencePaths) -> Result<ReferenceTables, IngestError> {
    Ok(ReferenceTables {
        cells: CellRegistry::read_csv(open(&paths.cells)?)?,
        subscribers: SubscriberTable::read_csv(open(&paths.subscribers)?)?,
        visa: read_visa_policy(open(&paths.visa_policy)?)?,
        lang_groups: read_language_groups(open(&paths.lang_groups)?)?,
        destinations: read_destinations(open(&paths.destinations)?)?,
    })
}
