//! Classification tables: nationality → mobility class, language → group,
//! country → destination class.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::IngestError;

/// Whether a nationality needs a visa to enter Greece / Bulgaria.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MobilityClass {
    Visa,
    NoVisa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LanguageGroup {
    Visa,
    NoVisa,
    Turkish,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Destination {
    Europe,
    Turkey,
    Other,
}

impl MobilityClass {
    pub const ALL: [MobilityClass; 2] = [MobilityClass::Visa, MobilityClass::NoVisa];

    pub fn as_str(&self) -> &'static str {
        match self {
            MobilityClass::Visa => "Visa",
            MobilityClass::NoVisa => "NoVisa",
        }
    }
}

impl LanguageGroup {
    pub const ALL: [LanguageGroup; 3] = [LanguageGroup::Visa, LanguageGroup::NoVisa, LanguageGroup::Turkish];

    pub fn as_str(&self) -> &'static str {
        match self {
            LanguageGroup::Visa => "Visa",
            LanguageGroup::NoVisa => "NoVisa",
            LanguageGroup::Turkish => "Turkish",
        }
    }
}

impl Destination {
    pub const ALL: [Destination; 3] = [Destination::Europe, Destination::Turkey, Destination::Other];

    pub fn as_str(&self) -> &'static str {
        match self {
            Destination::Europe => "Europe",
            Destination::Turkey => "Turkey",
            Destination::Other => "Other",
        }
    }
}

macro_rules! str_enum {
    ($ty:ty) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let t = s.trim();
                <$ty>::ALL
                    .into_iter()
                    .find(|v| v.as_str().eq_ignore_ascii_case(t))
                    .ok_or_else(|| t.to_string())
            }
        }
    };
}

str_enum!(MobilityClass);
str_enum!(LanguageGroup);
str_enum!(Destination);

/// Upper-case ISO alpha-3.
pub fn normalize_country(code: &str) -> String {
    code.trim().to_ascii_uppercase()
}

/// Lower-case primary subtag of a BCP-47 tag (`en-GB` → `en`).
pub fn normalize_lang(tag: &str) -> String {
    let t = tag.trim();
    let primary = t.split(['-', '_']).next().unwrap_or(t);
    primary.to_ascii_lowercase()
}

/// A two-column lookup table loaded from `key,value` CSV.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lookup<V: Ord> {
    entries: BTreeMap<String, V>,
}

impl<V: Copy + Ord> Lookup<V> {
    pub fn get(&self, key: &str) -> Option<V> {
        self.entries.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, V)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl<V: Ord> FromIterator<(String, V)> for Lookup<V> {
    fn from_iter<I: IntoIterator<Item = (String, V)>>(iter: I) -> Self {
        Self { entries: iter.into_iter().collect() }
    }
}

/// `nationality,class` with class ∈ {Visa, NoVisa}.
pub type VisaPolicy = Lookup<MobilityClass>;
/// `lang,group` with group ∈ {Visa, NoVisa, Turkish}.
pub type LanguageGroupPolicy = Lookup<LanguageGroup>;
/// `country,dest` with dest ∈ {Europe, Turkey, Other}.
pub type DestinationPolicy = Lookup<Destination>;

fn read_lookup<R, V>(
    reader: R,
    table: &'static str,
    columns: [&'static str; 2],
    normalize: fn(&str) -> String,
) -> Result<Lookup<V>, IngestError>
where
    R: Read,
    V: Ord + FromStr<Err = String>,
{
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| IngestError::csv(table, 1, e))?.clone();
    let idx = |name: &'static str| {
        headers.iter().position(|h| h == name).ok_or(IngestError::MissingColumn { table, column: name })
    };
    let (ki, vi) = (idx(columns[0])?, idx(columns[1])?);
    let mut entries = BTreeMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| IngestError::csv(table, line, e))?;
        let key = normalize(rec.get(ki).unwrap_or_default());
        if key.is_empty() {
            return Err(IngestError::BadRow { table, line, reason: format!("empty `{}`", columns[0]) });
        }
        let raw = rec.get(vi).unwrap_or_default();
        let value = raw
            .parse::<V>()
            .map_err(|value| IngestError::UnknownEnumValue { table, line, column: columns[1], value })?;
        if entries.insert(key.clone(), value).is_some() {
            return Err(IngestError::DuplicateKey { table, key });
        }
    }
    Ok(Lookup { entries })
}

pub fn read_visa_policy<R: Read>(reader: R) -> Result<VisaPolicy, IngestError> {
    read_lookup(reader, "visa policy", ["nationality", "class"], normalize_country)
}

pub fn read_language_groups<R: Read>(reader: R) -> Result<LanguageGroupPolicy, IngestError> {
    read_lookup(reader, "language groups", ["lang", "group"], normalize_lang)
}

pub fn read_destinations<R: Read>(reader: R) -> Result<DestinationPolicy, IngestError> {
    read_lookup(reader, "destinations", ["country", "dest"], normalize_country)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn visa_policy_reproduces_named_nationalities() {
        let csv = "nationality,class\nSYR,Visa\nafg,Visa\nIRQ,Visa\nGRC,NoVisa\nBGR,NoVisa\nMDA,NoVisa\n";
        let p = read_visa_policy(csv.as_bytes()).unwrap();
        assert_eq!(p.get("SYR"), Some(MobilityClass::Visa));
        assert_eq!(p.get("AFG"), Some(MobilityClass::Visa));
        assert_eq!(p.get("GRC"), Some(MobilityClass::NoVisa));
        assert_eq!(p.get("ZZZ"), None);
    }

    #[test]
    fn unknown_class_is_fatal() {
        let err = read_visa_policy("nationality,class\nSYR,Maybe\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::UnknownEnumValue { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_policy_key_is_fatal() {
        let err = read_language_groups("lang,group\ntr,Turkish\nTR,Turkish\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateKey { ref key, .. } if key == "tr"));
    }

    #[test]
    fn lang_tags_reduce_to_primary() {
        assert_eq!(normalize_lang("en-GB"), "en");
        assert_eq!(normalize_lang(" TR "), "tr");
        assert_eq!(normalize_lang("zh_Hant"), "zh");
        assert_eq!(normalize_lang("und"), "und");
    }

    #[test]
    fn destinations_parse() {
        let p = read_destinations("country,dest\nTUR,Turkey\nDEU,Europe\nUSA,other\n".as_bytes()).unwrap();
        assert_eq!(p.get("TUR"), Some(Destination::Turkey));
        assert_eq!(p.get("DEU"), Some(Destination::Europe));
        assert_eq!(p.get("USA"), Some(Destination::Other));
    }
}
