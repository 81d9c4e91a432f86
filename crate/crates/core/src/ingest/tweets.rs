use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_budget, line_chunks, lines_of, Diagnostic, IngestError, ParseOptions, Parsed};
use crate::policy::{normalize_country, normalize_lang};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// A pseudonymous geotagged post. `lang` is the platform label, `und` allowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub user: String,
    pub ts: i64,
    pub point: Option<GeoPoint>,
    pub country: Option<String>,
    pub lang: String,
    pub text: Option<String>,
}

impl Tweet {
    pub const UNDEFINED_LANG: &'static str = "und";

    pub fn has_location(&self) -> bool {
        self.point.is_some() || self.country.is_some()
    }

    pub fn is_und(&self) -> bool {
        self.lang == Self::UNDEFINED_LANG
    }
}

/// Wire form, keys `id,user,ts,lat,lon,country,lang,text`.
#[derive(Serialize, Deserialize)]
struct TweetLine {
    id: Option<String>,
    user: Option<String>,
    ts: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    country: Option<String>,
    lang: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

fn parse_line(line: &[u8], n: usize) -> Result<Tweet, Diagnostic> {
    let raw: TweetLine = serde_json::from_slice(line).map_err(|e| Diagnostic::new(n, None, format!("invalid JSON: {e}")))?;
    let missing = |f: &'static str| Diagnostic::new(n, Some(f), "missing");
    let id = raw.id.filter(|s| !s.is_empty()).ok_or_else(|| missing("id"))?;
    let user = raw.user.filter(|s| !s.is_empty()).ok_or_else(|| missing("user"))?;
    let ts = raw.ts.ok_or_else(|| missing("ts"))?;
    let lang = raw.lang.map(|l| normalize_lang(&l)).filter(|l| !l.is_empty()).ok_or_else(|| missing("lang"))?;
    let point = match (raw.lat, raw.lon) {
        (Some(lat), Some(lon)) => {
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                return Err(Diagnostic::new(n, Some("lat"), format!("coordinates ({lat}, {lon}) out of range")));
            }
            Some(GeoPoint { lat, lon })
        }
        (None, None) => None,
        (Some(_), None) => return Err(missing("lon")),
        (None, Some(_)) => return Err(missing("lat")),
    };
    let country = raw.country.map(|c| normalize_country(&c)).filter(|c| !c.is_empty());
    Ok(Tweet { id, user, ts, point, country, lang, text: raw.text })
}

/// Parses a tweet NDJSON export. Tweets without a location are kept; the
/// geofilter accounts for them.
pub fn parse_tweets(bytes: &[u8], opts: &ParseOptions) -> Result<Parsed<Tweet>, IngestError> {
    let parts = rayon::current_num_threads() * 4;
    let results: Vec<_> = line_chunks(bytes, 1, parts)
        .into_par_iter()
        .map(|(chunk, first)| {
            let mut records = Vec::new();
            let mut diags = Vec::new();
            let mut lines = 0;
            for (n, line) in lines_of(chunk, first) {
                lines += 1;
                match parse_line(line, n) {
                    Ok(t) => match opts.horizon {
                        Some((lo, hi)) if t.ts < lo || t.ts >= hi => {
                            diags.push(Diagnostic::new(n, Some("ts"), "outside observation horizon"))
                        }
                        _ => records.push(t),
                    },
                    Err(d) => diags.push(d),
                }
            }
            (records, diags, lines)
        })
        .collect();
    let mut parsed = Parsed { records: Vec::new(), diagnostics: Vec::new(), lines: 0 };
    for (r, d, l) in results {
        parsed.records.extend(r);
        parsed.diagnostics.extend(d);
        parsed.lines += l;
    }
    check_budget(parsed.lines, &parsed.diagnostics, opts)?;
    Ok(parsed)
}

pub fn write_tweets_ndjson<W: Write>(tweets: &[Tweet], mut out: W) -> std::io::Result<()> {
    for t in tweets {
        let line = TweetLine {
            id: Some(t.id.clone()),
            user: Some(t.user.clone()),
            ts: Some(t.ts),
            lat: t.point.map(|p| p.lat),
            lon: t.point.map(|p| p.lon),
            country: t.country.clone(),
            lang: Some(t.lang.clone()),
            text: t.text.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
