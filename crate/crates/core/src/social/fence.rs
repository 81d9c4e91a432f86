use geo::{BoundingRect, Intersects, MultiPolygon, Point};
use geojson::{GeoJson, Value};
use serde::{Deserialize, Serialize};

use super::SocialError;
use crate::ingest::{GeoPoint, Tweet};
use crate::policy::normalize_country;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self, SocialError> {
        if !(min_lon < max_lon && min_lat < max_lat) {
            return Err(SocialError::Fence(format!("degenerate bbox [{min_lon}, {min_lat}, {max_lon}, {max_lat}]")));
        }
        Ok(BBox { min_lon, min_lat, max_lon, max_lat })
    }

    /// Edges count as inside.
    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lon..=self.max_lon).contains(&p.lon) && (self.min_lat..=self.max_lat).contains(&p.lat)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Territory {
    Polygon(MultiPolygon<f64>),
    /// Keep tweets whose country field equals this code.
    Country(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FenceVerdict {
    Kept,
    OutsideBbox,
    OutsideTerritory,
    /// Country but no coordinates: the boxes cannot be checked.
    NoPoint,
    NoLocation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FenceStats {
    pub kept: u64,
    pub outside_bbox: u64,
    pub outside_territory: u64,
    pub no_point: u64,
    pub no_location: u64,
}

impl FenceStats {
    fn record(&mut self, v: FenceVerdict) {
        match v {
            FenceVerdict::Kept => self.kept += 1,
            FenceVerdict::OutsideBbox => self.outside_bbox += 1,
            FenceVerdict::OutsideTerritory => self.outside_territory += 1,
            FenceVerdict::NoPoint => self.no_point += 1,
            FenceVerdict::NoLocation => self.no_location += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeoFence {
    pub bboxes: Vec<BBox>,
    pub territory: Territory,
}

fn rings_closed(value: &Value) -> bool {
    let closed = |ring: &Vec<Vec<f64>>| ring.len() >= 4 && ring.first() == ring.last();
    match value {
        Value::Polygon(rings) => rings.iter().all(closed),
        Value::MultiPolygon(polys) => polys.iter().flatten().all(closed),
        _ => true,
    }
}

fn to_multipolygon(value: &Value) -> Result<MultiPolygon<f64>, SocialError> {
    if !rings_closed(value) {
        return Err(SocialError::Fence("polygon ring is not closed".into()));
    }
    let geom: geo::Geometry<f64> = value.clone().try_into().map_err(|e: geojson::Error| SocialError::Fence(e.to_string()))?;
    match geom {
        geo::Geometry::Polygon(p) => Ok(MultiPolygon(vec![p])),
        geo::Geometry::MultiPolygon(m) => Ok(m),
        _ => Err(SocialError::Fence("territory must be a Polygon or MultiPolygon".into())),
    }
}

fn features(text: &str) -> Result<Vec<geojson::Feature>, SocialError> {
    match text.parse::<GeoJson>().map_err(|e| SocialError::Fence(e.to_string()))? {
        GeoJson::FeatureCollection(fc) => Ok(fc.features),
        GeoJson::Feature(f) => Ok(vec![f]),
        GeoJson::Geometry(_) => Err(SocialError::Fence("expected features with a `role` property".into())),
    }
}

impl GeoFence {
    /// Features carry `"role": "bbox"` (the envelope of the geometry is used)
    /// or `"role": "territory"` with a polygon geometry or a `country` property.
    pub fn from_geojson(text: &str) -> Result<Self, SocialError> {
        let mut bboxes = Vec::new();
        let mut territory = None;
        for f in features(text)? {
            let role = f.property("role").and_then(|v| v.as_str()).unwrap_or_default().to_string();
            let value = f.geometry.as_ref().map(|g| &g.value);
            match role.as_str() {
                "bbox" => {
                    let value = value.ok_or_else(|| SocialError::Fence("bbox feature without geometry".into()))?;
                    let rect = to_multipolygon(value)?
                        .bounding_rect()
                        .ok_or_else(|| SocialError::Fence("empty bbox geometry".into()))?;
                    bboxes.push(BBox::new(rect.min().x, rect.min().y, rect.max().x, rect.max().y)?);
                }
                "territory" if territory.is_some() => return Err(SocialError::Fence("more than one territory".into())),
                "territory" => {
                    territory = Some(match (value, f.property("country").and_then(|v| v.as_str())) {
                        (Some(v), _) => Territory::Polygon(to_multipolygon(v)?),
                        (None, Some(code)) => Territory::Country(normalize_country(code)),
                        (None, None) => return Err(SocialError::Fence("territory needs a geometry or a country".into())),
                    });
                }
                other => return Err(SocialError::Fence(format!("unknown feature role `{other}`"))),
            }
        }
        if bboxes.is_empty() {
            return Err(SocialError::Fence("no bbox features".into()));
        }
        let territory = territory.ok_or_else(|| SocialError::Fence("no territory feature".into()))?;
        Ok(GeoFence { bboxes, territory })
    }

    pub fn verdict(&self, tweet: &Tweet) -> FenceVerdict {
        let Some(p) = tweet.point else {
            return if tweet.country.is_some() { FenceVerdict::NoPoint } else { FenceVerdict::NoLocation };
        };
        if !self.bboxes.iter().any(|b| b.contains(p)) {
            return FenceVerdict::OutsideBbox;
        }
        let inside = match &self.territory {
            Territory::Polygon(m) => m.intersects(&Point::new(p.lon, p.lat)),
            Territory::Country(code) => tweet.country.as_deref() == Some(code.as_str()),
        };
        if inside {
            FenceVerdict::Kept
        } else {
            FenceVerdict::OutsideTerritory
        }
    }
}

/// Tweets inside some box and inside the territory, in input order.
pub fn geofilter(tweets: &[Tweet], fence: &GeoFence) -> (Vec<Tweet>, FenceStats) {
    let mut stats = FenceStats::default();
    let mut kept = Vec::new();
    for t in tweets {
        let v = fence.verdict(t);
        stats.record(v);
        if v == FenceVerdict::Kept {
            kept.push(t.clone());
        }
    }
    (kept, stats)
}

/// Country outlines for resolving coordinates to a country code.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CountryPolygons {
    countries: Vec<(String, MultiPolygon<f64>)>,
}

impl CountryPolygons {
    /// Features with a `country` property and a polygon geometry.
    pub fn from_geojson(text: &str) -> Result<Self, SocialError> {
        let mut countries = Vec::new();
        for f in features(text)? {
            let code = f
                .property("country")
                .and_then(|v| v.as_str())
                .ok_or_else(|| SocialError::Fence("country feature without `country` property".into()))?;
            let value = f.geometry.as_ref().ok_or_else(|| SocialError::Fence(format!("country {code} has no geometry")))?;
            countries.push((normalize_country(code), to_multipolygon(&value.value)?));
        }
        countries.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(CountryPolygons { countries })
    }

    /// First matching country in code order.
    pub fn locate(&self, p: GeoPoint) -> Option<&str> {
        let pt = Point::new(p.lon, p.lat);
        self.countries.iter().find(|(_, m)| m.intersects(&pt)).map(|(c, _)| c.as_str())
    }
}
