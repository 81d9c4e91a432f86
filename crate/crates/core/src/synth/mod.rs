//! Seeded synthetic worlds with a ground-truth manifest.
//!
//! Subscribers only change province on days they are observed, so the carried
//! placement on a silent day is always the true location. Injected
//! disappearances, surges and returns are assigned to exact member quotas.

mod tweets;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tweets::{generate_tweets, TweetConfig, TweetManifest, TweetUser, VennCount};

use crate::clock::{ymd, DateRange, LocalClock};
use crate::ingest::{CellSite, EventKind, Subscriber};
use crate::policy::MobilityClass;

pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.3), one stream per subscriber or user";

pub const FENCE_GEOJSON: &str = include_str!("../../fixtures/fence.geojson");
pub const VISA_POLICY_CSV: &str = include_str!("../../fixtures/visa_policy.csv");
pub const LANG_GROUPS_CSV: &str = include_str!("../../fixtures/lang_groups.csv");
pub const DESTINATIONS_CSV: &str = include_str!("../../fixtures/destinations.csv");
pub const LEXICON_EN_CSV: &str = include_str!("../../fixtures/lexicon_en.csv");
pub const LEXICON_TR_CSV: &str = include_str!("../../fixtures/lexicon_tr.csv");

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible injection: {0}")]
    Infeasible(String),
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io { path: path.display().to_string(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvinceSpec {
    pub name: String,
    pub code: String,
    pub lat: f64,
    pub lon: f64,
    pub cells: u32,
    #[serde(default)]
    pub border: bool,
    #[serde(default)]
    pub districts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NationalitySpec {
    pub code: String,
    pub subscribers: u32,
    /// `None` for the home nationality.
    #[serde(default)]
    pub class: Option<MobilityClass>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionKind {
    Disappear,
    Surge,
    Return,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub kind: InjectionKind,
    pub date: NaiveDate,
    pub count: u32,
    #[serde(default)]
    pub group: Option<MobilityClass>,
    /// Target of a surge; a return goes to the member's start province when unset.
    #[serde(default)]
    pub province: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub timezone: LocalClock,
    pub horizon: DateRange,
    /// Border visitors are seen in a border province on one day of this window.
    pub visit_window: DateRange,
    pub home_nationality: String,
    pub nationalities: Vec<NationalitySpec>,
    pub provinces: Vec<ProvinceSpec>,
    pub visitor_share: f64,
    pub events_per_day: (u32, u32),
    pub observe_prob: f64,
    pub move_prob: f64,
    /// Chance of a few extra events in a second province, always fewer than
    /// the day's majority.
    pub minority_prob: f64,
    /// Share of subscribers silenced on a random day.
    pub natural_loss: f64,
    pub injections: Vec<Injection>,
    pub tweets: TweetConfig,
}

fn province(name: &str, code: &str, lat: f64, lon: f64, cells: u32, border: bool, districts: &[&str]) -> ProvinceSpec {
    ProvinceSpec {
        name: name.into(),
        code: code.into(),
        lat,
        lon,
        cells,
        border,
        districts: districts.iter().map(|d| d.to_string()).collect(),
    }
}

fn nationality(code: &str, subscribers: u32, class: Option<MobilityClass>) -> NationalitySpec {
    NationalitySpec { code: code.into(), subscribers, class }
}

impl Default for SynthConfig {
    fn default() -> Self {
        use MobilityClass::*;
        SynthConfig {
            seed: 2020,
            timezone: LocalClock::default(),
            horizon: DateRange::new(ymd(2020, 2, 25), ymd(2020, 6, 15)).unwrap(),
            visit_window: DateRange::new(ymd(2020, 2, 25), ymd(2020, 3, 25)).unwrap(),
            home_nationality: "TUR".into(),
            nationalities: vec![
                nationality("SYR", 300, Some(Visa)),
                nationality("AFG", 150, Some(Visa)),
                nationality("IRQ", 120, Some(Visa)),
                nationality("IRN", 80, Some(Visa)),
                nationality("PAK", 50, Some(Visa)),
                nationality("BGR", 70, Some(NoVisa)),
                nationality("GRC", 60, Some(NoVisa)),
                nationality("MDA", 40, Some(NoVisa)),
                nationality("GEO", 30, Some(NoVisa)),
                nationality("TUR", 100, None),
            ],
            provinces: vec![
                province("Edirne", "EDI", 41.68, 26.56, 6, true, &["Merkez", "Ipsala", "Uzunköprü", "Keşan"]),
                province("Kırklareli", "KIR", 41.73, 27.22, 4, true, &["Merkez", "Lüleburgaz"]),
                province("Istanbul", "IST", 41.01, 28.97, 8, false, &["Fatih", "Esenyurt", "Küçükçekmece", "Zeytinburnu"]),
                province("Ankara", "ANK", 39.93, 32.86, 3, false, &["Çankaya", "Keçiören"]),
                province("Izmir", "IZM", 38.42, 27.14, 3, false, &["Konak", "Bornova"]),
                province("Bursa", "BUR", 40.19, 29.06, 2, false, &["Osmangazi"]),
                province("Gaziantep", "GAZ", 37.07, 37.38, 3, false, &["Şahinbey", "Şehitkamil"]),
                province("Şanlıurfa", "SAN", 37.16, 38.79, 2, false, &["Haliliye"]),
            ],
            visitor_share: 0.7,
            events_per_day: (1, 6),
            observe_prob: 0.85,
            move_prob: 0.04,
            minority_prob: 0.2,
            natural_loss: 0.1,
            injections: vec![
                Injection { kind: InjectionKind::Surge, date: ymd(2020, 2, 28), count: 120, group: Some(Visa), province: Some("Edirne".into()) },
                Injection { kind: InjectionKind::Disappear, date: ymd(2020, 3, 10), count: 80, group: Some(Visa), province: None },
                Injection { kind: InjectionKind::Disappear, date: ymd(2020, 4, 4), count: 50, group: None, province: None },
                Injection { kind: InjectionKind::Return, date: ymd(2020, 4, 20), count: 40, group: None, province: Some("Istanbul".into()) },
                Injection { kind: InjectionKind::Disappear, date: ymd(2020, 5, 14), count: 45, group: None, province: None },
            ],
            tweets: TweetConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        let (lo, hi) = self.events_per_day;
        if lo == 0 || lo > hi {
            return bad(format!("events_per_day must satisfy 1 <= min <= max, got {lo}..{hi}"));
        }
        for (name, p) in [
            ("visitor_share", self.visitor_share),
            ("observe_prob", self.observe_prob),
            ("move_prob", self.move_prob),
            ("minority_prob", self.minority_prob),
            ("natural_loss", self.natural_loss),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.provinces.iter().all(|p| !p.border) || self.provinces.iter().all(|p| p.border) {
            return bad("need at least one border and one non-border province".into());
        }
        if self.provinces.iter().any(|p| p.cells == 0) {
            return bad("every province needs at least one cell".into());
        }
        for inj in &self.injections {
            if !self.horizon.contains(inj.date) || inj.date == self.horizon.start() {
                return bad(format!("injection date {} must fall after the first horizon day", inj.date));
            }
            if let Some(p) = &inj.province {
                if !self.provinces.iter().any(|q| &q.name == p) {
                    return bad(format!("unknown injection province `{p}`"));
                }
            }
            if inj.kind == InjectionKind::Surge && inj.province.is_none() {
                return bad("a surge needs a target province".into());
            }
        }
        if self.visit_window.start() > self.horizon.end() || self.visit_window.end() < self.horizon.start() {
            return bad("visit window lies outside the horizon".into());
        }
        self.tweets.validate()
    }

    pub fn total_subscribers(&self) -> usize {
        self.nationalities.iter().map(|n| n.subscribers as usize).sum()
    }

    /// Cell table: `{CODE}-{nn}`, districts assigned round-robin.
    pub fn cells(&self) -> Vec<CellSite> {
        let mut out = Vec::new();
        for p in &self.provinces {
            for i in 0..p.cells {
                let district = (!p.districts.is_empty()).then(|| p.districts[i as usize % p.districts.len()].clone());
                let angle = i as f64 * 2.399;
                out.push(CellSite {
                    cell_id: format!("{}-{:02}", p.code, i + 1),
                    province: p.name.clone(),
                    district,
                    lat: ((p.lat + 0.05 * angle.sin()) * 1e4).round() / 1e4,
                    lon: ((p.lon + 0.05 * angle.cos()) * 1e4).round() / 1e4,
                });
            }
        }
        out
    }

    fn province_index(&self, name: &str) -> usize {
        self.provinces.iter().position(|p| p.name == name).expect("validated province")
    }
}

pub fn subscriber_id(i: usize) -> String {
    format!("S{i:07}")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub province: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriberTruth {
    pub id: String,
    pub nationality: String,
    pub border_visitor: bool,
    /// True daily province from the first to the last observed day.
    pub itinerary: Vec<Segment>,
    pub lost_date: Option<NaiveDate>,
}

impl SubscriberTruth {
    pub fn province_on(&self, date: NaiveDate) -> Option<&str> {
        self.itinerary.iter().find(|s| s.from <= date && date <= s.to).map(|s| s.province.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionTruth {
    pub kind: InjectionKind,
    pub date: NaiveDate,
    pub group: Option<MobilityClass>,
    pub province: Option<String>,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub rng: String,
    pub seed: u64,
    pub timezone: LocalClock,
    pub horizon: DateRange,
    pub events: u64,
    pub subscribers: Vec<SubscriberTruth>,
    pub injections: Vec<InjectionTruth>,
}

#[derive(Clone, Debug)]
pub struct World {
    pub cells: Vec<CellSite>,
    pub subscribers: Vec<Subscriber>,
    pub manifest: Manifest,
}

#[derive(Clone, Debug, Default)]
struct Plan {
    nationality: usize,
    visitor: bool,
    visit_day: Option<usize>,
    start: usize,
    silence: Option<usize>,
    forced: BTreeMap<usize, usize>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const PLAN_STREAM: u64 = u64::MAX;

fn make_plans(cfg: &SynthConfig) -> Result<(Vec<Plan>, Vec<InjectionTruth>), SynthError> {
    let days = cfg.horizon.len_days();
    let mut rng = rng_for(cfg.seed, PLAN_STREAM);
    let border: Vec<usize> = (0..cfg.provinces.len()).filter(|&i| cfg.provinces[i].border).collect();
    let inland: Vec<usize> = (0..cfg.provinces.len()).filter(|&i| !cfg.provinces[i].border).collect();
    let window: Vec<usize> = cfg.horizon.days().enumerate().filter(|(_, d)| cfg.visit_window.contains(*d)).map(|(i, _)| i).collect();
    let mut plans = Vec::with_capacity(cfg.total_subscribers());
    for (n, spec) in cfg.nationalities.iter().enumerate() {
        for _ in 0..spec.subscribers {
            let visitor = !window.is_empty() && rng.gen_bool(cfg.visitor_share);
            let visit_day = visitor.then(|| *window.choose(&mut rng).unwrap());
            let start = if visitor && rng.gen_bool(0.5) { *border.choose(&mut rng).unwrap() } else { *inland.choose(&mut rng).unwrap() };
            let first_silent = visit_day.map_or(1, |v| v + 1);
            let silence = (first_silent < days && rng.gen_bool(cfg.natural_loss)).then(|| rng.gen_range(first_silent..days));
            let mut forced = BTreeMap::new();
            if let Some(v) = visit_day {
                forced.insert(v, *border.choose(&mut rng).unwrap());
            }
            plans.push(Plan { nationality: n, visitor, visit_day, start, silence, forced });
        }
    }

    let mut truths = Vec::new();
    for inj in &cfg.injections {
        let d = cfg.horizon.offset_of(inj.date).expect("validated date");
        let mut eligible: Vec<usize> = (0..plans.len())
            .filter(|&i| {
                let p = &plans[i];
                let class = cfg.nationalities[p.nationality].class;
                let visited_before = p.visit_day.is_some_and(|v| v < d);
                class.is_some()
                    && p.visitor
                    && inj.group.is_none_or(|g| class == Some(g))
                    && match inj.kind {
                        InjectionKind::Disappear => visited_before && p.silence.is_none_or(|s| s > d) && p.forced.keys().all(|&f| f < d),
                        InjectionKind::Surge | InjectionKind::Return => {
                            p.silence.is_none_or(|s| s > d + 1) && !p.forced.contains_key(&d) && (inj.kind == InjectionKind::Surge || visited_before)
                        }
                    }
            })
            .collect();
        if eligible.len() < inj.count as usize {
            return Err(SynthError::Infeasible(format!(
                "{:?} on {} needs {} members but only {} are eligible",
                inj.kind,
                inj.date,
                inj.count,
                eligible.len()
            )));
        }
        let (chosen, _) = eligible.partial_shuffle(&mut rng, inj.count as usize);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        for &i in &chosen {
            let p = &mut plans[i];
            match inj.kind {
                InjectionKind::Disappear => p.silence = Some(d),
                InjectionKind::Surge => {
                    p.forced.insert(d, cfg.province_index(inj.province.as_deref().unwrap()));
                }
                InjectionKind::Return => {
                    let target = inj.province.as_deref().map_or(p.start, |name| cfg.province_index(name));
                    p.forced.insert(d, target);
                }
            }
        }
        truths.push(InjectionTruth {
            kind: inj.kind,
            date: inj.date,
            group: inj.group,
            province: inj.province.clone(),
            members: chosen.iter().map(|&i| subscriber_id(i)).collect(),
        });
    }
    Ok((plans, truths))
}

const KINDS: [EventKind; 3] = [EventKind::Data, EventKind::Handshake, EventKind::Call];

fn kind_str(k: EventKind) -> &'static str {
    match k {
        EventKind::Call => "call",
        EventKind::Data => "data",
        EventKind::Handshake => "handshake",
    }
}

/// Emits one subscriber's CSV lines and returns the truth record and event count.
fn simulate(cfg: &SynthConfig, cells: &[Vec<&str>], idx: usize, plan: &Plan, out: &mut Vec<u8>) -> (SubscriberTruth, u64) {
    let mut rng = rng_for(cfg.seed, idx as u64);
    let days = cfg.horizon.len_days();
    let end = plan.silence.unwrap_or(days);
    let allowed: Vec<usize> = (0..cfg.provinces.len()).filter(|&p| plan.visitor || !cfg.provinces[p].border).collect();
    let id = subscriber_id(idx);
    let mut loc = plan.start;
    let mut itinerary: Vec<Segment> = Vec::new();
    let mut events = 0u64;
    let mut day_events: Vec<(i64, usize)> = Vec::new();
    for d in 0..end {
        let date = cfg.horizon.nth(d);
        let observed = d == 0 || d == end - 1 || plan.forced.contains_key(&d) || rng.gen_bool(cfg.observe_prob);
        if let Some(&p) = plan.forced.get(&d) {
            loc = p;
        } else if observed && allowed.len() > 1 && rng.gen_bool(cfg.move_prob) {
            let others: Vec<usize> = allowed.iter().copied().filter(|&p| p != loc).collect();
            loc = *others.choose(&mut rng).unwrap();
        }
        match itinerary.last_mut() {
            Some(seg) if seg.province == cfg.provinces[loc].name => seg.to = date,
            _ => itinerary.push(Segment { from: date, to: date, province: cfg.provinces[loc].name.clone() }),
        }
        if !observed {
            continue;
        }
        let day_start = cfg.timezone.day_start(date);
        let n = rng.gen_range(cfg.events_per_day.0..=cfg.events_per_day.1) as usize;
        day_events.clear();
        for _ in 0..n {
            day_events.push((day_start + rng.gen_range(0..86_400), loc));
        }
        if n > 1 && allowed.len() > 1 && rng.gen_bool(cfg.minority_prob) {
            let other = *allowed.iter().filter(|&&p| p != loc).collect::<Vec<_>>().choose(&mut rng).unwrap();
            for _ in 0..rng.gen_range(1..n) {
                day_events.push((day_start + rng.gen_range(0..86_400), *other));
            }
        }
        day_events.sort_unstable();
        for &(ts, p) in &day_events {
            let cell = cells[p][rng.gen_range(0..cells[p].len())];
            let kind = KINDS[rng.gen_range(0..KINDS.len())];
            writeln!(out, "{id},{ts},{cell},{}", kind_str(kind)).expect("writing to memory");
        }
        events += day_events.len() as u64;
    }
    let truth = SubscriberTruth {
        id,
        nationality: cfg.nationalities[plan.nationality].code.clone(),
        border_visitor: plan.visitor,
        itinerary,
        lost_date: plan.silence.map(|s| cfg.horizon.nth(s)),
    };
    (truth, events)
}

/// Writes the xDR CSV (sorted by subscriber, then time) to `xdr` and returns
/// the tables and manifest.
pub fn generate_world<W: Write>(cfg: &SynthConfig, mut xdr: W) -> Result<World, SynthError> {
    cfg.validate()?;
    let (plans, injections) = make_plans(cfg)?;
    let cells = cfg.cells();
    let by_province: Vec<Vec<&str>> = cfg
        .provinces
        .iter()
        .map(|p| cells.iter().filter(|c| c.province == p.name).map(|c| c.cell_id.as_str()).collect())
        .collect();
    let io = |source| SynthError::Io { path: "xdr".into(), source };
    xdr.write_all(b"subscriber_id,ts,cell_id,kind\n").map_err(io)?;
    let mut subscribers = Vec::with_capacity(plans.len());
    let mut truths = Vec::with_capacity(plans.len());
    let mut total = 0u64;
    const CHUNK: usize = 2048;
    for (c, chunk) in plans.chunks(CHUNK).enumerate() {
        let parts: Vec<(SubscriberTruth, u64, Vec<u8>)> = chunk
            .par_iter()
            .enumerate()
            .map(|(j, plan)| {
                let mut buf = Vec::new();
                let (truth, n) = simulate(cfg, &by_province, c * CHUNK + j, plan, &mut buf);
                (truth, n, buf)
            })
            .collect();
        for (truth, n, buf) in parts {
            xdr.write_all(&buf).map_err(io)?;
            subscribers.push(Subscriber { subscriber_id: truth.id.clone(), nationality: truth.nationality.clone() });
            truths.push(truth);
            total += n;
        }
    }
    xdr.flush().map_err(io)?;
    Ok(World {
        cells,
        subscribers,
        manifest: Manifest {
            rng: RNG_ALGORITHM.into(),
            seed: cfg.seed,
            timezone: cfg.timezone,
            horizon: cfg.horizon,
            events: total,
            subscribers: truths,
            injections,
        },
    })
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| SynthError::Io { path: path.display().to_string(), source: e.into() })?;
    for r in rows {
        w.serialize(r).map_err(|e| SynthError::Io { path: path.display().to_string(), source: e.into() })?;
    }
    w.flush().map_err(io_err(path))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), SynthError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("manifest serializes");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(io_err(path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub subscribers: usize,
    pub events: u64,
    pub tweets: usize,
}

pub const RUN_CONFIG_TOML: &str = r#"# Pipeline settings for a generated world. Paths are relative to this file.
timezone = "{timezone}"

[inputs]
cells = "cells.csv"
subscribers = "subscribers.csv"
xdr = "xdr.csv"
visa_policy = "visa_policy.csv"
lang_groups = "lang_groups.csv"
destinations = "destinations.csv"
tweets = "tweets.ndjson"
fence = "fence.geojson"

[inputs.lexicons]
en = "lexicon_en.csv"
tr = "lexicon_tr.csv"

[mobility]
horizon = ["{start}", "{end}"]
antenna_bucket_minutes = 1440

[output]
dir = "out"
store = "store"
work = "work"
"#;

/// Writes the full world into `dir`: tables, xDR, tweets, policies, fence,
/// lexicons, both manifests and a `config.toml` for the pipeline.
pub fn write_world(cfg: &SynthConfig, dir: &Path) -> Result<SynthSummary, SynthError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let xdr_path = dir.join("xdr.csv");
    let file = std::fs::File::create(&xdr_path).map_err(io_err(&xdr_path))?;
    let world = generate_world(cfg, std::io::BufWriter::with_capacity(1 << 20, file))?;
    write_csv(&dir.join("cells.csv"), &world.cells)?;
    write_csv(&dir.join("subscribers.csv"), &world.subscribers)?;

    #[derive(Serialize)]
    struct VisaRow<'a> {
        nationality: &'a str,
        class: &'a str,
    }
    let visa: Vec<VisaRow> = cfg
        .nationalities
        .iter()
        .filter_map(|n| n.class.map(|c| VisaRow { nationality: &n.code, class: c.as_str() }))
        .collect();
    write_csv(&dir.join("visa_policy.csv"), &visa)?;

    let (tweets, tweet_manifest) = generate_tweets(cfg)?;
    let tweets_path = dir.join("tweets.ndjson");
    let f = std::fs::File::create(&tweets_path).map_err(io_err(&tweets_path))?;
    crate::ingest::write_tweets_ndjson(&tweets, std::io::BufWriter::new(f)).map_err(io_err(&tweets_path))?;

    for (name, body) in [
        ("lang_groups.csv", LANG_GROUPS_CSV),
        ("destinations.csv", DESTINATIONS_CSV),
        ("fence.geojson", FENCE_GEOJSON),
        ("lexicon_en.csv", LEXICON_EN_CSV),
        ("lexicon_tr.csv", LEXICON_TR_CSV),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(io_err(&p))?;
    }
    write_json(&dir.join("manifest.json"), &world.manifest)?;
    write_json(&dir.join("tweet_manifest.json"), &tweet_manifest)?;
    let config = RUN_CONFIG_TOML
        .replace("{timezone}", &cfg.timezone.to_string())
        .replace("{start}", &cfg.horizon.start().to_string())
        .replace("{end}", &cfg.horizon.end().to_string());
    let p = dir.join("config.toml");
    std::fs::write(&p, config).map_err(io_err(&p))?;
    Ok(SynthSummary { subscribers: world.subscribers.len(), events: world.manifest.events, tweets: tweets.len() })
}
