//! Stage orchestration: inputs to published files, the query store and a run
//! manifest.
//!
//! Stages pass state through bincode artifacts in the work directory, so a
//! stage may run on its own once its prerequisites have been built.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{Inputs, IngestSection, MobilitySection, OutputSection, RunConfig, SentimentSection, SocialSection};

use crate::cohort::{build_cohort, Cohort, CohortError};
use crate::ingest::{
    parse_reference_tables, parse_tweets, read_file, CellRegistry, EventTable, IngestError, ParseOptions, ReferencePaths,
    RegionIndex, SubscriberTable, Tweet,
};
use crate::mobility::{
    antenna_counts, build_all_series, detect_drops, flow_matrix, group_timeseries, lost_at_border, province_counts_all,
    CrossingEstimate, GroupSeries, MobilityError, SeriesSet,
};
use crate::policy::{read_destinations, read_language_groups, MobilityClass};
use crate::privacy::{self, scan_dir, FlowGroup, PrivacyError, Secrets, Store, StoreMeta, StoredFlow, Table, Violation};
use crate::sentiment::{aggregate_scores, extreme_word_stats, score_text, Bucketing, HashtagFilter, Lexicon, ScoredTweet, SentimentError};
use crate::social::{destination_matrix, geofilter, resolve_und, activity_counts, CountryPolygons, GeoFence, SocialError};

pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Cohort,
    Placements,
    Groups,
    Provinces,
    Flows,
    Antenna,
    Drops,
    Estimates,
    Social,
    Sentiment,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Ingest,
        Stage::Cohort,
        Stage::Placements,
        Stage::Groups,
        Stage::Provinces,
        Stage::Flows,
        Stage::Antenna,
        Stage::Drops,
        Stage::Estimates,
        Stage::Social,
        Stage::Sentiment,
    ];

    /// Stages after placements that publish mobility indicators.
    pub const MOBILITY: [Stage; 7] =
        [Stage::Placements, Stage::Groups, Stage::Provinces, Stage::Flows, Stage::Antenna, Stage::Drops, Stage::Estimates];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Cohort => "cohort",
            Stage::Placements => "placements",
            Stage::Groups => "groups",
            Stage::Provinces => "provinces",
            Stage::Flows => "flows",
            Stage::Antenna => "antenna",
            Stage::Drops => "drops",
            Stage::Estimates => "estimates",
            Stage::Social => "social",
            Stage::Sentiment => "sentiment",
        }
    }

    /// Direct prerequisites.
    pub fn needs(&self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Cohort | Stage::Antenna | Stage::Social | Stage::Sentiment => &[Stage::Ingest],
            Stage::Placements => &[Stage::Cohort],
            Stage::Groups | Stage::Provinces | Stage::Flows | Stage::Drops | Stage::Estimates => &[Stage::Placements],
        }
    }

    /// The work artifact a stage leaves for later stages.
    fn artifact(&self) -> Option<&'static str> {
        match self {
            Stage::Ingest => Some("ingest.bin"),
            Stage::Cohort => Some("cohort.bin"),
            Stage::Placements => Some("placements.bin"),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage `{s}`")))
    }
}

/// Comma-separated stage names; `mobility` and `all` expand to their stages.
pub fn parse_stages(list: &str) -> Result<BTreeSet<Stage>, PipelineError> {
    let mut out = BTreeSet::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "all" => out.extend(Stage::ALL),
            "mobility" => out.extend(Stage::MOBILITY),
            _ => {
                out.insert(name.parse()?);
            }
        }
    }
    if out.is_empty() {
        return Err(PipelineError::Config("no stage requested".into()));
    }
    Ok(out)
}

/// Every stage whose inputs the config provides.
pub fn default_stages(cfg: &RunConfig) -> BTreeSet<Stage> {
    Stage::ALL
        .into_iter()
        .filter(|s| match s {
            Stage::Social => cfg.inputs.tweets.is_some(),
            Stage::Sentiment => {
                (cfg.inputs.tweets.is_some() || cfg.inputs.sentiment_tweets.is_some()) && !cfg.inputs.lexicons.is_empty()
            }
            _ => true,
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("MISSING_STAGE:{0}")]
    MissingStage(Stage),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Social(#[from] SocialError),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {reason}", path.display())]
    Artifact { path: PathBuf, reason: String },
    #[error("privacy scan found {} cell(s) below k; first: {}", .0.len(), .0.first().map(|v| format!("{}:{} = {}", v.file.display(), v.location, v.value)).unwrap_or_default())]
    PrivacyScan(Vec<Violation>),
}

impl PipelineError {
    /// 1 config, 2 data, 3 privacy scan.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Cohort(_) => 1,
            PipelineError::Privacy(PrivacyError::BadK(_) | PrivacyError::MissingKey(_)) => 1,
            PipelineError::PrivacyScan(_) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: String,
    pub config_sha256: String,
    pub stages: Vec<Stage>,
    pub inputs: BTreeMap<String, String>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    /// SHA-256 of every published file except this manifest.
    pub outputs: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String, PipelineError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(io_err(path))?))
}

/// Digests of every file under `dir`, keyed by `/`-separated relative path.
pub fn output_digests(dir: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).map_err(io_err(&d))? {
            let p = e.map_err(io_err(&d))?.path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let rel: Vec<String> =
                p.strip_prefix(dir).expect("under dir").components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            let rel = rel.join("/");
            if rel != RUN_MANIFEST {
                out.insert(rel, file_digest(&p)?);
            }
        }
    }
    Ok(out)
}

/// Validated events and reference tables, ids already pseudonymized.
#[derive(Serialize, Deserialize)]
struct IngestArtifact {
    registry: CellRegistry,
    subscribers: SubscriberTable,
    events: EventTable,
    tweets: Option<Vec<Tweet>>,
    sentiment_tweets: Option<Vec<Tweet>>,
}

#[derive(Serialize, Deserialize)]
struct CohortArtifact {
    cohort: Cohort,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    secrets: &'a Secrets,
    ingest: Option<IngestArtifact>,
    cohort: Option<Cohort>,
    series: Option<SeriesSet>,
    store: Store,
}

fn save<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let bytes = bincode::serialize(value).map_err(|e| PipelineError::Artifact { path: path.to_path_buf(), reason: e.to_string() })?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn load<T: DeserializeOwned>(path: &Path, stage: Stage) -> Result<T, PipelineError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(PipelineError::MissingStage(stage)),
        Err(e) => return Err(PipelineError::Io { path: path.to_path_buf(), source: e }),
    };
    bincode::deserialize(&bytes).map_err(|e| PipelineError::Artifact { path: path.to_path_buf(), reason: e.to_string() })
}

fn parse_corpus(path: &Path, opts: &ParseOptions, secrets: &Secrets) -> Result<Vec<Tweet>, PipelineError> {
    let parsed = parse_tweets(&read_file(path)?, opts)?;
    if parsed.rejected() > 0 {
        log::warn!("{}: {} line(s) rejected", path.display(), parsed.rejected());
    }
    let mut tweets = parsed.records;
    for t in &mut tweets {
        t.id = secrets.social.token(&t.id);
        t.user = secrets.social.token(&t.user);
    }
    Ok(tweets)
}

impl Run<'_> {
    fn work(&self, stage: Stage) -> PathBuf {
        self.cfg.output.work.join(stage.artifact().expect("stage leaves an artifact"))
    }

    fn publish_csv(&self, name: &str, table: &Table) -> Result<(), PipelineError> {
        let path = self.cfg.output.dir.join(name);
        std::fs::write(&path, table.to_csv()).map_err(io_err(&path))
    }

    fn publish_json(&self, name: &str, value: &serde_json::Value) -> Result<(), PipelineError> {
        let path = self.cfg.output.dir.join(name);
        let mut bytes = serde_json::to_vec_pretty(value).expect("json values serialize");
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(io_err(&path))
    }

    fn ingest(&mut self) -> Result<&IngestArtifact, PipelineError> {
        if self.ingest.is_none() {
            let mut a: IngestArtifact = load(&self.work(Stage::Ingest), Stage::Ingest)?;
            a.registry.rebuild_index();
            a.subscribers.rebuild_index();
            self.ingest = Some(a);
        }
        Ok(self.ingest.as_ref().unwrap())
    }

    fn cohort(&mut self) -> Result<&Cohort, PipelineError> {
        if self.cohort.is_none() {
            let a: CohortArtifact = load(&self.work(Stage::Cohort), Stage::Cohort)?;
            self.cohort = Some(a.cohort);
        }
        Ok(self.cohort.as_ref().unwrap())
    }

    fn series(&mut self) -> Result<&SeriesSet, PipelineError> {
        if self.series.is_none() {
            self.series = Some(load(&self.work(Stage::Placements), Stage::Placements)?);
        }
        Ok(self.series.as_ref().unwrap())
    }

    /// Everything the placement-based stages read.
    fn mobility_inputs(&mut self) -> Result<(RegionIndex, BTreeSet<u32>), PipelineError> {
        self.series()?;
        self.cohort()?;
        let granularity = self.cfg.mobility.granularity;
        let regions = self.ingest()?.registry.regions(granularity);
        let border = regions.within_provinces(&self.cfg.cohort.border_provinces);
        Ok((regions, border))
    }

    fn groups(&mut self) -> Result<GroupSeries, PipelineError> {
        let (regions, border) = self.mobility_inputs()?;
        let m = &self.cfg.mobility;
        let (series, cohort) = (self.series.as_ref().unwrap(), self.cohort.as_ref().unwrap());
        Ok(group_timeseries(&series.series, cohort, &border, &regions, &m.horizon, m.backfill))
    }

    fn run_stage(&mut self, stage: Stage) -> Result<(), PipelineError> {
        let cfg = self.cfg;
        let clock = &cfg.timezone;
        let policy = &cfg.privacy;
        match stage {
            Stage::Ingest => {
                let inputs = &cfg.inputs;
                let mut tables = parse_reference_tables(&ReferencePaths {
                    cells: inputs.cells.clone(),
                    subscribers: inputs.subscribers.clone(),
                    visa_policy: inputs.visa_policy.clone(),
                    lang_groups: inputs.lang_groups.clone(),
                    destinations: inputs.destinations.clone(),
                })?;
                let opts = ParseOptions {
                    max_error_rate: cfg.ingest.max_error_rate,
                    horizon: Some(cfg.ingest_range().epoch_bounds(clock)),
                };
                let (events, summary) = EventTable::ingest(&read_file(&inputs.xdr)?, &opts, &tables.cells, &tables.subscribers)?;
                summary.report.ensure_resolvable()?;
                if !summary.diagnostics.is_empty() {
                    log::warn!("xdr: {} of {} line(s) rejected; first: {}", summary.diagnostics.len(), summary.lines, summary.diagnostics[0]);
                }
                for w in summary.report.warnings() {
                    log::warn!("{w}");
                }
                let mobile = &self.secrets.mobile;
                tables.subscribers.map_ids(|id| mobile.token(id));
                let opts = ParseOptions { max_error_rate: cfg.ingest.max_error_rate, horizon: None };
                let tweets = inputs.tweets.as_deref().map(|p| parse_corpus(p, &opts, self.secrets)).transpose()?;
                let sentiment_tweets =
                    inputs.sentiment_tweets.as_deref().map(|p| parse_corpus(p, &opts, self.secrets)).transpose()?;
                let a = IngestArtifact { registry: tables.cells, subscribers: tables.subscribers, events, tweets, sentiment_tweets };
                save(&self.work(Stage::Ingest), &a)?;
                self.ingest = Some(a);
            }
            Stage::Cohort => {
                let visa = crate::policy::read_visa_policy(std::fs::File::open(&cfg.inputs.visa_policy).map_err(io_err(&cfg.inputs.visa_policy))?)?;
                let a = self.ingest()?;
                let cohort = build_cohort(&a.events, &a.registry, &a.subscribers, &visa, &cfg.cohort, clock)?;
                for w in &cohort.warnings {
                    log::warn!("{w}");
                }
                if cfg.cohort.audit {
                    let dir = cfg.output.work.join("audit");
                    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                    let path = dir.join("cohort.csv");
                    let f = std::fs::File::create(&path).map_err(io_err(&path))?;
                    cohort.write_csv(&a.subscribers, std::io::BufWriter::new(f)).map_err(io_err(&path))?;
                }
                let art = CohortArtifact { cohort };
                save(&self.work(Stage::Cohort), &art)?;
                self.cohort = Some(art.cohort);
            }
            Stage::Placements => {
                self.cohort()?;
                self.ingest()?;
                let a = self.ingest.as_ref().unwrap();
                let regions = a.registry.regions(cfg.mobility.granularity);
                let cohort = self.cohort.as_ref().unwrap();
                let members: BTreeSet<u32> = cohort.members.keys().copied().collect();
                let set = build_all_series(&a.events, &members, &regions, &cfg.mobility.horizon, clock);
                if !set.without_events.is_empty() {
                    log::warn!("{} cohort member(s) have no event inside the horizon and are excluded", set.without_events.len());
                }
                save(&self.work(Stage::Placements), &set)?;
                self.series = Some(set);
            }
            Stage::Groups => {
                let g = self.groups()?;
                self.publish_csv("group_timeseries.csv", &privacy::group_table(&g, policy, !cfg.mobility.backfill))?;
                self.store.groups = Some(g);
            }
            Stage::Provinces => {
                let (regions, _) = self.mobility_inputs()?;
                let series = self.series.as_ref().unwrap();
                let all = province_counts_all(&series.series, &regions, &cfg.mobility.horizon, cfg.mobility.backfill);
                let dates = cfg.mobility.province_dates();
                let picked: Vec<_> = all.iter().filter(|p| dates.contains(&p.date)).cloned().collect();
                self.publish_csv("province_counts.csv", &privacy::province_table(&picked, policy))?;
                self.store.provinces = all;
            }
            Stage::Flows => {
                let (regions, _) = self.mobility_inputs()?;
                let (series, cohort) = (self.series.as_ref().unwrap(), self.cohort.as_ref().unwrap());
                let mut flows = Vec::new();
                for (a, b) in cfg.mobility.flow_dates() {
                    for group in FlowGroup::ALL {
                        let class = match group {
                            FlowGroup::All => None,
                            FlowGroup::Visa => Some(MobilityClass::Visa),
                            FlowGroup::NoVisa => Some(MobilityClass::NoVisa),
                        };
                        let members = series.series.iter().filter(|s| {
                            cohort.class_of(s.subscriber).is_some_and(|c| class.is_none_or(|want| c == want))
                        });
                        let matrix = flow_matrix(members, &regions, &cfg.mobility.horizon, a, b, cfg.mobility.backfill)?;
                        flows.push(StoredFlow { group, matrix });
                    }
                }
                for (group, name) in [(FlowGroup::All, "flows.json"), (FlowGroup::Visa, "flows_visa.json"), (FlowGroup::NoVisa, "flows_novisa.json")] {
                    let ms: Vec<_> = flows.iter().filter(|f| f.group == group).map(|f| &f.matrix).collect();
                    self.publish_json(name, &privacy::flows_sankey(&ms, policy))?;
                }
                self.store.flows = flows;
            }
            Stage::Antenna => {
                let a = self.ingest()?;
                let cells: Option<BTreeSet<u32>> = cfg.mobility.antenna_border_only.then(|| {
                    (0..a.registry.len() as u32)
                        .filter(|&c| cfg.cohort.border_provinces.contains(&a.registry.site(c).province))
                        .collect()
                });
                let counts = antenna_counts(&a.events, &a.registry, cells.as_ref(), cfg.mobility.antenna_bucket_minutes as i64 * 60, clock)?;
                self.publish_csv("antenna_counts.csv", &privacy::antenna_table(&counts, clock, policy))?;
            }
            Stage::Drops => {
                let g = self.groups()?;
                let drops = detect_drops(&g.active_counts(), cfg.mobility.drops);
                self.publish_csv("drops.csv", &privacy::drops_table(&drops, policy))?;
            }
            Stage::Estimates => {
                let (_, border) = self.mobility_inputs()?;
                let (series, cohort) = (self.series.as_ref().unwrap(), self.cohort.as_ref().unwrap());
                let m = &cfg.mobility;
                let estimates = [MobilityClass::Visa, MobilityClass::NoVisa]
                    .into_iter()
                    .map(|class| CrossingEstimate::new(class, lost_at_border(&series.series, cohort, &border, class), m.share, m.churn_floor))
                    .collect::<Result<Vec<_>, _>>()?;
                self.publish_json("estimates.json", &privacy::estimates_json(&estimates, policy))?;
            }
            Stage::Social => {
                let fence_path = cfg.inputs.fence.as_ref().ok_or_else(|| PipelineError::Config("social stage needs inputs.fence".into()))?;
                let fence = GeoFence::from_geojson(&std::fs::read_to_string(fence_path).map_err(io_err(fence_path))?)?;
                let countries = match &cfg.inputs.countries {
                    Some(p) => Some(CountryPolygons::from_geojson(&std::fs::read_to_string(p).map_err(io_err(p))?)?),
                    None => None,
                };
                let lang_policy = read_language_groups(std::fs::File::open(&cfg.inputs.lang_groups).map_err(io_err(&cfg.inputs.lang_groups))?)?;
                let dest_policy = read_destinations(std::fs::File::open(&cfg.inputs.destinations).map_err(io_err(&cfg.inputs.destinations))?)?;
                let tweets = self.ingest()?.tweets.as_deref().ok_or_else(|| PipelineError::Config("social stage needs inputs.tweets".into()))?;
                let (kept, stats) = geofilter(tweets, &fence);
                log::info!("fence: {stats:?}");
                let period = &cfg.social.border_period;
                let mut border: Vec<Tweet> = kept.into_iter().filter(|t| period.contains(clock.date_of(t.ts))).collect();
                let und = resolve_und(&mut border);
                log::info!("border period: {} und tweet(s) resolved, {} unresolved", und.resolved_tweets, und.unresolved_tweets);
                let activity = activity_counts(&border, &lang_policy, period, clock);
                let users: BTreeSet<String> = border.iter().map(|t| t.user.clone()).collect();
                let mut follow: Vec<Tweet> = tweets
                    .iter()
                    .filter(|t| users.contains(&t.user) && cfg.social.follow_up.contains(clock.date_of(t.ts)))
                    .cloned()
                    .collect();
                resolve_und(&mut follow);
                let report =
                    destination_matrix(&follow, &users, &cfg.social.follow_up, clock, &lang_policy, &dest_policy, countries.as_ref());
                self.publish_csv("lang_counts.csv", &privacy::lang_table(&activity, policy))?;
                self.publish_csv("daily_lang_counts.csv", &privacy::lang_daily_table(&activity, policy))?;
                self.publish_csv("dest_matrix.csv", &privacy::dest_table(&report, policy))?;
                self.publish_csv("dest_presence.csv", &privacy::dest_presence_table(&report, policy))?;
                self.publish_json("venn.json", &privacy::venn_json(&report, policy))?;
                self.store.activity = Some(activity);
            }
            Stage::Sentiment => {
                let mut lexicons: BTreeMap<String, Lexicon> = BTreeMap::new();
                for (lang, path) in &cfg.inputs.lexicons {
                    let lex = Lexicon::read_csv(std::fs::File::open(path).map_err(io_err(path))?)?;
                    lexicons.insert(lang.clone(), lex.with_window(cfg.sentiment.window));
                }
                let a = self.ingest()?;
                let source = a.sentiment_tweets.as_deref().or(a.tweets.as_deref()).unwrap_or_default();
                let filter = HashtagFilter::new(&cfg.sentiment.hashtags);
                let mut corpus: Vec<Tweet> = source
                    .iter()
                    .filter(|t| t.text.as_deref().is_some_and(|x| !cfg.sentiment.filter_hashtags || filter.matches(x)))
                    .cloned()
                    .collect();
                resolve_und(&mut corpus);
                let scored: Vec<ScoredTweet> = corpus
                    .iter()
                    .filter_map(|t| {
                        let lex = lexicons.get(&t.lang)?;
                        let s = score_text(t.text.as_deref()?, lex);
                        Some(ScoredTweet { language: t.lang.clone(), ts: t.ts, composite: s.composite })
                    })
                    .collect();
                let weekly = aggregate_scores(&scored, Bucketing::Weekly, clock);
                let daily = aggregate_scores(&scored, Bucketing::Daily, clock);
                let extreme = extreme_word_stats(corpus.iter().filter_map(|t| Some((t.lang.as_str(), t.text.as_deref()?))), &lexicons);
                self.publish_csv("sentiment_weekly.csv", &privacy::sentiment_table(&weekly, "iso_week", policy))?;
                self.publish_csv("sentiment_daily.csv", &privacy::sentiment_table(&daily, "date", policy))?;
                self.publish_csv("extreme_words.csv", &privacy::extreme_table(&extreme, policy))?;
                self.store.sentiment_weekly = weekly;
            }
        }
        Ok(())
    }
}

/// Fails with the first direct prerequisite that is neither requested nor
/// already built.
fn check_prerequisites(cfg: &RunConfig, stages: &BTreeSet<Stage>) -> Result<(), PipelineError> {
    for s in stages {
        for dep in s.needs() {
            if !stages.contains(dep) && !cfg.output.work.join(dep.artifact().expect("prerequisites leave artifacts")).is_file() {
                return Err(PipelineError::MissingStage(*dep));
            }
        }
    }
    Ok(())
}

fn run_inner(cfg: &RunConfig, stages: &BTreeSet<Stage>, secrets: &Secrets) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    check_prerequisites(cfg, stages)?;
    let store = if cfg.output.store.join(privacy::STORE_FILE).is_file() { Store::load(&cfg.output.store)? } else { Store::default() };
    let mut run = Run { cfg, secrets, ingest: None, cohort: None, series: None, store };
    let mut timings = BTreeMap::new();
    for &stage in stages {
        let t0 = Instant::now();
        run.run_stage(stage)?;
        let secs = t0.elapsed().as_secs_f64();
        log::info!("stage {stage}: {secs:.3}s");
        timings.insert(stage.as_str().to_string(), secs);
    }
    run.store.meta = StoreMeta {
        policy: cfg.privacy,
        granularity: cfg.mobility.granularity,
        horizon: Some(cfg.mobility.horizon),
        backfill: cfg.mobility.backfill,
    };
    run.store.save(&cfg.output.store)?;

    let violations = scan_dir(&cfg.output.dir, cfg.privacy.k)?;
    if !violations.is_empty() {
        return Err(PipelineError::PrivacyScan(violations));
    }
    let config_text = toml::to_string(cfg).map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut inputs = BTreeMap::new();
    for (name, p) in cfg.inputs.paths() {
        inputs.insert(name, file_digest(p)?);
    }
    let manifest = RunManifest {
        status: "ok".into(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        stages: stages.iter().copied().collect(),
        inputs,
        timings,
        outputs: output_digests(&cfg.output.dir)?,
    };
    let path = cfg.output.dir.join(RUN_MANIFEST);
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    std::fs::write(&path, bytes).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Runs `stages` in dependency order, scans the published directory and
/// writes `run_manifest.json` there.
pub fn run_pipeline(cfg: &RunConfig, stages: &BTreeSet<Stage>, secrets: &Secrets) -> Result<RunManifest, PipelineError> {
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_inner(cfg, stages, secrets))
        }
        None => run_inner(cfg, stages, secrets),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_lists_expand_aliases() {
        let s = parse_stages("ingest, mobility").unwrap();
        assert!(s.contains(&Stage::Ingest) && s.contains(&Stage::Flows) && !s.contains(&Stage::Cohort));
        assert_eq!(parse_stages("all").unwrap().len(), Stage::ALL.len());
        assert!(matches!(parse_stages("bogus"), Err(PipelineError::Config(_))));
        assert!(parse_stages(" , ").is_err());
    }

    #[test]
    fn prerequisites_are_direct() {
        for s in Stage::ALL {
            for d in s.needs() {
                assert!(d < &s, "{d} must precede {s}");
                assert!(d.artifact().is_some());
            }
        }
    }

    #[test]
    fn missing_stage_message() {
        assert_eq!(PipelineError::MissingStage(Stage::Placements).to_string(), "MISSING_STAGE:placements");
        assert_eq!(PipelineError::MissingStage(Stage::Placements).exit_code(), 2);
        assert_eq!(PipelineError::PrivacyScan(vec![]).exit_code(), 3);
        assert_eq!(PipelineError::Config("x".into()).exit_code(), 1);
    }
}
