use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::clock::{ymd, DateRange, LocalClock};
use crate::cohort::CohortSpec;
use crate::ingest::Granularity;
use crate::mobility::DropRule;
use crate::privacy::PrivacyPolicy;
use crate::sentiment::DEFAULT_HASHTAGS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub cells: PathBuf,
    pub subscribers: PathBuf,
    pub xdr: PathBuf,
    pub visa_policy: PathBuf,
    pub lang_groups: PathBuf,
    pub destinations: PathBuf,
    pub tweets: Option<PathBuf>,
    pub fence: Option<PathBuf>,
    /// GeoJSON country polygons for follow-up tweets that carry only a point.
    pub countries: Option<PathBuf>,
    /// A separate corpus for sentiment; defaults to `tweets`.
    pub sentiment_tweets: Option<PathBuf>,
    #[serde(default)]
    pub lexicons: BTreeMap<String, PathBuf>,
}

impl Inputs {
    fn paths_mut(&mut self) -> impl Iterator<Item = &mut PathBuf> {
        [&mut self.cells, &mut self.subscribers, &mut self.xdr, &mut self.visa_policy, &mut self.lang_groups, &mut self.destinations]
            .into_iter()
            .chain([&mut self.tweets, &mut self.fence, &mut self.countries, &mut self.sentiment_tweets].into_iter().flatten())
            .chain(self.lexicons.values_mut())
    }

    /// Every referenced input, in a fixed order.
    pub fn paths(&self) -> Vec<(String, &Path)> {
        let mut out: Vec<(String, &Path)> = vec![
            ("cells".into(), &self.cells),
            ("subscribers".into(), &self.subscribers),
            ("xdr".into(), &self.xdr),
            ("visa_policy".into(), &self.visa_policy),
            ("lang_groups".into(), &self.lang_groups),
            ("destinations".into(), &self.destinations),
        ];
        for (name, p) in [("tweets", &self.tweets), ("fence", &self.fence), ("countries", &self.countries), ("sentiment_tweets", &self.sentiment_tweets)] {
            if let Some(p) = p {
                out.push((name.into(), p));
            }
        }
        for (lang, p) in &self.lexicons {
            out.push((format!("lexicon.{lang}"), p));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub max_error_rate: f64,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection { max_error_rate: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilitySection {
    pub horizon: DateRange,
    pub granularity: Granularity,
    /// Count members at their first region before their first observation.
    pub backfill: bool,
    /// Dates published in `province_counts.csv`; empty means horizon start and end.
    pub province_count_dates: Vec<NaiveDate>,
    /// Sankey date pairs; empty means (horizon start, horizon end).
    pub flow_pairs: Vec<(NaiveDate, NaiveDate)>,
    pub antenna_bucket_minutes: u32,
    /// Restrict antenna counts to cells in the cohort's border provinces.
    pub antenna_border_only: bool,
    pub drops: DropRule,
    pub share: f64,
    pub churn_floor: f64,
}

impl Default for MobilitySection {
    fn default() -> Self {
        MobilitySection {
            horizon: DateRange::new(ymd(2020, 2, 28), ymd(2020, 6, 15)).unwrap(),
            granularity: Granularity::Province,
            backfill: true,
            province_count_dates: Vec::new(),
            flow_pairs: Vec::new(),
            antenna_bucket_minutes: 60,
            antenna_border_only: true,
            drops: DropRule::default(),
            share: 0.5,
            churn_floor: 0.5,
        }
    }
}

impl MobilitySection {
    pub fn province_dates(&self) -> Vec<NaiveDate> {
        if self.province_count_dates.is_empty() {
            vec![self.horizon.start(), self.horizon.end()]
        } else {
            self.province_count_dates.clone()
        }
    }

    pub fn flow_dates(&self) -> Vec<(NaiveDate, NaiveDate)> {
        if self.flow_pairs.is_empty() {
            vec![(self.horizon.start(), self.horizon.end())]
        } else {
            self.flow_pairs.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SocialSection {
    pub border_period: DateRange,
    pub follow_up: DateRange,
}

impl Default for SocialSection {
    fn default() -> Self {
        SocialSection {
            border_period: DateRange::new(ymd(2020, 2, 25), ymd(2020, 3, 25)).unwrap(),
            follow_up: DateRange::new(ymd(2020, 5, 1), ymd(2020, 12, 31)).unwrap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SentimentSection {
    /// Keep only posts carrying one of `hashtags`.
    pub filter_hashtags: bool,
    pub hashtags: Vec<String>,
    /// Tokens before a term that a booster or negator may occupy.
    pub window: usize,
}

impl Default for SentimentSection {
    fn default() -> Self {
        SentimentSection { filter_hashtags: true, hashtags: DEFAULT_HASHTAGS.iter().map(|s| s.to_string()).collect(), window: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Published, suppressed files.
    pub dir: PathBuf,
    /// Unsuppressed aggregates behind the query service.
    pub store: PathBuf,
    /// Intermediate artifacts between stages.
    pub work: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into(), store: "store".into(), work: "work".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub timezone: LocalClock,
    /// Worker threads; all cores when absent.
    pub threads: Option<usize>,
    pub inputs: Inputs,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub cohort: CohortSpec,
    #[serde(default)]
    pub mobility: MobilitySection,
    #[serde(default)]
    pub social: SocialSection,
    #[serde(default)]
    pub sentiment: SentimentSection,
    #[serde(default)]
    pub privacy: PrivacyPolicy,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Parses TOML; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.inputs.paths_mut().for_each(resolve);
        for p in [&mut cfg.output.dir, &mut cfg.output.store, &mut cfg.output.work] {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        for (name, p) in self.inputs.paths() {
            if !p.is_file() {
                return bad(format!("input `{name}` not found: {}", p.display()));
            }
        }
        self.cohort.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.privacy.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.ingest.max_error_rate) {
            return bad(format!("ingest.max_error_rate must lie in [0, 1], got {}", self.ingest.max_error_rate));
        }
        let m = &self.mobility;
        if m.granularity.is_finer_than(self.privacy.spatial_floor) {
            return bad(format!(
                "mobility.granularity `{}` is finer than privacy.spatial_floor `{}`",
                m.granularity.as_str(),
                self.privacy.spatial_floor.as_str()
            ));
        }
        for d in m.province_dates() {
            if !m.horizon.contains(d) {
                return bad(format!("province count date {d} outside the horizon {}", m.horizon));
            }
        }
        for (a, b) in m.flow_dates() {
            if a >= b || !m.horizon.contains(a) || !m.horizon.contains(b) {
                return bad(format!("flow pair {a}..{b} must be ordered and inside the horizon {}", m.horizon));
            }
        }
        if m.antenna_bucket_minutes == 0 {
            return bad("mobility.antenna_bucket_minutes must be positive".into());
        }
        for (name, x) in [("share", m.share), ("churn_floor", m.churn_floor)] {
            if !(x > 0.0 && x <= 1.0) {
                return bad(format!("mobility.{name} must lie in (0, 1], got {x}"));
            }
        }
        if self.sentiment.window == 0 {
            return bad("sentiment.window must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if self.inputs.tweets.is_some() != self.inputs.fence.is_some() {
            return bad("inputs.tweets and inputs.fence go together".into());
        }
        for dir in [&self.output.dir, &self.output.store, &self.output.work] {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::Config(format!("{}: {e}", dir.display())))?;
        }
        Ok(())
    }

    /// Days that event ingest must keep: the horizon plus the cohort window.
    pub fn ingest_range(&self) -> DateRange {
        self.mobility.horizon.union(&self.cohort.window)
    }
}
