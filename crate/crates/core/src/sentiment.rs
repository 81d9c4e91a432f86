//! Lexicon sentiment scoring with boosters and negators, plus daily and
//! ISO-weekly aggregation.
//!
//! Every text gets a positive score in `1..=5` and a negative score in
//! `-5..=-1`. The composite is their sum.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::clock::{iso_week_label, LocalClock};

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("lexicon: {0}")]
    Csv(#[from] csv::Error),
    #[error("lexicon line {line}: {reason}")]
    BadRow { line: u64, reason: String },
    #[error("lexicon token `{0}` appears more than once")]
    Duplicate(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Term,
    Booster,
    Negator,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lexicon {
    terms: HashMap<String, i8>,
    boosters: HashMap<String, i8>,
    negators: HashSet<String>,
    window: usize,
}

#[derive(Deserialize)]
struct LexiconRow {
    token: String,
    kind: EntryKind,
    #[serde(default)]
    value: Option<i8>,
}

impl Lexicon {
    pub fn new() -> Self {
        Lexicon { window: 1, ..Default::default() }
    }

    /// Number of preceding tokens a modifier may sit in front of a term.
    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window.max(1);
        self
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn insert(&mut self, token: &str, kind: EntryKind, value: i8) -> Result<(), String> {
        let token = token.trim().to_lowercase();
        if token.is_empty() {
            return Err("empty token".into());
        }
        if self.terms.contains_key(&token) || self.boosters.contains_key(&token) || self.negators.contains(&token) {
            return Err(format!("duplicate token `{token}`"));
        }
        match kind {
            EntryKind::Term if (2..=5).contains(&value.unsigned_abs()) => {
                self.terms.insert(token, value);
            }
            EntryKind::Term => return Err(format!("term strength {value} outside ±2..±5")),
            EntryKind::Booster if value.abs() == 1 => {
                self.boosters.insert(token, value);
            }
            EntryKind::Booster => return Err(format!("booster value {value} must be ±1")),
            EntryKind::Negator => {
                self.negators.insert(token);
            }
        }
        Ok(())
    }

    /// Reads `token,kind,value`. Negator rows may leave `value` empty.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SentimentError> {
        let mut lex = Lexicon::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let row: LexiconRow = rec.deserialize(Some(&headers))?;
            let value = match (row.kind, row.value) {
                (EntryKind::Negator, v) => v.unwrap_or(0),
                (_, Some(v)) => v,
                (_, None) => return Err(SentimentError::BadRow { line, reason: format!("`{}` needs a value", row.token) }),
            };
            if let Err(reason) = lex.insert(&row.token, row.kind, value) {
                if reason.starts_with("duplicate") {
                    return Err(SentimentError::Duplicate(row.token));
                }
                return Err(SentimentError::BadRow { line, reason });
            }
        }
        Ok(lex)
    }

    pub fn term(&self, token: &str) -> Option<i8> {
        self.terms.get(token).copied()
    }

    pub fn is_extreme(&self, token: &str) -> bool {
        self.term(token).is_some_and(|s| s.abs() == 5)
    }

    pub fn len(&self) -> usize {
        self.terms.len() + self.boosters.len() + self.negators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Unicode words, lower-cased. `#tag` yields `tag`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words().map(|w| w.trim_start_matches('#').to_lowercase()).filter(|w| !w.is_empty()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentimentScore {
    pub pos: i8,
    pub neg: i8,
    pub composite: i8,
}

impl SentimentScore {
    pub const NEUTRAL: SentimentScore = SentimentScore { pos: 1, neg: -1, composite: 0 };
}

pub fn score_tokens(tokens: &[String], lexicon: &Lexicon) -> SentimentScore {
    let (mut pos, mut neg) = (1i8, -1i8);
    for (i, tok) in tokens.iter().enumerate() {
        let Some(strength) = lexicon.term(tok) else { continue };
        let mut magnitude = strength.abs();
        let mut sign = strength.signum();
        for prev in &tokens[i.saturating_sub(lexicon.window)..i] {
            if let Some(b) = lexicon.boosters.get(prev) {
                magnitude += b;
            } else if lexicon.negators.contains(prev) {
                sign = -sign;
            }
        }
        let value = magnitude.clamp(1, 5) * sign;
        if value > 0 {
            pos = pos.max(value);
        } else {
            neg = neg.min(value);
        }
    }
    SentimentScore { pos, neg, composite: pos + neg }
}

pub fn score_text(text: &str, lexicon: &Lexicon) -> SentimentScore {
    score_tokens(&tokenize(text), lexicon)
}

/// Exact running totals of integer scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub sum: i64,
    pub sumsq: i64,
}

impl Moments {
    pub fn push(&mut self, x: i64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    pub fn merge(mut self, other: Moments) -> Moments {
        self.n += other.n;
        self.sum += other.sum;
        self.sumsq += other.sumsq;
        self
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.n as f64
    }

    /// Population variance as an unreduced fraction `(num, den)`.
    pub fn variance_fraction(&self) -> (i128, i128) {
        let n = self.n as i128;
        (n * self.sumsq as i128 - (self.sum as i128).pow(2), n * n)
    }

    pub fn variance(&self) -> f64 {
        let (num, den) = self.variance_fraction();
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucketing {
    Daily,
    #[default]
    Weekly,
}

impl Bucketing {
    /// `2020-03-01` for daily buckets, `2020-W09` for weekly.
    pub fn label(self, ts: i64, clock: &LocalClock) -> String {
        let date = clock.date_of(ts);
        match self {
            Bucketing::Daily => date.to_string(),
            Bucketing::Weekly => iso_week_label(date),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScoredTweet {
    pub language: String,
    pub ts: i64,
    pub composite: i8,
}

/// Per (language, bucket) moments. Empty buckets never appear.
pub fn aggregate_scores(
    scores: &[ScoredTweet],
    bucketing: Bucketing,
    clock: &LocalClock,
) -> BTreeMap<(String, String), Moments> {
    scores
        .par_iter()
        .fold(BTreeMap::new, |mut acc: BTreeMap<(String, String), Moments>, s| {
            acc.entry((s.language.clone(), bucketing.label(s.ts, clock))).or_default().push(s.composite as i64);
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, m) in b {
                let e = a.entry(k).or_default();
                *e = e.merge(m);
            }
            a
        })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremeStats {
    pub tokens: u64,
    pub extreme: u64,
}

impl ExtremeStats {
    pub fn fraction(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.extreme as f64 / self.tokens as f64
        }
    }

    /// Percentage with four significant digits, e.g. `10.00`, `0.01470`.
    pub fn percent(&self) -> String {
        format_sig(self.fraction() * 100.0, 4)
    }
}

pub fn format_sig(x: f64, digits: i32) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{:.*}", (digits - 1) as usize, 0.0);
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Token and maximum-strength term counts per language. Languages without a
/// lexicon are skipped.
pub fn extreme_word_stats<'a, I>(corpus: I, lexicons: &BTreeMap<String, Lexicon>) -> BTreeMap<String, ExtremeStats>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut out: BTreeMap<String, ExtremeStats> = BTreeMap::new();
    for (lang, text) in corpus {
        let Some(lex) = lexicons.get(lang) else { continue };
        let tokens = tokenize(text);
        let e = out.entry(lang.to_string()).or_default();
        e.tokens += tokens.len() as u64;
        e.extreme += tokens.iter().filter(|t| lex.is_extreme(t)).count() as u64;
    }
    out
}

/// Case-insensitive hashtag predicate selecting the hashtag corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashtagFilter {
    tags: BTreeSet<String>,
}

pub const DEFAULT_HASHTAGS: [&str; 22] = [
    "IStandWithGreece",
    "Yunanistan",
    "suriye",
    "suriyeli",
    "multeci",
    "refugees",
    "refugeecrisis",
    "syrianrefugees",
    "RefugeesWelcome",
    "göçmenorumu",
    "avrupabirliği",
    "HumanRightsRefugee",
    "suriyelileriistemiyoruz",
    "negülüyorsunerdoğan",
    "SenGülkiÜlkenGülsünReis",
    "Greekborder",
    "GreeceAttacksRefugees",
    "GreeceUnderAttack2",
    "sınırKapıları",
    "ipsaldı",
    "turkishborder",
    "kapılaracıldı",
];

impl Default for HashtagFilter {
    fn default() -> Self {
        HashtagFilter::new(DEFAULT_HASHTAGS)
    }
}

impl HashtagFilter {
    pub fn new<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        HashtagFilter { tags: tags.into_iter().map(|t| t.as_ref().trim_start_matches('#').to_lowercase()).collect() }
    }

    pub fn hashtags(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split('#').skip(1).filter_map(|rest| {
            let end = rest.find(|c: char| !(c.is_alphanumeric() || c == '_')).unwrap_or(rest.len());
            (end > 0).then(|| rest[..end].to_lowercase())
        })
    }

    pub fn matches(&self, text: &str) -> bool {
        Self::hashtags(text).any(|t| self.tags.contains(&t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> Lexicon {
        Lexicon::read_csv("token,kind,value\nlove,term,3\nhate,term,-4\nvery,booster,1\nnot,negator,\nawful,term,-5\n".as_bytes())
            .unwrap()
    }

    #[test]
    fn hand_scores() {
        let lex = fixture();
        assert_eq!(score_text("love", &lex), SentimentScore { pos: 3, neg: -1, composite: 2 });
        assert_eq!(score_text("", &lex), SentimentScore::NEUTRAL);
        assert_eq!(score_text("very hate", &lex), SentimentScore { pos: 1, neg: -5, composite: -4 });
        assert_eq!(score_text("not hate", &lex), SentimentScore { pos: 4, neg: -1, composite: 3 });
    }

    #[test]
    fn modifier_must_be_adjacent() {
        let lex = fixture();
        assert_eq!(score_text("very much hate", &lex).neg, -4);
        assert_eq!(score_text("very much hate", &lex.clone().with_window(2)).neg, -5);
    }

    #[test]
    fn booster_cannot_exceed_cap() {
        assert_eq!(score_text("very awful", &fixture()).neg, -5);
    }

    #[test]
    fn hashtags_and_case() {
        let lex = fixture();
        assert_eq!(score_text("I #LOVE it", &lex).pos, 3);
    }

    #[test]
    fn lexicon_rejects_bad_rows() {
        assert!(matches!(
            Lexicon::read_csv("token,kind,value\nlove,term,3\nlove,booster,1\n".as_bytes()),
            Err(SentimentError::Duplicate(_))
        ));
        assert!(Lexicon::read_csv("token,kind,value\nmeh,term,1\n".as_bytes()).is_err());
        assert!(Lexicon::read_csv("token,kind,value\nso,booster,2\n".as_bytes()).is_err());
        assert!(Lexicon::read_csv("token,kind,value\nso,adverb,1\n".as_bytes()).is_err());
    }

    #[test]
    fn moments_closed_form() {
        let mut m = Moments::default();
        m.push(2);
        m.push(-2);
        assert_eq!(m.mean(), 0.0);
        assert_eq!(m.variance_fraction(), (16, 4));
        assert_eq!(m.variance(), 4.0);
        let mut one = Moments::default();
        one.push(2);
        assert_eq!((one.mean(), one.variance()), (2.0, 0.0));
    }

    #[test]
    fn languages_bucketed_apart() {
        let clock = LocalClock::default();
        let ts = clock.day_start(crate::clock::ymd(2020, 3, 2));
        let s = vec![
            ScoredTweet { language: "tr".into(), ts, composite: 2 },
            ScoredTweet { language: "en".into(), ts, composite: -3 },
        ];
        let agg = aggregate_scores(&s, Bucketing::Weekly, &clock);
        assert_eq!(agg[&("tr".to_string(), "2020-W10".to_string())].sum, 2);
        assert_eq!(agg.len(), 2);
        let daily = aggregate_scores(&s, Bucketing::Daily, &clock);
        assert!(daily.contains_key(&("en".to_string(), "2020-03-02".to_string())));
    }

    #[test]
    fn extreme_share() {
        let lexicons: BTreeMap<String, Lexicon> = [("en".to_string(), fixture())].into();
        let text = "one two three four five six seven eight nine awful";
        let stats = extreme_word_stats([("en", text), ("el", "awful")], &lexicons);
        assert_eq!(stats["en"], ExtremeStats { tokens: 10, extreme: 1 });
        assert_eq!(stats["en"].percent(), "10.00");
        assert!(!stats.contains_key("el"));
        let none = extreme_word_stats([("en", "love")], &lexicons);
        assert_eq!(none["en"].percent(), "0.000");
    }

    #[test]
    fn sig_digits() {
        assert_eq!(format_sig(0.0147, 4), "0.01470");
        assert_eq!(format_sig(123.456, 4), "123.5");
        assert_eq!(format_sig(12345.0, 4), "12345");
    }

    #[test]
    fn hashtag_filter() {
        let f = HashtagFilter::default();
        assert!(f.matches("Open the border #SınırKapıları now"));
        assert!(f.matches("#greeceunderattack2"));
        assert!(!f.matches("#GreeceUnderAttack"));
        assert!(!f.matches("refugees without a hash"));
    }

    proptest! {
        #[test]
        fn score_bounds(words in proptest::collection::vec(prop_oneof![
            Just("love"), Just("hate"), Just("very"), Just("not"), Just("awful"), Just("x")
        ], 0..12)) {
            let lex = fixture().with_window(3);
            let s = score_text(&words.join(" "), &lex);
            prop_assert!((1..=5).contains(&s.pos));
            prop_assert!((-5..=-1).contains(&s.neg));
            prop_assert_eq!(s.composite, s.pos + s.neg);
        }

        #[test]
        fn mean_within_range(xs in proptest::collection::vec(-4i64..=4, 1..40)) {
            let mut m = Moments::default();
            xs.iter().for_each(|&x| m.push(x));
            let (lo, hi) = (*xs.iter().min().unwrap() as f64, *xs.iter().max().unwrap() as f64);
            prop_assert!(m.mean() >= lo - 1e-12 && m.mean() <= hi + 1e-12);
            prop_assert!(m.variance_fraction().0 >= 0);
        }

        #[test]
        fn aggregation_partition_invariant(xs in proptest::collection::vec((-4i8..=4, 0i64..3_000_000), 0..60), split in 0usize..60) {
            let clock = LocalClock::default();
            let s: Vec<ScoredTweet> = xs.iter().map(|&(c, ts)| ScoredTweet { language: "tr".into(), ts: 1_582_000_000 + ts, composite: c }).collect();
            let whole = aggregate_scores(&s, Bucketing::Weekly, &clock);
            let k = split.min(s.len());
            let mut parts = aggregate_scores(&s[..k], Bucketing::Weekly, &clock);
            for (key, m) in aggregate_scores(&s[k..], Bucketing::Weekly, &clock) {
                let e = parts.entry(key).or_default();
                *e = e.merge(m);
            }
            prop_assert_eq!(whole, parts);
        }

        #[test]
        fn extreme_counts_additive(texts in proptest::collection::vec("(awful|love|x|y){0,6}( (awful|love|x)){0,4}", 0..8)) {
            let lexicons: BTreeMap<String, Lexicon> = [("en".to_string(), fixture())].into();
            let per = extreme_word_stats(texts.iter().map(|t| ("en", t.as_str())), &lexicons);
            let joined = texts.join(" ");
            let whole = extreme_word_stats([("en", joined.as_str())], &lexicons);
            prop_assert_eq!(per.get("en").copied().unwrap_or_default(), whole.get("en").copied().unwrap_or_default());
        }
    }
}
