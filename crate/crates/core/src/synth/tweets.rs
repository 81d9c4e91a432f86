use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng_for, SynthConfig, SynthError, RNG_ALGORITHM};
use crate::clock::{ymd, DateRange};
use crate::ingest::{GeoPoint, Tweet};
use crate::policy::{Destination, LanguageGroup};
use crate::sentiment::DEFAULT_HASHTAGS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TweetConfig {
    pub users: u32,
    /// Users who only post outside the fence or without a location.
    pub noise_users: u32,
    pub border_period: DateRange,
    pub follow_up_period: DateRange,
    pub border_tweets: (u32, u32),
    pub follow_up_share: f64,
    pub follow_up_tweets: (u32, u32),
    pub und_fraction: f64,
    /// Users whose every tweet is labelled `und`.
    pub all_und_users: u32,
    pub multi_language_share: f64,
    /// Weights of Visa, NoVisa and Turkish for single-language users.
    pub group_weights: (f64, f64, f64),
    pub visa_languages: Vec<String>,
    pub novisa_languages: Vec<String>,
    pub turkish_languages: Vec<String>,
    pub hashtag_share: f64,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for TweetConfig {
    fn default() -> Self {
        TweetConfig {
            users: 300,
            noise_users: 30,
            border_period: DateRange::new(ymd(2020, 2, 25), ymd(2020, 3, 25)).unwrap(),
            follow_up_period: DateRange::new(ymd(2020, 5, 1), ymd(2020, 12, 31)).unwrap(),
            border_tweets: (1, 8),
            follow_up_share: 0.65,
            follow_up_tweets: (1, 6),
            und_fraction: 0.1,
            all_und_users: 5,
            multi_language_share: 0.5,
            group_weights: (0.1, 0.3, 0.6),
            visa_languages: strings(&["ar", "fa", "ps"]),
            novisa_languages: strings(&["en", "el", "bg"]),
            turkish_languages: strings(&["tr"]),
            hashtag_share: 0.6,
        }
    }
}

impl TweetConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(format!("tweets: {m}")));
        if self.border_tweets.0 == 0 || self.border_tweets.0 > self.border_tweets.1 {
            return bad("border_tweets must satisfy 1 <= min <= max");
        }
        if self.follow_up_tweets.0 == 0 || self.follow_up_tweets.0 > self.follow_up_tweets.1 {
            return bad("follow_up_tweets must satisfy 1 <= min <= max");
        }
        if [self.visa_languages.len(), self.novisa_languages.len(), self.turkish_languages.len()].contains(&0) {
            return bad("every language group needs at least one language");
        }
        let (a, b, c) = self.group_weights;
        if a < 0.0 || b < 0.0 || c < 0.0 || a + b + c <= 0.0 {
            return bad("group_weights must be non-negative with a positive sum");
        }
        for p in [self.follow_up_share, self.und_fraction, self.multi_language_share, self.hashtag_share] {
            if !(0.0..=1.0).contains(&p) {
                return bad("shares and fractions must lie in [0, 1]");
            }
        }
        if self.all_und_users > self.users {
            return bad("all_und_users exceeds users");
        }
        Ok(())
    }

    fn languages(&self, g: LanguageGroup) -> &[String] {
        match g {
            LanguageGroup::Visa => &self.visa_languages,
            LanguageGroup::NoVisa => &self.novisa_languages,
            LanguageGroup::Turkish => &self.turkish_languages,
        }
    }

    fn group_of(&self, lang: &str) -> Option<LanguageGroup> {
        LanguageGroup::ALL.into_iter().find(|g| self.languages(*g).iter().any(|l| l == lang))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetUser {
    pub id: String,
    pub languages: Vec<String>,
    /// Groups of the user's labelled follow-up tweets after `und` assignment.
    pub follow_up_groups: Vec<LanguageGroup>,
    pub destinations: Vec<Destination>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VennCount {
    pub set: Vec<String>,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TweetManifest {
    pub rng: String,
    pub seed: u64,
    pub total_tweets: u64,
    pub und_tweets: u64,
    pub all_und_users: Vec<String>,
    /// Tweets that must stay unresolved after `und` assignment.
    pub all_und_tweets: u64,
    pub border_users: Vec<String>,
    pub present_users: u64,
    pub users: Vec<TweetUser>,
    pub venn_language: Vec<VennCount>,
    pub venn_destination: Vec<VennCount>,
}

const EN_WORDS: [&str; 16] = [
    "border", "people", "today", "news", "families", "waiting", "love", "hate", "good", "bad", "very", "not", "terrible",
    "hope", "sad", "wonderful",
];
const TR_WORDS: [&str; 16] = [
    "sınır", "insanlar", "bugün", "haber", "aileler", "bekliyor", "sevgi", "nefret", "iyi", "kötü", "çok", "değil", "berbat",
    "umut", "üzücü", "harika",
];
const OTHER_WORDS: [&str; 6] = ["σύνορα", "άνθρωποι", "الحدود", "الناس", "granica", "hora"];

const EUROPE: [&str; 5] = ["DEU", "GRC", "BGR", "GBR", "NLD"];
const OTHER: [&str; 3] = ["USA", "CAN", "IRQ"];

fn text<R: Rng>(rng: &mut R, lang: &str, hashtag_share: f64) -> String {
    let vocab: &[&str] = match lang {
        "en" => &EN_WORDS,
        "tr" => &TR_WORDS,
        _ => &OTHER_WORDS,
    };
    let mut words: Vec<String> = (0..rng.gen_range(4..=10)).map(|_| vocab.choose(rng).unwrap().to_string()).collect();
    if rng.gen_bool(hashtag_share) {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, format!("#{}", DEFAULT_HASHTAGS.choose(rng).unwrap()));
    }
    words.join(" ")
}

fn point<R: Rng>(rng: &mut R, lon: (f64, f64), lat: (f64, f64)) -> GeoPoint {
    let r = |x: f64| (x * 1e5).round() / 1e5;
    GeoPoint { lon: r(rng.gen_range(lon.0..lon.1)), lat: r(rng.gen_range(lat.0..lat.1)) }
}

fn ts_in<R: Rng>(rng: &mut R, cfg: &SynthConfig, period: &DateRange) -> i64 {
    let (start, end) = period.epoch_bounds(&cfg.timezone);
    rng.gen_range(start..end)
}

fn destination_country<R: Rng>(rng: &mut R, d: Destination) -> &'static str {
    match d {
        Destination::Turkey => "TUR",
        Destination::Europe => EUROPE.choose(rng).unwrap(),
        Destination::Other => OTHER.choose(rng).unwrap(),
    }
}

fn pick_weighted<R: Rng, T: Copy>(rng: &mut R, items: &[(T, f64)]) -> T {
    let total: f64 = items.iter().map(|i| i.1).sum();
    let mut x = rng.gen_range(0.0..total);
    for &(item, w) in items {
        if x < w {
            return item;
        }
        x -= w;
    }
    items.last().unwrap().0
}

struct Draft {
    tweet: Tweet,
    follow_up: bool,
    noise: bool,
}

const TWEET_STREAM: u64 = 1 << 40;

/// Venn counts over the seven non-empty subsets of `universe`, in bitmask order.
fn venn<T: Ord + Copy>(sets: &[Vec<T>], universe: [T; 3], name: impl Fn(T) -> &'static str) -> Vec<VennCount> {
    let mut by_set: BTreeMap<Vec<T>, u64> = BTreeMap::new();
    for s in sets.iter().filter(|s| !s.is_empty()) {
        let mut key = s.clone();
        key.sort();
        key.dedup();
        *by_set.entry(key).or_default() += 1;
    }
    (1u8..8)
        .map(|mask| {
            let set: Vec<T> = (0..3).filter(|i| mask & (1 << i) != 0).map(|i| universe[i]).collect();
            VennCount { set: set.iter().map(|t| name(*t).to_string()).collect(), count: by_set.get(&set).copied().unwrap_or(0) }
        })
        .collect()
}

/// Posts sorted by (user, ts) with sequential ids, and the ground truth.
pub fn generate_tweets(cfg: &SynthConfig) -> Result<(Vec<Tweet>, TweetManifest), SynthError> {
    let tc = &cfg.tweets;
    tc.validate()?;
    let mut drafts: Vec<Draft> = Vec::new();
    let mut user_langs: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut user_dests: BTreeMap<String, Vec<Destination>> = BTreeMap::new();
    let weights = [
        (LanguageGroup::Visa, tc.group_weights.0),
        (LanguageGroup::NoVisa, tc.group_weights.1),
        (LanguageGroup::Turkish, tc.group_weights.2),
    ];
    for u in 0..tc.users {
        let mut rng = rng_for(cfg.seed, TWEET_STREAM + u as u64);
        let user = format!("U{u:06}");
        let groups: Vec<LanguageGroup> = if rng.gen_bool(tc.multi_language_share) {
            let k = if rng.gen_bool(0.6) { 2 } else { 3 };
            let mut all = LanguageGroup::ALL.to_vec();
            all.shuffle(&mut rng);
            all.truncate(k);
            all
        } else {
            vec![pick_weighted(&mut rng, &weights)]
        };
        let langs: Vec<String> = groups.iter().map(|g| tc.languages(*g).choose(&mut rng).unwrap().clone()).collect();
        let n = (rng.gen_range(tc.border_tweets.0..=tc.border_tweets.1) as usize).max(langs.len());
        for i in 0..n {
            let lang = if i < langs.len() { langs[i].clone() } else { langs.choose(&mut rng).unwrap().clone() };
            let tweet = Tweet {
                id: String::new(),
                user: user.clone(),
                ts: ts_in(&mut rng, cfg, &tc.border_period),
                point: Some(point(&mut rng, (26.8, 27.6), (41.1, 41.8))),
                country: None,
                text: Some(text(&mut rng, &lang, tc.hashtag_share)),
                lang,
            };
            drafts.push(Draft { tweet, follow_up: false, noise: false });
        }
        if rng.gen_bool(tc.follow_up_share) {
            let dest_weights = [(Destination::Turkey, 0.7), (Destination::Europe, 0.2), (Destination::Other, 0.1)];
            let mut dests = vec![pick_weighted(&mut rng, &dest_weights)];
            if rng.gen_bool(0.3) {
                let second = pick_weighted(&mut rng, &dest_weights);
                if second != dests[0] {
                    dests.push(second);
                }
            }
            let m = (rng.gen_range(tc.follow_up_tweets.0..=tc.follow_up_tweets.1) as usize).max(langs.len()).max(dests.len());
            for i in 0..m {
                let lang = if i < langs.len() { langs[i].clone() } else { langs.choose(&mut rng).unwrap().clone() };
                let dest = if i < dests.len() { dests[i] } else { *dests.choose(&mut rng).unwrap() };
                let tweet = Tweet {
                    id: String::new(),
                    user: user.clone(),
                    ts: ts_in(&mut rng, cfg, &tc.follow_up_period),
                    point: None,
                    country: Some(destination_country(&mut rng, dest).to_string()),
                    lang,
                    text: None,
                };
                drafts.push(Draft { tweet, follow_up: true, noise: false });
            }
            user_dests.insert(user.clone(), dests);
        }
        user_langs.insert(user, langs);
    }
    for u in 0..tc.noise_users {
        let mut rng = rng_for(cfg.seed, TWEET_STREAM + (1 << 20) + u as u64);
        let user = format!("N{u:06}");
        for i in 0..rng.gen_range(1..=3u32) {
            let (point, country) = match (u + i) % 3 {
                0 => (Some(point(&mut rng, (28.9, 29.1), (41.0, 41.1))), None),
                1 => (Some(point(&mut rng, (25.7, 26.0), (40.9, 41.3))), None),
                _ => (None, None),
            };
            let lang = ["tr", "en", "el"][rng.gen_range(0..3)].to_string();
            let tweet = Tweet {
                id: String::new(),
                user: user.clone(),
                ts: ts_in(&mut rng, cfg, &tc.border_period),
                point,
                country,
                text: Some(text(&mut rng, &lang, tc.hashtag_share)),
                lang,
            };
            drafts.push(Draft { tweet, follow_up: false, noise: true });
        }
    }
    drafts.sort_by(|a, b| (&a.tweet.user, a.tweet.ts).cmp(&(&b.tweet.user, b.tweet.ts)));
    for (i, d) in drafts.iter_mut().enumerate() {
        d.tweet.id = format!("T{:07}", i + 1);
    }

    // und quota: whole users first, then single tweets, never a user's first
    // tweet of a period.
    let mut rng = rng_for(cfg.seed, TWEET_STREAM - 1);
    let quota = (tc.und_fraction * drafts.len() as f64).round() as usize;
    let mut main_users: Vec<&String> = user_langs.keys().collect();
    main_users.shuffle(&mut rng);
    let all_und: BTreeSet<String> = main_users.iter().take(tc.all_und_users as usize).map(|s| s.to_string()).collect();
    let mut und: Vec<usize> = (0..drafts.len()).filter(|&i| all_und.contains(&drafts[i].tweet.user)).collect();
    if und.len() > quota {
        return Err(SynthError::Infeasible(format!(
            "{} all-und users post {} tweets, above the und quota of {quota}",
            all_und.len(),
            und.len()
        )));
    }
    let mut seen: BTreeSet<(&str, bool)> = BTreeSet::new();
    let mut candidates: Vec<usize> = Vec::new();
    for (i, d) in drafts.iter().enumerate() {
        if d.noise || all_und.contains(&d.tweet.user) {
            continue;
        }
        if seen.insert((&d.tweet.user, d.follow_up)) {
            continue;
        }
        candidates.push(i);
    }
    let rest = quota - und.len();
    if rest > candidates.len() {
        return Err(SynthError::Infeasible(format!("und quota {quota} exceeds the {} tweets that may be relabelled", candidates.len() + und.len())));
    }
    let (picked, _) = candidates.partial_shuffle(&mut rng, rest);
    und.extend_from_slice(picked);
    for &i in &und {
        drafts[i].tweet.lang = Tweet::UNDEFINED_LANG.to_string();
    }

    let mut users = Vec::new();
    let (mut lang_sets, mut dest_sets) = (Vec::new(), Vec::new());
    for (user, langs) in &user_langs {
        let groups: BTreeSet<LanguageGroup> = drafts
            .iter()
            .filter(|d| d.follow_up && &d.tweet.user == user && !d.tweet.is_und())
            .filter_map(|d| tc.group_of(&d.tweet.lang))
            .collect();
        let dests = user_dests.get(user).cloned().unwrap_or_default();
        lang_sets.push(groups.iter().copied().collect::<Vec<_>>());
        dest_sets.push(dests.clone());
        users.push(TweetUser { id: user.clone(), languages: langs.clone(), follow_up_groups: groups.into_iter().collect(), destinations: dests });
    }
    let tweets: Vec<Tweet> = drafts.into_iter().map(|d| d.tweet).collect();
    let all_und_tweets = tweets.iter().filter(|t| all_und.contains(&t.user)).count() as u64;
    let manifest = TweetManifest {
        rng: RNG_ALGORITHM.into(),
        seed: cfg.seed,
        total_tweets: tweets.len() as u64,
        und_tweets: tweets.iter().filter(|t| t.is_und()).count() as u64,
        all_und_users: all_und.into_iter().collect(),
        all_und_tweets,
        border_users: user_langs.keys().cloned().collect(),
        present_users: user_dests.len() as u64,
        users,
        venn_language: venn(&lang_sets, LanguageGroup::ALL, |g| g.as_str()),
        venn_destination: venn(&dest_sets, Destination::ALL, |d| d.as_str()),
    };
    Ok((tweets, manifest))
}
