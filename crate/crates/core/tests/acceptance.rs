//! End-to-end acceptance checks. Runs without the libtest harness so the
//! per-criterion lines are always printed.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use border_flux::clock::{ymd, DateRange, LocalClock};
use border_flux::cohort::{build_cohort, Cohort};
use border_flux::ingest::{
    parse_reference_tables, parse_tweets, CellRegistry, EventTable, Granularity, ParseOptions, ReferencePaths,
    ReferenceTables, RegionIndex, SubscriberTable, Tweet,
};
use border_flux::mobility::{
    build_all_series, detect_drops, estimate_crossings, flow_matrix, group_timeseries, province_counts,
    province_counts_all, DropRule, FlowNode, GroupSeries, SeriesSet,
};
use border_flux::pipeline::{default_stages, run_pipeline, RunConfig};
use border_flux::policy::{Destination, LanguageGroup, MobilityClass};
use border_flux::privacy::{
    answer_query, flow_table, lang_daily_table, lang_table, province_table, scan_dir, sentiment_table, suppress,
    Pseudonymizer, QuerySpec, Secrets, Store,
};
use border_flux::sentiment::{
    aggregate_scores, score_text, Bucketing, EntryKind, HashtagFilter, Lexicon, Moments, ScoredTweet,
};
use border_flux::social::{activity_counts, destination_matrix, geofilter, overlap_regions, resolve_und, GeoFence};
use border_flux::synth::{generate_tweets, generate_world, write_world, InjectionKind, Manifest, SynthConfig, TweetManifest};
use serde_json::json;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn secrets() -> Secrets {
    Secrets { mobile: Pseudonymizer::new("acceptance-mobile").unwrap(), social: Pseudonymizer::new("acceptance-social").unwrap() }
}

/// A generated world on disk plus every aggregate recomputed straight from
/// the library, bypassing the pipeline.
struct Direct {
    dir: tempfile::TempDir,
    cfg: RunConfig,
    manifest: Manifest,
    tweet_manifest: TweetManifest,
    tables: ReferenceTables,
    cohort: Cohort,
    regions: RegionIndex,
    border: BTreeSet<u32>,
    series: SeriesSet,
}

impl Direct {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_world(&SynthConfig::default(), dir.path()).unwrap();
        let cfg = RunConfig::load(&dir.path().join("config.toml")).unwrap();
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        let tweet_manifest: TweetManifest =
            serde_json::from_slice(&std::fs::read(dir.path().join("tweet_manifest.json")).unwrap()).unwrap();
        let i = &cfg.inputs;
        let tables = parse_reference_tables(&ReferencePaths {
            cells: i.cells.clone(),
            subscribers: i.subscribers.clone(),
            visa_policy: i.visa_policy.clone(),
            lang_groups: i.lang_groups.clone(),
            destinations: i.destinations.clone(),
        })
        .unwrap();
        let bytes = std::fs::read(&i.xdr).unwrap();
        let (events, _) = EventTable::ingest(&bytes, &ParseOptions::default(), &tables.cells, &tables.subscribers).unwrap();
        let cohort = build_cohort(&events, &tables.cells, &tables.subscribers, &tables.visa, &cfg.cohort, &cfg.timezone).unwrap();
        let regions = tables.cells.regions(Granularity::Province);
        let border = regions.within_provinces(&cfg.cohort.border_provinces);
        let members: BTreeSet<u32> = cohort.members.keys().copied().collect();
        let series = build_all_series(&events, &members, &regions, &cfg.mobility.horizon, &cfg.timezone);
        Direct { dir, cfg, manifest, tweet_manifest, tables, cohort, regions, border, series }
    }

    fn horizon(&self) -> DateRange {
        self.cfg.mobility.horizon
    }

    fn groups(&self, backfill: bool) -> GroupSeries {
        group_timeseries(&self.series.series, &self.cohort, &self.border, &self.regions, &self.horizon(), backfill)
    }

    fn tweets(&self) -> Vec<Tweet> {
        let bytes = std::fs::read(self.cfg.inputs.tweets.as_ref().unwrap()).unwrap();
        parse_tweets(&bytes, &ParseOptions::default()).unwrap().records
    }

    fn fence(&self) -> GeoFence {
        GeoFence::from_geojson(&std::fs::read_to_string(self.cfg.inputs.fence.as_ref().unwrap()).unwrap()).unwrap()
    }

    /// Border-period tweets after the fence, with `und` resolved.
    fn border_tweets(&self) -> Vec<Tweet> {
        let (kept, _) = geofilter(&self.tweets(), &self.fence());
        let clock = &self.cfg.timezone;
        let mut border: Vec<Tweet> =
            kept.into_iter().filter(|t| self.cfg.social.border_period.contains(clock.date_of(t.ts))).collect();
        resolve_und(&mut border);
        border
    }
}

/// 1. Placement series equal the generator's itineraries on a noise-free world.
fn oracle_itinerary() -> Outcome {
    let mut cfg = SynthConfig::default();
    cfg.horizon = DateRange::new(ymd(2020, 2, 28), ymd(2020, 6, 16)).unwrap();
    cfg.visit_window = DateRange::new(ymd(2020, 2, 28), ymd(2020, 3, 25)).unwrap();
    for i in &mut cfg.injections {
        if i.date <= cfg.horizon.start() {
            i.date = cfg.horizon.start() + chrono::Duration::days(2);
        }
    }
    ensure(cfg.horizon.len_days() == 110, || format!("horizon has {} days", cfg.horizon.len_days()))?;
    let mut xdr = Vec::new();
    let world = generate_world(&cfg, &mut xdr).map_err(|e| e.to_string())?;
    ensure(world.subscribers.len() >= 1000, || format!("only {} subscribers", world.subscribers.len()))?;

    let t0 = Instant::now();
    let registry = CellRegistry::from_sites(world.cells.clone()).unwrap();
    let subs = SubscriberTable::from_rows(world.subscribers.clone()).unwrap();
    let (events, _) = EventTable::ingest(&xdr, &ParseOptions::default(), &registry, &subs).unwrap();
    let regions = registry.regions(Granularity::Province);
    let everyone: BTreeSet<u32> = (0..subs.len() as u32).collect();
    let set = build_all_series(&events, &everyone, &regions, &cfg.horizon, &cfg.timezone);
    let secs = t0.elapsed().as_secs_f64();

    let (mut days, mut bad_days, mut bad_lost) = (0u64, 0u64, 0u64);
    for truth in &world.manifest.subscribers {
        let idx = subs.lookup(&truth.id).unwrap();
        let series = set.get(idx);
        for date in cfg.horizon.days() {
            days += 1;
            let got = series.and_then(|s| s.placement_on(date)).map(|p| regions.name(p.region));
            if got != truth.province_on(date) {
                bad_days += 1;
            }
        }
        if series.and_then(|s| s.lost_date) != truth.lost_date {
            bad_lost += 1;
        }
    }
    ensure(bad_days == 0 && bad_lost == 0, || format!("{bad_days} mismatched subscriber-days, {bad_lost} mismatched lost dates"))?;
    ensure(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("{} subscribers, {days} subscriber-days, 0 mismatches, {secs:.2}s", world.subscribers.len()))
}

/// 2. The five groups sum to the cohort on every date.
fn five_group_conservation(d: &Direct) -> Outcome {
    let analysed = (d.cohort.len() - d.series.without_events.len()) as u64;
    let mut dates = 0;
    for backfill in [true, false] {
        let g = d.groups(backfill);
        ensure(g.cohort_size == analysed, || format!("cohort size {} vs {analysed}", g.cohort_size))?;
        for r in &g.rows {
            let five: u64 = r.counts().iter().sum();
            let expect_unobserved = if backfill { 0 } else { r.unobserved };
            ensure(r.unobserved == expect_unobserved && five + r.unobserved == g.cohort_size, || {
                format!("{}: {:?} + {} unobserved != {}", r.date, r.counts(), r.unobserved, g.cohort_size)
            })?;
            dates += 1;
        }
        ensure(g.rows.windows(2).all(|w| w[0].lost <= w[1].lost), || "lost column decreases".into())?;
    }
    Ok(format!("{dates} dated rows over two back-fill settings, |cohort| = {analysed}, tolerance 0"))
}

/// 3. Flow totals and marginals against province counts and the manifest.
fn flow_conservation(d: &Direct) -> Outcome {
    let truth: BTreeMap<&str, _> = d.manifest.subscribers.iter().map(|s| (s.id.as_str(), s)).collect();
    let h = d.horizon();
    let mut checked = 0;
    for (a, b) in [(h.start(), h.end()), (ymd(2020, 3, 1), ymd(2020, 4, 15)), (ymd(2020, 3, 9), ymd(2020, 3, 10))] {
        let m = flow_matrix(&d.series.series, &d.regions, &h, a, b, true).map_err(|e| e.to_string())?;
        ensure(m.total() == d.series.len() as u64, || format!("{a}..{b}: total {} vs {}", m.total(), d.series.len()))?;
        for (date, marg) in [(a, m.row_marginals()), (b, m.column_marginals())] {
            let p = province_counts(&d.series.series, &d.regions, date, true);
            let mut expect: BTreeMap<FlowNode, u64> =
                p.counts.iter().map(|(r, &n)| (FlowNode::Region(r.clone()), n)).collect();
            if p.lost > 0 {
                expect.insert(FlowNode::Lost, p.lost);
            }
            ensure(marg == expect, || format!("{date}: marginals {marg:?} vs province counts {expect:?}"))?;

            // Independent count from the generator's truth.
            let mut oracle: BTreeMap<FlowNode, u64> = BTreeMap::new();
            for s in &d.series.series {
                let t = truth[d.tables.subscribers.get(s.subscriber).subscriber_id.as_str()];
                let node = match t.lost_date {
                    Some(l) if l <= date => FlowNode::Lost,
                    _ => FlowNode::Region(t.province_on(date).expect("member placed").to_string()),
                };
                *oracle.entry(node).or_default() += 1;
            }
            ensure(marg == oracle, || format!("{date}: marginals differ from manifest truth"))?;
            checked += 1;
        }
    }
    Ok(format!("3 date pairs, total = |cohort| = {}, {checked} marginals match province counts and manifest", d.series.len()))
}

/// 4. Top-3 drops are the three injected disappearance dates.
fn drop_recovery(d: &Direct) -> Outcome {
    let cohort_ids: BTreeSet<&str> =
        d.cohort.members.keys().map(|&s| d.tables.subscribers.get(s).subscriber_id.as_str()).collect();
    let injected: Vec<_> = d.manifest.injections.iter().filter(|i| i.kind == InjectionKind::Disappear).collect();
    ensure(injected.len() == 3, || format!("{} disappearance injections", injected.len()))?;
    let dates: BTreeSet<_> = injected.iter().map(|i| i.date).collect();
    ensure(dates.len() == 3, || "injection dates not distinct".into())?;
    let size = d.series.len() as f64;
    for i in &injected {
        let in_cohort = i.members.iter().filter(|m| cohort_ids.contains(m.as_str())).count();
        ensure(in_cohort as f64 >= 0.05 * size, || format!("{}: {in_cohort} cohort members < 5% of {size}", i.date))?;
    }
    let drops = detect_drops(&d.groups(true).active_counts(), DropRule::TopN(3));
    let found: BTreeSet<_> = drops.iter().map(|x| x.date).collect();
    ensure(found == dates, || format!("found {found:?}, injected {dates:?}"))?;
    Ok(format!("detect_drops(top_n=3) = {}", drops.iter().map(|x| x.date.to_string()).collect::<Vec<_>>().join(", ")))
}

/// 5. The published Visa interval under the stated assumptions.
fn crossing_interval() -> Outcome {
    let i = estimate_crossings(10_000, 0.5, 0.5).map_err(|e| e.to_string())?;
    ensure((i.low, i.high) == (10_000, 20_000), || format!("[{}, {}]", i.low, i.high))?;
    Ok("estimate_crossings(10000, 0.5, 0.5) = [10000, 20000]".into())
}

/// 6. `und` resolution leaves exactly the all-`und` users' tweets, and the
/// overlap regions partition the users.
fn und_resolution(d: &Direct) -> Outcome {
    let cfg = SynthConfig::default();
    let (mut tweets, m) = generate_tweets(&cfg).map_err(|e| e.to_string())?;
    let quota = (cfg.tweets.und_fraction * tweets.len() as f64).round() as u64;
    let und = tweets.iter().filter(|t| t.is_und()).count() as u64;
    ensure(und == quota, || format!("{und} und labels, quota {quota}"))?;
    let report = resolve_und(&mut tweets);
    ensure(report.unresolved_tweets == m.all_und_tweets, || {
        format!("{} unresolved vs {} all-und tweets", report.unresolved_tweets, m.all_und_tweets)
    })?;
    ensure(tweets.iter().filter(|t| t.is_und()).all(|t| m.all_und_users.contains(&t.user)), || "stray und".into())?;

    // Per-period resolution on the written world.
    let clock = &d.cfg.timezone;
    let border = d.border_tweets();
    let users: BTreeSet<String> = border.iter().map(|t| t.user.clone()).collect();
    let mut follow: Vec<Tweet> =
        d.tweets().into_iter().filter(|t| users.contains(&t.user) && d.cfg.social.follow_up.contains(clock.date_of(t.ts))).collect();
    resolve_und(&mut follow);
    let r = destination_matrix(&follow, &users, &d.cfg.social.follow_up, clock, &d.tables.lang_groups, &d.tables.destinations, None);
    let lang = overlap_regions(r.user_groups.values(), LanguageGroup::ALL);
    let dest = overlap_regions(r.user_destinations.values(), Destination::ALL);
    let lang_sum: u64 = lang.iter().map(|v| v.count).sum();
    let dest_sum: u64 = dest.iter().map(|v| v.count).sum();
    ensure(lang_sum == r.user_groups.len() as u64, || format!("language regions sum {lang_sum} vs {} users", r.user_groups.len()))?;
    ensure(dest_sum == r.present, || format!("destination regions sum {dest_sum} vs {} present", r.present))?;
    let counts = |v: &[border_flux::synth::VennCount]| v.iter().map(|c| c.count).collect::<Vec<_>>();
    ensure(lang.iter().map(|v| v.count).collect::<Vec<_>>() == counts(&d.tweet_manifest.venn_language), || {
        "language regions differ from manifest".into()
    })?;
    ensure(dest.iter().map(|v| v.count).collect::<Vec<_>>() == counts(&d.tweet_manifest.venn_destination), || {
        "destination regions differ from manifest".into()
    })?;
    Ok(format!(
        "{und} of {} tweets und, {} unresolved = all-und tweets; regions sum to {lang_sum} and {dest_sum} users",
        tweets.len(),
        report.unresolved_tweets
    ))
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// 7. Hand-evaluated scores and closed-form weekly moments.
fn sentiment_fixture() -> Outcome {
    let mut lex = Lexicon::new();
    lex.insert("love", EntryKind::Term, 3).unwrap();
    lex.insert("hate", EntryKind::Term, -4).unwrap();
    lex.insert("very", EntryKind::Booster, 1).unwrap();
    lex.insert("not", EntryKind::Negator, 0).unwrap();
    let cases = [("love", 2i8), ("very hate", -4), ("not hate", 3), ("", 0)];
    for (text, want) in cases {
        let got = score_text(text, &lex).composite;
        ensure(got == want, || format!("{text:?} scored {got}, expected {want}"))?;
    }
    // One ISO week (2020-W10) holding the four fixture texts, one in the next.
    let clock = LocalClock::default();
    let monday = clock.day_start(ymd(2020, 3, 2));
    let mut scored: Vec<ScoredTweet> = cases
        .iter()
        .enumerate()
        .map(|(i, (t, _))| ScoredTweet { language: "en".into(), ts: monday + i as i64 * 86_400, composite: score_text(t, &lex).composite })
        .collect();
    scored.push(ScoredTweet { language: "en".into(), ts: monday + 7 * 86_400, composite: 2 });
    let weekly = aggregate_scores(&scored, Bucketing::Weekly, &clock);
    // Scores 2, -4, 3, 0: mean 1/4, population variance 29/4 - 1/16 = 115/16.
    let w10: &Moments = &weekly[&("en".to_string(), "2020-W10".to_string())];
    let (num, den) = w10.variance_fraction();
    let g = gcd(num, den);
    ensure(w10.n == 4 && w10.sum == 1 && (num / g, den / g) == (115, 16), || format!("W10 moments {w10:?}, variance {num}/{den}"))?;
    ensure(w10.mean() == 0.25 && w10.variance() == 115.0 / 16.0, || "float mean/variance".into())?;
    let w11 = &weekly[&("en".to_string(), "2020-W11".to_string())];
    ensure(w11.n == 1 && w11.mean() == 2.0 && w11.variance() == 0.0, || format!("W11 {w11:?}"))?;
    Ok("love=+2, very hate=-4, not hate=+3, empty=0; 2020-W10 mean 1/4, variance 115/16".into())
}

fn q(template: &str, params: serde_json::Value) -> QuerySpec {
    QuerySpec { template: template.into(), params }
}

fn same(answer: &serde_json::Value, expected_rows: Vec<serde_json::Value>, k: u64) -> bool {
    let expected = json!({"policy": {"k": k, "spatial_floor": "province"}, "data": expected_rows});
    serde_json::to_vec(answer).unwrap() == serde_json::to_vec(&expected).unwrap()
}

/// 8. Nothing published lies in (0, k); answers equal suppressed direct results.
fn privacy_scan(d: &Direct) -> Outcome {
    let manifest = run_pipeline(&d.cfg, &default_stages(&d.cfg), &secrets()).map_err(|e| e.to_string())?;
    let k = d.cfg.privacy.k;
    ensure(k == 10, || format!("k = {k}"))?;
    let violations = scan_dir(&d.cfg.output.dir, k).map_err(|e| e.to_string())?;
    ensure(violations.is_empty(), || format!("{} cells below k, first {:?}", violations.len(), violations[0]))?;
    let store = Store::load(&d.cfg.output.store).map_err(|e| e.to_string())?;
    let policy = store.meta.policy;
    let answer = |spec: QuerySpec| answer_query(&spec, &store, &policy).map_err(|e| format!("{}: {e}", spec.template));

    // group_timeseries through `suppress` over (date, column) cells.
    let (from, to) = (ymd(2020, 3, 1), ymd(2020, 3, 15));
    let g = d.groups(true);
    let cols = ["visa_border", "visa_other", "novisa_border", "novisa_other", "lost"];
    let mut raw: BTreeMap<(chrono::NaiveDate, &str), u64> = BTreeMap::new();
    for r in g.rows.iter().filter(|r| r.date >= from && r.date <= to) {
        for (c, n) in cols.iter().zip(r.counts()) {
            raw.insert((r.date, c), n);
        }
    }
    let sup = suppress(&raw, &policy);
    let rows: Vec<serde_json::Value> = from
        .iter_days()
        .take_while(|x| *x <= to)
        .map(|date| {
            let mut o = serde_json::Map::new();
            o.insert("date".into(), json!(date.to_string()));
            for c in cols {
                o.insert(c.into(), serde_json::to_value(sup.cells[&(date, c)]).unwrap());
            }
            serde_json::Value::Object(o)
        })
        .collect();
    let got = answer(q("group_timeseries", json!({"from": from, "to": to})))?;
    ensure(same(&got, rows, k), || "group_timeseries differs".into())?;

    let h = d.horizon();
    let visa: Vec<_> = d
        .series
        .series
        .iter()
        .filter(|s| d.cohort.class_of(s.subscriber) == Some(MobilityClass::Visa))
        .collect();
    let m = flow_matrix(visa, &d.regions, &h, h.start(), h.end(), true).unwrap();
    let got = answer(q("flow_matrix", json!({"date_a": h.start(), "date_b": h.end(), "group": "visa"})))?;
    ensure(same(&got, flow_table("visa", &m, &policy).json_rows(), k), || "flow_matrix differs".into())?;

    let p = province_counts(&d.series.series, &d.regions, ymd(2020, 3, 1), true);
    let got = answer(q("province_counts", json!({"date": "2020-03-01"})))?;
    ensure(same(&got, province_table(&[p], &policy).json_rows(), k), || "province_counts differs".into())?;
    let all = province_counts_all(&d.series.series, &d.regions, &h, true);
    ensure(all.iter().all(|p| p == &province_counts(&d.series.series, &d.regions, p.date, true)), || {
        "province_counts_all differs from per-date counts".into()
    })?;

    let border = d.border_tweets();
    let activity = activity_counts(&border, &d.tables.lang_groups, &d.cfg.social.border_period, &d.cfg.timezone);
    let got = answer(q("lang_counts", json!({"granularity": "total"})))?;
    ensure(same(&got, lang_table(&activity, &policy).json_rows(), k), || "lang_counts differs".into())?;
    let got = answer(q("lang_counts", json!({"granularity": "daily"})))?;
    ensure(same(&got, lang_daily_table(&activity, &policy).json_rows(), k), || "daily lang_counts differs".into())?;

    let mut lexicons = BTreeMap::new();
    for (lang, path) in &d.cfg.inputs.lexicons {
        lexicons.insert(lang.clone(), Lexicon::read_csv(std::fs::File::open(path).unwrap()).unwrap());
    }
    let filter = HashtagFilter::default();
    let mut corpus: Vec<Tweet> = d.tweets().into_iter().filter(|t| t.text.as_deref().is_some_and(|x| filter.matches(x))).collect();
    resolve_und(&mut corpus);
    let scored: Vec<ScoredTweet> = corpus
        .iter()
        .filter_map(|t| {
            let s = score_text(t.text.as_deref()?, lexicons.get(&t.lang)?);
            Some(ScoredTweet { language: t.lang.clone(), ts: t.ts, composite: s.composite })
        })
        .collect();
    let weekly: BTreeMap<_, _> =
        aggregate_scores(&scored, Bucketing::Weekly, &d.cfg.timezone).into_iter().filter(|((l, _), _)| l == "tr").collect();
    let got = answer(q("sentiment_weekly", json!({"language": "tr"})))?;
    ensure(same(&got, sentiment_table(&weekly, "iso_week", &policy).json_rows(), k), || "sentiment_weekly differs".into())?;

    Ok(format!("{} published files, 0 cells in (0,{k}); 5 templates (6 queries) byte-identical", manifest.outputs.len()))
}

/// 9. Output digests do not depend on the thread count.
fn determinism(d: &Direct) -> Outcome {
    let mut digests = Vec::new();
    for threads in [1, 4] {
        let mut cfg = d.cfg.clone();
        cfg.threads = Some(threads);
        let base = d.dir.path().join(format!("t{threads}"));
        cfg.output.dir = base.join("out");
        cfg.output.store = base.join("store");
        cfg.output.work = base.join("work");
        let m = run_pipeline(&cfg, &default_stages(&cfg), &secrets()).map_err(|e| e.to_string())?;
        digests.push(m.outputs);
    }
    ensure(digests[0] == digests[1], || {
        let diff: Vec<_> = digests[0].iter().filter(|(k, v)| digests[1].get(*k) != Some(v)).map(|(k, _)| k.clone()).collect();
        format!("differing outputs: {diff:?}")
    })?;
    Ok(format!("{} output digests identical with 1 and 4 threads", digests[0].len()))
}

fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// 10. Ten million events through ingest, placement and aggregation.
fn throughput(dir: &Path) -> Outcome {
    let mut cfg = SynthConfig::default();
    cfg.tweets.users = 0;
    cfg.tweets.noise_users = 0;
    cfg.tweets.all_und_users = 0;
    for n in &mut cfg.nationalities {
        n.subscribers *= 33;
    }
    for i in &mut cfg.injections {
        i.count *= 33;
    }
    let xdr_path = dir.join("xdr_10m.csv");
    let world = generate_world(&cfg, std::io::BufWriter::new(std::fs::File::create(&xdr_path).unwrap())).map_err(|e| e.to_string())?;
    ensure(world.manifest.events >= 10_000_000, || format!("only {} events generated", world.manifest.events))?;
    let registry = CellRegistry::from_sites(world.cells.clone()).unwrap();
    let subs = SubscriberTable::from_rows(world.subscribers.clone()).unwrap();
    let visa = border_flux::policy::read_visa_policy(border_flux::synth::VISA_POLICY_CSV.as_bytes()).unwrap();
    drop(world);
    // Peak measured from here on.
    let _ = std::fs::write("/proc/self/clear_refs", "5");

    let t0 = Instant::now();
    let bytes = std::fs::read(&xdr_path).unwrap();
    let (events, summary) = EventTable::ingest(&bytes, &ParseOptions::default(), &registry, &subs).map_err(|e| e.to_string())?;
    drop(bytes);
    let clock = LocalClock::default();
    let spec = border_flux::cohort::CohortSpec::default();
    let cohort = build_cohort(&events, &registry, &subs, &visa, &spec, &clock).map_err(|e| e.to_string())?;
    let regions = registry.regions(Granularity::Province);
    let members: BTreeSet<u32> = cohort.members.keys().copied().collect();
    let series = build_all_series(&events, &members, &regions, &cfg.horizon, &clock);
    let border = regions.within_provinces(&spec.border_provinces);
    let g = group_timeseries(&series.series, &cohort, &border, &regions, &cfg.horizon, true);
    let p = province_counts_all(&series.series, &regions, &cfg.horizon, true);
    let f = flow_matrix(&series.series, &regions, &cfg.horizon, cfg.horizon.start(), cfg.horizon.end(), true).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let peak = peak_rss_bytes().unwrap_or(0) as f64 / (1u64 << 30) as f64;
    ensure(g.rows.len() == p.len() && f.total() == g.cohort_size, || "aggregates inconsistent".into())?;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let detail = format!("{} events, {} cohort members, {secs:.1}s, peak {peak:.2} GiB on {cores} core(s)", summary.lines, g.cohort_size);
    ensure(secs < 60.0 && peak < 2.0, || detail.clone())?;
    Ok(detail)
}

fn main() {
    // `cargo test` passes libtest flags; only `--list` needs an answer.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let direct = Direct::new();
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome + '_>)> = vec![
        ("oracle itinerary equivalence", Box::new(oracle_itinerary)),
        ("five-group conservation", Box::new(|| five_group_conservation(&direct))),
        ("flow conservation", Box::new(|| flow_conservation(&direct))),
        ("drop recovery", Box::new(|| drop_recovery(&direct))),
        ("crossing interval replay", Box::new(crossing_interval)),
        ("und resolution and overlap partition", Box::new(|| und_resolution(&direct))),
        ("sentiment fixture suite", Box::new(sentiment_fixture)),
        ("privacy scan and query equivalence", Box::new(|| privacy_scan(&direct))),
        ("determinism across thread counts", Box::new(|| determinism(&direct))),
        ("throughput on 10M events", Box::new(|| throughput(tmp.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
