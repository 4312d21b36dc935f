//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Every check compares against an oracle written
//! here, independent of the library code under test.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::Weekday;
use maple_core::artifact::{self, ArtifactHeader, HashCheck};
use maple_core::backend::DEFAULT_WEIGHTS;
use maple_core::corpus::{
    filter_noise, preprocess, sessionize_corpus, CategoryId, Dataset, DatasetManifest, NoiseThresholds,
    PreprocessOptions, UsageRecord,
};
use maple_core::eval::{accuracy_at_k, mrr_at_k, EvalReport};
use maple_core::experiment::{run_ablation, run_reference, TWO_STAGE_ROW};
use maple_core::pipeline::{AblationFlags, PipelineOptions};
use maple_core::synthetic::{write_dataset, SyntheticSpec};
use maple_core::templater::{
    append_stage1, parse_prediction, parse_prompt, parse_type_result, render_app_history, render_context,
    render_target, render_time, render_type_shares, PredictionTime, PromptParts, TemplateError, TemplateSet, TypeShare,
};
use maple_core::typeprompt::{TypeTable, TypeTableRow};
use maple_core::{AppId, ContextBundle, RankedPrediction, Stage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, name: &str, limit: Option<Duration>, check: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(limit)) if elapsed >= limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL  {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// Metric oracle equivalence

fn naive_accuracy(preds: &[Vec<AppId>], truths: &[AppId], k: usize) -> f64 {
    let mut hits = 0usize;
    for (p, t) in preds.iter().zip(truths) {
        let top: Vec<AppId> = p.iter().take(k).copied().collect();
        if top.contains(t) {
            hits += 1;
        }
    }
    hits as f64 / truths.len() as f64
}

fn naive_mrr(preds: &[Vec<AppId>], truths: &[AppId], k: usize) -> f64 {
    let mut sum = 0.0;
    for (p, t) in preds.iter().zip(truths) {
        for (i, a) in p.iter().enumerate() {
            if i >= k {
                break;
            }
            if a == t {
                sum += 1.0 / (i + 1) as f64;
                break;
            }
        }
    }
    sum / truths.len() as f64
}

fn metric_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    for _ in 0..5 {
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for _ in 0..1000 {
            let mut pool: Vec<u32> = (0..20).collect();
            pool.shuffle(&mut rng);
            let len = rng.gen_range(0..=8);
            preds.push(pool[..len].iter().copied().map(AppId).collect::<Vec<_>>());
            truths.push(AppId(rng.gen_range(0..20)));
        }
        for k in [1, 3, 5, rng.gen_range(1..=10)] {
            let a = accuracy_at_k(&preds, &truths, k).map_err(|e| e.to_string())?;
            let m = mrr_at_k(&preds, &truths, k).map_err(|e| e.to_string())?;
            let (na, nm) = (naive_accuracy(&preds, &truths, k), naive_mrr(&preds, &truths, k));
            ensure(a == na, || format!("A@{k}: {a} vs oracle {na}"))?;
            ensure((m - nm).abs() <= 1e-12, || format!("MRR@{k}: {m} vs oracle {nm}"))?;
            compared += 2;
        }
    }
    Ok(format!("{compared} metric values on 5 x 1000 random cases match"))
}

// Algorithm 1 equivalence

const CATS: [&str; 6] = ["communication", "social", "travel", "utility", "game", "music & audio"];

fn random_streams(rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    (0..50)
        .map(|_| {
            let len = rng.gen_range(0..=200);
            // Skewed draws give ties and dominant categories.
            (0..len)
                .map(|_| {
                    let i = if rng.gen_bool(0.5) {
                        rng.gen_range(0..2)
                    } else {
                        rng.gen_range(0..CATS.len())
                    };
                    CATS[i].to_string()
                })
                .collect()
        })
        .collect()
}

/// Brute force: for every window of `n` consecutive categories, count the
/// last one under the first `n - 1`.
fn recount(streams: &[Vec<String>], n: usize) -> BTreeMap<Vec<String>, BTreeMap<String, u64>> {
    let mut out: BTreeMap<Vec<String>, BTreeMap<String, u64>> = BTreeMap::new();
    for s in streams {
        if s.len() < n {
            continue;
        }
        for start in 0..=s.len() - n {
            let key = s[start..start + n - 1].to_vec();
            *out.entry(key).or_default().entry(s[start + n - 1].clone()).or_default() += 1;
        }
    }
    out
}

fn algorithm1_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let streams = random_streams(&mut rng);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut keys_checked = 0;
    for n in [2, 3, 4] {
        let oracle = recount(&streams, n);
        for k in [1, 3] {
            let table = TypeTable::build(&streams, n, k);
            ensure(table.len() == oracle.len(), || {
                format!("n={n}: {} keys vs {}", table.len(), oracle.len())
            })?;
            let path = dir.path().join(format!("t{n}{k}.jsonl"));
            table.save(&path, "h").map_err(|e| e.to_string())?;
            let (_, rows): (_, Vec<TypeTableRow>) =
                artifact::read_jsonl(&path, "prompts/type_table", HashCheck::Ignore).map_err(|e| e.to_string())?;
            let saved: BTreeMap<Vec<String>, BTreeMap<String, u64>> = rows
                .into_iter()
                .filter(|r| r.key.len() == n - 1)
                .map(|r| (r.key, r.counts))
                .collect();
            ensure(saved == oracle, || {
                format!("n={n} k={k}: persisted counts differ from recount")
            })?;
            for (key, counts) in &oracle {
                let dist = table.get(key).ok_or_else(|| format!("missing key {key:?}"))?;
                let support: u64 = counts.values().sum();
                ensure(dist.support_count == support, || format!("{key:?}: support"))?;
                let mut ranked: Vec<(&String, &u64)> = counts.iter().collect();
                ranked.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
                ranked.truncate(k);
                ensure(dist.entries.len() == ranked.len(), || format!("{key:?}: top-k size"))?;
                let mut percent_sum = 0;
                for (e, (cat, &c)) in dist.entries.iter().zip(&ranked) {
                    ensure(&e.category == *cat && e.count == c, || {
                        format!("{key:?}: entry {e:?} vs ({cat}, {c})")
                    })?;
                    ensure(e.probability == c as f64 / support as f64, || {
                        format!("{key:?}: probability")
                    })?;
                    let exact = 100.0 * c as f64 / support as f64;
                    ensure((e.percent as f64 - exact).abs() < 1.0, || {
                        format!("{key:?}: percent {}", e.percent)
                    })?;
                    percent_sum += e.percent;
                }
                ensure(percent_sum <= 100, || format!("{key:?}: percents sum to {percent_sum}"))?;
                keys_checked += 1;
            }
        }
    }
    Ok(format!(
        "{keys_checked} keys over n in {{2,3,4}}, k in {{1,3}} match the recount"
    ))
}

// Template round trip

const LABELS: [&str; 8] = [
    "travel",
    "utility",
    "Photo/Video",
    "music & audio",
    "news",
    "home",
    "restaurants",
    "Communication",
];

fn pick_labels(rng: &mut ChaCha8Rng, max: usize, distinct: bool) -> Vec<String> {
    let n = rng.gen_range(0..=max);
    if distinct {
        let mut pool = LABELS.to_vec();
        pool.shuffle(rng);
        pool.into_iter().take(n).map(String::from).collect()
    } else {
        (0..n)
            .map(|_| LABELS[rng.gen_range(0..LABELS.len())].to_string())
            .collect()
    }
}

fn random_bundle(rng: &mut ChaCha8Rng) -> ContextBundle {
    let len = rng.gen_range(0..=15);
    let app_history = (0..len).map(|_| AppId(rng.gen_range(0..1000))).collect();
    let category_history = (0..len)
        .map(|_| LABELS[rng.gen_range(0..LABELS.len())].to_string())
        .collect();
    let installed_apps = pick_labels(rng, 4, true)
        .into_iter()
        .map(|c| {
            let mut apps: Vec<AppId> = (0..rng.gen_range(0..=5))
                .map(|_| AppId(rng.gen_range(0..500)))
                .collect();
            apps.sort();
            apps.dedup();
            (c, apps)
        })
        .collect();
    let weekdays = [
        Weekday::Mon,
        Weekday::Tue,
        Weekday::Wed,
        Weekday::Thu,
        Weekday::Fri,
        Weekday::Sat,
        Weekday::Sun,
    ];
    ContextBundle {
        app_history,
        category_history,
        prediction_time: rng
            .gen_bool(0.9)
            .then(|| PredictionTime::new(weekdays[rng.gen_range(0..7)], rng.gen_range(0..24))),
        poi_labels: rng.gen_bool(0.7).then(|| pick_labels(rng, 3, true)),
        installed_apps,
    }
}

fn random_shares(rng: &mut ChaCha8Rng) -> Vec<TypeShare> {
    let mut cats = LABELS.to_vec();
    cats.shuffle(rng);
    cats.into_iter()
        .take(rng.gen_range(1..=3))
        .map(|c| TypeShare {
            category: c.to_string(),
            percent: rng.gen_range(0..=100),
        })
        .collect()
}

fn worked_examples() -> Result<(), String> {
    let expect = |got: String, want: &str| ensure(got == want, || format!("rendered {got:?}, expected {want:?}"));
    expect(
        render_app_history(&[AppId(1), AppId(4), AppId(9)]).text,
        "The apps 1, 4, and 9 are used prior to the prediction.",
    )?;
    expect(
        render_time(&PredictionTime::new(Weekday::Tue, 14)).text,
        "On Tuesday 02 PM",
    )?;
    let shares: Vec<TypeShare> = [("communication", 70), ("social", 20), ("travel", 10)]
        .iter()
        .map(|(c, p)| TypeShare {
            category: c.to_string(),
            percent: *p,
        })
        .collect();
    let s1 = render_type_shares(&shares).map_err(|e| e.to_string())?;
    expect(
        s1.text.clone(),
        "Based on the global information, the next app will be a communication app (70%), social app (20%) or travel app (10%)",
    )?;
    ensure(parse_type_result(&s1.text).ok() == Some(shares), || {
        "stage-1 example does not parse back".into()
    })?;
    expect(render_target(AppId(4)).text, "This user will use App 4.")?;
    ensure(parse_prediction("This user will use App 4.") == Ok(AppId(4)), || {
        "target does not parse back".into()
    })
}

fn template_round_trip() -> Outcome {
    worked_examples()?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = [0usize; 3];
    for i in 0..10_000 {
        match i % 3 {
            0 => {
                let bundle = random_bundle(&mut rng);
                let stage = if rng.gen_bool(0.5) { Stage::One } else { Stage::Two };
                let flags = AblationFlags {
                    use_stage1: rng.gen_bool(0.7),
                    use_app_history: rng.gen_bool(0.8),
                    use_installed_apps: rng.gen_bool(0.8),
                    use_optional_context: rng.gen_bool(0.8),
                };
                let templates = if rng.gen_bool(0.5) {
                    TemplateSet::Canonical
                } else {
                    TemplateSet::Alternate
                };
                let mut expected = PromptParts::from_bundle(&bundle, stage, &flags);
                let rendered = render_context(&bundle, stage, &flags, templates);
                if expected.is_empty() {
                    ensure(rendered == Err(TemplateError::EmptyPrompt), || {
                        format!("case {i}: empty prompt accepted")
                    })?;
                    continue;
                }
                let mut text = rendered.map_err(|e| format!("case {i}: {e}"))?.clone();
                if stage == Stage::Two && flags.use_stage1 {
                    let shares = random_shares(&mut rng);
                    text = append_stage1(&text, &render_type_shares(&shares).map_err(|e| e.to_string())?);
                    expected.stage1 = Some(shares);
                }
                let parsed = parse_prompt(&text.text, stage, templates).map_err(|e| format!("case {i}: {e:?}"))?;
                ensure(parsed == expected, || {
                    format!("case {i}: {:?} != {:?} for {:?}", parsed, expected, text.text)
                })?;
                ensure(expected.render(templates) == text.text, || {
                    format!("case {i}: parts render differently")
                })?;
            }
            1 => {
                let shares = random_shares(&mut rng);
                let text = render_type_shares(&shares).map_err(|e| e.to_string())?.text;
                let parsed = parse_type_result(&text).map_err(|e| format!("case {i}: {e:?}"))?;
                ensure(parsed == shares, || format!("case {i}: {text:?}"))?;
            }
            _ => {
                let app = AppId(rng.gen());
                let parsed = parse_prediction(&render_target(app).text).map_err(|e| format!("case {i}: {e:?}"))?;
                ensure(parsed == app, || format!("case {i}: {app}"))?;
            }
        }
        counts[i % 3] += 1;
    }
    Ok(format!(
        "worked examples byte-exact; {} bundles, {} distributions, {} targets round-trip",
        counts[0], counts[1], counts[2]
    ))
}

// Preprocessing invariants

fn random_log(rng: &mut ChaCha8Rng, users: usize, budget: usize) -> Vec<UsageRecord> {
    let mut out = Vec::new();
    for u in 0..users {
        let remaining = budget.saturating_sub(out.len());
        if remaining == 0 {
            break;
        }
        // A few tiny users, a few with one huge session, most ordinary.
        let n = match rng.gen_range(0..10) {
            0 => rng.gen_range(1..12),
            1 => rng.gen_range(5001..5400),
            _ => rng.gen_range(10..800),
        }
        .min(remaining);
        let huge = n > 5000;
        let mut ts: u64 = rng.gen_range(0..1_000_000);
        for _ in 0..n {
            ts += if huge {
                rng.gen_range(0..=300)
            } else {
                *[0, 1, 299, 300, 301, 302, 3600].choose(rng).expect("non-empty")
            };
            out.push(UsageRecord {
                user_id: format!("u{u:03}"),
                timestamp: ts,
                app_id: AppId(rng.gen_range(0..50)),
                category_id: CategoryId(rng.gen_range(0..6)),
                poi_labels: None,
            });
        }
    }
    out.shuffle(rng);
    out
}

fn check_preprocessing(records: Vec<UsageRecord>) -> Result<(usize, usize), String> {
    let total = records.len();
    // Oracle grouping: stable sort by (user, timestamp).
    let mut by_user: BTreeMap<String, Vec<UsageRecord>> = BTreeMap::new();
    for r in &records {
        by_user.entry(r.user_id.clone()).or_default().push(r.clone());
    }
    for v in by_user.values_mut() {
        v.sort_by_key(|r| r.timestamp);
    }

    let sessions = sessionize_corpus(records.clone(), 300);
    let mut rebuilt: BTreeMap<String, Vec<UsageRecord>> = BTreeMap::new();
    for (i, s) in sessions.iter().enumerate() {
        ensure(!s.records.is_empty(), || "empty session".into())?;
        ensure(s.records.iter().all(|r| r.user_id == s.user_id), || {
            "session mixes users".into()
        })?;
        for w in s.records.windows(2) {
            ensure(w[1].timestamp - w[0].timestamp <= 300, || {
                format!("gap above 300 s inside session {i}")
            })?;
        }
        if let Some(next) = sessions.get(i + 1).filter(|n| n.user_id == s.user_id) {
            let gap = next.records[0].timestamp - s.records.last().expect("non-empty").timestamp;
            ensure(gap > 300, || format!("sessions {i}/{} split at gap {gap}", i + 1))?;
        }
        rebuilt
            .entry(s.user_id.clone())
            .or_default()
            .extend(s.records.iter().cloned());
    }
    ensure(rebuilt == by_user, || "sessions are not a lossless partition".into())?;

    // Oracle filter.
    let mut per_user_kept: BTreeMap<String, Vec<UsageRecord>> = BTreeMap::new();
    for s in &sessions {
        if s.records.len() <= 5000 {
            per_user_kept
                .entry(s.user_id.clone())
                .or_default()
                .extend(s.records.iter().cloned());
        }
    }
    per_user_kept.retain(|_, v| v.len() >= 10);
    let filtered = filter_noise(sessions, NoiseThresholds::default());
    let mut got: BTreeMap<String, Vec<UsageRecord>> = BTreeMap::new();
    for s in filtered {
        got.entry(s.user_id).or_default().extend(s.records);
    }
    ensure(got == per_user_kept, || {
        "filter thresholds (>5000, <10) not applied exactly".into()
    })?;

    let (corpus, stats) = preprocess("d", records, PreprocessOptions::default()).map_err(|e| e.to_string())?;
    ensure(stats.records_in == total, || "records_in".into())?;
    ensure(corpus.users.keys().eq(per_user_kept.keys()), || {
        "preprocess kept a different user set".into()
    })?;
    for (user, recs) in &per_user_kept {
        let split = &corpus.users[user];
        let n = recs.len();
        let (tr, va) = ((n * 7) / 10, n / 10);
        ensure(
            split.train.len() == tr && split.validation.len() == va && split.test.len() == n - tr - va,
            || format!("{user}: split sizes for {n} records"),
        )?;
        ensure(split.timeline().eq(recs.iter()), || {
            format!("{user}: split is not chronological")
        })?;
    }
    Ok((total, per_user_kept.len()))
}

fn preprocessing_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut records = 0;
    let mut users = 0;
    for (n_users, budget) in [(5, 2_000), (40, 30_000), (120, 100_000)] {
        let log = random_log(&mut rng, n_users, budget);
        let (r, u) = check_preprocessing(log)?;
        records += r;
        users += u;
    }
    Ok(format!(
        "{records} records in 3 logs, {users} users kept, all invariants hold"
    ))
}

// End-to-end, ablation and determinism

fn synthetic_dataset(dir: &Path) -> Result<Dataset, String> {
    let manifest = write_dataset(dir, "synthetic", &SyntheticSpec::default()).map_err(|e| e.to_string())?;
    let (ds, _, _) = DatasetManifest::load(&manifest)
        .and_then(|m| m.ingest(PreprocessOptions::default()))
        .map_err(|e| e.to_string())?;
    Ok(ds)
}

fn a5(reports: &[EvalReport], model: &str) -> Result<f64, String> {
    reports
        .iter()
        .find(|r| r.model == model)
        .map(|r| r.metrics.a5)
        .ok_or_else(|| format!("no {model} row"))
}

fn ordering_holds(r: &EvalReport) -> bool {
    let m = r.metrics;
    m.a1 <= m.a3 && m.a3 <= m.a5 && m.a1 <= m.mrr3 && m.mrr3 <= m.a3 && m.a1 <= m.mrr5 && m.mrr5 <= m.a5
}

fn end_to_end(ds: &Dataset, reports: &mut Vec<EvalReport>, predictions: &mut Vec<RankedPrediction>) -> Outcome {
    let options = PipelineOptions::default();
    let (preds, reps) =
        run_reference(std::slice::from_ref(ds), ds, &options, DEFAULT_WEIGHTS, 42, 4).map_err(|e| e.to_string())?;
    let (ours, mfu, mru) = (a5(&reps, TWO_STAGE_ROW)?, a5(&reps, "MFU")?, a5(&reps, "MRU")?);
    ensure(ours > mfu && ours > mru, || {
        format!("A@5 {ours:.4} vs MFU {mfu:.4}, MRU {mru:.4}")
    })?;
    for r in &reps {
        ensure(ordering_holds(r), || format!("metric ordering fails for {}", r.model))?;
    }
    *reports = reps;
    *predictions = preds;
    Ok(format!(
        "A@5 {ours:.4} > MFU {mfu:.4} and MRU {mru:.4}; ordering holds in all rows"
    ))
}

fn ablation_direction(ds: &Dataset) -> Outcome {
    let reps = run_ablation(
        std::slice::from_ref(ds),
        ds,
        &PipelineOptions::default(),
        DEFAULT_WEIGHTS,
        42,
        4,
    )
    .map_err(|e| e.to_string())?;
    ensure(reps.len() == 5, || format!("{} rows", reps.len()))?;
    for r in &reps {
        ensure(ordering_holds(r), || format!("metric ordering fails for {}", r.model))?;
    }
    let full = reps.iter().find(|r| r.model == "full").ok_or("no full row")?;
    let no_seq = reps
        .iter()
        .find(|r| r.model == "w/o app seq")
        .ok_or("no w/o app seq row")?;
    ensure(no_seq.metrics.a1 < full.metrics.a1, || {
        format!("A@1 full {:.4}, w/o app seq {:.4}", full.metrics.a1, no_seq.metrics.a1)
    })?;
    Ok(format!(
        "A@1 full {:.4} > w/o app seq {:.4}",
        full.metrics.a1, no_seq.metrics.a1
    ))
}

fn serialized(dir: &Path, name: &str, reports: &[EvalReport], preds: &[RankedPrediction]) -> Result<Vec<u8>, String> {
    let header = ArtifactHeader::new("reports/eval", "h");
    let (rp, pp) = (dir.join(format!("{name}.reports")), dir.join(format!("{name}.preds")));
    artifact::write_jsonl(&rp, &header, reports).map_err(|e| e.to_string())?;
    artifact::write_jsonl(&pp, &header, preds).map_err(|e| e.to_string())?;
    let mut bytes = std::fs::read(rp).map_err(|e| e.to_string())?;
    bytes.extend(std::fs::read(pp).map_err(|e| e.to_string())?);
    Ok(bytes)
}

fn determinism(ds: &Dataset, dir: &Path, reports: &[EvalReport], preds: &[RankedPrediction]) -> Outcome {
    let reference = serialized(dir, "w4", reports, preds)?;
    let options = PipelineOptions::default();
    let mut worker_counts = vec![4];
    for workers in [1, 3] {
        let (p, r) = run_reference(std::slice::from_ref(ds), ds, &options, DEFAULT_WEIGHTS, 42, workers)
            .map_err(|e| e.to_string())?;
        let bytes = serialized(dir, &format!("w{workers}"), &r, &p)?;
        ensure(bytes == reference, || {
            format!("output at {workers} workers differs from 4 workers")
        })?;
        worker_counts.push(workers);
    }
    Ok(format!(
        "reports and predictions byte-identical at workers {worker_counts:?} ({} bytes)",
        reference.len()
    ))
}

fn main() {
    let mut suite = Suite { failures: 0 };
    suite.run(
        "metric oracle equivalence",
        Some(Duration::from_secs(5)),
        metric_equivalence,
    );
    suite.run(
        "algorithm 1 equivalence",
        Some(Duration::from_secs(10)),
        algorithm1_equivalence,
    );
    suite.run("template round trip", None, template_round_trip);
    suite.run("preprocessing invariants", None, preprocessing_invariants);

    let dir = tempfile::tempdir().expect("temp dir");
    let dataset = synthetic_dataset(dir.path());
    let mut reports = Vec::new();
    let mut predictions = Vec::new();
    suite.run("end-to-end behavioral check", Some(Duration::from_secs(60)), || {
        let ds = dataset.as_ref().map_err(Clone::clone)?;
        end_to_end(ds, &mut reports, &mut predictions)
    });
    suite.run("ablation direction", None, || {
        ablation_direction(dataset.as_ref().map_err(Clone::clone)?)
    });
    suite.run("determinism", None, || {
        let ds = dataset.as_ref().map_err(Clone::clone)?;
        ensure(!reports.is_empty(), || "end-to-end run produced no reports".into())?;
        determinism(ds, dir.path(), &reports, &predictions)
    });

    if suite.failures > 0 {
        println!("{} acceptance criteria failed", suite.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
