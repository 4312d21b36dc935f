use std::collections::BTreeMap;

use chrono::Weekday;
use maple_core::backend::{ReferenceModel, TrainingPair, DEFAULT_WEIGHTS};
use maple_core::corpus::{sessionize, split_chronological, CategoryId, UsageRecord};
use maple_core::eval::{accuracy_at_k, mrr_at_k, Metrics};
use maple_core::pipeline::AblationFlags;
use maple_core::templater::{parse_prompt, render_context, render_target, PredictionTime, PromptParts, TemplateSet};
use maple_core::typeprompt::{round_percents, TypeTable};
use maple_core::{AppId, ContextBundle, GenerationRequest, Predictor, Stage};
use proptest::prelude::*;
use proptest::sample::subsequence;

const LABELS: [&str; 6] = ["travel", "utility", "Photo/Video", "music & audio", "home", "news"];

fn weekday() -> impl Strategy<Value = Weekday> {
    prop::sample::select(vec![
        Weekday::Mon,
        Weekday::Tue,
        Weekday::Wed,
        Weekday::Thu,
        Weekday::Fri,
        Weekday::Sat,
        Weekday::Sun,
    ])
}

fn bundle() -> impl Strategy<Value = ContextBundle> {
    let history = prop::collection::vec((0u32..500, prop::sample::select(LABELS.to_vec())), 0..=15);
    let installed = prop::collection::btree_map(
        prop::sample::select(LABELS.to_vec()).prop_map(String::from),
        prop::collection::btree_set(0u32..300, 1..5).prop_map(|s| s.into_iter().map(AppId).collect::<Vec<_>>()),
        0..4,
    );
    let poi = prop::option::of(subsequence(LABELS.to_vec(), 1..=3));
    let time = prop::option::weighted(0.9, (weekday(), 0u8..24));
    (history, installed, poi, time).prop_map(|(h, installed, poi, time)| ContextBundle {
        app_history: h.iter().map(|(a, _)| AppId(*a)).collect(),
        category_history: h.iter().map(|(_, c)| c.to_string()).collect(),
        prediction_time: time.map(|(d, hr)| PredictionTime::new(d, hr)),
        poi_labels: poi.map(|p| p.into_iter().map(String::from).collect()),
        installed_apps: installed,
    })
}

fn flags() -> impl Strategy<Value = AblationFlags> {
    (any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(a, b, c, d)| AblationFlags {
        use_stage1: a,
        use_app_history: b,
        use_installed_apps: c,
        use_optional_context: d,
    })
}

fn record(ts: u64) -> UsageRecord {
    UsageRecord {
        user_id: "u".into(),
        timestamp: ts,
        app_id: AppId((ts % 13) as u32),
        category_id: CategoryId(0),
        poi_labels: None,
    }
}

proptest! {
    #[test]
    fn prompts_round_trip(b in bundle(), f in flags(), two in any::<bool>(), alt in any::<bool>()) {
        let stage = if two { Stage::Two } else { Stage::One };
        let templates = if alt { TemplateSet::Alternate } else { TemplateSet::Canonical };
        let expected = PromptParts::from_bundle(&b, stage, &f);
        match render_context(&b, stage, &f, templates) {
            Ok(text) => prop_assert_eq!(parse_prompt(&text.text, stage, templates).unwrap(), expected),
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }

    #[test]
    fn percents_are_close_and_bounded(counts in prop::collection::vec(0u64..1000, 1..6), extra in 0u64..1000) {
        let total = counts.iter().sum::<u64>() + extra;
        prop_assume!(total > 0);
        let p = round_percents(&counts, total);
        prop_assert!(p.iter().sum::<u32>() <= 100);
        for (&pc, &c) in p.iter().zip(&counts) {
            let exact = 100.0 * c as f64 / total as f64;
            prop_assert!((pc as f64 - exact).abs() < 1.0, "{} vs {}", pc, exact);
        }
    }

    #[test]
    fn backoff_finds_the_longest_seen_suffix(
        streams in prop::collection::vec(prop::collection::vec(0usize..4, 0..40), 1..8),
        query in prop::collection::vec(0usize..5, 0..5),
    ) {
        let names = |v: &[usize]| v.iter().map(|i| format!("c{i}")).collect::<Vec<_>>();
        let streams: Vec<Vec<String>> = streams.iter().map(|s| names(s)).collect();
        let table = TypeTable::build(&streams, 3, 3);
        let query = names(&query);
        let got = table.lookup_with_backoff(&query);
        prop_assert!(got.key.len() <= 2 && query.ends_with(&got.key));
        // No longer suffix may have been observed.
        for len in got.key.len() + 1..=query.len().min(2) {
            let suffix = &query[query.len() - len..];
            let seen = streams.iter().any(|s| s.windows(len + 1).any(|w| &w[..len] == suffix));
            prop_assert!(!seen, "suffix {:?} was seen", suffix);
        }
        if !table.is_empty() {
            prop_assert!(got.support_count > 0);
        }
    }

    #[test]
    fn sessions_partition_with_gap_boundary(gaps in prop::collection::vec(prop::sample::select(vec![0u64, 1, 299, 300, 301, 5000]), 0..200)) {
        let mut ts = 0;
        let records: Vec<UsageRecord> = gaps.iter().map(|g| { ts += g; record(ts) }).collect();
        let sessions = sessionize("u", records.clone(), 300);
        let flat: Vec<UsageRecord> = sessions.iter().flat_map(|s| s.records.clone()).collect();
        prop_assert_eq!(&flat, &records);
        let breaks = gaps.iter().skip(1).filter(|&&g| g > 300).count();
        prop_assert_eq!(sessions.len(), if records.is_empty() { 0 } else { breaks + 1 });
    }

    #[test]
    fn split_sizes_floor(n in 10usize..3000) {
        let s = split_chronological("u", (0..n as u64).map(record).collect()).unwrap();
        prop_assert_eq!(s.train.len(), n * 7 / 10);
        prop_assert_eq!(s.validation.len(), n / 10);
        prop_assert_eq!(s.len(), n);
    }

    #[test]
    fn metrics_are_ordered_and_permutation_invariant(
        cases in prop::collection::vec((subsequence((0u32..12).collect::<Vec<_>>(), 0..7).prop_shuffle(), 0u32..12), 1..200),
        seed in any::<u64>(),
    ) {
        let preds: Vec<Vec<AppId>> = cases.iter().map(|(p, _)| p.iter().copied().map(AppId).collect()).collect();
        let truths: Vec<AppId> = cases.iter().map(|(_, t)| AppId(*t)).collect();
        let m = Metrics::compute(&preds, &truths).unwrap();
        prop_assert!(m.check().is_ok());
        let mut order: Vec<usize> = (0..preds.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let pp: Vec<Vec<AppId>> = order.iter().map(|&i| preds[i].clone()).collect();
        let pt: Vec<AppId> = order.iter().map(|&i| truths[i]).collect();
        for k in [1, 3, 5] {
            prop_assert_eq!(mrr_at_k(&preds, &truths, k).unwrap(), mrr_at_k(&pp, &pt, k).unwrap());
            prop_assert_eq!(accuracy_at_k(&preds, &truths, k).unwrap(), accuracy_at_k(&pp, &pt, k).unwrap());
        }
    }

    #[test]
    fn reference_scores_renormalize(
        train in prop::collection::vec((bundle(), 0u32..20), 1..30),
        query in bundle(),
    ) {
        let f = AblationFlags { use_stage1: false, ..AblationFlags::default() };
        let pairs: Vec<TrainingPair> = train
            .iter()
            .filter_map(|(b, t)| {
                let input = render_context(b, Stage::Two, &f, TemplateSet::Canonical).ok()?;
                Some(TrainingPair::new(input.text, render_target(AppId(*t)).text))
            })
            .collect();
        prop_assume!(!pairs.is_empty());
        let (model, report) = ReferenceModel::fit(&pairs, Stage::Two, DEFAULT_WEIGHTS, TemplateSet::Canonical, 0).unwrap();
        prop_assert_eq!(report.skipped, 0);
        let Ok(prompt) = render_context(&query, Stage::Two, &f, TemplateSet::Canonical) else { return Ok(()) };
        let scores = model.score_all(&prompt.text).unwrap();
        let sum: f64 = scores.values().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9, "sum {}", sum);
        prop_assert!(scores.values().all(|&s| s > 0.0));
        let out = model.generate(&GenerationRequest::new(0, Stage::Two, prompt.text, 5)).unwrap();
        prop_assert!(out.len() <= 5);
        prop_assert!(out.windows(2).all(|w| w[0].score >= w[1].score));
        let distinct: BTreeMap<&str, ()> = out.iter().map(|c| (c.text.as_str(), ())).collect();
        prop_assert_eq!(distinct.len(), out.len());
    }
}
