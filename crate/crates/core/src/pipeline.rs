//! Two-stage orchestration: context bundles, training pairs and inference.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{generate_with_retries, BackendError, GenerationRequest, Predictor, TrainingPair};
use crate::corpus::{AppId, Dataset, UsageRecord};
use crate::eval::EvalError;
use crate::templater::{
    append_stage1, parse_prediction, parse_type_result, render_context, render_target, render_type_shares,
    ContextBundle, PredictionTime, PromptSentence, Stage, TemplateError, TemplateSet, MAX_HISTORY,
};
use crate::typeprompt::{TypeTable, DEFAULT_SEQUENCE_LEN, DEFAULT_TOP_K};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid options: {0}")]
    Options(String),
}

/// Which context components and stages are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub use_stage1: bool,
    pub use_app_history: bool,
    pub use_installed_apps: bool,
    /// POI sentences.
    pub use_optional_context: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            use_stage1: true,
            use_app_history: true,
            use_installed_apps: true,
            use_optional_context: true,
        }
    }
}

/// Names accepted by [`AblationFlags::disable`].
pub const ABLATION_NAMES: [&str; 4] = ["stage1", "app_seq", "installed", "optional"];

impl AblationFlags {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.use_stage1 || self.use_app_history || self.use_installed_apps || self.use_optional_context) {
            return Err("every context source is disabled".into());
        }
        Ok(())
    }

    /// Turns off the components in a comma-separated list of
    /// [`ABLATION_NAMES`].
    pub fn disable(mut self, list: &str) -> Result<Self, String> {
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "stage1" => self.use_stage1 = false,
                "app_seq" => self.use_app_history = false,
                "installed" => self.use_installed_apps = false,
                "optional" => self.use_optional_context = false,
                other => {
                    return Err(format!(
                        "unknown ablation {other:?}; expected one of {}",
                        ABLATION_NAMES.join(", ")
                    ))
                }
            }
        }
        self.validate()?;
        Ok(self)
    }

    /// The full model followed by the four single-component ablations.
    pub fn ablation_rows() -> Vec<AblationFlags> {
        let full = AblationFlags::default();
        vec![
            full,
            AblationFlags {
                use_stage1: false,
                ..full
            },
            AblationFlags {
                use_app_history: false,
                ..full
            },
            AblationFlags {
                use_installed_apps: false,
                ..full
            },
            AblationFlags {
                use_optional_context: false,
                ..full
            },
        ]
    }

    pub fn label(&self) -> String {
        let off: Vec<&str> = [
            (self.use_stage1, "1st stage"),
            (self.use_app_history, "app seq"),
            (self.use_installed_apps, "installed apps"),
            (self.use_optional_context, "optional contexts"),
        ]
        .into_iter()
        .filter(|(on, _)| !on)
        .map(|(_, name)| name)
        .collect();
        if off.is_empty() {
            "full".into()
        } else {
            format!("w/o {}", off.join(", "))
        }
    }
}

impl fmt::Display for AblationFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Algorithm-1 sequence length `n` (keys hold `n - 1` categories).
    pub sequence_len: usize,
    pub type_top_k: usize,
    pub window: usize,
    pub poi_slots: usize,
    /// Distinct apps wanted per test case.
    pub k: usize,
    /// Stage-2 candidates examined per case are capped at `attempt_factor * k`.
    pub attempt_factor: usize,
    pub retries: u32,
    pub templates: TemplateSet,
    pub flags: AblationFlags,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            sequence_len: DEFAULT_SEQUENCE_LEN,
            type_top_k: DEFAULT_TOP_K,
            window: MAX_HISTORY,
            poi_slots: 3,
            k: 5,
            attempt_factor: 4,
            retries: 2,
            templates: TemplateSet::Canonical,
            flags: AblationFlags::default(),
        }
    }
}

impl PipelineOptions {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Options(m.into()));
        if self.sequence_len < 2 {
            return bad("sequence_len must be at least 2");
        }
        if self.type_top_k == 0 || self.k == 0 || self.attempt_factor == 0 || self.poi_slots == 0 {
            return bad("type_top_k, k, attempt_factor and poi_slots must be positive");
        }
        if self.window == 0 || self.window > MAX_HISTORY {
            return bad("window must lie in 1..=15");
        }
        self.flags.validate().map_err(PipelineError::Options)
    }
}

/// One user's records in time order with split boundaries.
#[derive(Debug, Clone)]
pub struct UserTimeline<'a> {
    pub user_id: &'a str,
    pub records: Vec<&'a UsageRecord>,
    pub train_len: usize,
    /// Index of the first test record.
    pub test_start: usize,
}

impl<'a> UserTimeline<'a> {
    pub fn train(&self) -> &[&'a UsageRecord] {
        &self.records[..self.train_len]
    }

    pub fn test_positions(&self) -> std::ops::Range<usize> {
        self.test_start..self.records.len()
    }
}

pub fn timelines(dataset: &Dataset) -> Vec<UserTimeline<'_>> {
    dataset
        .split
        .users
        .iter()
        .map(|(user, split)| UserTimeline {
            user_id: user,
            records: split.timeline().collect(),
            train_len: split.train.len(),
            test_start: split.train.len() + split.validation.len(),
        })
        .collect()
}

/// The user's distinct training apps grouped by category name, ids sorted.
pub fn installed_apps(dataset: &Dataset, timeline: &UserTimeline<'_>) -> BTreeMap<String, Vec<AppId>> {
    let mut groups: BTreeMap<String, BTreeSet<AppId>> = BTreeMap::new();
    for r in timeline.train() {
        groups
            .entry(dataset.category_name(r).to_string())
            .or_default()
            .insert(r.app_id);
    }
    groups
        .into_iter()
        .map(|(c, apps)| (c, apps.into_iter().collect()))
        .collect()
}

/// Up to `slots` distinct POI labels, most recent first when collecting,
/// returned oldest first.
fn recent_poi(history: &[&UsageRecord], slots: usize) -> Option<Vec<String>> {
    let mut labels: Vec<String> = Vec::new();
    'outer: for r in history.iter().rev() {
        for label in r.poi_labels.iter().flatten() {
            if !labels.contains(label) {
                labels.push(label.clone());
                if labels.len() == slots {
                    break 'outer;
                }
            }
        }
    }
    labels.reverse();
    (!labels.is_empty()).then_some(labels)
}

/// Context for predicting `timeline.records[pos]` from the records before it.
pub fn bundle_at(
    dataset: &Dataset,
    timeline: &UserTimeline<'_>,
    pos: usize,
    installed: &BTreeMap<String, Vec<AppId>>,
    options: &PipelineOptions,
) -> ContextBundle {
    let history = &timeline.records[pos.saturating_sub(options.window)..pos];
    ContextBundle {
        app_history: history.iter().map(|r| r.app_id).collect(),
        category_history: history.iter().map(|r| dataset.category_name(r).to_string()).collect(),
        prediction_time: Some(PredictionTime::from_timestamp(timeline.records[pos].timestamp)),
        poi_labels: recent_poi(history, options.poi_slots),
        installed_apps: installed.clone(),
    }
}

/// Training positions: every training record with at least one record
/// before it.
fn training_bundles<'a>(
    dataset: &'a Dataset,
    options: &'a PipelineOptions,
) -> impl Iterator<Item = (ContextBundle, AppId)> + 'a {
    timelines(dataset).into_iter().flat_map(move |tl| {
        let installed = installed_apps(dataset, &tl);
        (1..tl.train_len)
            .map(|pos| {
                (
                    bundle_at(dataset, &tl, pos, &installed, options),
                    tl.records[pos].app_id,
                )
            })
            .collect::<Vec<_>>()
    })
}

/// Gold stage-1 sentence for a bundle: the table entry for its category key.
pub fn gold_stage1(table: &TypeTable, bundle: &ContextBundle) -> Result<PromptSentence, TemplateError> {
    table.lookup_with_backoff(&bundle.category_history).render()
}

/// Stage-1 pairs over the training splits of `datasets`.
pub fn build_stage1_pairs(
    datasets: &[Dataset],
    table: &TypeTable,
    options: &PipelineOptions,
) -> Result<Vec<TrainingPair>, TemplateError> {
    let mut pairs = Vec::new();
    for dataset in datasets {
        for (bundle, _) in training_bundles(dataset, options) {
            let input = render_context(&bundle, Stage::One, &options.flags, options.templates)?;
            let target = gold_stage1(table, &bundle)?;
            pairs.push(TrainingPair::new(input.text, target.text));
        }
    }
    Ok(pairs)
}

/// Stage-2 pairs for one dataset. Inputs carry the gold stage-1 sentence
/// when stage 1 is enabled.
pub fn build_stage2_pairs(
    dataset: &Dataset,
    table: &TypeTable,
    options: &PipelineOptions,
) -> Result<Vec<TrainingPair>, TemplateError> {
    let mut pairs = Vec::new();
    for (bundle, next) in training_bundles(dataset, options) {
        let mut input = render_context(&bundle, Stage::Two, &options.flags, options.templates)?;
        if options.flags.use_stage1 {
            input = append_stage1(&input, &gold_stage1(table, &bundle)?);
        }
        pairs.push(TrainingPair::new(input.text, render_target(next).text));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub case_id: u64,
    pub user_id: String,
    pub position: usize,
    pub truth: AppId,
    pub bundle: ContextBundle,
}

/// One case per test record, numbered in user order then time order.
pub fn build_test_cases(dataset: &Dataset, options: &PipelineOptions) -> Vec<TestCase> {
    let mut cases = Vec::new();
    for tl in timelines(dataset) {
        let installed = installed_apps(dataset, &tl);
        for pos in tl.test_positions() {
            cases.push(TestCase {
                case_id: cases.len() as u64,
                user_id: tl.user_id.to_string(),
                position: pos,
                truth: tl.records[pos].app_id,
                bundle: bundle_at(dataset, &tl, pos, &installed, options),
            });
        }
    }
    cases
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredApp {
    pub app: AppId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub case_id: u64,
    pub user: String,
    pub truth: AppId,
    /// Distinct apps in first-appearance order with the score they first
    /// appeared with.
    pub apps: Vec<ScoredApp>,
    /// Stage-2 candidate positions examined.
    pub attempts_used: usize,
    /// The stage-1 output did not parse and the table sentence was used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub stage1_fallback: bool,
}

impl RankedPrediction {
    pub fn app_ids(&self) -> Vec<AppId> {
        self.apps.iter().map(|a| a.app).collect()
    }
}

/// The backends a prediction run talks to.
pub struct Backends<'a> {
    pub stage1: Option<&'a dyn Predictor>,
    pub stage2: &'a dyn Predictor,
    pub table: &'a TypeTable,
}

/// Runs both stages for one case.
///
/// Stage 1 contributes its single top candidate; an off-grammar answer is
/// replaced by the table sentence. Stage 2 is asked for `k`, `2k`, ...
/// candidates until `k` distinct apps parse or `attempt_factor * k`
/// positions have been examined. Each larger request is assumed to extend
/// the previous answer, so only the new positions are examined.
pub fn predict_case(
    case: &TestCase,
    backends: &Backends<'_>,
    options: &PipelineOptions,
) -> Result<RankedPrediction, PipelineError> {
    let flags = &options.flags;
    let mut prompt = render_context(&case.bundle, Stage::Two, flags, options.templates)?;
    let mut stage1_fallback = false;
    if flags.use_stage1 {
        let stage1 = backends
            .stage1
            .ok_or_else(|| PipelineError::Options("stage 1 is enabled but no stage-1 backend is set".into()))?;
        let input = render_context(&case.bundle, Stage::One, flags, options.templates)?;
        let request = GenerationRequest::new(case.case_id, Stage::One, input.text, 1);
        let answer = generate_with_retries(stage1, &request, options.retries)?;
        let parsed = answer
            .first()
            .and_then(|c| parse_type_result(&c.text).ok())
            .and_then(|shares| render_type_shares(&shares).ok());
        let sentence = match parsed {
            Some(s) => s,
            None => {
                stage1_fallback = true;
                log::debug!("case {}: stage-1 output off-grammar, using table", case.case_id);
                gold_stage1(backends.table, &case.bundle)?
            }
        };
        prompt = append_stage1(&prompt, &sentence);
    }

    let k = options.k;
    let mut apps: Vec<ScoredApp> = Vec::with_capacity(k);
    let mut examined = 0;
    for round in 1..=options.attempt_factor {
        let n = round * k;
        let request = GenerationRequest::new(case.case_id, Stage::Two, prompt.text.clone(), n);
        let candidates = generate_with_retries(backends.stage2, &request, options.retries)?;
        let end = candidates.len().min(n);
        for c in candidates.iter().take(end).skip(examined) {
            examined += 1;
            if let Ok(app) = parse_prediction(&c.text) {
                if !apps.iter().any(|a| a.app == app) {
                    apps.push(ScoredApp { app, score: c.score });
                    if apps.len() == k {
                        break;
                    }
                }
            }
        }
        if apps.len() == k || candidates.len() < n {
            break;
        }
    }
    Ok(RankedPrediction {
        case_id: case.case_id,
        user: case.user_id.clone(),
        truth: case.truth,
        apps,
        attempts_used: examined,
        stage1_fallback,
    })
}

/// Predicts every case on a pool of `workers` threads. Output order follows
/// `cases` regardless of the worker count.
pub fn run_predictions(
    cases: &[TestCase],
    backends: &Backends<'_>,
    options: &PipelineOptions,
    workers: usize,
) -> Result<Vec<RankedPrediction>, PipelineError> {
    options.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Options(format!("worker pool: {e}")))?;
    let predictions: Vec<RankedPrediction> = pool.install(|| {
        cases
            .par_iter()
            .map(|c| predict_case(c, backends, options))
            .collect::<Result<_, _>>()
    })?;
    let fallbacks = predictions.iter().filter(|p| p.stage1_fallback).count();
    let empty = predictions.iter().filter(|p| p.apps.is_empty()).count();
    if fallbacks > 0 || empty > 0 {
        log::warn!(
            "{fallbacks} stage-1 fallbacks, {empty} empty predictions over {} cases",
            cases.len()
        );
    }
    Ok(predictions)
}
