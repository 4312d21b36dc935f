//! Reference predictor: an interpolated conditional-frequency model.
//!
//! Prompts are parsed back through the public grammar into features, and
//! target sentences are counted per feature context on four levels:
//!
//! | level    | context chain, first present wins                          |
//! |----------|------------------------------------------------------------|
//! | sequence | history suffix of length 3, 2, 1 (installed-set specific, then pooled) |
//! | category | top category of the stage-1 sentence (specific, then pooled) |
//! | time     | hour with POI set, hour alone (specific, then pooled)      |
//! | global   | installed-set specific, then pooled                        |
//!
//! The installed-app block text serves as a user fingerprint. A candidate's
//! score is the weighted sum of its per-level relative frequencies, with
//! the weights renormalized over the levels that have support.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendError, Candidate, GenerationRequest, Predictor, TrainingPair};
use crate::artifact::{self, ArtifactError, ArtifactHeader, HashCheck};
use crate::templater::{
    parse_prediction, parse_prompt, parse_type_result, render_installed, render_target, render_type_shares, History,
    PromptParts, Stage, TemplateSet,
};

/// Interpolation weights: sequence, category, time, global.
pub type Weights = [f64; 4];
pub const DEFAULT_WEIGHTS: Weights = [0.5, 0.25, 0.15, 0.1];
pub const MAX_SUFFIX: usize = 3;
pub const MODEL_ARTIFACT: &str = "models/reference";
/// Fitting fails when more than this fraction of pairs cannot be parsed.
pub const MAX_UNPARSEABLE_RATIO: f64 = 0.01;

const LEVELS: usize = 4;
const SEP: char = '\t';

pub fn validate_weights(weights: &Weights) -> Result<(), String> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(format!("weights must be finite and non-negative: {weights:?}"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(format!("weights must sum to 1, got {sum}"));
    }
    Ok(())
}

/// Target counts under one context key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Dist {
    total: u64,
    /// (target index, count), sorted by target index.
    counts: Vec<(u32, u64)>,
}

/// Features recovered from a parsed prompt.
#[derive(Debug, Clone, PartialEq)]
struct Features {
    history: Vec<String>,
    fingerprint: Option<String>,
    category: Option<String>,
    hour: Option<u8>,
    poi: Option<String>,
}

impl Features {
    fn from_parts(parts: &PromptParts) -> Self {
        let history = match &parts.history {
            Some(History::Apps(apps)) => apps.iter().map(|a| a.to_string()).collect(),
            Some(History::Categories(cats)) => cats.clone(),
            None => Vec::new(),
        };
        Self {
            history,
            fingerprint: parts.installed.as_ref().map(|m| render_installed(m).text),
            category: parts
                .stage1
                .as_ref()
                .and_then(|s| s.first())
                .map(|s| s.category.clone()),
            hour: parts.time.map(|t| t.hour),
            poi: parts.poi.as_ref().map(|p| p.join(",")),
        }
    }

    /// Scopes to try, most specific first.
    fn scopes(&self) -> Vec<&str> {
        match &self.fingerprint {
            Some(fp) => vec![fp.as_str(), ""],
            None => vec![""],
        }
    }

    /// Context keys per level, in backoff order.
    fn chains(&self) -> [Vec<String>; LEVELS] {
        let scopes = self.scopes();
        let key = |scope: &str, rest: &str| format!("{scope}{SEP}{rest}");
        let mut sequence = Vec::new();
        let mut category = Vec::new();
        let mut time = Vec::new();
        let mut global = Vec::new();
        for scope in scopes {
            let longest = MAX_SUFFIX.min(self.history.len());
            for len in (1..=longest).rev() {
                let suffix = self.history[self.history.len() - len..].join(&SEP.to_string());
                sequence.push(key(scope, &format!("{len}{SEP}{suffix}")));
            }
            if let Some(c) = &self.category {
                category.push(key(scope, c));
            }
            if let Some(h) = self.hour {
                if let Some(p) = &self.poi {
                    time.push(key(scope, &format!("{h}{SEP}{p}")));
                }
                time.push(key(scope, &h.to_string()));
            }
            global.push(scope.to_string());
        }
        [sequence, category, time, global]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitReport {
    pub pairs: usize,
    pub skipped: usize,
    pub targets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelRepr {
    stage: Stage,
    weights: Weights,
    templates: TemplateSet,
    seed: u64,
    targets: Vec<String>,
    levels: Vec<BTreeMap<String, Dist>>,
}

/// A fitted model. Immutable, so it can serve concurrent requests.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    repr: ModelRepr,
    name: String,
}

fn canonical_target(stage: Stage, text: &str) -> Option<(String, u64)> {
    match stage {
        Stage::One => {
            let shares = parse_type_result(text).ok()?;
            Some((render_type_shares(&shares).ok()?.text, 0))
        }
        Stage::Two => {
            let app = parse_prediction(text).ok()?;
            Some((render_target(app).text, app.0 as u64))
        }
    }
}

impl ReferenceModel {
    /// Counts targets per context over `pairs`. Pairs that do not parse are
    /// skipped; more than 1% of them is an error. The model is
    /// deterministic, `seed` is only recorded.
    pub fn fit(
        pairs: &[TrainingPair],
        stage: Stage,
        weights: Weights,
        templates: TemplateSet,
        seed: u64,
    ) -> Result<(Self, FitReport), BackendError> {
        validate_weights(&weights).map_err(BackendError::Model)?;
        if pairs.is_empty() {
            return Err(BackendError::Model("no training pairs".into()));
        }
        let mut parsed = Vec::with_capacity(pairs.len());
        let mut skipped = 0usize;
        for pair in pairs {
            let input = parse_prompt(&pair.input, stage, templates);
            match (input, canonical_target(stage, &pair.target)) {
                (Ok(parts), Some(target)) => parsed.push((Features::from_parts(&parts), target)),
                _ => {
                    skipped += 1;
                    if skipped == 1 {
                        log::warn!("skipping unparseable stage-{stage} pair: {:?}", pair.input);
                    }
                }
            }
        }
        if skipped as f64 > MAX_UNPARSEABLE_RATIO * pairs.len() as f64 {
            return Err(BackendError::Model(format!(
                "{skipped} of {} stage-{stage} pairs are off-grammar",
                pairs.len()
            )));
        }

        // Tie order: app id for stage 2, text for stage 1.
        let distinct: BTreeSet<(u64, String)> = parsed.iter().map(|(_, (t, order))| (*order, t.clone())).collect();
        let targets: Vec<String> = distinct.into_iter().map(|(_, t)| t).collect();
        let index: HashMap<&str, u32> = targets
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i as u32))
            .collect();

        let mut raw: Vec<HashMap<String, BTreeMap<u32, u64>>> = vec![HashMap::new(); LEVELS];
        for (features, (target, _)) in &parsed {
            let t = index[target.as_str()];
            for (level, chain) in raw.iter_mut().zip(features.chains()) {
                for key in chain {
                    *level.entry(key).or_default().entry(t).or_default() += 1;
                }
            }
        }
        let levels = raw
            .into_iter()
            .map(|level| {
                level
                    .into_iter()
                    .map(|(key, counts)| {
                        let total = counts.values().sum();
                        (
                            key,
                            Dist {
                                total,
                                counts: counts.into_iter().collect(),
                            },
                        )
                    })
                    .collect()
            })
            .collect();
        let report = FitReport {
            pairs: pairs.len(),
            skipped,
            targets: targets.len(),
        };
        let model = Self::from_repr(ModelRepr {
            stage,
            weights,
            templates,
            seed,
            targets,
            levels,
        });
        Ok((model, report))
    }

    fn from_repr(repr: ModelRepr) -> Self {
        let name = format!("reference/stage{}", repr.stage);
        Self { repr, name }
    }

    pub fn stage(&self) -> Stage {
        self.repr.stage
    }

    pub fn weights(&self) -> Weights {
        self.repr.weights
    }

    pub fn templates(&self) -> TemplateSet {
        self.repr.templates
    }

    pub fn targets(&self) -> &[String] {
        &self.repr.targets
    }

    /// Per-level distributions selected for `prompt`: the first key of each
    /// chain that was seen in training, or `None`.
    fn select(&self, prompt: &str) -> Result<[Option<&Dist>; LEVELS], BackendError> {
        let parts = parse_prompt(prompt, self.repr.stage, self.repr.templates)
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let chains = Features::from_parts(&parts).chains();
        let mut out = [None; LEVELS];
        for (slot, (level, chain)) in out.iter_mut().zip(self.repr.levels.iter().zip(chains.iter())) {
            *slot = chain.iter().find_map(|k| level.get(k));
        }
        Ok(out)
    }

    /// Interpolated probability of every target with non-zero support,
    /// indexed by target.
    pub fn score_all(&self, prompt: &str) -> Result<BTreeMap<u32, f64>, BackendError> {
        let selected = self.select(prompt)?;
        let mass: f64 = selected
            .iter()
            .zip(self.repr.weights)
            .filter(|(d, _)| d.is_some())
            .map(|(_, w)| w)
            .sum();
        let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
        if mass <= 0.0 {
            return Ok(scores);
        }
        for (dist, w) in selected.iter().zip(self.repr.weights) {
            let Some(dist) = dist else { continue };
            let scale = w / mass / dist.total as f64;
            for &(t, c) in &dist.counts {
                *scores.entry(t).or_default() += scale * c as f64;
            }
        }
        Ok(scores)
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<(), ArtifactError> {
        let header = ArtifactHeader::new(MODEL_ARTIFACT, config_hash).with_meta(serde_json::json!({
            "stage": self.repr.stage,
            "targets": self.repr.targets.len(),
        }));
        artifact::write_jsonl(path, &header, [&self.repr])
    }

    pub fn load(path: &Path, check: HashCheck<'_>) -> Result<Self, ArtifactError> {
        let (_, rows): (_, Vec<ModelRepr>) = artifact::read_jsonl(path, MODEL_ARTIFACT, check)?;
        let repr = rows.into_iter().next().ok_or_else(|| ArtifactError::Malformed {
            path: path.to_path_buf(),
            line: 2,
            message: "model body missing".into(),
        })?;
        if repr.levels.len() != LEVELS {
            return Err(ArtifactError::Malformed {
                path: path.to_path_buf(),
                line: 2,
                message: format!("expected {LEVELS} levels, found {}", repr.levels.len()),
            });
        }
        Ok(Self::from_repr(repr))
    }
}

impl Predictor for ReferenceModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Candidate>, BackendError> {
        request.validate()?;
        if request.stage != self.repr.stage {
            return Err(BackendError::InvalidRequest(format!(
                "stage-{} request sent to a stage-{} model",
                request.stage, self.repr.stage
            )));
        }
        let mut ranked: Vec<(u32, f64)> = self.score_all(&request.prompt)?.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(request.num_candidates);
        Ok(ranked
            .into_iter()
            .map(|(t, score)| Candidate {
                text: self.repr.targets[t as usize].clone(),
                score,
            })
            .collect())
    }
}
