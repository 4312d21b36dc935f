//! Usage-log ingestion: parsing, sessionization, noise filtering and
//! chronological per-user splits.
//!
//! IDs are dataset-scoped. A joint run across datasets shares category
//! *names*, never app IDs.

mod manifest;
mod parse;
mod session;
mod split;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{load_corpus_dir, write_corpus_dir, ColumnMap, DatasetManifest};
pub use parse::{parse_log, LogFormat, ParsedLog, Reject, DEFAULT_MAX_REJECT_RATIO};
pub use session::{filter_noise, sessionize, sessionize_corpus, NoiseThresholds, Session, DEFAULT_GAP_SECONDS};
pub use split::{preprocess, split_chronological, PreprocessOptions, PreprocessStats, SplitCorpus, UserSplit};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("log header is missing column {0:?}")]
    MissingColumn(String),
    #[error("{rejected} of {total} lines rejected, above the allowed ratio {ratio}; first: line {first_line}: {first_reason}")]
    TooManyRejects {
        rejected: usize,
        total: usize,
        ratio: f64,
        first_line: u64,
        first_reason: String,
    },
    #[error("user {user} has {records} records; at least 10 are required for a split")]
    TooFewRecords { user: String, records: usize },
    #[error("log read failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error(transparent)]
    Artifact(#[from] crate::artifact::ArtifactError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AppId(pub u32);

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u32);

/// One timestamped app-usage event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    #[serde(rename = "user")]
    pub user_id: String,
    #[serde(rename = "ts")]
    pub timestamp: u64,
    #[serde(rename = "app")]
    pub app_id: AppId,
    #[serde(rename = "cat")]
    pub category_id: CategoryId,
    #[serde(rename = "poi", default, skip_serializing_if = "Option::is_none")]
    pub poi_labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct AppEntry {
    name: String,
    category: CategoryId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct VocabRepr {
    apps: Vec<AppEntry>,
    categories: Vec<String>,
    poi_labels: BTreeSet<String>,
}

/// Canonical ID assignment for one dataset. IDs follow first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    repr: VocabRepr,
    app_index: HashMap<String, AppId>,
    category_index: HashMap<String, CategoryId>,
}

impl From<VocabRepr> for Vocab {
    fn from(repr: VocabRepr) -> Self {
        let app_index = repr
            .apps
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), AppId(i as u32)))
            .collect();
        let category_index = repr
            .categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), CategoryId(i as u32)))
            .collect();
        Self {
            repr,
            app_index,
            category_index,
        }
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        v.repr
    }
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn app_id(&self, name: &str) -> Option<AppId> {
        self.app_index.get(name).copied()
    }

    pub fn category_id(&self, name: &str) -> Option<CategoryId> {
        self.category_index.get(name).copied()
    }

    pub fn app_name(&self, id: AppId) -> Option<&str> {
        self.repr.apps.get(id.0 as usize).map(|e| e.name.as_str())
    }

    pub fn category_of(&self, id: AppId) -> Option<CategoryId> {
        self.repr.apps.get(id.0 as usize).map(|e| e.category)
    }

    pub fn category_name(&self, id: CategoryId) -> Option<&str> {
        self.repr.categories.get(id.0 as usize).map(String::as_str)
    }

    pub fn num_apps(&self) -> usize {
        self.repr.apps.len()
    }

    pub fn num_categories(&self) -> usize {
        self.repr.categories.len()
    }

    pub fn poi_labels(&self) -> &BTreeSet<String> {
        &self.repr.poi_labels
    }

    /// Resolves (or assigns) IDs for an app and its category.
    ///
    /// Fails without modifying the vocabulary when the app is already bound
    /// to a different category.
    pub fn intern(&mut self, app: &str, category: &str) -> Result<(AppId, CategoryId), String> {
        let existing_cat = self.category_index.get(category).copied();
        if let Some(app_id) = self.app_index.get(app).copied() {
            let bound = self.repr.apps[app_id.0 as usize].category;
            return match existing_cat {
                Some(c) if c == bound => Ok((app_id, c)),
                _ => Err(format!(
                    "app {app:?} is already bound to category {:?}",
                    self.repr.categories[bound.0 as usize]
                )),
            };
        }
        let cat_id = existing_cat.unwrap_or_else(|| {
            let id = CategoryId(self.repr.categories.len() as u32);
            self.repr.categories.push(category.to_string());
            self.category_index.insert(category.to_string(), id);
            id
        });
        let app_id = AppId(self.repr.apps.len() as u32);
        self.repr.apps.push(AppEntry {
            name: app.to_string(),
            category: cat_id,
        });
        self.app_index.insert(app.to_string(), app_id);
        Ok((app_id, cat_id))
    }

    pub fn add_poi_label(&mut self, label: &str) {
        if !self.repr.poi_labels.contains(label) {
            self.repr.poi_labels.insert(label.to_string());
        }
    }
}

/// A preprocessed dataset: the split corpus plus its vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: SplitCorpus,
    pub vocab: Vocab,
}

impl Dataset {
    pub fn id(&self) -> &str {
        &self.split.dataset_id
    }

    pub fn category_name(&self, record: &UsageRecord) -> &str {
        self.vocab
            .category_name(record.category_id)
            .expect("record category resolves in its dataset vocabulary")
    }

    /// Per-user category-name streams of the training split, ordered by user.
    pub fn train_category_streams(&self) -> Vec<Vec<String>> {
        self.split
            .users
            .values()
            .map(|u| u.train.iter().map(|r| self.category_name(r).to_string()).collect())
            .collect()
    }
}
