//! Declarative run configuration and the per-stage config hashes embedded
//! in artifacts.
//!
//! ```toml
//! seed = 42
//! workers = 4
//! out = "out"
//! datasets = ["data/synthetic.toml"]
//!
//! [preprocess]
//! gap_seconds = 300
//! max_session_records = 5000
//! min_user_records = 10
//!
//! [prompts]
//! sequence_len = 3
//! type_top_k = 3
//! window = 15
//! poi_slots = 3
//! templates = "canonical"
//!
//! [predict]
//! k = 5
//! attempt_factor = 4
//!
//! [ablation]
//! use_stage1 = true
//! use_app_history = true
//! use_installed_apps = true
//! use_optional_context = true
//!
//! [backend]
//! stage1 = "reference"
//! stage2 = "exec:python -m adapter serve"
//! timeout_secs = 30
//! in_flight = 32
//! retries = 2
//! weights = [0.5, 0.25, 0.15, 0.1]
//! ```
//!
//! Relative dataset paths resolve against the config file's directory.
//! Every field has a default, so an empty file is valid apart from the
//! dataset list.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{self, ArtifactError};
use crate::backend::{validate_weights, BackendSpec, ClientOptions, Weights, DEFAULT_WEIGHTS};
use crate::corpus::{DatasetManifest, NoiseThresholds, PreprocessOptions, DEFAULT_GAP_SECONDS};
use crate::pipeline::{AblationFlags, PipelineOptions};
use crate::templater::{TemplateSet, MAX_HISTORY};
use crate::typeprompt::{DEFAULT_SEQUENCE_LEN, DEFAULT_TOP_K};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub gap_seconds: u64,
    pub max_session_records: usize,
    pub min_user_records: usize,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let t = NoiseThresholds::default();
        Self {
            gap_seconds: DEFAULT_GAP_SECONDS,
            max_session_records: t.max_session_records,
            min_user_records: t.min_user_records,
        }
    }
}

impl PreprocessSection {
    pub fn options(&self) -> PreprocessOptions {
        PreprocessOptions {
            gap_seconds: self.gap_seconds,
            thresholds: NoiseThresholds {
                max_session_records: self.max_session_records,
                min_user_records: self.min_user_records,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptsSection {
    pub sequence_len: usize,
    pub type_top_k: usize,
    pub window: usize,
    pub poi_slots: usize,
    pub templates: TemplateSet,
}

impl Default for PromptsSection {
    fn default() -> Self {
        Self {
            sequence_len: DEFAULT_SEQUENCE_LEN,
            type_top_k: DEFAULT_TOP_K,
            window: MAX_HISTORY,
            poi_slots: 3,
            templates: TemplateSet::Canonical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub k: usize,
    pub attempt_factor: usize,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            k: 5,
            attempt_factor: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub stage1: BackendSpec,
    pub stage2: BackendSpec,
    pub timeout_secs: f64,
    pub in_flight: usize,
    pub connect_retries: u32,
    pub retries: u32,
    /// Reference model interpolation weights, longest context first.
    pub weights: Weights,
}

impl Default for BackendSection {
    fn default() -> Self {
        let c = ClientOptions::default();
        Self {
            stage1: BackendSpec::Reference,
            stage2: BackendSpec::Reference,
            timeout_secs: c.timeout.as_secs_f64(),
            in_flight: c.in_flight,
            connect_retries: c.connect_retries,
            retries: 2,
            weights: DEFAULT_WEIGHTS,
        }
    }
}

impl BackendSection {
    pub fn client_options(&self) -> ClientOptions {
        ClientOptions {
            timeout: Duration::from_secs_f64(self.timeout_secs),
            in_flight: self.in_flight,
            connect_retries: self.connect_retries,
            ..ClientOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub datasets: Vec<PathBuf>,
    pub preprocess: PreprocessSection,
    pub prompts: PromptsSection,
    pub predict: PredictSection,
    pub ablation: AblationFlags,
    pub backend: BackendSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            workers: 1,
            out: PathBuf::from("out"),
            datasets: Vec::new(),
            preprocess: PreprocessSection::default(),
            prompts: PromptsSection::default(),
            predict: PredictSection::default(),
            ablation: AblationFlags::default(),
            backend: BackendSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in config.datasets.iter_mut().chain(std::iter::once(&mut config.out)) {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.datasets.is_empty() {
            return bad("at least one dataset manifest is required".into());
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        let p = &self.preprocess;
        if p.gap_seconds == 0 || p.max_session_records == 0 || p.min_user_records == 0 {
            return bad("preprocess parameters must be positive".into());
        }
        let b = &self.backend;
        if !(b.timeout_secs.is_finite() && b.timeout_secs > 0.0) || b.in_flight == 0 {
            return bad("backend timeout_secs and in_flight must be positive".into());
        }
        validate_weights(&b.weights).map_err(ConfigError::Invalid)?;
        self.pipeline_options()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            sequence_len: self.prompts.sequence_len,
            type_top_k: self.prompts.type_top_k,
            window: self.prompts.window,
            poi_slots: self.prompts.poi_slots,
            k: self.predict.k,
            attempt_factor: self.predict.attempt_factor,
            retries: self.backend.retries,
            templates: self.prompts.templates,
            flags: self.ablation,
        }
    }

    pub fn manifests(&self) -> Result<Vec<DatasetManifest>, ConfigError> {
        self.datasets
            .iter()
            .map(|p| DatasetManifest::load(p).map_err(|e| ConfigError::Invalid(e.to_string())))
            .collect()
    }

    /// Hash of one dataset's canonical corpus: raw file contents, manifest
    /// fields and preprocessing parameters.
    pub fn corpus_hash(&self, manifest: &DatasetManifest) -> Result<String, ConfigError> {
        let digests = manifest
            .files
            .iter()
            .map(|f| artifact::file_digest(f))
            .collect::<Result<Vec<_>, _>>()?;
        let mut canonical = manifest.clone();
        canonical.files.clear();
        Ok(artifact::config_hash("corpus", &(canonical, digests, &self.preprocess)))
    }

    /// Hash shared by the type table and pair files. Stage-1 pairs pool
    /// every dataset, so all corpus hashes feed in.
    pub fn prompts_hash(&self, corpus_hashes: &[String]) -> String {
        artifact::config_hash("prompts", &(corpus_hashes, &self.prompts, &self.ablation))
    }

    pub fn model_hash(&self, prompts_hash: &str) -> String {
        artifact::config_hash("model", &(prompts_hash, self.backend.weights, self.seed))
    }

    /// Prediction hash; worker count is excluded since it never changes the
    /// output.
    pub fn predictions_hash(&self, model_hash: &str) -> String {
        artifact::config_hash(
            "predictions",
            &(
                model_hash,
                &self.predict,
                &self.backend.stage1,
                &self.backend.stage2,
                self.backend.retries,
            ),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.pipeline_options(), PipelineOptions::default());
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn full_file_parses() {
        let text = r#"
            seed = 7
            workers = 3
            datasets = ["a.toml"]
            [prompts]
            templates = "alternate"
            [predict]
            k = 3
            [ablation]
            use_app_history = false
            [backend]
            stage2 = "tcp:127.0.0.1:9000"
            weights = [0.4, 0.3, 0.2, 0.1]
        "#;
        let c: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.prompts.templates, TemplateSet::Alternate);
        assert!(!c.ablation.use_app_history);
        assert_eq!(c.backend.stage2, BackendSpec::Tcp("127.0.0.1:9000".into()));
        assert_eq!(c.backend.stage1, BackendSpec::Reference);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[backend]\nstage1 = \"gpt\"").is_err());
        let base = RunConfig {
            datasets: vec!["a.toml".into()],
            ..RunConfig::default()
        };
        base.validate().unwrap();
        let mut c = base.clone();
        c.predict.k = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.backend.weights = [0.5, 0.5, 0.5, 0.0];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.workers = 0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.ablation.use_stage1 = false;
        c.ablation.use_app_history = false;
        c.ablation.use_installed_apps = false;
        c.ablation.use_optional_context = false;
        // Time is always present, so even this is a valid (if weak) setup.
        let _ = c.validate();
    }

    #[test]
    fn staged_hashes_depend_on_their_inputs() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.predict.k = 3;
        let p = a.prompts_hash(&["x".into()]);
        assert_eq!(p, b.prompts_hash(&["x".into()]));
        assert_ne!(p, a.prompts_hash(&["y".into()]));
        let m = a.model_hash(&p);
        assert_eq!(m, b.model_hash(&p));
        assert_ne!(a.predictions_hash(&m), b.predictions_hash(&m));
        let mut c = a.clone();
        c.workers = 8;
        assert_eq!(a.predictions_hash(&m), c.predictions_hash(&m));
    }
}
