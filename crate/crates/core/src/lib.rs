//! Two-stage next-app prediction over mobile usage logs.
//!
//! The crate is organised as a batch pipeline:
//!
//! - [`corpus`]: parse delimiter-separated usage logs, sessionize, drop noise
//!   and split each user chronologically (70/10/20).
//! - [`templater`]: the fixed prompt grammar. Renders structured context into
//!   sentences and parses generated sentences back.
//! - [`typeprompt`]: next-category distributions over category-sequence keys,
//!   rendered as stage-1 target sentences.
//! - [`backend`]: the text-to-text predictor contract, the reference
//!   interpolated-backoff predictor and the `maple-backend/1` wire client.
//! - [`pipeline`]: training-pair construction and two-stage inference.
//! - [`eval`]: Accuracy@k, MRR@k and the MFU/MRU baselines.
//! - [`experiment`]: end-to-end runs and the ablation matrix.

pub mod artifact;
pub mod backend;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod experiment;
pub mod pipeline;
pub mod synthetic;
pub mod templater;
pub mod typeprompt;

pub use backend::{Candidate, GenerationRequest, Predictor};
pub use corpus::{AppId, CategoryId, Dataset, SplitCorpus, UsageRecord, Vocab};
pub use eval::{EvalReport, Metrics};
pub use pipeline::{AblationFlags, RankedPrediction};
pub use templater::{ContextBundle, PromptKind, PromptSentence, Stage};
pub use typeprompt::{TypeDistribution, TypeTable};
