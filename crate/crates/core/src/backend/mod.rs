//! Text-to-text predictors.
//!
//! Everything the pipeline knows about a predictor is [`Predictor::generate`]:
//! a prompt goes in, ranked sentences come out. The reference model and
//! external processes speaking `maple-backend/1` are interchangeable.

mod external;
mod reference;
pub mod wire;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::templater::Stage;

pub use external::{ClientOptions, ExternalClient};
pub use reference::{validate_weights, FitReport, ReferenceModel, Weights, DEFAULT_WEIGHTS, MODEL_ARTIFACT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub request_id: u64,
    pub stage: Stage,
    pub prompt: String,
    pub num_candidates: usize,
}

impl GenerationRequest {
    pub fn new(request_id: u64, stage: Stage, prompt: impl Into<String>, num_candidates: usize) -> Self {
        Self {
            request_id,
            stage,
            prompt: prompt.into(),
            num_candidates,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        if self.num_candidates == 0 {
            return Err(BackendError::InvalidRequest("num_candidates must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend did not answer request {id} within {secs:.1}s")]
    Timeout { id: u64, secs: f64 },
    #[error("protocol error: {message}; frame: {frame}")]
    Protocol { message: String, frame: String },
    #[error("backend reported an error for request {id}: {message}")]
    Remote { id: u64, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("model error: {0}")]
    Model(String),
}

impl BackendError {
    /// Transport failures and timeouts may succeed on retry; everything
    /// else is a definite answer.
    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::Timeout { .. })
    }
}

pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;

    /// Up to `num_candidates` candidates, best first.
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Candidate>, BackendError>;
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Candidate>, BackendError> {
        (**self).generate(request)
    }
}

impl<P: Predictor + ?Sized> Predictor for std::sync::Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Candidate>, BackendError> {
        (**self).generate(request)
    }
}

/// Retries retriable failures up to `retries` extra times.
pub fn generate_with_retries<P: Predictor + ?Sized>(
    predictor: &P,
    request: &GenerationRequest,
    retries: u32,
) -> Result<Vec<Candidate>, BackendError> {
    let mut attempt = 0;
    loop {
        match predictor.generate(request) {
            Err(e) if e.is_retriable() && attempt < retries => {
                attempt += 1;
                log::warn!("{}: {e}; retry {attempt}/{retries}", predictor.name());
            }
            other => return other,
        }
    }
}

/// A training pair: rendered input and target sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub input: String,
    pub target: String,
}

impl TrainingPair {
    pub fn new(input: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            target: target.into(),
        }
    }
}

/// Which predictor serves a stage: `reference`, `exec:<command>` or
/// `tcp:<host:port>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackendSpec {
    Reference,
    Exec(String),
    Tcp(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "reference" {
            return Ok(BackendSpec::Reference);
        }
        if let Some(cmd) = s.strip_prefix("exec:") {
            if cmd.trim().is_empty() {
                return Err("exec: needs a command".into());
            }
            return Ok(BackendSpec::Exec(cmd.to_string()));
        }
        if let Some(addr) = s.strip_prefix("tcp:") {
            if !addr.contains(':') {
                return Err(format!("tcp address {addr:?} must be host:port"));
            }
            return Ok(BackendSpec::Tcp(addr.to_string()));
        }
        Err(format!(
            "unknown backend {s:?}; expected reference, exec:<command> or tcp:<host:port>"
        ))
    }
}

impl TryFrom<String> for BackendSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BackendSpec> for String {
    fn from(b: BackendSpec) -> String {
        b.to_string()
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Reference => f.write_str("reference"),
            BackendSpec::Exec(cmd) => write!(f, "exec:{cmd}"),
            BackendSpec::Tcp(addr) => write!(f, "tcp:{addr}"),
        }
    }
}

impl BackendSpec {
    pub fn is_reference(&self) -> bool {
        matches!(self, BackendSpec::Reference)
    }

    /// Connects to an external backend. Not valid for `reference`, which is
    /// loaded from a fitted model file instead.
    pub fn connect(&self, options: ClientOptions) -> Result<ExternalClient, BackendError> {
        match self {
            BackendSpec::Reference => Err(BackendError::InvalidRequest(
                "the reference backend is loaded from a model file, not connected".into(),
            )),
            BackendSpec::Exec(cmd) => ExternalClient::spawn(cmd, options),
            BackendSpec::Tcp(addr) => ExternalClient::connect_tcp(addr, options),
        }
    }
}
