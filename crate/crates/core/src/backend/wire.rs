//! `maple-backend/1` frames.
//!
//! Newline-delimited JSON over a byte stream, one frame per line, UTF-8.
//! The backend speaks first with a handshake; afterwards every request
//! carries an id and is answered by exactly one response or error frame
//! with the same id, in any order.
//!
//! ```text
//! <- {"protocol":"maple-backend/1","name":"stub"}
//! -> {"id":7,"stage":2,"prompt":"...","n":5}
//! <- {"id":7,"candidates":[{"text":"This user will use App 4.","score":0.61}]}
//! <- {"id":8,"error":"prompt too long"}
//! ```

use serde::{Deserialize, Serialize};

use super::{BackendError, Candidate};
use crate::templater::Stage;

pub const PROTOCOL: &str = "maple-backend/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestFrame {
    pub id: u64,
    pub stage: Stage,
    pub prompt: String,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseFrame {
    pub id: u64,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorFrame {
    pub id: u64,
    pub error: String,
}

/// Anything a backend may send after the handshake.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Candidates(ResponseFrame),
    Error(ErrorFrame),
}

impl Reply {
    pub fn id(&self) -> u64 {
        match self {
            Reply::Candidates(r) => r.id,
            Reply::Error(e) => e.id,
        }
    }
}

fn protocol_error(message: impl Into<String>, frame: &str) -> BackendError {
    BackendError::Protocol {
        message: message.into(),
        frame: frame.to_string(),
    }
}

pub fn parse_handshake(line: &str) -> Result<Handshake, BackendError> {
    let hs: Handshake = serde_json::from_str(line).map_err(|e| protocol_error(format!("bad handshake: {e}"), line))?;
    if hs.protocol != PROTOCOL {
        return Err(protocol_error(
            format!("unsupported protocol {:?}, expected {PROTOCOL:?}", hs.protocol),
            line,
        ));
    }
    Ok(hs)
}

pub fn parse_reply(line: &str) -> Result<Reply, BackendError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| protocol_error(format!("invalid JSON: {e}"), line))?;
    let reply = if value.get("error").is_some() {
        Reply::Error(serde_json::from_value(value).map_err(|e| protocol_error(format!("bad error frame: {e}"), line))?)
    } else {
        let resp: ResponseFrame =
            serde_json::from_value(value).map_err(|e| protocol_error(format!("bad response frame: {e}"), line))?;
        if let Some(c) = resp.candidates.iter().find(|c| !c.score.is_finite()) {
            return Err(protocol_error(format!("non-finite score for {:?}", c.text), line));
        }
        Reply::Candidates(resp)
    };
    Ok(reply)
}

pub fn encode<T: Serialize>(frame: &T) -> String {
    serde_json::to_string(frame).expect("frames serialize")
}
