//! Line-delimited artifact files.
//!
//! Every artifact starts with a header line carrying the artifact kind and
//! the hash of the configuration that produced it. JSON artifacts use a JSON
//! header; tab-separated pair files use a `# ` prefixed JSON header so that
//! downstream tools can skip it as a comment.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("missing artifact {0}")]
    Missing(PathBuf),
    #[error("{path}: config hash mismatch (expected {expected}, found {found}); rerun the producing command or pass --force")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: expected artifact kind {expected}, found {found}")]
    WrongKind {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub artifact: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

impl ArtifactHeader {
    pub fn new(artifact: impl Into<String>, config_hash: impl Into<String>) -> Self {
        Self {
            artifact: artifact.into(),
            config_hash: config_hash.into(),
            meta: serde_json::Value::Null,
        }
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = meta;
        self
    }
}

/// How a reader treats the embedded config hash.
#[derive(Debug, Clone, Copy)]
pub enum HashCheck<'a> {
    Require(&'a str),
    Ignore,
}

impl HashCheck<'_> {
    fn verify(&self, path: &Path, header: &ArtifactHeader) -> Result<(), ArtifactError> {
        match self {
            HashCheck::Require(expected) if *expected != header.config_hash => Err(ArtifactError::HashMismatch {
                path: path.to_path_buf(),
                expected: expected.to_string(),
                found: header.config_hash.clone(),
            }),
            _ => Ok(()),
        }
    }
}

/// Hex SHA-256 of the canonical JSON form of `value`, tagged with `domain`.
pub fn config_hash<T: Serialize>(domain: &str, value: &T) -> String {
    let body = serde_json::to_vec(value).expect("config values serialize");
    let mut hasher = Sha256::new();
    hasher.update(domain.as_bytes());
    hasher.update([0u8]);
    hasher.update(&body);
    hex::encode(hasher.finalize())
}

pub fn file_digest(path: &Path) -> Result<String, ArtifactError> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn io_error(path: &Path, source: std::io::Error) -> ArtifactError {
    if source.kind() == std::io::ErrorKind::NotFound {
        ArtifactError::Missing(path.to_path_buf())
    } else {
        ArtifactError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ArtifactError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| io_error(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>, ArtifactError> {
    Ok(BufReader::new(File::open(path).map_err(|e| io_error(path, e))?))
}

pub fn write_jsonl<'a, T, I>(path: &Path, header: &ArtifactHeader, rows: I) -> Result<(), ArtifactError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut out = create(path)?;
    let io = |e| io_error(path, e);
    serde_json::to_writer(&mut out, header).map_err(|e| io(e.into()))?;
    out.write_all(b"\n").map_err(io)?;
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    kind: &str,
    check: HashCheck<'_>,
) -> Result<(ArtifactHeader, Vec<T>), ArtifactError> {
    let reader = open(path)?;
    let mut lines = reader.lines().enumerate();
    let header: ArtifactHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| io_error(path, e))?;
            serde_json::from_str(&line).map_err(|e| ArtifactError::Malformed {
                path: path.to_path_buf(),
                line: 1,
                message: format!("bad header: {e}"),
            })?
        }
        None => {
            return Err(ArtifactError::Malformed {
                path: path.to_path_buf(),
                line: 1,
                message: "empty artifact".into(),
            })
        }
    };
    check_kind(path, kind, &header)?;
    check.verify(path, &header)?;
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| ArtifactError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok((header, rows))
}

fn check_kind(path: &Path, kind: &str, header: &ArtifactHeader) -> Result<(), ArtifactError> {
    if header.artifact != kind {
        return Err(ArtifactError::WrongKind {
            path: path.to_path_buf(),
            expected: kind.to_string(),
            found: header.artifact.clone(),
        });
    }
    Ok(())
}

/// Writes `input<TAB>target` lines after a `# {header}` comment line.
pub fn write_tsv_pairs<'a, I>(path: &Path, header: &ArtifactHeader, pairs: I) -> Result<(), ArtifactError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut out = create(path)?;
    let io = |e| io_error(path, e);
    out.write_all(b"# ").map_err(io)?;
    serde_json::to_writer(&mut out, header).map_err(|e| io(e.into()))?;
    out.write_all(b"\n").map_err(io)?;
    for (input, target) in pairs {
        debug_assert!(!input.contains(['\t', '\n']) && !target.contains(['\t', '\n']));
        writeln!(out, "{input}\t{target}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_tsv_pairs(
    path: &Path,
    kind: &str,
    check: HashCheck<'_>,
) -> Result<(ArtifactHeader, Vec<(String, String)>), ArtifactError> {
    let reader = open(path)?;
    let mut header = None;
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if let Some(rest) = line.strip_prefix("# ") {
            if header.is_none() {
                let parsed: ArtifactHeader = serde_json::from_str(rest).map_err(|e| ArtifactError::Malformed {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("bad header: {e}"),
                })?;
                check_kind(path, kind, &parsed)?;
                check.verify(path, &parsed)?;
                header = Some(parsed);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (input, target) = line.split_once('\t').ok_or_else(|| ArtifactError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            message: "expected two tab-separated columns".into(),
        })?;
        pairs.push((input.to_string(), target.to_string()));
    }
    let header = header.ok_or_else(|| ArtifactError::Malformed {
        path: path.to_path_buf(),
        line: 1,
        message: "missing header comment".into(),
    })?;
    Ok((header, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_hash_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let header = ArtifactHeader::new("rows", "abc");
        write_jsonl(&path, &header, &[1u32, 2, 3]).unwrap();
        let (h, rows): (_, Vec<u32>) = read_jsonl(&path, "rows", HashCheck::Require("abc")).unwrap();
        assert_eq!(h, header);
        assert_eq!(rows, vec![1, 2, 3]);
        assert!(matches!(
            read_jsonl::<u32>(&path, "rows", HashCheck::Require("def")),
            Err(ArtifactError::HashMismatch { .. })
        ));
        assert!(read_jsonl::<u32>(&path, "rows", HashCheck::Ignore).is_ok());
        assert!(matches!(
            read_jsonl::<u32>(&path, "other", HashCheck::Ignore),
            Err(ArtifactError::WrongKind { .. })
        ));
    }

    #[test]
    fn missing_file_is_distinct() {
        let err = read_jsonl::<u32>(Path::new("/nonexistent/x.jsonl"), "x", HashCheck::Ignore).unwrap_err();
        assert!(matches!(err, ArtifactError::Missing(_)));
    }

    #[test]
    fn tsv_pairs_skip_header_comment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.tsv");
        let header = ArtifactHeader::new("pairs", "h");
        write_tsv_pairs(&path, &header, [("a b", "c"), ("d", "e f")]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# {"));
        let (_, pairs) = read_tsv_pairs(&path, "pairs", HashCheck::Require("h")).unwrap();
        assert_eq!(pairs, vec![("a b".into(), "c".into()), ("d".into(), "e f".into())]);
    }

    #[test]
    fn config_hash_is_domain_separated() {
        assert_ne!(config_hash("a", &1), config_hash("b", &1));
        assert_eq!(config_hash("a", &1), config_hash("a", &1));
    }
}
