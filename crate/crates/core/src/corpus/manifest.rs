use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::parse::{parse_log, LogFormat, Reject, DEFAULT_MAX_REJECT_RATIO};
use super::split::{preprocess, PreprocessOptions, PreprocessStats, SplitCorpus, UserSplit};
use super::{CorpusError, Dataset, UsageRecord, Vocab};
use crate::artifact::{self, ArtifactHeader, HashCheck};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub user: String,
    pub timestamp: String,
    pub app: String,
    pub category: String,
    #[serde(default)]
    pub poi: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            user: "user_id".into(),
            timestamp: "timestamp".into(),
            app: "app".into(),
            category: "category".into(),
            poi: None,
        }
    }
}

fn default_delimiter() -> String {
    ",".into()
}

fn default_poi_separator() -> String {
    ";".into()
}

fn default_reject_ratio() -> f64 {
    DEFAULT_MAX_REJECT_RATIO
}

/// Dataset manifest (TOML). Relative file paths resolve against the
/// manifest's directory.
///
/// ```toml
/// dataset_id = "lsapp"
/// files = ["lsapp.csv"]
/// delimiter = ","
/// poi_separator = ";"
/// max_reject_ratio = 0.01
///
/// [columns]
/// user = "user_id"
/// timestamp = "timestamp"
/// app = "app"
/// category = "category"
/// poi = "poi"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub files: Vec<PathBuf>,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default = "default_poi_separator")]
    pub poi_separator: String,
    #[serde(default = "default_reject_ratio")]
    pub max_reject_ratio: f64,
    #[serde(default)]
    pub columns: ColumnMap,
}

fn manifest_error(path: &Path, message: impl Into<String>) -> CorpusError {
    CorpusError::Manifest {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn single_char(path: &Path, what: &str, s: &str) -> Result<char, CorpusError> {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(manifest_error(
            path,
            format!("{what} must be a single character, got {s:?}"),
        )),
    }
}

/// An ingested dataset, the rejected lines per file and preprocessing stats.
pub type Ingested = (Dataset, Vec<(PathBuf, Reject)>, PreprocessStats);

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| manifest_error(path, e.to_string()))?;
        let mut manifest: DatasetManifest = toml::from_str(&text).map_err(|e| manifest_error(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for f in &mut manifest.files {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        manifest.validate(path)?;
        Ok(manifest)
    }

    fn validate(&self, path: &Path) -> Result<(), CorpusError> {
        if self.dataset_id.is_empty() || self.dataset_id.contains(['/', '\\']) {
            return Err(manifest_error(path, "dataset_id must be a non-empty path-safe name"));
        }
        if self.files.is_empty() {
            return Err(manifest_error(path, "no files listed"));
        }
        if !(0.0..=1.0).contains(&self.max_reject_ratio) {
            return Err(manifest_error(path, "max_reject_ratio must lie in [0, 1]"));
        }
        self.format(path).map(|_| ())
    }

    pub fn format(&self, path: &Path) -> Result<LogFormat, CorpusError> {
        let delimiter = single_char(path, "delimiter", &self.delimiter)?;
        if !delimiter.is_ascii() {
            return Err(manifest_error(path, "delimiter must be ASCII"));
        }
        Ok(LogFormat {
            delimiter: delimiter as u8,
            columns: self.columns.clone(),
            poi_separator: single_char(path, "poi_separator", &self.poi_separator)?,
            max_reject_ratio: self.max_reject_ratio,
        })
    }

    /// Parses every listed file into one vocabulary and preprocesses the result.
    pub fn ingest(&self, options: PreprocessOptions) -> Result<Ingested, CorpusError> {
        let format = self.format(Path::new(&self.dataset_id))?;
        let mut vocab = Vocab::new();
        let mut records = Vec::new();
        let mut rejects = Vec::new();
        for file in &self.files {
            let reader = File::open(file).map_err(|e| manifest_error(file, e.to_string()))?;
            let parsed = parse_log(reader, &format, &mut vocab)?;
            records.extend(parsed.records);
            rejects.extend(parsed.rejects.into_iter().map(|r| (file.clone(), r)));
        }
        let (split, stats) = preprocess(&self.dataset_id, records, options)?;
        Ok((Dataset { split, vocab }, rejects, stats))
    }
}

const SPLITS: [&str; 3] = ["train", "validation", "test"];

fn split_part<'a>(split: &'a UserSplit, name: &str) -> &'a [UsageRecord] {
    match name {
        "train" => &split.train,
        "validation" => &split.validation,
        _ => &split.test,
    }
}

/// Writes `<dir>/{train,validation,test}.jsonl` and `<dir>/vocab.jsonl`.
pub fn write_corpus_dir(dir: &Path, dataset: &Dataset, config_hash: &str) -> Result<(), CorpusError> {
    let meta = serde_json::json!({ "dataset_id": dataset.id() });
    for name in SPLITS {
        let header = ArtifactHeader::new(format!("corpus/{name}"), config_hash).with_meta(meta.clone());
        let rows = dataset.split.users.values().flat_map(|u| split_part(u, name).iter());
        artifact::write_jsonl(&dir.join(format!("{name}.jsonl")), &header, rows)?;
    }
    let header = ArtifactHeader::new("corpus/vocab", config_hash).with_meta(meta);
    artifact::write_jsonl(&dir.join("vocab.jsonl"), &header, [&dataset.vocab])?;
    Ok(())
}

pub fn load_corpus_dir(dir: &Path, check: HashCheck<'_>) -> Result<Dataset, CorpusError> {
    let (header, vocabs): (_, Vec<Vocab>) = artifact::read_jsonl(&dir.join("vocab.jsonl"), "corpus/vocab", check)?;
    let dataset_id = header.meta["dataset_id"]
        .as_str()
        .ok_or_else(|| manifest_error(dir, "vocab header lacks dataset_id"))?
        .to_string();
    let vocab = vocabs
        .into_iter()
        .next()
        .ok_or_else(|| manifest_error(dir, "empty vocabulary artifact"))?;
    let mut users: BTreeMap<String, UserSplit> = BTreeMap::new();
    for name in SPLITS {
        let (_, rows): (_, Vec<UsageRecord>) =
            artifact::read_jsonl(&dir.join(format!("{name}.jsonl")), &format!("corpus/{name}"), check)?;
        for r in rows {
            let entry = users.entry(r.user_id.clone()).or_default();
            match name {
                "train" => entry.train.push(r),
                "validation" => entry.validation.push(r),
                _ => entry.test.push(r),
            }
        }
    }
    Ok(Dataset {
        split: SplitCorpus { dataset_id, users },
        vocab,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_resolves_relative_paths_and_ingests() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = String::from("uid;ts;pkg;cat\n");
        for i in 0..12 {
            log.push_str(&format!("u1;{};a{};Social\n", i * 10, i % 2));
        }
        fs::write(dir.path().join("log.csv"), log).unwrap();
        fs::write(
            dir.path().join("m.toml"),
            "dataset_id = \"d\"\nfiles = [\"log.csv\"]\ndelimiter = \";\"\n[columns]\nuser = \"uid\"\ntimestamp = \"ts\"\napp = \"pkg\"\ncategory = \"cat\"\n",
        )
        .unwrap();
        let m = DatasetManifest::load(&dir.path().join("m.toml")).unwrap();
        assert!(m.files[0].is_absolute() || m.files[0].starts_with(dir.path()));
        let (ds, rejects, _) = m.ingest(PreprocessOptions::default()).unwrap();
        assert!(rejects.is_empty());
        assert_eq!(ds.split.users["u1"].len(), 12);

        let out = dir.path().join("corpus");
        write_corpus_dir(&out, &ds, "h1").unwrap();
        let back = load_corpus_dir(&out, HashCheck::Require("h1")).unwrap();
        assert_eq!(back, ds);
        assert!(load_corpus_dir(&out, HashCheck::Require("h2")).is_err());
    }

    #[test]
    fn bad_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.toml");
        fs::write(&p, "dataset_id = \"d\"\nfiles = []\n").unwrap();
        assert!(matches!(DatasetManifest::load(&p), Err(CorpusError::Manifest { .. })));
        fs::write(&p, "dataset_id = \"d\"\nfiles = [\"x\"]\ndelimiter = \"ab\"\n").unwrap();
        assert!(matches!(DatasetManifest::load(&p), Err(CorpusError::Manifest { .. })));
    }
}
