//! Next-category distributions over category-sequence keys.
//!
//! For every run of `n - 1` categories in any user's training stream, the
//! category that immediately follows is counted across all users of all
//! datasets. The top `k` categories of each key become the stage-1 target
//! sentence. Shorter suffixes and the global marginal are kept as well so
//! that unseen keys still resolve.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{self, ArtifactError, ArtifactHeader, HashCheck};
use crate::templater::{self, PromptSentence, TemplateError, TypeShare};

/// Sequence length `n`, including the predicted category.
pub const DEFAULT_SEQUENCE_LEN: usize = 3;
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeEntry {
    pub category: String,
    pub count: u64,
    pub probability: f64,
    pub percent: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDistribution {
    /// Preceding categories, oldest first. Empty for the global marginal.
    pub key: Vec<String>,
    /// Top-k entries by probability, ties by category name.
    pub entries: Vec<TypeEntry>,
    /// Observations behind the full (untruncated) distribution.
    pub support_count: u64,
}

impl TypeDistribution {
    /// Builds the top-`k` view of raw counts.
    pub fn from_counts(key: Vec<String>, counts: &BTreeMap<String, u64>, k: usize) -> Self {
        let support_count: u64 = counts.values().sum();
        let mut ranked: Vec<(&String, u64)> = counts.iter().filter(|(_, &c)| c > 0).map(|(s, &c)| (s, c)).collect();
        // Counts share a denominator, so comparing counts compares probabilities exactly.
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(k);
        let counts_shown: Vec<u64> = ranked.iter().map(|(_, c)| *c).collect();
        let percents = round_percents(&counts_shown, support_count);
        let entries = ranked
            .into_iter()
            .zip(percents)
            .map(|((category, count), percent)| TypeEntry {
                category: category.clone(),
                count,
                probability: count as f64 / support_count as f64,
                percent,
            })
            .collect();
        Self {
            key,
            entries,
            support_count,
        }
    }

    pub fn shares(&self) -> Vec<TypeShare> {
        self.entries
            .iter()
            .map(|e| TypeShare {
                category: e.category.clone(),
                percent: e.percent,
            })
            .collect()
    }

    pub fn render(&self) -> Result<PromptSentence, TemplateError> {
        templater::render_type_result(self)
    }
}

/// Integer percentages for `counts / total`.
///
/// Each entry is rounded half up. If the shown entries then sum past 100,
/// the rounded-up entry with the largest rounding error is decremented
/// (ties go to the later entry) until the sum is at most 100. All
/// comparisons use exact integer arithmetic.
pub fn round_percents(counts: &[u64], total: u64) -> Vec<u32> {
    if total == 0 {
        return vec![0; counts.len()];
    }
    let t = total as u128;
    let mut out: Vec<u32> = counts
        .iter()
        .map(|&c| ((200 * c as u128 + t) / (2 * t)) as u32)
        .collect();
    let exact_scaled = |c: u64| 100 * c as u128; // 100 * p, scaled by total
    while out.iter().map(|&p| p as u64).sum::<u64>() > 100 {
        // Rounding error of an entry, scaled by total: rounded * t - 100 * c.
        let mut best: Option<(usize, u128)> = None;
        for (i, (&p, &c)) in out.iter().zip(counts).enumerate() {
            let rounded = p as u128 * t;
            if rounded <= exact_scaled(c) {
                continue;
            }
            let err = rounded - exact_scaled(c);
            if best.is_none_or(|(_, e)| err >= e) {
                best = Some((i, err));
            }
        }
        match best {
            Some((i, _)) => out[i] -= 1,
            None => break,
        }
    }
    out
}

type Counts = BTreeMap<String, u64>;

#[derive(Debug, Clone, Default)]
struct Accumulator {
    /// Indexed by suffix length - 1.
    levels: Vec<HashMap<Vec<String>, Counts>>,
    global: Counts,
}

impl Accumulator {
    fn new(key_len: usize) -> Self {
        Self {
            levels: vec![HashMap::new(); key_len],
            global: Counts::new(),
        }
    }

    fn add_stream(mut self, stream: &[String]) -> Self {
        for (i, next) in stream.iter().enumerate() {
            *self.global.entry(next.clone()).or_default() += 1;
            for (len_minus_1, level) in self.levels.iter_mut().enumerate() {
                let len = len_minus_1 + 1;
                if i >= len {
                    let key = stream[i - len..i].to_vec();
                    *level.entry(key).or_default().entry(next.clone()).or_default() += 1;
                }
            }
        }
        self
    }

    fn merge(mut self, other: Self) -> Self {
        for (mine, theirs) in self.levels.iter_mut().zip(other.levels) {
            for (key, counts) in theirs {
                let slot = mine.entry(key).or_default();
                for (cat, c) in counts {
                    *slot.entry(cat).or_default() += c;
                }
            }
        }
        for (cat, c) in other.global {
            *self.global.entry(cat).or_default() += c;
        }
        self
    }
}

/// The full table: keys of length `n - 1` plus every shorter suffix and the
/// global marginal, all from training streams only.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeTable {
    key_len: usize,
    top_k: usize,
    levels: Vec<HashMap<Vec<String>, Counts>>,
    global: Counts,
}

/// One persisted row of the type-table artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeTableRow {
    pub key: Vec<String>,
    pub support: u64,
    pub counts: Counts,
    pub entries: Vec<TypeEntry>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct TableMeta {
    key_len: usize,
    top_k: usize,
}

pub const TYPE_TABLE_ARTIFACT: &str = "prompts/type_table";

impl TypeTable {
    /// Counts next categories over `streams` (one category-name stream per
    /// user, any number of datasets concatenated). `n` is the sequence length
    /// including the predicted category, so keys hold `n - 1` categories.
    pub fn build(streams: &[Vec<String>], n: usize, k: usize) -> Self {
        assert!(n >= 2, "sequence length must be at least 2");
        assert!(k >= 1, "top-k must be at least 1");
        let key_len = n - 1;
        let acc = streams
            .par_iter()
            .fold(|| Accumulator::new(key_len), |acc, s| acc.add_stream(s))
            .reduce(|| Accumulator::new(key_len), Accumulator::merge);
        Self {
            key_len,
            top_k: k,
            levels: acc.levels,
            global: acc.global,
        }
    }

    pub fn key_len(&self) -> usize {
        self.key_len
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn is_empty(&self) -> bool {
        self.global.is_empty()
    }

    /// Number of full-length keys.
    pub fn len(&self) -> usize {
        self.levels[self.key_len - 1].len()
    }

    /// Exact entry for a full-length key.
    pub fn get(&self, key: &[String]) -> Option<TypeDistribution> {
        if key.len() != self.key_len {
            return None;
        }
        self.at_level(key)
    }

    fn at_level(&self, key: &[String]) -> Option<TypeDistribution> {
        let level = self.levels.get(key.len().checked_sub(1)?)?;
        level
            .get(key)
            .map(|counts| TypeDistribution::from_counts(key.to_vec(), counts, self.top_k))
    }

    pub fn global_marginal(&self) -> TypeDistribution {
        TypeDistribution::from_counts(Vec::new(), &self.global, self.top_k)
    }

    /// The distribution for the last `n - 1` categories of `history`, backing
    /// off to the longest seen suffix and finally to the global marginal.
    pub fn lookup_with_backoff(&self, history: &[String]) -> TypeDistribution {
        let longest = self.key_len.min(history.len());
        (1..=longest)
            .rev()
            .find_map(|len| self.at_level(&history[history.len() - len..]))
            .unwrap_or_else(|| self.global_marginal())
    }

    /// All full-length keys with their distributions, sorted by key.
    pub fn distributions(&self) -> Vec<TypeDistribution> {
        let mut keys: Vec<&Vec<String>> = self.levels[self.key_len - 1].keys().collect();
        keys.sort();
        keys.into_iter().filter_map(|k| self.get(k)).collect()
    }

    /// One stage-1 target sentence per full-length key, sorted by key.
    pub fn emit_stage1_targets(&self) -> Vec<(Vec<String>, PromptSentence)> {
        self.distributions()
            .into_iter()
            .map(|d| {
                let sentence = d.render().expect("table entries have support");
                (d.key, sentence)
            })
            .collect()
    }

    fn rows(&self) -> Vec<TypeTableRow> {
        let mut rows = Vec::new();
        for level in self.levels.iter().rev() {
            let mut keys: Vec<&Vec<String>> = level.keys().collect();
            keys.sort();
            for key in keys {
                rows.push(row(key.clone(), &level[key], self.top_k));
            }
        }
        rows.push(row(Vec::new(), &self.global, self.top_k));
        rows
    }

    /// Writes rows for every key, longest keys first, each level sorted by
    /// key, then the global marginal (empty key).
    pub fn save(&self, path: &Path, config_hash: &str) -> Result<(), ArtifactError> {
        let meta = TableMeta {
            key_len: self.key_len,
            top_k: self.top_k,
        };
        let header = ArtifactHeader::new(TYPE_TABLE_ARTIFACT, config_hash)
            .with_meta(serde_json::to_value(meta).expect("meta serializes"));
        artifact::write_jsonl(path, &header, &self.rows())
    }

    pub fn load(path: &Path, check: HashCheck<'_>) -> Result<Self, ArtifactError> {
        let (header, rows): (_, Vec<TypeTableRow>) = artifact::read_jsonl(path, TYPE_TABLE_ARTIFACT, check)?;
        let malformed = |message: String| ArtifactError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message,
        };
        let meta: TableMeta =
            serde_json::from_value(header.meta).map_err(|e| malformed(format!("bad type-table meta: {e}")))?;
        if meta.key_len == 0 || meta.top_k == 0 {
            return Err(malformed("key_len and top_k must be positive".into()));
        }
        let mut table = Self {
            key_len: meta.key_len,
            top_k: meta.top_k,
            levels: vec![HashMap::new(); meta.key_len],
            global: Counts::new(),
        };
        for r in rows {
            if r.key.is_empty() {
                table.global = r.counts;
            } else if r.key.len() <= meta.key_len {
                table.levels[r.key.len() - 1].insert(r.key, r.counts);
            } else {
                return Err(malformed(format!("key longer than {}", meta.key_len)));
            }
        }
        Ok(table)
    }
}

fn row(key: Vec<String>, counts: &Counts, k: usize) -> TypeTableRow {
    let dist = TypeDistribution::from_counts(key.clone(), counts, k);
    TypeTableRow {
        key,
        support: dist.support_count,
        counts: counts.clone(),
        entries: dist.entries,
    }
}
