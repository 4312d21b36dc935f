use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::session::{filter_noise, sessionize, NoiseThresholds, DEFAULT_GAP_SECONDS};
use super::{CorpusError, UsageRecord};

/// Minimum records a user needs for a split: 7/1/2 at n = 10.
const MIN_SPLIT_RECORDS: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSplit {
    pub train: Vec<UsageRecord>,
    pub validation: Vec<UsageRecord>,
    pub test: Vec<UsageRecord>,
}

impl UserSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records in chronological order.
    pub fn timeline(&self) -> impl Iterator<Item = &UsageRecord> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitCorpus {
    pub dataset_id: String,
    /// Keyed by user id, so iteration order is deterministic.
    pub users: BTreeMap<String, UserSplit>,
}

/// Chronological 70/10/20 split of one user's records.
///
/// Sizes are `floor(0.7 n)`, `floor(0.1 n)` and the remainder. Records are
/// stably sorted by timestamp first.
pub fn split_chronological(user_id: &str, mut records: Vec<UsageRecord>) -> Result<UserSplit, CorpusError> {
    let n = records.len();
    if n < MIN_SPLIT_RECORDS {
        return Err(CorpusError::TooFewRecords {
            user: user_id.to_string(),
            records: n,
        });
    }
    records.sort_by_key(|r| r.timestamp);
    // Integer arithmetic avoids 0.7 * n landing just below an integer.
    let n_train = n * 7 / 10;
    let n_val = n / 10;
    let test = records.split_off(n_train + n_val);
    let validation = records.split_off(n_train);
    Ok(UserSplit {
        train: records,
        validation,
        test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub gap_seconds: u64,
    pub thresholds: NoiseThresholds,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            gap_seconds: DEFAULT_GAP_SECONDS,
            thresholds: NoiseThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub records_in: usize,
    pub users_in: usize,
    pub sessions: usize,
    pub sessions_dropped: usize,
    pub users_dropped: usize,
    pub records_out: usize,
}

/// Sessionize, filter and split a parsed log. Users are processed in
/// parallel; the result is ordered by user id regardless of worker count.
pub fn preprocess(
    dataset_id: &str,
    records: Vec<UsageRecord>,
    options: PreprocessOptions,
) -> Result<(SplitCorpus, PreprocessStats), CorpusError> {
    let records_in = records.len();
    let mut by_user: BTreeMap<String, Vec<UsageRecord>> = BTreeMap::new();
    for r in records {
        by_user.entry(r.user_id.clone()).or_default().push(r);
    }
    let users_in = by_user.len();

    let per_user: Vec<(String, usize, usize, Option<Vec<UsageRecord>>)> = by_user
        .into_par_iter()
        .map(|(user, mut recs)| {
            recs.sort_by_key(|r| r.timestamp);
            let sessions = sessionize(&user, recs, options.gap_seconds);
            let total = sessions.len();
            let kept = filter_noise(sessions, options.thresholds);
            let dropped = if kept.is_empty() { 0 } else { total - kept.len() };
            let flat: Vec<UsageRecord> = kept.into_iter().flat_map(|s| s.records).collect();
            let out = (!flat.is_empty()).then_some(flat);
            (user, total, dropped, out)
        })
        .collect();

    let mut stats = PreprocessStats {
        records_in,
        users_in,
        ..PreprocessStats::default()
    };
    let mut users = BTreeMap::new();
    for (user, total, dropped, recs) in per_user {
        stats.sessions += total;
        match recs {
            Some(recs) => {
                stats.sessions_dropped += dropped;
                stats.records_out += recs.len();
                let split = split_chronological(&user, recs)?;
                users.insert(user, split);
            }
            None => stats.users_dropped += 1,
        }
    }
    Ok((
        SplitCorpus {
            dataset_id: dataset_id.to_string(),
            users,
        },
        stats,
    ))
}
