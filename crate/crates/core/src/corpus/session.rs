use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::UsageRecord;

/// Five minutes. A gap strictly greater than this starts a new session.
pub const DEFAULT_GAP_SECONDS: u64 = 300;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user_id: String,
    pub session_index: usize,
    pub records: Vec<UsageRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseThresholds {
    /// Sessions with more records than this are dropped.
    pub max_session_records: usize,
    /// Users with fewer remaining records than this are dropped.
    pub min_user_records: usize,
}

impl Default for NoiseThresholds {
    fn default() -> Self {
        Self {
            max_session_records: 5000,
            min_user_records: 10,
        }
    }
}

/// Splits one user's time-ordered records into sessions.
pub fn sessionize(user_id: &str, records: Vec<UsageRecord>, gap_seconds: u64) -> Vec<Session> {
    debug_assert!(records.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    let mut sessions: Vec<Session> = Vec::new();
    let mut last_ts = None;
    for record in records {
        let new_session = match last_ts {
            None => true,
            Some(prev) => record.timestamp - prev > gap_seconds,
        };
        last_ts = Some(record.timestamp);
        if new_session {
            sessions.push(Session {
                user_id: user_id.to_string(),
                session_index: sessions.len(),
                records: Vec::new(),
            });
        }
        sessions.last_mut().expect("session opened").records.push(record);
    }
    sessions
}

/// Groups records by user (sorted by user id), orders each user's records by
/// timestamp with ties kept in input order, and sessionizes them.
pub fn sessionize_corpus(records: Vec<UsageRecord>, gap_seconds: u64) -> Vec<Session> {
    let mut by_user: BTreeMap<String, Vec<UsageRecord>> = BTreeMap::new();
    for r in records {
        by_user.entry(r.user_id.clone()).or_default().push(r);
    }
    by_user
        .into_iter()
        .flat_map(|(user, mut recs)| {
            recs.sort_by_key(|r| r.timestamp);
            sessionize(&user, recs, gap_seconds)
        })
        .collect()
}

/// Drops oversized sessions, then users left with too few records.
pub fn filter_noise(sessions: Vec<Session>, thresholds: NoiseThresholds) -> Vec<Session> {
    let kept: Vec<Session> = sessions
        .into_iter()
        .filter(|s| s.records.len() <= thresholds.max_session_records)
        .collect();
    let mut per_user: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &kept {
        *per_user.entry(s.user_id.as_str()).or_default() += s.records.len();
    }
    let dropped: Vec<String> = per_user
        .into_iter()
        .filter(|&(_, n)| n < thresholds.min_user_records)
        .map(|(u, _)| u.to_string())
        .collect();
    kept.into_iter()
        .filter(|s| dropped.binary_search(&s.user_id).is_err())
        .collect()
}
