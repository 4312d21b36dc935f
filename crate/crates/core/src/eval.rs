//! Ranking metrics, frequency/recency baselines and reports.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AppId, Dataset};
use crate::pipeline::{timelines, AblationFlags};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("empty test set")]
    Empty,
    #[error("{predictions} predictions for {truths} truths")]
    Misaligned { predictions: usize, truths: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("metric ordering violated: {0}")]
    Ordering(String),
}

fn check_inputs<P>(predictions: &[P], truths: &[AppId], k: usize) -> Result<(), EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if predictions.len() != truths.len() {
        return Err(EvalError::Misaligned {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if truths.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// 1-based rank of `truth` within the first `k` predictions.
pub fn rank_within(prediction: &[AppId], truth: AppId, k: usize) -> Option<usize> {
    prediction.iter().take(k).position(|&a| a == truth).map(|i| i + 1)
}

/// Fraction of cases whose truth is among the first `k` predictions.
pub fn accuracy_at_k<P: AsRef<[AppId]>>(predictions: &[P], truths: &[AppId], k: usize) -> Result<f64, EvalError> {
    check_inputs(predictions, truths, k)?;
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, &t)| rank_within(p.as_ref(), t, k).is_some())
        .count();
    Ok(hits as f64 / truths.len() as f64)
}

/// Mean reciprocal rank with ranks beyond `k` contributing 0.
///
/// Hits are tallied per rank and summed in rank order, so the result does
/// not depend on case order.
pub fn mrr_at_k<P: AsRef<[AppId]>>(predictions: &[P], truths: &[AppId], k: usize) -> Result<f64, EvalError> {
    check_inputs(predictions, truths, k)?;
    let mut per_rank = vec![0u64; k];
    for (p, &t) in predictions.iter().zip(truths) {
        if let Some(r) = rank_within(p.as_ref(), t, k) {
            per_rank[r - 1] += 1;
        }
    }
    let total: f64 = per_rank
        .iter()
        .enumerate()
        .map(|(i, &n)| n as f64 / (i + 1) as f64)
        .sum();
    Ok(total / truths.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "A@1")]
    pub a1: f64,
    #[serde(rename = "A@3")]
    pub a3: f64,
    #[serde(rename = "A@5")]
    pub a5: f64,
    #[serde(rename = "MRR@3")]
    pub mrr3: f64,
    #[serde(rename = "MRR@5")]
    pub mrr5: f64,
}

const EPS: f64 = 1e-12;

impl Metrics {
    pub fn compute<P: AsRef<[AppId]>>(predictions: &[P], truths: &[AppId]) -> Result<Self, EvalError> {
        let m = Self {
            a1: accuracy_at_k(predictions, truths, 1)?,
            a3: accuracy_at_k(predictions, truths, 3)?,
            a5: accuracy_at_k(predictions, truths, 5)?,
            mrr3: mrr_at_k(predictions, truths, 3)?,
            mrr5: mrr_at_k(predictions, truths, 5)?,
        };
        m.check()?;
        Ok(m)
    }

    /// A@1 <= A@3 <= A@5, MRR@3 <= MRR@5 and A@1 <= MRR@k <= A@k.
    pub fn check(&self) -> Result<(), EvalError> {
        let le = |a: f64, b: f64| a <= b + EPS;
        let checks = [
            (le(self.a1, self.a3), "A@1 <= A@3"),
            (le(self.a3, self.a5), "A@3 <= A@5"),
            (le(self.mrr3, self.mrr5), "MRR@3 <= MRR@5"),
            (le(self.a1, self.mrr3), "A@1 <= MRR@3"),
            (le(self.mrr3, self.a3), "MRR@3 <= A@3"),
            (le(self.a1, self.mrr5), "A@1 <= MRR@5"),
            (le(self.mrr5, self.a5), "MRR@5 <= A@5"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, what)) => Err(EvalError::Ordering(format!("{what} fails for {self:?}"))),
            None => Ok(()),
        }
    }
}

/// Per-case predictions of a baseline, in test-case order.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRun {
    pub predictions: Vec<Vec<AppId>>,
    pub truths: Vec<AppId>,
}

/// Most frequently used: the user's training apps by count, ties by id.
pub fn baseline_mfu(dataset: &Dataset, k: usize) -> BaselineRun {
    let mut run = BaselineRun {
        predictions: Vec::new(),
        truths: Vec::new(),
    };
    for tl in timelines(dataset) {
        let mut counts: HashMap<AppId, u64> = HashMap::new();
        for r in tl.train() {
            *counts.entry(r.app_id).or_default() += 1;
        }
        let mut ranked: Vec<(AppId, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let top: Vec<AppId> = ranked.into_iter().take(k).map(|(a, _)| a).collect();
        for pos in tl.test_positions() {
            run.predictions.push(top.clone());
            run.truths.push(tl.records[pos].app_id);
        }
    }
    run
}

/// Most recently used: distinct apps by last use strictly before the test
/// point, over the true stream (earlier test records included).
pub fn baseline_mru(dataset: &Dataset, k: usize) -> BaselineRun {
    let mut run = BaselineRun {
        predictions: Vec::new(),
        truths: Vec::new(),
    };
    for tl in timelines(dataset) {
        for pos in tl.test_positions() {
            let mut recent: Vec<AppId> = Vec::with_capacity(k);
            for r in tl.records[..pos].iter().rev() {
                if recent.len() == k {
                    break;
                }
                if !recent.contains(&r.app_id) {
                    recent.push(r.app_id);
                }
            }
            run.predictions.push(recent);
            run.truths.push(tl.records[pos].app_id);
        }
    }
    run
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    /// Row label, e.g. `two-stage`, `MFU`, `w/o app seq`.
    pub model: String,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flags: Option<AblationFlags>,
    pub k: usize,
    pub cases: usize,
    pub metrics: Metrics,
    /// Wall-clock seconds; logged but never written, so report files stay
    /// byte-identical across runs.
    #[serde(skip)]
    pub elapsed_secs: Option<f64>,
}

/// A plain-text table with one row per report and one column per metric.
pub fn render_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}",
        "model", "A@1", "A@3", "A@5", "M@3", "M@5", "cases"
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 6 * 8));
    for r in reports {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6}",
            r.model, m.a1, m.a3, m.a5, m.mrr3, m.mrr5, r.cases
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<AppId> {
        v.iter().copied().map(AppId).collect()
    }

    #[test]
    fn accuracy_examples() {
        let preds = vec![ids(&[4, 9]), ids(&[9, 4])];
        let truths = ids(&[4, 7]);
        assert_eq!(accuracy_at_k(&preds, &truths, 1).unwrap(), 0.5);
        // App 7 is never predicted, so k = 2 cannot reach 1.0 for these truths.
        assert_eq!(accuracy_at_k(&preds, &truths, 2).unwrap(), 0.5);
        let truths = ids(&[4, 4]);
        assert_eq!(accuracy_at_k(&preds, &truths, 1).unwrap(), 0.5);
        assert_eq!(accuracy_at_k(&preds, &truths, 2).unwrap(), 1.0);
    }

    #[test]
    fn mrr_examples() {
        let preds = vec![ids(&[1, 2, 3, 4, 5]), ids(&[2, 1, 3, 4, 5]), ids(&[2, 3, 4, 1, 5])];
        let truths = ids(&[1, 1, 1]);
        let got = mrr_at_k(&preds, &truths, 5).unwrap();
        assert!((got - 7.0 / 12.0).abs() < 1e-15);
        // Rank 4 falls outside k = 3.
        assert!((mrr_at_k(&preds, &truths, 3).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(mrr_at_k(&preds, &ids(&[9, 9, 9]), 5).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let empty: Vec<Vec<AppId>> = vec![];
        assert_eq!(accuracy_at_k(&empty, &[], 1), Err(EvalError::Empty));
        assert_eq!(mrr_at_k(&empty, &[], 1), Err(EvalError::Empty));
        assert!(matches!(
            accuracy_at_k(&[ids(&[1])], &[], 1),
            Err(EvalError::Misaligned { .. })
        ));
        assert_eq!(accuracy_at_k(&[ids(&[1])], &ids(&[1]), 0), Err(EvalError::ZeroK));
    }

    #[test]
    fn empty_prediction_is_a_miss() {
        let preds = vec![ids(&[]), ids(&[3])];
        let m = Metrics::compute(&preds, &ids(&[3, 3])).unwrap();
        assert_eq!(m.a1, 0.5);
        assert_eq!(m.mrr5, 0.5);
    }

    #[test]
    fn ordering_check_catches_violations() {
        let bad = Metrics {
            a1: 0.6,
            a3: 0.5,
            a5: 0.7,
            mrr3: 0.55,
            mrr5: 0.56,
        };
        assert!(bad.check().is_err());
    }

    #[test]
    fn table_has_one_row_per_report() {
        let m = Metrics {
            a1: 0.1,
            a3: 0.2,
            a5: 0.3,
            mrr3: 0.15,
            mrr5: 0.16,
        };
        let reports: Vec<EvalReport> = ["two-stage", "MFU", "MRU"]
            .iter()
            .map(|name| EvalReport {
                dataset: "d".into(),
                model: name.to_string(),
                backend: "reference".into(),
                flags: None,
                k: 5,
                cases: 10,
                metrics: m,
                elapsed_secs: Some(1.0),
            })
            .collect();
        let table = render_table(&reports);
        assert_eq!(table.lines().count(), 5);
        assert!(table.contains("0.1000"));
        let json = serde_json::to_string(&reports[0]).unwrap();
        assert!(!json.contains("elapsed"));
        assert!(json.contains("\"A@1\":0.1"));
    }
}
