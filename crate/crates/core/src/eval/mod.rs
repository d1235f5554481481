//! Recall@k, latency statistics, the analytic cost model, and speedup ledgers.

mod cost;
mod report;

pub use cost::{calibrate, modeled_query_latency, CostFit, CostModel};
pub use report::{
    build_report, fingerprint, write_ledger_csv, EvalReport, LatencySource, LedgerRow, ReportInputs, DEFAULT_RECALL_KS,
};

use thiserror::Error;

use crate::model::{QuerySet, RankedList};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("query {0:?} has no gold document")]
    MissingGold(String),
    #[error("query {0:?} is not in the query set")]
    UnknownQuery(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no ranked lists to evaluate")]
    NoQueries,
    #[error("latencies must be positive (got before = {before}, after = {after})")]
    NonPositiveLatency { before: f64, after: f64 },
    #[error("query sets differ between {left} and {right}")]
    QuerySetMismatch { left: &'static str, right: &'static str },
    #[error("calibration needs at least one record")]
    NoRecords,
}

/// Fraction of lists whose query's gold document sits in the first `k` positions.
pub fn recall_at_k(lists: &[RankedList], queries: &QuerySet, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if lists.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let mut hits = 0usize;
    for list in lists {
        let gold = gold_of(queries, &list.query_id)?;
        if list.candidates.iter().take(k).any(|c| &*c.doc_id == gold) {
            hits += 1;
        }
    }
    Ok(hits as f64 / lists.len() as f64)
}

pub(crate) fn gold_of<'q>(queries: &'q QuerySet, query_id: &str) -> Result<&'q str, EvalError> {
    queries
        .get(query_id)
        .ok_or_else(|| EvalError::UnknownQuery(query_id.to_owned()))?
        .gold_doc_id
        .as_deref()
        .ok_or_else(|| EvalError::MissingGold(query_id.to_owned()))
}

/// Ratio `before / after`.
pub fn speedup_factor(before_s: f64, after_s: f64) -> Result<f64, EvalError> {
    if !(before_s > 0.0 && after_s > 0.0) {
        return Err(EvalError::NonPositiveLatency {
            before: before_s,
            after: after_s,
        });
    }
    Ok(before_s / after_s)
}

/// Nearest-rank percentile (`p` in `(0, 100]`); 0 for an empty sample.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
