use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{mean, modeled_query_latency, percentile, recall_at_k, speedup_factor, CostModel, EvalError};
use crate::model::{QuerySet, RankedList};
use crate::selection::SelectionTrace;

pub const DEFAULT_RECALL_KS: [usize; 5] = [1, 3, 5, 10, 25];

/// Where per-query latencies in a report come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencySource {
    /// No reranking stage ran.
    None,
    /// Wall-clock time around the reranking stage.
    WallClock,
    /// Sum of latencies reported by a simulated comparator.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setup: String,
    pub dataset: String,
    pub recall_at: BTreeMap<usize, f64>,
    pub query_count: usize,
    /// Queries with a gold document; recall is computed over these only.
    pub labeled_query_count: usize,
    pub latency_source: LatencySource,
    pub mean_latency_s: f64,
    pub p50_latency_s: f64,
    pub p95_latency_s: f64,
    pub modeled_latency_mean_s: f64,
    pub comparisons_per_query_mean: f64,
    pub backend_calls_per_query_mean: f64,
    pub undecided_rate: f64,
    pub degraded_queries: usize,
    pub config_fingerprint: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

pub struct ReportInputs<'a> {
    pub setup: &'a str,
    pub dataset: &'a str,
    pub lists: &'a [RankedList],
    pub queries: &'a QuerySet,
    /// Empty for a retriever-only baseline.
    pub traces: &'a [SelectionTrace],
    /// Per-query measured latency; empty for a retriever-only baseline.
    pub latencies: &'a BTreeMap<String, f64>,
    pub latency_source: LatencySource,
    pub cost_model: &'a CostModel,
    pub recall_ks: &'a [usize],
    pub fingerprint: String,
    pub metadata: BTreeMap<String, String>,
}

/// SHA-256 over the canonical JSON encoding of `config`.
pub fn fingerprint<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

pub fn build_report(inputs: &ReportInputs<'_>) -> Result<EvalReport, EvalError> {
    let list_ids: BTreeSet<&str> = inputs.lists.iter().map(|l| l.query_id.as_str()).collect();
    if !inputs.traces.is_empty() {
        let trace_ids: BTreeSet<&str> = inputs.traces.iter().map(|t| t.query_id.as_str()).collect();
        if trace_ids != list_ids || inputs.traces.len() != inputs.lists.len() {
            return Err(EvalError::QuerySetMismatch {
                left: "ranked lists",
                right: "traces",
            });
        }
    }
    if !inputs.latencies.is_empty() {
        let lat_ids: BTreeSet<&str> = inputs.latencies.keys().map(String::as_str).collect();
        if lat_ids != list_ids {
            return Err(EvalError::QuerySetMismatch {
                left: "ranked lists",
                right: "latencies",
            });
        }
    }

    let mut ks: Vec<usize> = inputs.recall_ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut labeled = Vec::with_capacity(inputs.lists.len());
    for list in inputs.lists {
        let query = inputs
            .queries
            .get(&list.query_id)
            .ok_or_else(|| EvalError::UnknownQuery(list.query_id.clone()))?;
        if query.gold_doc_id.is_some() {
            labeled.push(list.clone());
        }
    }
    let recall_at = if labeled.is_empty() {
        BTreeMap::new()
    } else {
        ks.iter()
            .map(|&k| recall_at_k(&labeled, inputs.queries, k).map(|r| (k, r)))
            .collect::<Result<BTreeMap<_, _>, _>>()?
    };

    let latencies: Vec<f64> = inputs.latencies.values().copied().collect();
    let total_calls: usize = inputs.traces.iter().map(|t| t.backend_calls()).sum();
    let undecided: usize = inputs.traces.iter().map(|t| t.undecided_calls()).sum();

    Ok(EvalReport {
        setup: inputs.setup.to_owned(),
        dataset: inputs.dataset.to_owned(),
        recall_at,
        query_count: inputs.lists.len(),
        labeled_query_count: labeled.len(),
        latency_source: if inputs.traces.is_empty() {
            LatencySource::None
        } else {
            inputs.latency_source
        },
        mean_latency_s: mean(latencies.iter().copied()),
        p50_latency_s: percentile(&latencies, 50.0),
        p95_latency_s: percentile(&latencies, 95.0),
        modeled_latency_mean_s: mean(
            inputs
                .traces
                .iter()
                .map(|t| modeled_query_latency(t, inputs.cost_model, t.order_policy.is_bidirectional())),
        ),
        comparisons_per_query_mean: mean(inputs.traces.iter().map(|t| t.comparisons_used as f64)),
        backend_calls_per_query_mean: mean(inputs.traces.iter().map(|t| t.backend_calls() as f64)),
        undecided_rate: if total_calls == 0 {
            0.0
        } else {
            undecided as f64 / total_calls as f64
        },
        degraded_queries: inputs.traces.iter().filter(|t| t.degraded.is_some()).count(),
        config_fingerprint: inputs.fingerprint.clone(),
        metadata: inputs.metadata.clone(),
    })
}

/// One report plus its speedup relative to the previous row and the first row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub report: EvalReport,
    /// Modeled latency of the previous row over this row's.
    pub speedup_factor: Option<f64>,
    /// Modeled latency of the first row over this row's.
    pub cumulative_speedup: Option<f64>,
    /// Same as `speedup_factor`, on measured mean latency.
    pub measured_speedup_factor: Option<f64>,
}

impl LedgerRow {
    pub fn chain(reports: Vec<EvalReport>) -> Vec<LedgerRow> {
        let first = reports.first().map(|r| r.modeled_latency_mean_s);
        let mut prev: Option<(f64, f64)> = None;
        reports
            .into_iter()
            .map(|report| {
                let modeled = report.modeled_latency_mean_s;
                let measured = report.mean_latency_s;
                let row = LedgerRow {
                    speedup_factor: prev.and_then(|(m, _)| speedup_factor(m, modeled).ok()),
                    cumulative_speedup: prev.and(first).and_then(|f| speedup_factor(f, modeled).ok()),
                    measured_speedup_factor: prev.and_then(|(_, s)| speedup_factor(s, measured).ok()),
                    report,
                };
                prev = Some((modeled, measured));
                row
            })
            .collect()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Flat CSV, one row per configuration.
pub fn write_ledger_csv<W: Write>(rows: &[LedgerRow], ks: &[usize], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["setup".to_owned(), "dataset".to_owned()];
    header.extend(ks.iter().map(|k| format!("recall@{k}")));
    header.extend(
        [
            "latency_s",
            "latency_p50_s",
            "modeled_latency_s",
            "comparisons_per_query",
            "speedup_factor",
            "cumulative_speedup",
            "measured_speedup_factor",
        ]
        .map(str::to_owned),
    );
    w.write_record(&header)?;
    for row in rows {
        let r = &row.report;
        let mut rec = vec![r.setup.clone(), r.dataset.clone()];
        rec.extend(
            ks.iter()
                .map(|k| r.recall_at.get(k).map(|v| format!("{v:.4}")).unwrap_or_default()),
        );
        rec.push(format!("{:.6}", r.mean_latency_s));
        rec.push(format!("{:.6}", r.p50_latency_s));
        rec.push(format!("{:.6}", r.modeled_latency_mean_s));
        rec.push(format!("{:.3}", r.comparisons_per_query_mean));
        rec.push(opt(row.speedup_factor));
        rec.push(opt(row.cumulative_speedup));
        rec.push(opt(row.measured_speedup_factor));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
