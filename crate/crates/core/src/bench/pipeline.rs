use std::collections::BTreeMap;
use std::io::Cursor;
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{BenchError, ComparatorConfig, ConfigDelta, RunConfig};
use crate::comparator::{BiasModel, Comparator, HttpBackend, RelevanceTable, RemoteComparator, SimulatedComparator};
use crate::eval::{build_report, fingerprint, EvalReport, LatencySource, LedgerRow, ReportInputs};
use crate::ingest::{read_corpus, read_queries, read_run};
use crate::model::{Corpus, Provenance, QuerySet, RankedList};
use crate::prompt::{bundled_templates, find_template, parse_templates, PromptTemplate};
use crate::selection::{run_selection, SelectionTrace};

/// Everything a run reads from disk, loaded once and shared across stages.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub corpus: Arc<Corpus>,
    pub queries: QuerySet,
    pub runs: Vec<RankedList>,
    pub relevance: Option<RelevanceTable>,
    pub templates: Vec<PromptTemplate>,
    /// SHA-256 over the raw bytes of every input file.
    pub digest: String,
}

fn read_bytes(path: &Path, hasher: &mut Sha256) -> Result<Vec<u8>, BenchError> {
    let bytes = std::fs::read(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
    hasher.update((bytes.len() as u64).to_le_bytes());
    hasher.update(&bytes);
    Ok(bytes)
}

impl Dataset {
    pub fn load(cfg: &RunConfig) -> Result<Self, BenchError> {
        let mut h = Sha256::new();
        let corpus = read_corpus(Cursor::new(read_bytes(&cfg.corpus, &mut h)?))?;
        for doc in corpus.over_budget(cfg.token_budget) {
            log::warn!(
                "document {:?} declares {} tokens, above the {} token budget",
                doc.id,
                doc.token_count.unwrap_or_default(),
                cfg.token_budget
            );
        }
        let queries = read_queries(Cursor::new(read_bytes(&cfg.queries, &mut h)?))?;
        let runs = read_run(Cursor::new(read_bytes(&cfg.run, &mut h)?), &corpus)?;
        let relevance = match &cfg.comparator {
            ComparatorConfig::Simulated { relevance, .. } => {
                Some(RelevanceTable::read(Cursor::new(read_bytes(relevance, &mut h)?))?)
            }
            ComparatorConfig::Remote(_) => None,
        };
        let templates = match &cfg.templates {
            Some(p) => {
                let text = String::from_utf8(read_bytes(p, &mut h)?)
                    .map_err(|e| BenchError::Config(format!("{}: {e}", p.display())))?;
                parse_templates(&text)?
            }
            None => bundled_templates(),
        };
        Ok(Dataset {
            corpus: Arc::new(corpus),
            queries,
            runs,
            relevance,
            templates,
            digest: hex::encode(h.finalize()),
        })
    }

    fn check_labels(&self) -> Result<(), BenchError> {
        for list in &self.runs {
            let q = self
                .queries
                .get(&list.query_id)
                .ok_or_else(|| BenchError::Config(format!("run references unknown query {:?}", list.query_id)))?;
            if let Some(gold) = &q.gold_doc_id {
                if !self.corpus.contains(gold) {
                    return Err(BenchError::Config(format!(
                        "query {:?}: gold document {gold:?} is not in the corpus",
                        q.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Reranked lists, traces and the aggregated report of one run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: EvalReport,
    pub lists: Vec<RankedList>,
    pub traces: Vec<SelectionTrace>,
}

fn build_comparator(cfg: &RunConfig, data: &Dataset) -> Result<(Arc<dyn Comparator>, LatencySource), BenchError> {
    let template = find_template(&data.templates, &cfg.prompt)?.clone();
    Ok(match &cfg.comparator {
        ComparatorConfig::Simulated { epsilon, beta, .. } => {
            let bias = BiasModel {
                epsilon: *epsilon,
                beta: *beta,
                seed: cfg.seed,
            };
            let relevance = data
                .relevance
                .clone()
                .ok_or_else(|| BenchError::Config("simulated comparator needs a relevance file".into()))?;
            let cmp = SimulatedComparator::new(relevance, bias)?
                .with_cost_model(cfg.cost_model)
                .with_prompt_name(template.name);
            (Arc::new(cmp), LatencySource::Synthetic)
        }
        ComparatorConfig::Remote(remote) => {
            let backend = HttpBackend::new(remote)?;
            (
                Arc::new(RemoteComparator::new(backend, template, data.corpus.clone())),
                LatencySource::WallClock,
            )
        }
    })
}

/// Loads inputs and runs one configuration end to end.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput, BenchError> {
    cfg.validate()?;
    let data = Dataset::load(cfg)?;
    run_on(&data, cfg)
}

/// Runs one configuration over already-loaded inputs.
///
/// Each query is truncated to `top_k`, reranked, and followed by the
/// untouched retriever tail. Queries run on a pool of `cfg.workers` threads;
/// output order is by query id regardless of scheduling.
pub fn run_on(data: &Dataset, cfg: &RunConfig) -> Result<PipelineOutput, BenchError> {
    cfg.validate()?;
    data.check_labels()?;
    let (comparator, latency_source) = build_comparator(cfg, data)?;
    let top_k = NonZeroUsize::new(cfg.top_k).expect("validated");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| BenchError::Config(format!("worker pool: {e}")))?;

    let results: Vec<(RankedList, SelectionTrace, f64)> = pool.install(|| {
        data.runs
            .par_iter()
            .map(|list| {
                let query = data.queries.get(&list.query_id).expect("checked");
                let head = list.truncate_top_k(top_k);
                let started = Instant::now();
                let selection = run_selection(&head, query, comparator.as_ref(), &cfg.selection).map_err(|source| {
                    BenchError::Query {
                        query_id: list.query_id.clone(),
                        source,
                    }
                })?;
                let wall = started.elapsed().as_secs_f64();
                let latency = match latency_source {
                    LatencySource::Synthetic => selection.trace.records.iter().map(|r| r.outcome.latency_seconds).sum(),
                    _ => wall,
                };
                let mut candidates = selection.list.candidates;
                candidates.extend(list.candidates.iter().skip(top_k.get()).cloned());
                let out = RankedList {
                    query_id: list.query_id.clone(),
                    candidates,
                    provenance: Provenance::Reranked,
                };
                Ok((out, selection.trace, latency))
            })
            .collect::<Result<Vec<_>, BenchError>>()
    })?;

    let mut lists = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(results.len());
    let mut latencies = BTreeMap::new();
    for (list, trace, latency) in results {
        latencies.insert(list.query_id.clone(), latency);
        lists.push(list);
        traces.push(trace);
    }

    let report = build_report(&ReportInputs {
        setup: &cfg.setup,
        dataset: &cfg.dataset,
        lists: &lists,
        queries: &data.queries,
        traces: &traces,
        latencies: &latencies,
        latency_source,
        cost_model: &cfg.cost_model,
        recall_ks: &cfg.recall_ks,
        fingerprint: fingerprint(&cfg.fingerprint_view(&data.digest)),
        metadata: cfg.report_metadata(),
    })?;
    Ok(PipelineOutput { report, lists, traces })
}

/// Report for the retriever order alone (no reranking, zero latency).
pub fn retriever_baseline(data: &Dataset, cfg: &RunConfig) -> Result<EvalReport, BenchError> {
    let latencies = BTreeMap::new();
    Ok(build_report(&ReportInputs {
        setup: "retriever only",
        dataset: &cfg.dataset,
        lists: &data.runs,
        queries: &data.queries,
        traces: &[],
        latencies: &latencies,
        latency_source: LatencySource::None,
        cost_model: &cfg.cost_model,
        recall_ks: &cfg.recall_ks,
        fingerprint: fingerprint(&serde_json::json!({ "inputs": data.digest, "baseline": true })),
        metadata: BTreeMap::new(),
    })?)
}

/// One run per Top-K value, sharing inputs and seed.
pub fn sweep_top_k(data: &Dataset, cfg: &RunConfig, k_values: &[usize]) -> Result<Vec<EvalReport>, BenchError> {
    if k_values.is_empty() {
        return Err(BenchError::Config("sweep needs at least one Top-K value".into()));
    }
    k_values
        .iter()
        .map(|&k| {
            let mut c = cfg.clone();
            c.top_k = k;
            c.setup = format!("TopK={k}");
            c.validate()?;
            Ok(run_on(data, &c)?.report)
        })
        .collect()
}

/// Applies `steps` cumulatively on top of `cfg`, running each stage.
/// The first row is `cfg` itself.
pub fn ladder(data: &Dataset, cfg: &RunConfig, steps: &[ConfigDelta]) -> Result<Vec<LedgerRow>, BenchError> {
    let mut stage = cfg.clone();
    let mut reports = vec![run_on(data, &stage)?.report];
    for step in steps {
        stage = step.apply(&stage)?;
        reports.push(run_on(data, &stage)?.report);
    }
    Ok(LedgerRow::chain(reports))
}
