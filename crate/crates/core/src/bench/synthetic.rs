//! Seeded synthetic corpora for desk-scale experiments.
//!
//! Every query gets one gold document, a retriever shortlist with the gold
//! placed at a chosen rank (or left out), and hidden relevances in which the
//! gold document beats every other shortlisted document by at least `margin`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BenchError, ComparatorConfig, RunConfig};
use crate::comparator::RelevanceTable;
use crate::ingest::{write_jsonl, RunRow};
use crate::model::{Document, Query};

/// Where the gold document lands in each query's shortlist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoldPlacement {
    /// Uniform over ranks `1..=shortlist`.
    Uniform,
    /// `P(rank = r)` proportional to `(1 - p)^(r - 1)`, truncated to the shortlist.
    Geometric {
        p: f64,
    },
    Fixed {
        rank: usize,
    },
    /// Per-query ranks; `None` leaves the gold out of the shortlist.
    Explicit {
        ranks: Vec<Option<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub docs: usize,
    pub queries: usize,
    pub shortlist: usize,
    pub placement: GoldPlacement,
    /// Share of queries whose gold is missing from the shortlist (ignored
    /// for explicit placement).
    #[serde(default)]
    pub absent_rate: f64,
    /// Minimum relevance gap between the gold and any other document.
    pub margin: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            docs: 5000,
            queries: 500,
            shortlist: 25,
            placement: GoldPlacement::Geometric { p: 0.35 },
            absent_rate: 0.1,
            margin: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub documents: Vec<Document>,
    pub queries: Vec<Query>,
    pub run: Vec<RunRow>,
    pub relevance: RelevanceTable,
    /// Gold rank per query id; `None` when left out of the shortlist.
    pub gold_ranks: BTreeMap<String, Option<usize>>,
}

impl SyntheticData {
    /// Queries whose gold document sits within the first `k` retriever ranks.
    pub fn gold_within(&self, k: usize) -> usize {
        self.gold_ranks.values().filter(|r| r.is_some_and(|r| r <= k)).count()
    }
}

const VOCAB: &[&str] = &[
    "account",
    "balance",
    "card",
    "claim",
    "deposit",
    "dispute",
    "fee",
    "form",
    "loan",
    "limit",
    "login",
    "mobile",
    "order",
    "password",
    "payment",
    "policy",
    "rate",
    "refund",
    "reset",
    "service",
    "statement",
    "support",
    "transfer",
    "update",
    "verify",
    "wire",
];

fn words<R: Rng>(rng: &mut R, n: usize) -> String {
    (0..n)
        .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData, BenchError> {
    let bad = |m: &str| Err(BenchError::Config(format!("synthetic: {m}")));
    if spec.shortlist == 0 || spec.queries == 0 {
        return bad("queries and shortlist must be positive");
    }
    if spec.docs < spec.shortlist + 1 {
        return bad("need more documents than the shortlist size");
    }
    if !(0.0..1.0).contains(&spec.margin) {
        return bad("margin must lie in [0, 1)");
    }
    if !(0.0..=1.0).contains(&spec.absent_rate) {
        return bad("absent_rate must lie in [0, 1]");
    }
    let weights: Option<WeightedIndex<f64>> = match &spec.placement {
        GoldPlacement::Uniform => Some(WeightedIndex::new(vec![1.0; spec.shortlist]).unwrap()),
        GoldPlacement::Geometric { p } => {
            if !(*p > 0.0 && *p <= 1.0) {
                return bad("geometric p must lie in (0, 1]");
            }
            let w: Vec<f64> = (0..spec.shortlist).map(|r| (1.0 - p).powi(r as i32)).collect();
            Some(WeightedIndex::new(w).map_err(|e| BenchError::Config(e.to_string()))?)
        }
        GoldPlacement::Fixed { rank } => {
            if *rank == 0 || *rank > spec.shortlist {
                return bad("fixed rank must lie within the shortlist");
            }
            None
        }
        GoldPlacement::Explicit { ranks } => {
            if ranks.len() != spec.queries {
                return bad("explicit ranks must list one entry per query");
            }
            if ranks.iter().flatten().any(|&r| r == 0 || r > spec.shortlist) {
                return bad("explicit ranks must lie within the shortlist");
            }
            None
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let documents: Vec<Document> = (0..spec.docs)
        .map(|i| {
            let n = rng.gen_range(24..64);
            Document {
                id: format!("doc{i:05}"),
                text: format!("doc{i:05} {}", words(&mut rng, n)),
                token_count: Some(n as u64 + 1),
            }
        })
        .collect();

    let absent_count = match spec.placement {
        GoldPlacement::Explicit { .. } => 0,
        _ => (spec.absent_rate * spec.queries as f64).round() as usize,
    };
    let absent: Vec<bool> = {
        let mut flags = vec![false; spec.queries];
        for i in sample(&mut rng, spec.queries, absent_count) {
            flags[i] = true;
        }
        flags
    };

    let mut queries = Vec::with_capacity(spec.queries);
    let mut run = Vec::with_capacity(spec.queries * spec.shortlist);
    let mut relevance = RelevanceTable::new();
    let mut gold_ranks = BTreeMap::new();
    let step = 0.8 / spec.shortlist as f64;

    for qi in 0..spec.queries {
        let qid = format!("q{qi:04}");
        let gold = rng.gen_range(0..spec.docs);
        let rank = match &spec.placement {
            _ if absent[qi] => None,
            GoldPlacement::Explicit { ranks } => ranks[qi],
            GoldPlacement::Fixed { rank } => Some(*rank),
            _ => Some(weights.as_ref().unwrap().sample(&mut rng) + 1),
        };
        // Distractors: distinct non-gold documents.
        let mut others: Vec<usize> = sample(&mut rng, spec.docs - 1, spec.shortlist)
            .into_iter()
            .map(|d| if d >= gold { d + 1 } else { d })
            .collect();
        if let Some(r) = rank {
            others.truncate(spec.shortlist - 1);
            others.insert(r - 1, gold);
        }
        let n_words = rng.gen_range(4..10);
        queries.push(Query {
            id: qid.clone(),
            text: words(&mut rng, n_words),
            gold_doc_id: Some(documents[gold].id.clone()),
        });
        relevance.insert(&qid, &documents[gold].id, 1.0);
        for (pos, &d) in others.iter().enumerate() {
            let doc_id = &documents[d].id;
            run.push(RunRow {
                query_id: qid.clone(),
                doc_id: doc_id.clone(),
                score: 1.0 - step * pos as f64,
            });
            if d != gold {
                relevance.insert(&qid, doc_id, rng.gen_range(0.0..1.0 - spec.margin));
            }
        }
        gold_ranks.insert(qid, rank);
    }

    Ok(SyntheticData {
        documents,
        queries,
        run,
        relevance,
        gold_ranks,
    })
}

/// Manifest written next to generated files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SyntheticSpec,
    pub gold_absent: usize,
    /// Count of queries whose gold sits at each retriever rank.
    pub gold_rank_histogram: BTreeMap<usize, usize>,
}

/// Writes `corpus.jsonl`, `queries.jsonl`, `run.jsonl`, `relevance.jsonl`,
/// `manifest.json` and a ready-to-run `config.json` into `dir`.
pub fn write_dataset(data: &SyntheticData, spec: &SyntheticSpec, dir: &Path) -> Result<PathBuf, BenchError> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::Io(format!("{}: {e}", dir.display())))?;
    let create = |name: &str| -> Result<BufWriter<File>, BenchError> {
        let p = dir.join(name);
        File::create(&p)
            .map(BufWriter::new)
            .map_err(|e| BenchError::Io(format!("{}: {e}", p.display())))
    };
    let io = |e: std::io::Error| BenchError::Io(e.to_string());
    write_jsonl(create("corpus.jsonl")?, &data.documents).map_err(io)?;
    write_jsonl(create("queries.jsonl")?, &data.queries).map_err(io)?;
    write_jsonl(create("run.jsonl")?, &data.run).map_err(io)?;
    write_jsonl(create("relevance.jsonl")?, data.relevance.rows()).map_err(io)?;

    let mut histogram = BTreeMap::new();
    for r in data.gold_ranks.values().flatten() {
        *histogram.entry(*r).or_insert(0) += 1;
    }
    let manifest = Manifest {
        spec: spec.clone(),
        gold_absent: data.gold_ranks.values().filter(|r| r.is_none()).count(),
        gold_rank_histogram: histogram,
    };
    serde_json::to_writer_pretty(create("manifest.json")?, &manifest).map_err(|e| BenchError::Io(e.to_string()))?;

    let config = RunConfig {
        dataset: "synthetic".into(),
        setup: "pairwise".into(),
        corpus: "corpus.jsonl".into(),
        queries: "queries.jsonl".into(),
        run: "run.jsonl".into(),
        top_k: spec.shortlist.min(5),
        selection: Default::default(),
        comparator: ComparatorConfig::Simulated {
            relevance: "relevance.jsonl".into(),
            epsilon: 0.0,
            beta: 0.0,
        },
        prompt: crate::prompt::DEFAULT_TEMPLATE.into(),
        templates: None,
        cost_model: Default::default(),
        seed: spec.seed,
        recall_ks: crate::eval::DEFAULT_RECALL_KS.to_vec(),
        token_budget: crate::model::DEFAULT_TOKEN_BUDGET,
        metadata: BTreeMap::new(),
        workers: 1,
        output: None,
        sweep_k: vec![],
        ladder: vec![],
    };
    let config_path = dir.join("config.json");
    serde_json::to_writer_pretty(create("config.json")?, &config).map_err(|e| BenchError::Io(e.to_string()))?;
    Ok(config_path)
}
