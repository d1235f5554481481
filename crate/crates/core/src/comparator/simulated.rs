use std::collections::HashMap;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ComparatorError, ComparisonOutcome, Direction, SlotAssignment, Winner};
use crate::eval::CostModel;
use crate::ingest::IngestError;
use crate::model::Query;

/// Noise and positional-bias parameters for the simulated comparator.
///
/// Each call first draws `u1`; if `u1 < beta` the answer is slot A no matter
/// the content. Otherwise it draws `u2`; if `u2 < epsilon` the less relevant
/// slot is returned, else the more relevant one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasModel {
    pub epsilon: f64,
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
}

impl BiasModel {
    pub fn oracle(seed: u64) -> Self {
        BiasModel {
            epsilon: 0.0,
            beta: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ComparatorError> {
        for (name, v) in [("epsilon", self.epsilon), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ComparatorError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Hidden per-query relevance grades driving the simulator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelevanceTable {
    by_query: HashMap<String, HashMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceRow {
    pub query_id: String,
    pub doc_id: String,
    pub relevance: f64,
}

impl RelevanceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, relevance: f64) {
        self.by_query
            .entry(query_id.to_owned())
            .or_default()
            .insert(doc_id.to_owned(), relevance);
    }

    pub fn for_query(&self, query_id: &str) -> Option<&HashMap<String, f64>> {
        self.by_query.get(query_id)
    }

    pub fn get(&self, query_id: &str, doc_id: &str) -> Option<f64> {
        self.by_query.get(query_id)?.get(doc_id).copied()
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, IngestError> {
        let mut table = RelevanceTable::new();
        for rec in crate::ingest::records::<RelevanceRow, _>(reader) {
            let (_, row) = rec?;
            table.insert(&row.query_id, &row.doc_id, row.relevance);
        }
        Ok(table)
    }

    /// Rows sorted by query then document, for stable output.
    pub fn rows(&self) -> Vec<RelevanceRow> {
        let mut rows: Vec<RelevanceRow> = self
            .by_query
            .iter()
            .flat_map(|(q, docs)| {
                docs.iter().map(move |(d, r)| RelevanceRow {
                    query_id: q.clone(),
                    doc_id: d.clone(),
                    relevance: *r,
                })
            })
            .collect();
        rows.sort_by(|a, b| (&a.query_id, &a.doc_id).cmp(&(&b.query_id, &b.doc_id)));
        rows
    }
}

/// Answers one comparison from `relevance` under `bias`, consuming draws
/// from `rng` in a fixed order. Equal relevance counts slot A as correct.
pub fn compare_simulated<R: Rng + ?Sized>(
    query: &Query,
    assignment: &SlotAssignment,
    relevance: &HashMap<String, f64>,
    bias: &BiasModel,
    rng: &mut R,
) -> Result<ComparisonOutcome, ComparatorError> {
    let lookup = |doc: &str| {
        relevance
            .get(doc)
            .copied()
            .ok_or_else(|| ComparatorError::MissingRelevance {
                query_id: query.id.clone(),
                doc_id: doc.to_owned(),
            })
    };
    let rel_a = lookup(&assignment.slot_a)?;
    let rel_b = lookup(&assignment.slot_b)?;

    let winner = if rng.gen::<f64>() < bias.beta {
        Winner::A
    } else {
        let correct = if rel_b > rel_a { Winner::B } else { Winner::A };
        if rng.gen::<f64>() < bias.epsilon {
            match correct {
                Winner::A => Winner::B,
                _ => Winner::A,
            }
        } else {
            correct
        }
    };
    Ok(ComparisonOutcome {
        winner,
        raw_response: if winner == Winner::A { "A" } else { "B" }.to_owned(),
        latency_seconds: 0.0,
        output_tokens: 1,
    })
}

/// Deterministic offline comparator. Randomness for each call is derived
/// from `(seed, query_id, slot_a, slot_b, direction)`, so answers do not
/// depend on call order or thread count.
#[derive(Debug, Clone)]
pub struct SimulatedComparator {
    relevance: RelevanceTable,
    bias: BiasModel,
    cost: Option<CostModel>,
    prompt_name: String,
}

impl SimulatedComparator {
    pub fn new(relevance: RelevanceTable, bias: BiasModel) -> Result<Self, ComparatorError> {
        bias.validate()?;
        Ok(SimulatedComparator {
            relevance,
            bias,
            cost: None,
            prompt_name: "simulated".to_owned(),
        })
    }

    /// Stamps each outcome with latency and token counts from `cost`.
    pub fn with_cost_model(mut self, cost: CostModel) -> Self {
        self.cost = Some(cost);
        self
    }

    pub fn with_prompt_name(mut self, name: impl Into<String>) -> Self {
        self.prompt_name = name.into();
        self
    }

    pub fn bias(&self) -> &BiasModel {
        &self.bias
    }

    fn rng_for(&self, query_id: &str, assignment: &SlotAssignment) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.bias.seed.to_le_bytes());
        for part in [query_id, &assignment.slot_a, &assignment.slot_b] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        h.update([match assignment.direction {
            Direction::Forward => 0u8,
            Direction::Mirrored => 1u8,
        }]);
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

impl super::Comparator for SimulatedComparator {
    fn compare(&self, query: &Query, assignment: &SlotAssignment) -> Result<ComparisonOutcome, ComparatorError> {
        let empty = HashMap::new();
        let rel = self.relevance.for_query(&query.id).unwrap_or(&empty);
        let mut rng = self.rng_for(&query.id, assignment);
        let mut outcome = compare_simulated(query, assignment, rel, &self.bias, &mut rng)?;
        if let Some(cost) = &self.cost {
            outcome.output_tokens = cost.tokens_out;
            outcome.latency_seconds = cost.per_call_seconds();
        }
        Ok(outcome)
    }

    fn prompt_name(&self) -> &str {
        &self.prompt_name
    }
}
