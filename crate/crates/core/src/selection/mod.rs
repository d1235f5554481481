//! Strategies that turn pairwise verdicts into a reranked list.
//!
//! | strategy        | comparisons           | settles        |
//! |-----------------|-----------------------|----------------|
//! | sliding window  | sum over j of (n - j) | top `m`        |
//! | tournament      | n - 1                 | top 1          |
//! | all pair        | n (n - 1) / 2         | full order     |
//!
//! Under [`OrderPolicy::BothDirections`] every comparison costs two backend
//! calls instead of one.

mod all_pair;
mod sliding;
mod tournament;

pub use all_pair::all_pair_scores;
pub use sliding::{sliding_window_pass, sliding_window_top_m};
pub use tournament::tournament_select;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparator::{
    assign_slots, resolve_pair, Comparator, ComparatorError, ComparisonRecord, OrderPolicy, PairVerdict,
};
use crate::model::{Candidate, Provenance, Query, RankedList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    SlidingWindow,
    Tournament,
    AllPair,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    #[serde(default)]
    pub strategy: Strategy,
    /// Number of leading positions to settle (sliding window only).
    #[serde(default = "one")]
    pub goal_m: usize,
    #[serde(default)]
    pub order_policy: OrderPolicy,
    /// Stop early (and flag the result degraded) after this many comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_comparisons: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            strategy: Strategy::SlidingWindow,
            goal_m: 1,
            order_policy: OrderPolicy::LowerRankFirst,
            max_comparisons: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum Degraded {
    BudgetExhausted,
    ComparatorFailure(String),
}

/// What a strategy did for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub query_id: String,
    pub strategy: Strategy,
    pub order_policy: OrderPolicy,
    /// Pair judgements made; each one costs `calls_per_pair` backend calls.
    pub comparisons_used: usize,
    pub swaps: usize,
    pub rounds: usize,
    /// Pairs judged in each round when comparisons within a round are
    /// independent. Empty for strictly sequential strategies.
    pub round_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<Degraded>,
    /// One record per backend call, in call order.
    pub records: Vec<ComparisonRecord>,
}

impl SelectionTrace {
    pub fn new(query_id: &str, strategy: Strategy, order_policy: OrderPolicy) -> Self {
        SelectionTrace {
            query_id: query_id.to_owned(),
            strategy,
            order_policy,
            comparisons_used: 0,
            swaps: 0,
            rounds: 0,
            round_sizes: Vec::new(),
            degraded: None,
            records: Vec::new(),
        }
    }

    pub fn backend_calls(&self) -> usize {
        self.records.len()
    }

    pub fn is_parallelizable(&self) -> bool {
        !self.round_sizes.is_empty()
    }

    pub fn undecided_calls(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.outcome.winner == crate::comparator::Winner::Undecided)
            .count()
    }
}

/// Output of a strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub list: RankedList,
    pub trace: SelectionTrace,
    /// Round-robin points aligned with `list` (all-pair only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("cannot select from an empty list")]
    EmptyList,
    #[error("goal_m = {goal_m} is outside 1..={len}")]
    GoalOutOfRange { goal_m: usize, len: usize },
    #[error("query {query_id:?}: comparator failed: {source}")]
    Comparator {
        query_id: String,
        #[source]
        source: ComparatorError,
        /// List and trace as they stood when the failure surfaced.
        partial: Box<Selection>,
    },
}

/// Judges pairs for one query and logs every backend call.
pub(crate) struct PairJudge<'a, C: ?Sized> {
    comparator: &'a C,
    query: &'a Query,
    policy: OrderPolicy,
    budget: Option<usize>,
    query_id: Arc<str>,
    prompt_name: Arc<str>,
}

/// A judged pair before it is appended to a trace.
pub(crate) struct Judged {
    pub verdict: PairVerdict,
    pub records: Vec<ComparisonRecord>,
}

impl<'a, C: Comparator + ?Sized> PairJudge<'a, C> {
    pub fn new(comparator: &'a C, query: &'a Query, policy: OrderPolicy, budget: Option<usize>) -> Self {
        PairJudge {
            comparator,
            query,
            policy,
            budget,
            query_id: Arc::from(query.id.as_str()),
            prompt_name: Arc::from(comparator.prompt_name()),
        }
    }

    /// Comparisons still allowed given `used`.
    pub fn remaining(&self, used: usize) -> usize {
        self.budget.map_or(usize::MAX, |b| b.saturating_sub(used))
    }

    /// Runs every call for one pair. `timestamp` numbers the first call.
    pub fn judge(&self, first: &Candidate, second: &Candidate, timestamp: u64) -> Result<Judged, ComparatorError> {
        let mut records = Vec::with_capacity(self.policy.calls_per_pair());
        let verdict = self.judge_into(first, second, timestamp, &mut records)?;
        Ok(Judged { verdict, records })
    }

    /// Like [`PairJudge::judge`] but appends the records to `sink`, which is
    /// left unchanged on error.
    fn judge_into(
        &self,
        first: &Candidate,
        second: &Candidate,
        timestamp: u64,
        sink: &mut Vec<ComparisonRecord>,
    ) -> Result<PairVerdict, ComparatorError> {
        let start = sink.len();
        let forward = assign_slots(first, second, self.policy)?;
        let mirrored = self.policy.is_bidirectional().then(|| forward.mirror());
        for (i, assignment) in std::iter::once(forward).chain(mirrored).enumerate() {
            let outcome = match self.comparator.compare(self.query, &assignment) {
                Ok(o) => o,
                Err(e) => {
                    sink.truncate(start);
                    return Err(e);
                }
            };
            sink.push(ComparisonRecord {
                query_id: Arc::clone(&self.query_id),
                assignment,
                outcome,
                prompt_name: Arc::clone(&self.prompt_name),
                timestamp: timestamp + i as u64,
            });
        }
        Ok(resolve_pair(first, second, &sink[start], sink.get(start + 1)))
    }

    /// Judges one pair and appends its records to `trace`.
    pub fn judge_onto(
        &self,
        first: &Candidate,
        second: &Candidate,
        trace: &mut SelectionTrace,
    ) -> Result<PairVerdict, ComparatorError> {
        let ts = trace.next_timestamp();
        let verdict = self.judge_into(first, second, ts, &mut trace.records)?;
        trace.comparisons_used += 1;
        Ok(verdict)
    }

    /// Judges independent pairs concurrently; results keep `pairs` order and
    /// match what sequential execution would produce.
    pub fn judge_batch(
        &self,
        pairs: &[(&Candidate, &Candidate)],
        first_timestamp: u64,
    ) -> Vec<Result<Judged, ComparatorError>>
    where
        C: Sync,
    {
        let per = self.policy.calls_per_pair() as u64;
        if pairs.len() < 2 || rayon::current_num_threads() < 2 {
            return pairs
                .iter()
                .enumerate()
                .map(|(i, (a, b))| self.judge(a, b, first_timestamp + i as u64 * per))
                .collect();
        }
        pairs
            .par_iter()
            .enumerate()
            .map(|(i, (a, b))| self.judge(a, b, first_timestamp + i as u64 * per))
            .collect()
    }
}

impl SelectionTrace {
    pub(crate) fn absorb(&mut self, judged: Judged) -> PairVerdict {
        self.comparisons_used += 1;
        self.records.extend(judged.records);
        judged.verdict
    }

    pub(crate) fn next_timestamp(&self) -> u64 {
        self.records.len() as u64
    }
}

pub(crate) fn reranked(query_id: &str, candidates: Vec<Candidate>) -> RankedList {
    RankedList {
        query_id: query_id.to_owned(),
        candidates,
        provenance: Provenance::Reranked,
    }
}

pub(crate) fn comparator_failure(
    query_id: &str,
    source: ComparatorError,
    list: RankedList,
    mut trace: SelectionTrace,
    scores: Option<Vec<f64>>,
) -> SelectionError {
    trace.degraded = Some(Degraded::ComparatorFailure(source.to_string()));
    SelectionError::Comparator {
        query_id: query_id.to_owned(),
        source,
        partial: Box::new(Selection { list, trace, scores }),
    }
}

/// Runs the configured strategy on `list`.
pub fn run_selection<C: Comparator + ?Sized>(
    list: &RankedList,
    query: &Query,
    comparator: &C,
    config: &SelectionConfig,
) -> Result<Selection, SelectionError> {
    if list.is_empty() {
        return Err(SelectionError::EmptyList);
    }
    let budget = config.max_comparisons;
    match config.strategy {
        Strategy::SlidingWindow => {
            let m = config.goal_m.min(list.len());
            if config.goal_m == 0 {
                return Err(SelectionError::GoalOutOfRange {
                    goal_m: 0,
                    len: list.len(),
                });
            }
            sliding::run(list, query, comparator, config.order_policy, m, budget)
        }
        Strategy::Tournament => tournament::run(list, query, comparator, config.order_policy, budget),
        Strategy::AllPair => all_pair::run(list, query, comparator, config.order_policy, budget),
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::comparator::{BiasModel, RelevanceTable, SimulatedComparator};

    /// A list whose i-th candidate has hidden relevance `rels[i]`, plus an
    /// oracle comparator over those relevances.
    pub fn fixture(rels: &[f64]) -> (RankedList, Query, SimulatedComparator) {
        fixture_with(rels, BiasModel::oracle(0))
    }

    pub fn fixture_with(rels: &[f64], bias: BiasModel) -> (RankedList, Query, SimulatedComparator) {
        let mut table = RelevanceTable::new();
        let candidates = rels
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let id = format!("d{i}");
                table.insert("q", &id, *r);
                Candidate {
                    doc_id: id.into(),
                    retriever_score: -(i as f64),
                    initial_rank: i + 1,
                }
            })
            .collect();
        let list = RankedList {
            query_id: "q".into(),
            candidates,
            provenance: Provenance::Truncated,
        };
        let query = Query {
            id: "q".into(),
            text: "query".into(),
            gold_doc_id: None,
        };
        (list, query, SimulatedComparator::new(table, bias).unwrap())
    }

    pub fn relevances(list: &RankedList, table_src: &[f64]) -> Vec<f64> {
        list.candidates
            .iter()
            .map(|c| table_src[c.doc_id[1..].parse::<usize>().unwrap()])
            .collect()
    }
}
