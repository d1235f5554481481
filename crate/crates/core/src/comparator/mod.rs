//! Pairwise relevance comparison, the atomic step of pairwise reranking.
//!
//! A comparison places two candidates into prompt slots `A` and `B`
//! ([`assign_slots`]), asks a [`Comparator`] which slot is more relevant, and
//! maps the answer back onto the original pair ([`resolve_pair`]).
//!
//! Two backends ship in-tree:
//!
//! - [`RemoteComparator`] renders a prompt template and sends it to a
//!   completion endpoint limited to a single output token.
//! - [`SimulatedComparator`] answers from a hidden relevance table with a
//!   parametric noise and positional-bias model, deterministic per seed.

mod remote;
mod simulated;

pub use remote::{Completion, CompletionBackend, HttpBackend, RemoteComparator, RemoteConfig};
pub use simulated::{compare_simulated, BiasModel, RelevanceTable, SimulatedComparator};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Candidate, Query};

/// Which prompt slot the backend picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Winner {
    A,
    B,
    Undecided,
}

/// How two candidates are placed into prompt slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderPolicy {
    /// One call per pair; the worse-ranked candidate goes into slot A.
    #[default]
    LowerRankFirst,
    /// One call per pair; the first argument goes into slot A.
    AsGiven,
    /// Two calls per pair, the second with slots mirrored.
    BothDirections,
}

impl OrderPolicy {
    pub fn calls_per_pair(self) -> usize {
        match self {
            OrderPolicy::BothDirections => 2,
            _ => 1,
        }
    }

    pub fn is_bidirectional(self) -> bool {
        self == OrderPolicy::BothDirections
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Mirrored,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotAssignment {
    pub slot_a: Arc<str>,
    pub slot_b: Arc<str>,
    pub policy: OrderPolicy,
    pub direction: Direction,
}

impl SlotAssignment {
    pub fn mirror(&self) -> SlotAssignment {
        SlotAssignment {
            slot_a: self.slot_b.clone(),
            slot_b: self.slot_a.clone(),
            policy: self.policy,
            direction: match self.direction {
                Direction::Forward => Direction::Mirrored,
                Direction::Mirrored => Direction::Forward,
            },
        }
    }

    /// Document id named by `winner`, if decided.
    pub fn doc_for(&self, winner: Winner) -> Option<&str> {
        match winner {
            Winner::A => Some(&self.slot_a),
            Winner::B => Some(&self.slot_b),
            Winner::Undecided => None,
        }
    }
}

/// Places `x` and `y` into slots. Under [`OrderPolicy::BothDirections`] this
/// is the forward assignment; [`SlotAssignment::mirror`] yields the other.
pub fn assign_slots(x: &Candidate, y: &Candidate, policy: OrderPolicy) -> Result<SlotAssignment, ComparatorError> {
    if x.doc_id == y.doc_id {
        return Err(ComparatorError::IdenticalDocument(x.doc_id.to_string()));
    }
    let (a, b) = match policy {
        OrderPolicy::LowerRankFirst if x.initial_rank < y.initial_rank => (y, x),
        _ => (x, y),
    };
    Ok(SlotAssignment {
        slot_a: a.doc_id.clone(),
        slot_b: b.doc_id.clone(),
        policy,
        direction: Direction::Forward,
    })
}

/// Every backend call needed to judge the pair under `policy`.
pub fn plan_calls(x: &Candidate, y: &Candidate, policy: OrderPolicy) -> Result<Vec<SlotAssignment>, ComparatorError> {
    let forward = assign_slots(x, y, policy)?;
    Ok(if policy.is_bidirectional() {
        let mirrored = forward.mirror();
        vec![forward, mirrored]
    } else {
        vec![forward]
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOutcome {
    pub winner: Winner,
    pub raw_response: String,
    pub latency_seconds: f64,
    pub output_tokens: u32,
}

/// One logged backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    /// Shared across every record of a query.
    pub query_id: Arc<str>,
    pub assignment: SlotAssignment,
    pub outcome: ComparisonOutcome,
    pub prompt_name: Arc<str>,
    /// Logical timestamp: 0-based index of the call within its query.
    pub timestamp: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComparatorError {
    #[error("cannot compare document {0:?} with itself")]
    IdenticalDocument(String),
    #[error("no relevance entry for document {doc_id:?} under query {query_id:?}")]
    MissingRelevance { query_id: String, doc_id: String },
    #[error("document {0:?} is not in the corpus")]
    MissingDocument(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    Protocol(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

/// A pairwise relevance oracle. Implementations must be safe to call
/// concurrently; every call is independent.
pub trait Comparator: Send + Sync {
    fn compare(&self, query: &Query, assignment: &SlotAssignment) -> Result<ComparisonOutcome, ComparatorError>;

    /// Template name stamped onto records.
    fn prompt_name(&self) -> &str {
        ""
    }
}

impl<C: Comparator + ?Sized> Comparator for &C {
    fn compare(&self, query: &Query, assignment: &SlotAssignment) -> Result<ComparisonOutcome, ComparatorError> {
        (**self).compare(query, assignment)
    }

    fn prompt_name(&self) -> &str {
        (**self).prompt_name()
    }
}

impl<C: Comparator + ?Sized> Comparator for std::sync::Arc<C> {
    fn compare(&self, query: &Query, assignment: &SlotAssignment) -> Result<ComparisonOutcome, ComparatorError> {
        (**self).compare(query, assignment)
    }

    fn prompt_name(&self) -> &str {
        (**self).prompt_name()
    }
}

/// Result of judging an unordered pair, relative to the `(first, second)`
/// argument order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairVerdict {
    FirstWins,
    SecondWins,
    Tie,
}

impl PairVerdict {
    /// Whether `first` is kept ahead of `second`. Ties go to the better
    /// (smaller) initial rank.
    pub fn first_preferred(self, first: &Candidate, second: &Candidate) -> bool {
        match self {
            PairVerdict::FirstWins => true,
            PairVerdict::SecondWins => false,
            PairVerdict::Tie => first.initial_rank <= second.initial_rank,
        }
    }
}

/// Maps slot-level answers back onto `(first, second)`.
///
/// With a single record the answered slot decides, `Undecided` is a tie.
/// With two records both must name the same document, anything else ties.
pub fn resolve_pair(
    first: &Candidate,
    second: &Candidate,
    forward: &ComparisonRecord,
    backward: Option<&ComparisonRecord>,
) -> PairVerdict {
    fn pick(rec: &ComparisonRecord) -> Option<&str> {
        rec.assignment.doc_for(rec.outcome.winner)
    }
    let chosen = match backward {
        None => pick(forward),
        Some(back) => match (pick(forward), pick(back)) {
            (Some(f), Some(b)) if f == b => Some(f),
            _ => None,
        },
    };
    match chosen {
        Some(id) if id == &*first.doc_id => PairVerdict::FirstWins,
        Some(id) if id == &*second.doc_id => PairVerdict::SecondWins,
        _ => PairVerdict::Tie,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: &str, rank: usize) -> Candidate {
        Candidate {
            doc_id: id.into(),
            retriever_score: 0.0,
            initial_rank: rank,
        }
    }

    fn record(assignment: SlotAssignment, winner: Winner) -> ComparisonRecord {
        ComparisonRecord {
            query_id: "q".into(),
            assignment,
            outcome: ComparisonOutcome {
                winner,
                raw_response: String::new(),
                latency_seconds: 0.0,
                output_tokens: 1,
            },
            prompt_name: "".into(),
            timestamp: 0,
        }
    }

    #[test]
    fn lower_rank_first_puts_worse_rank_in_a() {
        let x = cand("x", 2);
        let y = cand("y", 5);
        let s = assign_slots(&x, &y, OrderPolicy::LowerRankFirst).unwrap();
        assert_eq!((&*s.slot_a, &*s.slot_b), ("y", "x"));
        let s = assign_slots(&y, &x, OrderPolicy::LowerRankFirst).unwrap();
        assert_eq!((&*s.slot_a, &*s.slot_b), ("y", "x"));
    }

    #[test]
    fn as_given_keeps_order() {
        let s = assign_slots(&cand("x", 2), &cand("y", 5), OrderPolicy::AsGiven).unwrap();
        assert_eq!(&*s.slot_a, "x");
    }

    #[test]
    fn identical_document_rejected() {
        let x = cand("x", 2);
        assert_eq!(
            assign_slots(&x, &x, OrderPolicy::AsGiven),
            Err(ComparatorError::IdenticalDocument("x".into()))
        );
    }

    #[test]
    fn both_directions_plans_mirror() {
        let calls = plan_calls(&cand("x", 2), &cand("y", 5), OrderPolicy::BothDirections).unwrap();
        assert_eq!(calls.len(), 2);
        assert_eq!(&*calls[0].slot_a, "x");
        assert_eq!(&*calls[1].slot_a, "y");
        assert_eq!(calls[1].direction, Direction::Mirrored);
        assert_eq!(
            plan_calls(&cand("x", 2), &cand("y", 5), OrderPolicy::LowerRankFirst)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn one_directional_unmaps_slot() {
        // Lower-ranked doc sits in A; B wins, so the better retriever rank wins.
        let first = cand("x", 2);
        let second = cand("y", 5);
        let s = assign_slots(&first, &second, OrderPolicy::LowerRankFirst).unwrap();
        let v = resolve_pair(&first, &second, &record(s, Winner::B), None);
        assert_eq!(v, PairVerdict::FirstWins);
    }

    #[test]
    fn both_directions_agreement() {
        let first = cand("d3", 3);
        let second = cand("d7", 7);
        let f = assign_slots(&first, &second, OrderPolicy::BothDirections).unwrap();
        let b = f.mirror();
        let v = resolve_pair(&first, &second, &record(f, Winner::B), Some(&record(b, Winner::A)));
        assert_eq!(v, PairVerdict::SecondWins);
    }

    /// Brute-force table over all 3x3 answer combinations in both-directions mode.
    #[test]
    fn both_directions_resolution_table() {
        let first = cand("p", 4);
        let second = cand("q", 2);
        let f = assign_slots(&first, &second, OrderPolicy::BothDirections).unwrap();
        let b = f.mirror();
        let answers = [Winner::A, Winner::B, Winner::Undecided];
        for wf in answers {
            for wb in answers {
                // Independent oracle: which doc does each direction name?
                let named_f = match wf {
                    Winner::A => Some("p"),
                    Winner::B => Some("q"),
                    Winner::Undecided => None,
                };
                let named_b = match wb {
                    Winner::A => Some("q"),
                    Winner::B => Some("p"),
                    Winner::Undecided => None,
                };
                let expected = match (named_f, named_b) {
                    (Some("p"), Some("p")) => PairVerdict::FirstWins,
                    (Some("q"), Some("q")) => PairVerdict::SecondWins,
                    _ => PairVerdict::Tie,
                };
                let got = resolve_pair(&first, &second, &record(f.clone(), wf), Some(&record(b.clone(), wb)));
                assert_eq!(got, expected, "forward {wf:?}, backward {wb:?}");
                let keeps_first = got.first_preferred(&first, &second);
                if got == PairVerdict::Tie {
                    // "q" has the better initial rank.
                    assert!(!keeps_first);
                }
            }
        }
    }

    #[test]
    fn undecided_one_direction_ties_to_better_rank() {
        let first = cand("x", 5);
        let second = cand("y", 1);
        let s = assign_slots(&first, &second, OrderPolicy::AsGiven).unwrap();
        let v = resolve_pair(&first, &second, &record(s, Winner::Undecided), None);
        assert_eq!(v, PairVerdict::Tie);
        assert!(!v.first_preferred(&first, &second));
        assert!(v.first_preferred(&second, &first));
    }
}
