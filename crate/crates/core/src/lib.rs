//! Pairwise reranking for retrieval pipelines.
//!
//! A retriever shortlist is truncated to Top-K, reranked through pairwise
//! comparisons (sliding-window bubble passes, a knockout tournament, or an
//! all-pair round robin), and evaluated with Recall@k alongside measured and
//! modeled latency.
//!
//! ```text
//! run file ─▶ truncate_top_k ─▶ selection ─▶ comparator (remote | simulated)
//!                                   │
//!                                   └─▶ traces ─▶ eval (recall, latency, cost ledger)
//! ```

pub mod bench;
pub mod comparator;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod prompt;
pub mod prompt_select;
pub mod selection;

pub use comparator::{Comparator, ComparatorError, OrderPolicy, Winner};
pub use model::{Candidate, Corpus, Document, Provenance, Query, QuerySet, RankedList};
pub use selection::{run_selection, Selection, SelectionConfig, SelectionTrace, Strategy};
