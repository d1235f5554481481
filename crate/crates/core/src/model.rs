//! Domain types shared by every stage of the reranking pipeline.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Token budget above which ingestion logs a warning.
pub const DEFAULT_TOKEN_BUDGET: u64 = 512;

/// A passage in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<u64>,
}

/// A user query, optionally labelled with its single relevant document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_doc_id: Option<String>,
}

/// One entry of a retriever shortlist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Shared so that lists, slot assignments and records clone cheaply.
    pub doc_id: Arc<str>,
    pub retriever_score: f64,
    /// 1-based position assigned by the retriever.
    pub initial_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Retriever,
    Truncated,
    Reranked,
}

/// Ordered candidates for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub candidates: Vec<Candidate>,
    pub provenance: Provenance,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| &*c.doc_id)
    }

    /// 1-based position of `doc_id`, if present.
    pub fn position_of(&self, doc_id: &str) -> Option<usize> {
        self.candidates.iter().position(|c| &*c.doc_id == doc_id).map(|i| i + 1)
    }

    /// Keeps the first `k` candidates in their current order. Ranks are preserved.
    pub fn truncate_top_k(&self, k: NonZeroUsize) -> RankedList {
        RankedList {
            query_id: self.query_id.clone(),
            candidates: self.candidates.iter().take(k.get()).cloned().collect(),
            provenance: Provenance::Truncated,
        }
    }
}

/// Documents keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    docs: BTreeMap<String, Document>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a document, handing it back if the id is already taken.
    pub fn insert(&mut self, doc: Document) -> Result<(), Document> {
        if self.docs.contains_key(&doc.id) {
            return Err(doc);
        }
        self.docs.insert(doc.id.clone(), doc);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.docs.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.docs.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    /// Documents whose declared token count exceeds `budget`.
    pub fn over_budget(&self, budget: u64) -> impl Iterator<Item = &Document> {
        self.docs
            .values()
            .filter(move |d| d.token_count.is_some_and(|t| t > budget))
    }
}

/// Queries keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuerySet {
    queries: BTreeMap<String, Query>,
}

impl QuerySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: Query) -> Result<(), Query> {
        if self.queries.contains_key(&query.id) {
            return Err(query);
        }
        self.queries.insert(query.id.clone(), query);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Query> {
        self.queries.get(id)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Query> {
        self.queries.values()
    }
}

impl FromIterator<Query> for QuerySet {
    /// Later duplicates are dropped.
    fn from_iter<I: IntoIterator<Item = Query>>(iter: I) -> Self {
        let mut set = QuerySet::new();
        for q in iter {
            let _ = set.insert(q);
        }
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(n: usize) -> RankedList {
        RankedList {
            query_id: "q".into(),
            candidates: (1..=n)
                .map(|r| Candidate {
                    doc_id: format!("d{r}").into(),
                    retriever_score: 1.0 / r as f64,
                    initial_rank: r,
                })
                .collect(),
            provenance: Provenance::Retriever,
        }
    }

    fn nz(k: usize) -> NonZeroUsize {
        NonZeroUsize::new(k).unwrap()
    }

    #[test]
    fn truncate_25_to_5() {
        let t = list(25).truncate_top_k(nz(5));
        assert_eq!(t.len(), 5);
        let ranks: Vec<_> = t.candidates.iter().map(|c| c.initial_rank).collect();
        assert_eq!(ranks, vec![1, 2, 3, 4, 5]);
        assert_eq!(t.provenance, Provenance::Truncated);
    }

    #[test]
    fn truncate_beyond_length_is_identity() {
        let l = list(3);
        let t = l.truncate_top_k(nz(10));
        assert_eq!(t.candidates, l.candidates);
        let one = list(1).truncate_top_k(nz(1));
        assert_eq!(one.candidates, list(1).candidates);
    }

    #[test]
    fn corpus_rejects_duplicates() {
        let mut c = Corpus::new();
        let d = Document {
            id: "d1".into(),
            text: "x".into(),
            token_count: Some(600),
        };
        c.insert(d.clone()).unwrap();
        assert!(c.insert(d).is_err());
        assert_eq!(c.over_budget(DEFAULT_TOKEN_BUDGET).count(), 1);
    }

    proptest::proptest! {
        #[test]
        fn truncate_is_idempotent_prefix(n in 1usize..40, k in 1usize..50) {
            let l = list(n);
            let once = l.truncate_top_k(nz(k));
            let twice = once.truncate_top_k(nz(k));
            proptest::prop_assert_eq!(&once.candidates, &twice.candidates);
            proptest::prop_assert_eq!(&once.candidates[..], &l.candidates[..k.min(n)]);
        }
    }
}
