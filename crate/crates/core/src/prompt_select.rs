//! Picks the prompt template that answers labelled pairs most accurately
//! under single-token decoding.

use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::comparator::{ComparatorError, CompletionBackend, Winner};
use crate::ingest::IngestError;
use crate::model::{Corpus, QuerySet, RankedList};
use crate::prompt::PromptTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gold {
    A,
    B,
}

impl Gold {
    fn matches(self, winner: Winner) -> bool {
        matches!((self, winner), (Gold::A, Winner::A) | (Gold::B, Winner::B))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub query_text: String,
    pub passage_a: String,
    pub passage_b: String,
    pub gold: Gold,
}

#[derive(Debug, Error)]
pub enum PromptSelectError {
    #[error("no labelled pairs to evaluate")]
    NoPairs,
    #[error("no templates to evaluate")]
    NoTemplates,
    #[error("template {template:?} failed: {source}")]
    Backend {
        template: String,
        #[source]
        source: ComparatorError,
    },
    #[error("every template failed to evaluate")]
    NoViableTemplate { report: Vec<TemplateScore> },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateScore {
    pub name: String,
    /// Absent when evaluation failed.
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSelection {
    pub best_template: String,
    pub best_index: usize,
    pub best_accuracy: f64,
    pub report: Vec<TemplateScore>,
}

/// Share of pairs whose parsed single-token answer equals the gold slot.
/// Unparseable answers count as wrong.
pub fn evaluate_prompt<B: CompletionBackend + ?Sized>(
    template: &PromptTemplate,
    pairs: &[LabeledPair],
    backend: &B,
) -> Result<f64, PromptSelectError> {
    if pairs.is_empty() {
        return Err(PromptSelectError::NoPairs);
    }
    let hits = pairs
        .par_iter()
        .map(|p| {
            let prompt = template.render(&p.query_text, &p.passage_a, &p.passage_b);
            let completion = backend.complete(&prompt)?;
            Ok(usize::from(p.gold.matches(template.parse_response(&completion.text))))
        })
        .collect::<Result<Vec<usize>, ComparatorError>>()
        .map_err(|source| PromptSelectError::Backend {
            template: template.name.clone(),
            source,
        })?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Evaluates templates in order and keeps the first one whose accuracy is
/// strictly greater than every earlier one. Failed templates never win.
pub fn select_prompt<B: CompletionBackend + ?Sized>(
    templates: &[PromptTemplate],
    pairs: &[LabeledPair],
    backend: &B,
) -> Result<PromptSelection, PromptSelectError> {
    if templates.is_empty() {
        return Err(PromptSelectError::NoTemplates);
    }
    if pairs.is_empty() {
        return Err(PromptSelectError::NoPairs);
    }
    let mut report = Vec::with_capacity(templates.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in templates.iter().enumerate() {
        match evaluate_prompt(t, pairs, backend) {
            Ok(acc) => {
                if best.is_none_or(|(_, b)| acc > b) {
                    best = Some((i, acc));
                }
                report.push(TemplateScore {
                    name: t.name.clone(),
                    accuracy: Some(acc),
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("{e}");
                report.push(TemplateScore {
                    name: t.name.clone(),
                    accuracy: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    match best {
        Some((i, acc)) => Ok(PromptSelection {
            best_template: templates[i].name.clone(),
            best_index: i,
            best_accuracy: acc,
            report,
        }),
        None => Err(PromptSelectError::NoViableTemplate { report }),
    }
}

/// Builds one pair per labelled query: the gold passage against a non-gold
/// passage drawn from the same shortlist, with the gold slot chosen by a
/// fair coin. Draws depend only on `seed` and the query id.
pub fn build_labeled_pairs(lists: &[RankedList], queries: &QuerySet, corpus: &Corpus, seed: u64) -> Vec<LabeledPair> {
    let mut pairs = Vec::new();
    for list in lists {
        let Some(query) = queries.get(&list.query_id) else {
            continue;
        };
        let Some(gold_id) = query.gold_doc_id.as_deref() else {
            continue;
        };
        let Some(gold_doc) = corpus.get(gold_id) else { continue };
        let negatives: Vec<&str> = list.doc_ids().filter(|d| *d != gold_id).collect();
        if negatives.is_empty() {
            continue;
        }
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(query.id.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let neg_id = negatives[rng.gen_range(0..negatives.len())];
        let Some(neg_doc) = corpus.get(neg_id) else { continue };
        let (passage_a, passage_b, gold) = if rng.gen_bool(0.5) {
            (gold_doc.text.clone(), neg_doc.text.clone(), Gold::A)
        } else {
            (neg_doc.text.clone(), gold_doc.text.clone(), Gold::B)
        };
        if passage_a == passage_b {
            continue;
        }
        pairs.push(LabeledPair {
            query_text: query.text.clone(),
            passage_a,
            passage_b,
            gold,
        });
    }
    pairs
}

pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<LabeledPair>, IngestError> {
    crate::ingest::records::<LabeledPair, _>(reader)
        .map(|r| r.map(|(_, p)| p))
        .collect()
}
