//! Line-delimited JSON readers for corpus, query, and retriever run files.
//!
//! Every reader skips blank lines, ignores unknown fields, and reports errors
//! with the 1-based physical line number.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Candidate, Corpus, Document, Provenance, Query, QuerySet, RankedList};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: invalid JSON record: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: empty {field}")]
    Empty { line: usize, field: &'static str },
    #[error("line {line}: query {query_id:?} references unknown document {doc_id:?}")]
    UnresolvedDoc {
        line: usize,
        query_id: String,
        doc_id: String,
    },
    #[error("line {line}: duplicate run row for query {query_id:?}, document {doc_id:?}")]
    DuplicatePair {
        line: usize,
        query_id: String,
        doc_id: String,
    },
    #[error("line {line}: score for document {doc_id:?} is not finite")]
    NonFiniteScore { line: usize, doc_id: String },
}

/// One row of a retriever run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub query_id: String,
    pub doc_id: String,
    pub score: f64,
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path).map(BufReader::new).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Yields `(line_number, parsed_record)` for each non-blank line.
pub(crate) fn records<T, R>(reader: R) -> impl Iterator<Item = Result<(usize, T), IngestError>>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    reader.lines().enumerate().filter_map(|(idx, line)| {
        let line_no = idx + 1;
        match line {
            Err(source) => Some(Err(IngestError::Io {
                path: PathBuf::from("<stream>"),
                source,
            })),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(
                serde_json::from_str::<T>(&l)
                    .map(|rec| (line_no, rec))
                    .map_err(|source| IngestError::Parse { line: line_no, source }),
            ),
        }
    })
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus, IngestError> {
    let mut corpus = Corpus::new();
    for rec in records::<Document, _>(reader) {
        let (line, doc) = rec?;
        if doc.id.is_empty() {
            return Err(IngestError::Empty { line, field: "id" });
        }
        if doc.text.is_empty() {
            return Err(IngestError::Empty { line, field: "text" });
        }
        corpus
            .insert(doc)
            .map_err(|doc| IngestError::DuplicateId { line, id: doc.id })?;
    }
    Ok(corpus)
}

/// Loads a corpus file, warning about documents declared longer than `token_budget`.
pub fn load_corpus_with_budget(path: &Path, token_budget: u64) -> Result<Corpus, IngestError> {
    let corpus = read_corpus(open(path)?)?;
    for doc in corpus.over_budget(token_budget) {
        log::warn!(
            "document {:?} declares {} tokens, above the {} token budget",
            doc.id,
            doc.token_count.unwrap_or_default(),
            token_budget
        );
    }
    Ok(corpus)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, IngestError> {
    load_corpus_with_budget(path, crate::model::DEFAULT_TOKEN_BUDGET)
}

pub fn read_queries<R: BufRead>(reader: R) -> Result<QuerySet, IngestError> {
    let mut set = QuerySet::new();
    for rec in records::<Query, _>(reader) {
        let (line, query) = rec?;
        if query.id.is_empty() {
            return Err(IngestError::Empty { line, field: "id" });
        }
        set.insert(query)
            .map_err(|q| IngestError::DuplicateId { line, id: q.id })?;
    }
    Ok(set)
}

pub fn load_queries(path: &Path) -> Result<QuerySet, IngestError> {
    read_queries(open(path)?)
}

/// Groups run rows per query, orders each group by descending score (ties by
/// ascending doc id) and assigns initial ranks 1..n. Lists come back ordered
/// by query id.
pub fn read_run<R: BufRead>(reader: R, corpus: &Corpus) -> Result<Vec<RankedList>, IngestError> {
    let mut groups: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for rec in records::<RunRow, _>(reader) {
        let (line, row) = rec?;
        if !corpus.contains(&row.doc_id) {
            return Err(IngestError::UnresolvedDoc {
                line,
                query_id: row.query_id,
                doc_id: row.doc_id,
            });
        }
        if !row.score.is_finite() {
            return Err(IngestError::NonFiniteScore {
                line,
                doc_id: row.doc_id,
            });
        }
        if !seen.insert((row.query_id.clone(), row.doc_id.clone())) {
            return Err(IngestError::DuplicatePair {
                line,
                query_id: row.query_id,
                doc_id: row.doc_id,
            });
        }
        groups.entry(row.query_id).or_default().push((row.doc_id, row.score));
    }

    Ok(groups
        .into_iter()
        .map(|(query_id, mut rows)| {
            rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            RankedList {
                query_id,
                candidates: rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, (doc_id, retriever_score))| Candidate {
                        doc_id: doc_id.into(),
                        retriever_score,
                        initial_rank: i + 1,
                    })
                    .collect(),
                provenance: Provenance::Retriever,
            }
        })
        .collect())
}

pub fn load_run(path: &Path, corpus: &Corpus) -> Result<Vec<RankedList>, IngestError> {
    read_run(open(path)?, corpus)
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, items: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, &item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}
