//! Experiment runner: ingestion, truncation, selection and reporting wired
//! into reproducible pipelines, plus the Top-K sweep and optimization ladder.

mod config;
mod pipeline;
pub mod synthetic;

pub use config::{ComparatorConfig, ConfigDelta, RunConfig};
pub use pipeline::{ladder, retriever_baseline, run_on, run_pipeline, sweep_top_k, Dataset, PipelineOutput};

use thiserror::Error;

use crate::comparator::ComparatorError;
use crate::eval::EvalError;
use crate::ingest::IngestError;
use crate::prompt::TemplateError;
use crate::prompt_select::PromptSelectError;
use crate::selection::SelectionError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Comparator(#[from] ComparatorError),
    #[error("query {query_id:?}: {source}")]
    Query {
        query_id: String,
        #[source]
        source: SelectionError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    PromptSelect(#[from] PromptSelectError),
}
