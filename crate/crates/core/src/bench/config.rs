use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::comparator::{OrderPolicy, RemoteConfig};
use crate::eval::{CostModel, DEFAULT_RECALL_KS};
use crate::model::DEFAULT_TOKEN_BUDGET;
use crate::prompt::DEFAULT_TEMPLATE;
use crate::selection::{SelectionConfig, Strategy};

/// Which comparator backs a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComparatorConfig {
    Simulated {
        /// Line-delimited `{query_id, doc_id, relevance}` rows.
        relevance: PathBuf,
        #[serde(default)]
        epsilon: f64,
        #[serde(default)]
        beta: f64,
    },
    Remote(RemoteConfig),
}

fn default_dataset() -> String {
    "dataset".to_owned()
}

fn default_setup() -> String {
    "pairwise".to_owned()
}

fn default_prompt() -> String {
    DEFAULT_TEMPLATE.to_owned()
}

fn default_ks() -> Vec<usize> {
    DEFAULT_RECALL_KS.to_vec()
}

fn default_budget() -> u64 {
    DEFAULT_TOKEN_BUDGET
}

fn default_workers() -> usize {
    1
}

/// A complete, reproducible experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_dataset")]
    pub dataset: String,
    /// Row label in reports.
    #[serde(default = "default_setup")]
    pub setup: String,
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub run: PathBuf,
    pub top_k: usize,
    #[serde(default)]
    pub selection: SelectionConfig,
    pub comparator: ComparatorConfig,
    #[serde(default = "default_prompt")]
    pub prompt: String,
    /// Template file; the bundled set is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub cost_model: CostModel,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ks")]
    pub recall_ks: Vec<usize>,
    #[serde(default = "default_budget")]
    pub token_budget: u64,
    /// Opaque labels (model name, precision, ...) copied into reports.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Top-K values for `sweep-topk`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_k: Vec<usize>,
    /// Cumulative steps for `ladder`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ladder: Vec<ConfigDelta>,
}

impl RunConfig {
    /// Reads a JSON config; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.queries);
        fix(&mut self.run);
        if let Some(t) = self.templates.as_mut() {
            fix(t);
        }
        if let ComparatorConfig::Simulated { relevance, .. } = &mut self.comparator {
            fix(relevance);
        }
        if let Some(o) = self.output.as_mut() {
            fix(o);
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let err = |m: String| Err(BenchError::Config(m));
        if self.top_k == 0 {
            return err("top_k must be at least 1".into());
        }
        if self.selection.goal_m == 0 {
            return err("selection.goal_m must be at least 1".into());
        }
        if self.top_k < self.selection.goal_m {
            return err(format!(
                "top_k = {} is below selection.goal_m = {}",
                self.top_k, self.selection.goal_m
            ));
        }
        if self.recall_ks.is_empty() || self.recall_ks.contains(&0) {
            return err("recall_ks must be non-empty positive integers".into());
        }
        if self.workers == 0 {
            return err("workers must be at least 1".into());
        }
        self.cost_model.validate().map_err(BenchError::Config)?;
        if let ComparatorConfig::Simulated { epsilon, beta, .. } = self.comparator {
            if !(0.0..=1.0).contains(&epsilon) || !(0.0..=1.0).contains(&beta) {
                return err("epsilon and beta must lie in [0, 1]".into());
            }
        }
        Ok(())
    }

    /// Metadata reported for this run, including opaque backend labels.
    pub fn report_metadata(&self) -> BTreeMap<String, String> {
        let mut meta = self.metadata.clone();
        if let ComparatorConfig::Remote(r) = &self.comparator {
            if let Some(m) = &r.model {
                meta.entry("model".into()).or_insert_with(|| m.clone());
            }
            if let Some(p) = &r.precision {
                meta.entry("precision".into()).or_insert_with(|| p.clone());
            }
        }
        meta
    }

    /// The subset of the config that determines report contents. Paths,
    /// worker count, secrets and sweep/ladder plans are excluded.
    pub(crate) fn fingerprint_view(&self, inputs_digest: &str) -> serde_json::Value {
        let comparator = match &self.comparator {
            ComparatorConfig::Simulated { epsilon, beta, .. } => serde_json::json!({
                "kind": "simulated", "epsilon": epsilon, "beta": beta,
            }),
            ComparatorConfig::Remote(r) => serde_json::json!({
                "kind": "remote",
                "response_field": r.response_field,
                "max_retries": r.max_retries,
                "model": r.model,
                "precision": r.precision,
            }),
        };
        serde_json::json!({
            "inputs": inputs_digest,
            "dataset": self.dataset,
            "setup": self.setup,
            "top_k": self.top_k,
            "selection": self.selection,
            "comparator": comparator,
            "prompt": self.prompt,
            "cost_model": self.cost_model,
            "seed": self.seed,
            "recall_ks": self.recall_ks,
            "metadata": self.report_metadata(),
        })
    }
}

/// A partial config applied on top of the previous ladder stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDelta {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_policy: Option<OrderPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_prefill_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_token_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_out: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallel_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Merged into the metadata map (e.g. `{"precision": "bfloat16"}`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl ConfigDelta {
    pub fn apply(&self, base: &RunConfig) -> Result<RunConfig, BenchError> {
        let mut cfg = base.clone();
        cfg.setup = self.label.clone();
        if let Some(k) = self.top_k {
            cfg.top_k = k;
        }
        if let Some(m) = self.goal_m {
            cfg.selection.goal_m = m;
        }
        if let Some(s) = self.strategy {
            cfg.selection.strategy = s;
        }
        if let Some(p) = self.order_policy {
            cfg.selection.order_policy = p;
        }
        if let Some(p) = &self.prompt {
            cfg.prompt = p.clone();
        }
        let cm = &mut cfg.cost_model;
        if let Some(v) = self.t_prefill_s {
            cm.t_prefill_s = v;
        }
        if let Some(v) = self.t_token_s {
            cm.t_token_s = v;
        }
        if let Some(v) = self.tokens_out {
            cm.tokens_out = v;
        }
        if let Some(v) = self.parallel_width {
            cm.parallel_width = v;
        }
        if self.epsilon.is_some() || self.beta.is_some() {
            match &mut cfg.comparator {
                ComparatorConfig::Simulated { epsilon, beta, .. } => {
                    if let Some(e) = self.epsilon {
                        *epsilon = e;
                    }
                    if let Some(b) = self.beta {
                        *beta = b;
                    }
                }
                ComparatorConfig::Remote(_) => {
                    return Err(BenchError::Config(format!(
                        "step {:?}: epsilon/beta only apply to the simulated comparator",
                        self.label
                    )))
                }
            }
        }
        cfg.metadata.extend(self.metadata.clone());
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        serde_json::from_str(
            r#"{
                "corpus": "c.jsonl", "queries": "q.jsonl", "run": "r.jsonl",
                "top_k": 25,
                "comparator": {"kind": "simulated", "relevance": "rel.jsonl"}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = base();
        assert_eq!(c.prompt, "Final Version");
        assert_eq!(c.recall_ks, vec![1, 3, 5, 10, 25]);
        assert_eq!(c.selection.goal_m, 1);
        assert_eq!(c.selection.order_policy, OrderPolicy::LowerRankFirst);
        assert_eq!(c.workers, 1);
        c.validate().unwrap();
    }

    #[test]
    fn top_k_below_goal_is_rejected() {
        let mut c = base();
        c.top_k = 2;
        c.selection.goal_m = 3;
        assert!(matches!(c.validate(), Err(BenchError::Config(_))));
    }

    #[test]
    fn relative_paths_resolve() {
        let mut c = base();
        c.resolve_paths(Path::new("/data/exp"));
        assert_eq!(c.corpus, PathBuf::from("/data/exp/c.jsonl"));
        match &c.comparator {
            ComparatorConfig::Simulated { relevance, .. } => {
                assert_eq!(relevance, &PathBuf::from("/data/exp/rel.jsonl"))
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn fingerprint_ignores_workers_and_output() {
        let a = base();
        let mut b = base();
        b.workers = 8;
        b.output = Some("/tmp/x".into());
        assert_eq!(a.fingerprint_view("d"), b.fingerprint_view("d"));
        b.seed = 3;
        assert_ne!(a.fingerprint_view("d"), b.fingerprint_view("d"));
    }

    #[test]
    fn delta_applies_cumulatively() {
        let c = base();
        let d = ConfigDelta {
            label: "+ TopK=5".into(),
            top_k: Some(5),
            metadata: BTreeMap::from([("precision".into(), "bfloat16".into())]),
            ..Default::default()
        };
        let next = d.apply(&c).unwrap();
        assert_eq!(next.top_k, 5);
        assert_eq!(next.setup, "+ TopK=5");
        assert_eq!(next.metadata["precision"], "bfloat16");
        let bad = ConfigDelta {
            label: "x".into(),
            goal_m: Some(9),
            ..Default::default()
        };
        assert!(bad.apply(&next).is_err());
    }
}
