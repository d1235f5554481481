//! Prompt templates for pairwise comparison and the strict answer grammar.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparator::Winner;

pub const QUERY_PLACEHOLDER: &str = "{query}";
pub const DOC1_PLACEHOLDER: &str = "{doc1}";
pub const DOC2_PLACEHOLDER: &str = "{doc2}";

/// Name of the template used when a config does not pick one.
pub const DEFAULT_TEMPLATE: &str = "Final Version";

const BUNDLED_JSON: &str = include_str!("../assets/templates.json");

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template {name:?}: placeholder {placeholder} must appear exactly once (found {count})")]
    Placeholder {
        name: String,
        placeholder: &'static str,
        count: usize,
    },
    #[error("template {name:?}: expected labels must be distinct single characters, got {labels:?}")]
    Labels { name: String, labels: [String; 2] },
    #[error("template file is not valid JSON: {0}")]
    Json(String),
    #[error("no template named {0:?}")]
    Unknown(String),
}

fn default_labels() -> [String; 2] {
    ["A".to_owned(), "B".to_owned()]
}

/// A named prompt with `{query}`, `{doc1}` and `{doc2}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    /// Answers meaning "slot A wins" and "slot B wins".
    #[serde(default = "default_labels")]
    pub expected_labels: [String; 2],
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Result<Self, TemplateError> {
        let t = PromptTemplate {
            name: name.into(),
            body: body.into(),
            expected_labels: default_labels(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        for placeholder in [QUERY_PLACEHOLDER, DOC1_PLACEHOLDER, DOC2_PLACEHOLDER] {
            let count = self.body.matches(placeholder).count();
            if count != 1 {
                return Err(TemplateError::Placeholder {
                    name: self.name.clone(),
                    placeholder,
                    count,
                });
            }
        }
        let [a, b] = self.expected_labels.clone().map(|l| normalize(&l));
        if a.chars().count() != 1 || b.chars().count() != 1 || a == b {
            return Err(TemplateError::Labels {
                name: self.name.clone(),
                labels: self.expected_labels.clone(),
            });
        }
        Ok(())
    }

    /// Substitutes the placeholders in a single left-to-right scan, so
    /// placeholder-like text inside passages is never re-expanded.
    pub fn render(&self, query: &str, doc1: &str, doc2: &str) -> String {
        let mut out = String::with_capacity(self.body.len() + query.len() + doc1.len() + doc2.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            let hit = [
                (QUERY_PLACEHOLDER, query),
                (DOC1_PLACEHOLDER, doc1),
                (DOC2_PLACEHOLDER, doc2),
            ]
            .into_iter()
            .find(|(p, _)| tail.starts_with(p));
            match hit {
                Some((p, value)) => {
                    out.push_str(value);
                    rest = &tail[p.len()..];
                }
                None => {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        out
    }

    /// Parses a raw completion: trim ASCII whitespace, case-fold, and accept
    /// exactly one of the two expected labels.
    pub fn parse_response(&self, raw: &str) -> Winner {
        let got = normalize(raw);
        if got == normalize(&self.expected_labels[0]) {
            Winner::A
        } else if got == normalize(&self.expected_labels[1]) {
            Winner::B
        } else {
            Winner::Undecided
        }
    }

    /// The label a backend should emit for `winner`.
    pub fn label_for(&self, winner: Winner) -> Option<&str> {
        match winner {
            Winner::A => Some(&self.expected_labels[0]),
            Winner::B => Some(&self.expected_labels[1]),
            Winner::Undecided => None,
        }
    }
}

fn normalize(s: &str) -> String {
    s.trim_matches(|c: char| c.is_ascii_whitespace()).to_lowercase()
}

/// Parses a JSON array of templates and validates each one.
pub fn parse_templates(json: &str) -> Result<Vec<PromptTemplate>, TemplateError> {
    let templates: Vec<PromptTemplate> = serde_json::from_str(json).map_err(|e| TemplateError::Json(e.to_string()))?;
    for t in &templates {
        t.validate()?;
    }
    Ok(templates)
}

/// The four shipped prompt variants, in evaluation order.
pub fn bundled_templates() -> Vec<PromptTemplate> {
    parse_templates(BUNDLED_JSON).expect("bundled templates are valid")
}

pub fn find_template<'a>(templates: &'a [PromptTemplate], name: &str) -> Result<&'a PromptTemplate, TemplateError> {
    templates
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| TemplateError::Unknown(name.to_owned()))
}
