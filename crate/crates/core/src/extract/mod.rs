//! Concept extraction: turns a consolidation window into typed semantic items.
//!
//! Two backends share the [`ConceptExtractor`] trait: [`RuleExtractor`], a
//! deterministic lexicon-driven extractor for offline use, and
//! [`LlmExtractor`], which sends the structured extraction prompt to a
//! completion function and parses the two record blocks it returns.

mod prompt;
mod rules;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use prompt::{build_extraction_prompt, parse_extraction_response};
pub use rules::{Lexicon, RuleExtractor};

use crate::error::ExtractError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Identity,
    Preference,
    Event,
    Technical,
    Person,
    Other,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Identity,
        Category::Preference,
        Category::Event,
        Category::Technical,
        Category::Person,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Identity => "Identity",
            Category::Preference => "Preference",
            Category::Event => "Event",
            Category::Technical => "Technical",
            Category::Person => "Person",
            Category::Other => "Other",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedItem {
    pub name: String,
    pub category: Category,
    pub attribute: Option<String>,
    pub confidence: f64,
    pub time_hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedEdgeHint {
    pub src_name: String,
    pub relation: String,
    pub tgt_name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub items: Vec<ExtractedItem>,
    pub edge_hints: Vec<ExtractedEdgeHint>,
}

pub trait ConceptExtractor: Send + Sync {
    fn extract(&self, turns: &[&str]) -> Result<Extraction, ExtractError>;
}

impl<T: ConceptExtractor + ?Sized> ConceptExtractor for Box<T> {
    fn extract(&self, turns: &[&str]) -> Result<Extraction, ExtractError> {
        (**self).extract(turns)
    }
}

impl<T: ConceptExtractor + ?Sized> ConceptExtractor for std::sync::Arc<T> {
    fn extract(&self, turns: &[&str]) -> Result<Extraction, ExtractError> {
        (**self).extract(turns)
    }
}

/// Extractor backed by a language model. `complete` receives the prompt and
/// returns the raw model output.
pub struct LlmExtractor<F> {
    complete: F,
}

impl<F> LlmExtractor<F>
where
    F: Fn(&str) -> Result<String, String> + Send + Sync,
{
    pub fn new(complete: F) -> Self {
        Self { complete }
    }
}

impl<F> ConceptExtractor for LlmExtractor<F>
where
    F: Fn(&str) -> Result<String, String> + Send + Sync,
{
    fn extract(&self, turns: &[&str]) -> Result<Extraction, ExtractError> {
        if turns.iter().all(|t| t.trim().is_empty()) {
            return Ok(Extraction::default());
        }
        let prompt = build_extraction_prompt(turns);
        let raw = (self.complete)(&prompt).map_err(ExtractError::Backend)?;
        parse_extraction_response(&raw)
    }
}
