//! Few-shot demonstration stores and their on-disk format.
//!
//! Classification stores are JSON arrays of `{input, pairs, clues?,
//! reasoning?}`; summarization stores are arrays of `{reviews, aspect,
//! sentiment, bullets}`. Pairs use the `["Food", "Positive"]` notation.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::domain::{Aspect, PairSet, Sentiment};

const DEFAULT_CLASSIFICATION: &str = include_str!("../../data/classification_examples.json");
const DEFAULT_SUMMARIZATION: &str = include_str!("../../data/summarization_examples.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotExample {
    #[serde(rename = "input")]
    pub input_text: String,
    #[serde(rename = "pairs")]
    pub expected_pairs: PairSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clues: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryFewShotExample {
    #[serde(rename = "reviews")]
    pub input_reviews: Vec<String>,
    pub aspect: Aspect,
    pub sentiment: Sentiment,
    pub bullets: Vec<String>,
}

pub(crate) fn validate_classification(examples: &[FewShotExample]) -> Result<(), PromptError> {
    for (index, ex) in examples.iter().enumerate() {
        if ex.input_text.trim().is_empty() {
            return Err(PromptError::InvalidExample {
                index,
                reason: "input must not be empty".into(),
            });
        }
        if ex.expected_pairs.is_empty() {
            return Err(PromptError::InvalidExample {
                index,
                reason: "pairs must not be empty".into(),
            });
        }
    }
    Ok(())
}

pub(crate) fn validate_summarization(
    examples: &[SummaryFewShotExample],
) -> Result<(), PromptError> {
    for (index, ex) in examples.iter().enumerate() {
        if ex.input_reviews.is_empty() || ex.input_reviews.iter().any(|r| r.trim().is_empty()) {
            return Err(PromptError::InvalidExample {
                index,
                reason: "reviews must be a non-empty list of non-empty texts".into(),
            });
        }
        if ex.bullets.is_empty() {
            return Err(PromptError::InvalidExample {
                index,
                reason: "bullets must not be empty".into(),
            });
        }
    }
    Ok(())
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PromptError> {
    let raw = fs::read_to_string(path).map_err(|source| PromptError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&raw).map_err(|source| PromptError::Format {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_classification_examples(path: &Path) -> Result<Vec<FewShotExample>, PromptError> {
    let examples = load(path)?;
    validate_classification(&examples)?;
    Ok(examples)
}

pub fn load_summarization_examples(path: &Path) -> Result<Vec<SummaryFewShotExample>, PromptError> {
    let examples = load(path)?;
    validate_summarization(&examples)?;
    Ok(examples)
}

/// The shipped 20-example classification store (two per pair). Only the
/// ambiance/pasta demonstration is canonical; the others are project-authored.
pub fn default_classification_examples() -> Vec<FewShotExample> {
    serde_json::from_str(DEFAULT_CLASSIFICATION).expect("bundled classification store is valid")
}

/// The shipped summarization store, one example per pair.
pub fn default_summarization_examples() -> Vec<SummaryFewShotExample> {
    serde_json::from_str(DEFAULT_SUMMARIZATION).expect("bundled summarization store is valid")
}
