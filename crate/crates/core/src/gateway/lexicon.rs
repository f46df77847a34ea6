use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Aspect, Sentiment};

const DEMO_LEXICON: &str = include_str!("../../data/demo_lexicon.json");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("keyword {keyword:?} listed under both {first} and {second}")]
    SharedKeyword {
        keyword: String,
        first: Aspect,
        second: Aspect,
    },
    #[error("word {0:?} is both positive and negative")]
    AmbiguousPolarity(String),
    #[error("reading lexicon {path}: {message}")]
    Load { path: String, message: String },
}

/// Keyword lists driving the offline mock backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockLexicon {
    pub aspect_keywords: BTreeMap<Aspect, BTreeSet<String>>,
    pub positive_words: BTreeSet<String>,
    pub negative_words: BTreeSet<String>,
}

fn lowercase_all(words: BTreeSet<String>) -> BTreeSet<String> {
    words
        .into_iter()
        .map(|w| w.trim().to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

impl MockLexicon {
    /// Lowercases every entry and checks that aspects do not share keywords
    /// and that no word carries both polarities.
    pub fn new(
        aspect_keywords: BTreeMap<Aspect, BTreeSet<String>>,
        positive_words: BTreeSet<String>,
        negative_words: BTreeSet<String>,
    ) -> Result<Self, LexiconError> {
        let aspect_keywords: BTreeMap<_, _> = aspect_keywords
            .into_iter()
            .map(|(a, words)| (a, lowercase_all(words)))
            .collect();
        let mut owner: BTreeMap<&str, Aspect> = BTreeMap::new();
        for (aspect, words) in &aspect_keywords {
            for w in words {
                if let Some(first) = owner.insert(w, *aspect) {
                    return Err(LexiconError::SharedKeyword {
                        keyword: w.clone(),
                        first,
                        second: *aspect,
                    });
                }
            }
        }
        let positive_words = lowercase_all(positive_words);
        let negative_words = lowercase_all(negative_words);
        if let Some(w) = positive_words.intersection(&negative_words).next() {
            return Err(LexiconError::AmbiguousPolarity(w.clone()));
        }
        Ok(Self {
            aspect_keywords,
            positive_words,
            negative_words,
        })
    }

    pub fn from_json(raw: &str) -> Result<Self, LexiconError> {
        let parsed: MockLexicon = serde_json::from_str(raw).map_err(|e| LexiconError::Load {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        Self::new(
            parsed.aspect_keywords,
            parsed.positive_words,
            parsed.negative_words,
        )
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let raw = fs::read_to_string(path).map_err(|e| LexiconError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&raw).map_err(|e| match e {
            LexiconError::Load { message, .. } => LexiconError::Load {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// The bundled restaurant lexicon.
    pub fn demo() -> Self {
        Self::from_json(DEMO_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn words(&self, sentiment: Sentiment) -> &BTreeSet<String> {
        match sentiment {
            Sentiment::Positive => &self.positive_words,
            Sentiment::Negative => &self.negative_words,
        }
    }
}
