//! Deterministic offline stand-in for the language model.
//!
//! Reviews are cut into clause segments at sentence and clause punctuation
//! (`. ! ? ; ,`, line breaks) and at the conjunction "but". A segment that
//! mentions a keyword of aspect `a` and a word of polarity `s` yields the
//! pair `(a, s)`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::LazyLock;

use async_trait::async_trait;
use regex::Regex;

use super::{Backend, BackendError, MockLexicon};
use crate::domain::{Aspect, AspectSentimentPair, PairSet, Sentiment};
use crate::prompt::{directional_stimuli, final_input_texts, render_pairs, PromptText, Task};

static CLAUSE_BREAK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[.!?;,\n]+|(?i:\bbut\b)").expect("clause regex"));

fn trim_segment(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '(' | ')' | ':' | '-'))
}

/// Clause segments of `text`, trimmed, empty ones dropped.
pub fn segments(text: &str) -> Vec<&str> {
    CLAUSE_BREAK
        .split(text)
        .map(trim_segment)
        .filter(|s| !s.is_empty())
        .collect()
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_phrase(haystack: &[String], phrase: &str) -> bool {
    let needle = tokens(phrase);
    !needle.is_empty()
        && haystack
            .windows(needle.len())
            .any(|w| w == needle.as_slice())
}

#[derive(Debug, Default)]
struct SegmentMatch {
    aspects: Vec<(Aspect, String)>,
    positive: Vec<String>,
    negative: Vec<String>,
}

impl SegmentMatch {
    fn pairs(&self) -> impl Iterator<Item = AspectSentimentPair> + '_ {
        self.aspects.iter().flat_map(move |(a, _)| {
            let pos = (!self.positive.is_empty()).then_some(Sentiment::Positive);
            let neg = (!self.negative.is_empty()).then_some(Sentiment::Negative);
            pos.into_iter()
                .chain(neg)
                .map(move |s| AspectSentimentPair::new(*a, s))
        })
    }
}

fn match_segment(segment: &str, lexicon: &MockLexicon) -> SegmentMatch {
    let toks = tokens(segment);
    let hits = |words: &std::collections::BTreeSet<String>| -> Vec<String> {
        words
            .iter()
            .filter(|w| contains_phrase(&toks, w))
            .cloned()
            .collect()
    };
    let aspects = lexicon
        .aspect_keywords
        .iter()
        .filter_map(|(a, words)| hits(words).into_iter().next().map(|w| (*a, w)))
        .collect();
    SegmentMatch {
        aspects,
        positive: hits(&lexicon.positive_words),
        negative: hits(&lexicon.negative_words),
    }
}

pub fn mock_classify(review_text: &str, lexicon: &MockLexicon) -> PairSet {
    segments(review_text)
        .into_iter()
        .flat_map(|seg| match_segment(seg, lexicon).pairs().collect::<Vec<_>>())
        .collect()
}

/// Extractive summary: matching segments, case-insensitively deduplicated,
/// most frequent first, ties by first occurrence.
pub fn mock_summarize(
    review_texts: &[&str],
    aspect: Aspect,
    sentiment: Sentiment,
    lexicon: &MockLexicon,
    max_bullets: usize,
) -> Vec<String> {
    let target = AspectSentimentPair::new(aspect, sentiment);
    // key -> (first verbatim form, count, first position)
    let mut seen: HashMap<String, (String, usize, usize)> = HashMap::new();
    let mut position = 0usize;
    for text in review_texts {
        for seg in segments(text) {
            if !match_segment(seg, lexicon).pairs().any(|p| p == target) {
                continue;
            }
            let key = seg
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .to_lowercase();
            seen.entry(key)
                .and_modify(|e| e.1 += 1)
                .or_insert_with(|| (seg.to_string(), 1, position));
            position += 1;
        }
    }
    let mut ranked: Vec<_> = seen.into_values().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked
        .into_iter()
        .take(max_bullets)
        .map(|(text, _, _)| text)
        .collect()
}

fn classification_response(review_text: &str, lexicon: &MockLexicon) -> String {
    let mut clues = Vec::new();
    let mut pairs = PairSet::new();
    for seg in segments(review_text) {
        let m = match_segment(seg, lexicon);
        for (_, keyword) in &m.aspects {
            for word in m.positive.iter().chain(&m.negative) {
                clues.push(format!("[{keyword}, {word}]"));
            }
        }
        pairs.extend(m.pairs());
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "CLUES: {}",
        if clues.is_empty() {
            "none".to_string()
        } else {
            clues.join(", ")
        }
    );
    let _ = writeln!(
        out,
        "REASONING: Each clause pairing an aspect keyword with a sentiment word yields that aspect-sentiment pair."
    );
    let _ = write!(out, "ASPECT-SENTIMENT Pairs: {}", render_pairs(&pairs));
    out
}

/// Backend answering prompts with the lexicon rules above.
#[derive(Debug, Clone)]
pub struct MockBackend {
    lexicon: MockLexicon,
    max_bullets: usize,
}

impl MockBackend {
    pub fn new(lexicon: MockLexicon, max_bullets: usize) -> Self {
        Self {
            lexicon,
            max_bullets,
        }
    }

    pub fn respond(&self, prompt: &str) -> Result<String, BackendError> {
        let unreadable = || BackendError::Fatal {
            status: None,
            message: "mock backend could not locate the prompt's INPUT section".into(),
        };
        match Task::of_prompt(prompt) {
            Some(Task::JointClassification) => {
                let texts = final_input_texts(prompt).ok_or_else(unreadable)?;
                Ok(classification_response(&texts.join("\n"), &self.lexicon))
            }
            Some(Task::FocusedSummarization) => {
                let texts = final_input_texts(prompt).ok_or_else(unreadable)?;
                let (aspect, sentiment) = directional_stimuli(prompt).ok_or_else(unreadable)?;
                let bullets =
                    mock_summarize(&texts, aspect, sentiment, &self.lexicon, self.max_bullets);
                Ok(bullets.iter().map(|b| format!("- {b}\n")).collect())
            }
            None => Err(BackendError::Fatal {
                status: None,
                message: "mock backend received a prompt without a task marker".into(),
            }),
        }
    }
}

#[async_trait]
impl Backend for MockBackend {
    async fn send(&self, prompt: &PromptText) -> Result<String, BackendError> {
        self.respond(&prompt.text)
    }
}
