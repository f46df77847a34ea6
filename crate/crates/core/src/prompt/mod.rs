//! Prompt construction for joint classification and focused summarization,
//! plus parsing of the structured parts of model responses.
//!
//! Every prompt starts with a task marker line so a backend can tell the
//! two tasks apart, and every review text is fenced between sentinel lines
//! that are guaranteed not to occur inside any text of that prompt.

mod parse;
mod store;

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use parse::{parse_bullets, parse_pair_list, render_pairs};
pub use store::{
    default_classification_examples, default_summarization_examples, load_classification_examples,
    load_summarization_examples, FewShotExample, SummaryFewShotExample,
};

use crate::domain::{parse_aspect, parse_sentiment, Aspect, Sentiment};
use crate::preprocess::clean_text;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("review text is empty after cleaning")]
    EmptyReview,
    #[error("cannot summarize an empty bucket")]
    EmptyBucket,
    #[error("example {index}: {reason}")]
    InvalidExample { index: usize, reason: String },
    #[error("reading example store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing example store {path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no aspect-sentiment pair list found in response")]
    NoPairListFound,
    #[error("unknown aspect {label:?} in {element}")]
    UnknownAspect { label: String, element: String },
    #[error("unknown sentiment {label:?} in {element}")]
    UnknownSentiment { label: String, element: String },
    #[error("malformed pair {element}, expected two strings")]
    MalformedPair { element: String },
    #[error("no bullet points found in response")]
    NoBulletsFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    JointClassification,
    FocusedSummarization,
}

impl Task {
    pub fn marker(self) -> &'static str {
        match self {
            Task::JointClassification => "#task: joint-aspect-sentiment-classification",
            Task::FocusedSummarization => "#task: focused-aspect-summarization",
        }
    }

    /// Identify the task from the first line of a prompt.
    pub fn of_prompt(text: &str) -> Option<Task> {
        let first = text.lines().next()?.trim();
        [Task::JointClassification, Task::FocusedSummarization]
            .into_iter()
            .find(|t| t.marker() == first)
    }
}

/// A rendered prompt together with the version of the template and
/// demonstration store that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptText {
    pub text: String,
    pub prompt_version: String,
}

const CARP_TEMPLATE: &str = "\
Task Description: This is a joint aspect-sentiment classifier for restaurant reviews.

First, present CLUES (i.e., keywords, phrases, contextual information, semantic meaning, semantic relations, tones, references) that support the joint aspect-sentiment determination of input (look for clues related to Food, Ambiance, Customer Service, Pricing, Hygiene for aspect, and clues related to positive, negative for sentiment).

Second, deduce a diagnostic REASONING process from premises (i.e., clues, input) that supports the sentiment determination for each identified aspect. Note that an aspect can be identified multiple times in different locations of the input.

Third, determine the list of aspect-sentiment pairs present in the INPUT, considering the CLUES and the REASONING process.

Output all possible aspect-sentiment pairs after removing empty pairs if any.
For ASPECT, choose from the following predefined set of words: [Food, Ambiance, Hygiene, Customer Service, Pricing].
For SENTIMENT, choose from the following two words: [Positive,Negative]
Finish with the line \"ASPECT-SENTIMENT Pairs:\" followed by the pairs as a list of two-element lists, e.g. [[\"Food\", \"Positive\"], [\"Pricing\", \"Negative\"]], or [] if no pair applies.
";

const DSP_INSTRUCTIONS: &str = "\
Task Instructions: Summarize the given reviews by focusing only on the specified main aspect and desired sentiment. Use the Directional Stimuli (keywords) for guidance. Ensure the generated summary excludes unrelated aspects, redundant phrases, and undesired sentiments, while keeping it concise and clear.
";

pub const DSP_OUTPUT_INSTRUCTION: &str = "Generate the summary as a sequence of bullet points, with each point highlighting one salient feature uncovered about the specified aspect and desired sentiment.";

/// Sentinel lines around one review text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fence {
    pub open: String,
    pub close: String,
}

impl Fence {
    fn numbered(n: usize) -> Self {
        if n == 0 {
            Self {
                open: "<<<REVIEW>>>".into(),
                close: "<<<END REVIEW>>>".into(),
            }
        } else {
            Self {
                open: format!("<<<REVIEW~{n}>>>"),
                close: format!("<<<END REVIEW~{n}>>>"),
            }
        }
    }

    /// The first fence whose sentinels occur in none of `texts`.
    pub fn choose<'a>(texts: impl Iterator<Item = &'a str> + Clone) -> Self {
        (0..)
            .map(Fence::numbered)
            .find(|f| {
                texts
                    .clone()
                    .all(|t| !t.contains(&f.open) && !t.contains(&f.close))
            })
            .expect("some fence is always free")
    }

    fn wrap(&self, out: &mut String, text: &str) {
        let _ = write!(out, "{}\n{}\n{}\n", self.open, text, self.close);
    }

    fn parse(close_line: &str) -> Option<Self> {
        let line = close_line.trim();
        if line == "<<<END REVIEW>>>" {
            return Some(Fence::numbered(0));
        }
        let n: usize = line
            .strip_prefix("<<<END REVIEW~")?
            .strip_suffix(">>>")?
            .parse()
            .ok()?;
        (n > 0).then(|| Fence::numbered(n))
    }
}

fn short_hash(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

/// Version of the classification prompt for a given demonstration store.
pub fn carp_version(examples: &[FewShotExample]) -> String {
    let store = serde_json::to_string(examples).expect("examples serialize");
    short_hash(&[
        "carp",
        Task::JointClassification.marker(),
        CARP_TEMPLATE,
        &store,
    ])
}

/// Version of the summarization prompt for a given demonstration store.
pub fn dsp_version(examples: &[SummaryFewShotExample]) -> String {
    let store = serde_json::to_string(examples).expect("examples serialize");
    short_hash(&[
        "dsp",
        Task::FocusedSummarization.marker(),
        DSP_INSTRUCTIONS,
        DSP_OUTPUT_INSTRUCTION,
        &store,
    ])
}

/// Build the clue-and-reasoning joint classification prompt.
pub fn build_carp_prompt(
    review_text: &str,
    examples: &[FewShotExample],
) -> Result<PromptText, PromptError> {
    if clean_text(review_text).is_empty() {
        return Err(PromptError::EmptyReview);
    }
    let fence = Fence::choose(
        std::iter::once(review_text).chain(examples.iter().map(|e| e.input_text.as_str())),
    );

    let mut out = String::with_capacity(4096);
    out.push_str(Task::JointClassification.marker());
    out.push('\n');
    out.push_str(CARP_TEMPLATE);
    let _ = writeln!(
        out,
        "Each INPUT review is enclosed between the lines {} and {}; everything between them is review text.",
        fence.open, fence.close
    );

    if !examples.is_empty() {
        out.push_str("\nEXAMPLES:\n");
        for ex in examples {
            out.push_str("\nINPUT:\n");
            fence.wrap(&mut out, &ex.input_text);
            let _ = writeln!(
                out,
                "CLUES: {}",
                ex.clues.as_deref().unwrap_or("(none given)")
            );
            let _ = writeln!(
                out,
                "REASONING: {}",
                ex.reasoning.as_deref().unwrap_or("(none given)")
            );
            let _ = writeln!(
                out,
                "ASPECT-SENTIMENT Pairs: {}",
                render_pairs(&ex.expected_pairs)
            );
        }
    }

    out.push_str("\nINPUT:\n");
    fence.wrap(&mut out, review_text);

    Ok(PromptText {
        text: out,
        prompt_version: carp_version(examples),
    })
}

/// Build the directional-stimulus focused summarization prompt.
pub fn build_dsp_prompt(
    review_texts: &[&str],
    aspect: Aspect,
    sentiment: Sentiment,
    examples: &[SummaryFewShotExample],
) -> Result<PromptText, PromptError> {
    if review_texts.is_empty() {
        return Err(PromptError::EmptyBucket);
    }
    let fence = Fence::choose(
        review_texts.iter().copied().chain(
            examples
                .iter()
                .flat_map(|e| e.input_reviews.iter().map(String::as_str)),
        ),
    );

    let mut out = String::with_capacity(4096);
    out.push_str(Task::FocusedSummarization.marker());
    out.push('\n');
    out.push_str(DSP_INSTRUCTIONS);
    let _ = writeln!(
        out,
        "\nReviews: given in the INPUT section at the end, each enclosed between the lines {} and {}.",
        fence.open, fence.close
    );
    let _ = write!(
        out,
        "\nDirectional Stimuli:\nMain Aspect: {aspect}\nDesired Sentiment: {sentiment}\n"
    );
    let _ = writeln!(out, "\nOutput Instruction:\n{DSP_OUTPUT_INSTRUCTION}");

    if !examples.is_empty() {
        out.push_str("\nExamples:\n");
        for ex in examples {
            out.push_str("\nReviews:\n");
            for review in &ex.input_reviews {
                fence.wrap(&mut out, review);
            }
            let _ = write!(
                out,
                "Directional Stimuli:\nMain Topic: {}\nSentiment: {}\nOutput Summary:\n",
                ex.aspect, ex.sentiment
            );
            for bullet in &ex.bullets {
                let _ = writeln!(out, "- {bullet}");
            }
        }
    }

    out.push_str("\nINPUT:\n");
    for text in review_texts {
        fence.wrap(&mut out, text);
    }

    Ok(PromptText {
        text: out,
        prompt_version: dsp_version(examples),
    })
}

/// Recover the review texts of the final INPUT section of a prompt built by
/// this module.
pub fn final_input_texts(prompt: &str) -> Option<Vec<&str>> {
    let trimmed = prompt.trim_end_matches('\n');
    let last_line = trimmed.rsplit('\n').next()?;
    let fence = Fence::parse(last_line)?;

    let header = format!("\nINPUT:\n{}\n", fence.open);
    let start = prompt.rfind(&header)? + "\nINPUT:\n".len();
    let mut rest = &prompt[start..];
    let mut texts = Vec::new();
    let open = format!("{}\n", fence.open);
    let close = format!("\n{}\n", fence.close);
    while let Some(body) = rest.strip_prefix(&open) {
        let end = body.find(&close)?;
        texts.push(&body[..end]);
        rest = &body[end + close.len()..];
    }
    (!texts.is_empty()).then_some(texts)
}

/// Read the target pair from the Directional Stimuli block.
pub fn directional_stimuli(prompt: &str) -> Option<(Aspect, Sentiment)> {
    let mut aspect = None;
    let mut sentiment = None;
    for line in prompt.lines() {
        if aspect.is_none() {
            if let Some(label) = line.strip_prefix("Main Aspect:") {
                aspect = parse_aspect(label).ok();
            }
        }
        if sentiment.is_none() {
            if let Some(label) = line.strip_prefix("Desired Sentiment:") {
                sentiment = parse_sentiment(label).ok();
            }
        }
        if line.starts_with("Output Instruction:") {
            break;
        }
    }
    Some((aspect?, sentiment?))
}

/// Holds the demonstration stores and builds both prompt kinds.
#[derive(Debug, Clone)]
pub struct PromptEngine {
    classification: Vec<FewShotExample>,
    summarization: Vec<SummaryFewShotExample>,
    carp_version: String,
    dsp_version: String,
    version: String,
}

impl PromptEngine {
    pub fn new(
        classification: Vec<FewShotExample>,
        summarization: Vec<SummaryFewShotExample>,
    ) -> Result<Self, PromptError> {
        store::validate_classification(&classification)?;
        store::validate_summarization(&summarization)?;
        let carp_version = carp_version(&classification);
        let dsp_version = dsp_version(&summarization);
        let version = short_hash(&[&carp_version, &dsp_version]);
        Ok(Self {
            classification,
            summarization,
            carp_version,
            dsp_version,
            version,
        })
    }

    /// Engine over the bundled stores.
    pub fn with_defaults() -> Self {
        Self::new(
            default_classification_examples(),
            default_summarization_examples(),
        )
        .expect("bundled stores are valid")
    }

    pub fn zero_shot() -> Self {
        Self::new(Vec::new(), Vec::new()).expect("empty stores are valid")
    }

    /// Combined version of both templates and both stores.
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn carp_version(&self) -> &str {
        &self.carp_version
    }

    pub fn dsp_version(&self) -> &str {
        &self.dsp_version
    }

    pub fn classification_examples(&self) -> &[FewShotExample] {
        &self.classification
    }

    pub fn summarization_examples(&self) -> &[SummaryFewShotExample] {
        &self.summarization
    }

    pub fn carp_prompt(&self, review_text: &str) -> Result<PromptText, PromptError> {
        build_carp_prompt(review_text, &self.classification)
    }

    pub fn dsp_prompt(
        &self,
        review_texts: &[&str],
        aspect: Aspect,
        sentiment: Sentiment,
    ) -> Result<PromptText, PromptError> {
        build_dsp_prompt(review_texts, aspect, sentiment, &self.summarization)
    }
}
