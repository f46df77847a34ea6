//! Aspect-sentiment review digests.
//!
//! Reviews are cleaned ([`preprocess`]), classified into aspect-sentiment
//! pairs through prompted completions ([`prompt`], [`gateway`]), grouped into
//! one bucket per pair and summarized into a digest ([`pipeline`]).
//! [`eval`] scores classifications against gold annotations.

pub mod domain;
pub mod eval;
pub mod gateway;
pub mod pipeline;
pub mod preprocess;
pub mod prompt;

pub use domain::{
    Aspect, AspectSentimentPair, ClassifiedReview, DomainError, PairSet, RestaurantReviewSet,
    Review, Sentiment,
};
pub use gateway::{Gateway, GatewayConfig, GatewayError, Mode};
pub use pipeline::{DigestHierarchy, Pipeline, PipelineError, SummarizeConfig};
pub use preprocess::PreprocessConfig;
pub use prompt::{PromptEngine, PromptText};

/// Serialize a response document the way every front end emits it: pretty
/// JSON with struct field order preserved and a trailing newline.
pub fn render_document<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("documents serialize");
    out.push('\n');
    out
}
