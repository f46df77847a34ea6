//! Request parsing and response documents shared by the HTTP and command
//! line front ends, so both emit identical bytes for identical input.

use std::collections::HashMap;

use chrono::{DateTime, NaiveDate, Utc};
use quickcue_core::eval::GoldAnnotation;
use quickcue_core::{
    render_document, ClassifiedReview, DomainError, Mode, PairSet, Pipeline, PipelineError,
    RestaurantReviewSet,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("invalid request at {path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

/// Parse and validate a review set, naming the offending field on failure.
pub fn parse_review_set(bytes: &[u8]) -> Result<RestaurantReviewSet, SchemaError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let set: RestaurantReviewSet = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        SchemaError {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    set.validate().map_err(|e| match e {
        DomainError::InvalidReviewSet { path, message } => SchemaError { path, message },
        other => SchemaError {
            path: ".".into(),
            message: other.to_string(),
        },
    })?;
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyDocument {
    pub restaurant_id: String,
    pub mode: Mode,
    pub prompt_version: String,
    pub classifications: Vec<ClassifiedReview>,
}

pub async fn classify_document(
    pipeline: &Pipeline,
    set: &RestaurantReviewSet,
) -> Result<String, PipelineError> {
    let classifications = pipeline.classify(set).await?;
    Ok(render_document(&ClassifyDocument {
        restaurant_id: set.restaurant_id.clone(),
        mode: pipeline.gateway().mode(),
        prompt_version: pipeline.prompt_version().to_string(),
        classifications,
    }))
}

pub async fn digest_document(
    pipeline: &Pipeline,
    set: &RestaurantReviewSet,
    today: NaiveDate,
    generated_at: DateTime<Utc>,
) -> Result<String, PipelineError> {
    let digest = pipeline.digest(set, today, generated_at).await?;
    Ok(render_document(&digest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDocument {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Prediction {
    review_id: String,
    pairs: PairSet,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PredictionFile {
    List(Vec<Prediction>),
    Classified(ClassifyDocument),
}

/// Predictions keyed by review id, from either an array of
/// `{review_id, pairs}` entries or a classify response document.
pub fn parse_predictions(raw: &str) -> anyhow::Result<HashMap<String, PairSet>> {
    let file: PredictionFile = serde_json::from_str(raw).map_err(|_| {
        anyhow::anyhow!("expected an array of {{review_id, pairs}} or a classify response document")
    })?;
    let entries: Vec<(String, PairSet)> = match file {
        PredictionFile::List(list) => list.into_iter().map(|p| (p.review_id, p.pairs)).collect(),
        PredictionFile::Classified(doc) => doc
            .classifications
            .into_iter()
            .map(|c| (c.review.id, c.pairs))
            .collect(),
    };
    let mut out = HashMap::with_capacity(entries.len());
    for (id, pairs) in entries {
        if out.insert(id.clone(), pairs).is_some() {
            anyhow::bail!("duplicate prediction for review {id:?}");
        }
    }
    Ok(out)
}

pub fn parse_gold(raw: &str) -> anyhow::Result<Vec<GoldAnnotation>> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    serde_path_to_error::deserialize(de)
        .map_err(|e| anyhow::anyhow!("at {}: {}", e.path(), e.inner()))
}
