//! Classification, bucketing and focused summarization of one restaurant's
//! reviews into a five-section digest.

use std::collections::{BTreeMap, HashMap};
use std::num::NonZeroUsize;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::domain::{
    Aspect, AspectSentimentPair, ClassifiedReview, PairSet, RestaurantReviewSet, Review, Sentiment,
};
use crate::gateway::{Gateway, GatewayError};
use crate::preprocess::{filter_reviews, PreprocessConfig};
use crate::prompt::{parse_bullets, parse_pair_list, ParseError, PromptEngine, PromptText};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("language model unavailable: {0}")]
    GatewayUnavailable(GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeConfig {
    pub max_reviews_per_bucket: NonZeroUsize,
    pub max_bullets: NonZeroUsize,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        Self {
            max_reviews_per_bucket: NonZeroUsize::new(30).unwrap(),
            max_bullets: NonZeroUsize::new(5).unwrap(),
        }
    }
}

/// Review ids per aspect-sentiment pair. All ten pairs are always present;
/// each list keeps the input order of the reviews.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketMap(BTreeMap<AspectSentimentPair, Vec<String>>);

impl Default for BucketMap {
    fn default() -> Self {
        Self(
            AspectSentimentPair::all()
                .map(|p| (p, Vec::new()))
                .collect(),
        )
    }
}

impl BucketMap {
    pub fn get(&self, pair: AspectSentimentPair) -> &[String] {
        &self.0[&pair]
    }

    pub fn iter(&self) -> impl Iterator<Item = (AspectSentimentPair, &[String])> {
        self.0.iter().map(|(p, ids)| (*p, ids.as_slice()))
    }

    /// Sum of all bucket sizes.
    pub fn total(&self) -> usize {
        self.0.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusedSummary {
    pub pair: AspectSentimentPair,
    pub bullets: Vec<String>,
    /// The reviews the bullets were drawn from; empty exactly when `bullets` is.
    pub source_review_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl FocusedSummary {
    pub fn empty(pair: AspectSentimentPair) -> Self {
        Self {
            pair,
            bullets: Vec::new(),
            source_review_ids: Vec::new(),
            diagnostic: None,
        }
    }

    fn failed(pair: AspectSentimentPair, diagnostic: String) -> Self {
        Self {
            diagnostic: Some(diagnostic),
            ..Self::empty(pair)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectSection {
    pub aspect: Aspect,
    pub positive: FocusedSummary,
    pub negative: FocusedSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestHierarchy {
    pub restaurant_id: String,
    /// One section per aspect, in [`Aspect::DIGEST_ORDER`].
    pub aspects: Vec<AspectSection>,
    pub generated_at: DateTime<Utc>,
    pub prompt_version: String,
}

enum Asked<T> {
    Parsed(T),
    Unparseable(ParseError),
    Unavailable(GatewayError),
}

/// Ask once; on an unparseable answer ask again, bypassing the cache.
async fn ask<T>(
    gateway: &Gateway,
    prompt: &PromptText,
    parse: impl Fn(&str) -> Result<T, ParseError>,
) -> Asked<T> {
    let first = match gateway.complete(prompt).await {
        Ok(raw) => raw,
        Err(e) => return Asked::Unavailable(e),
    };
    match parse(&first) {
        Ok(v) => return Asked::Parsed(v),
        Err(e) => debug!(error = %e, "unparseable response, asking again"),
    }
    match gateway.refresh(prompt).await {
        Ok(raw) => match parse(&raw) {
            Ok(v) => Asked::Parsed(v),
            Err(e) => Asked::Unparseable(e),
        },
        Err(e) => Asked::Unavailable(e),
    }
}

/// Classify every review, keeping input order. A review that cannot be
/// classified gets empty pairs and a diagnostic.
///
/// Fails only when reviews were sent and every one of them hit a gateway error.
pub async fn classify_all(
    reviews: &RestaurantReviewSet,
    gateway: &Gateway,
    prompts: &PromptEngine,
) -> Result<Vec<ClassifiedReview>, PipelineError> {
    let outcomes = join_all(reviews.reviews.iter().map(|review| async move {
        let prompt = match prompts.carp_prompt(&review.text) {
            Ok(p) => p,
            Err(e) => return (Err(e.to_string()), None),
        };
        match ask(gateway, &prompt, parse_pair_list).await {
            Asked::Parsed(pairs) => (Ok(pairs), None),
            Asked::Unparseable(e) => (
                Err(format!("unparseable classification after re-ask: {e}")),
                None,
            ),
            Asked::Unavailable(e) => (Err(format!("classification request failed: {e}")), Some(e)),
        }
    }))
    .await;

    let mut unavailable = Vec::new();
    let classified: Vec<_> = reviews
        .reviews
        .iter()
        .zip(outcomes)
        .map(|(review, (outcome, gateway_error))| match outcome {
            Ok(pairs) => ClassifiedReview::new(review.clone(), pairs),
            Err(diagnostic) => {
                warn!(review_id = %review.id, %diagnostic, "review left unclassified");
                unavailable.extend(gateway_error);
                ClassifiedReview {
                    review: review.clone(),
                    pairs: PairSet::new(),
                    diagnostic: Some(diagnostic),
                }
            }
        })
        .collect();
    if !classified.is_empty() && unavailable.len() == classified.len() {
        return Err(PipelineError::GatewayUnavailable(
            unavailable.swap_remove(0),
        ));
    }
    Ok(classified)
}

/// Bucket review ids by pair. Review ids are assumed distinct.
pub fn group_by_pair(classified: &[ClassifiedReview]) -> BucketMap {
    let mut buckets = BucketMap::default();
    for c in classified {
        for pair in &c.pairs {
            buckets
                .0
                .get_mut(pair)
                .expect("all pairs present")
                .push(c.review.id.clone());
        }
    }
    buckets
}

/// Up to `cap` bucket members, most recent first with undated reviews last,
/// returned in bucket (input) order.
fn select_for_summary<'a>(
    ids: &'a [String],
    reviews_by_id: &HashMap<&str, &'a Review>,
    cap: usize,
) -> Vec<&'a Review> {
    let mut ranked: Vec<(usize, &Review)> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            (
                i,
                *reviews_by_id
                    .get(id.as_str())
                    .expect("bucket ids resolve to reviews"),
            )
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.1.date
            .is_some()
            .cmp(&a.1.date.is_some())
            .then(b.1.date.cmp(&a.1.date))
            .then(a.0.cmp(&b.0))
    });
    ranked.truncate(cap);
    ranked.sort_by_key(|(i, _)| *i);
    ranked.into_iter().map(|(_, r)| r).collect()
}

/// One summary per pair. Empty buckets give empty summaries; a bucket whose
/// summary cannot be obtained degrades to an empty summary with a diagnostic.
///
/// Fails only when there were non-empty buckets and every one of them hit a
/// gateway error.
pub async fn summarize_buckets(
    buckets: &BucketMap,
    reviews_by_id: &HashMap<&str, &Review>,
    gateway: &Gateway,
    prompts: &PromptEngine,
    cfg: &SummarizeConfig,
) -> Result<BTreeMap<AspectSentimentPair, FocusedSummary>, PipelineError> {
    let jobs = buckets
        .iter()
        .filter(|(_, ids)| !ids.is_empty())
        .map(|(pair, ids)| {
            let selected = select_for_summary(ids, reviews_by_id, cfg.max_reviews_per_bucket.get());
            summarize_one(pair, selected, gateway, prompts, cfg.max_bullets.get())
        });
    let results = join_all(jobs).await;

    let attempted = results.len();
    let mut unavailable = Vec::new();
    let mut summaries: BTreeMap<_, _> = AspectSentimentPair::all()
        .map(|p| (p, FocusedSummary::empty(p)))
        .collect();
    for (summary, gateway_error) in results {
        if let Some(e) = gateway_error {
            unavailable.push(e);
        }
        summaries.insert(summary.pair, summary);
    }
    if attempted > 0 && unavailable.len() == attempted {
        return Err(PipelineError::GatewayUnavailable(
            unavailable.swap_remove(0),
        ));
    }
    Ok(summaries)
}

async fn summarize_one(
    pair: AspectSentimentPair,
    selected: Vec<&Review>,
    gateway: &Gateway,
    prompts: &PromptEngine,
    max_bullets: usize,
) -> (FocusedSummary, Option<GatewayError>) {
    {
        let texts: Vec<&str> = selected.iter().map(|r| r.text.as_str()).collect();
        let prompt = match prompts.dsp_prompt(&texts, pair.aspect, pair.sentiment) {
            Ok(p) => p,
            Err(e) => return (FocusedSummary::failed(pair, e.to_string()), None),
        };
        let non_empty_bullets = |raw: &str| {
            parse_bullets(raw).and_then(|b| {
                if b.is_empty() {
                    Err(ParseError::NoBulletsFound)
                } else {
                    Ok(b)
                }
            })
        };
        match ask(gateway, &prompt, non_empty_bullets).await {
            Asked::Parsed(mut bullets) => {
                bullets.truncate(max_bullets);
                let summary = FocusedSummary {
                    pair,
                    bullets,
                    source_review_ids: selected.iter().map(|r| r.id.clone()).collect(),
                    diagnostic: None,
                };
                (summary, None)
            }
            Asked::Unparseable(e) => {
                warn!(%pair, error = %e, "summary left empty");
                (
                    FocusedSummary::failed(pair, format!("unparseable summary after re-ask: {e}")),
                    None,
                )
            }
            Asked::Unavailable(e) => {
                warn!(%pair, error = %e, "summary left empty");
                let summary = FocusedSummary::failed(pair, format!("summary request failed: {e}"));
                (summary, Some(e))
            }
        }
    }
}

/// Arrange per-pair summaries into the five fixed sections.
pub fn assemble(
    restaurant_id: &str,
    mut summaries: BTreeMap<AspectSentimentPair, FocusedSummary>,
    generated_at: DateTime<Utc>,
    prompt_version: &str,
) -> DigestHierarchy {
    let mut take = |aspect, sentiment| {
        let pair = AspectSentimentPair::new(aspect, sentiment);
        summaries
            .remove(&pair)
            .unwrap_or_else(|| FocusedSummary::empty(pair))
    };
    let aspects = Aspect::DIGEST_ORDER
        .into_iter()
        .map(|aspect| AspectSection {
            aspect,
            positive: take(aspect, Sentiment::Positive),
            negative: take(aspect, Sentiment::Negative),
        })
        .collect();
    DigestHierarchy {
        restaurant_id: restaurant_id.to_string(),
        aspects,
        generated_at,
        prompt_version: prompt_version.to_string(),
    }
}

/// Everything a request needs: the shared gateway, the prompt stores and
/// the preprocessing and summarization settings.
#[derive(Debug, Clone)]
pub struct Pipeline {
    gateway: Arc<Gateway>,
    prompts: Arc<PromptEngine>,
    preprocess: PreprocessConfig,
    summarize: SummarizeConfig,
}

impl Pipeline {
    pub fn new(
        gateway: Arc<Gateway>,
        prompts: Arc<PromptEngine>,
        preprocess: PreprocessConfig,
        summarize: SummarizeConfig,
    ) -> Self {
        Self {
            gateway,
            prompts,
            preprocess,
            summarize,
        }
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn prompts(&self) -> &PromptEngine {
        &self.prompts
    }

    pub fn prompt_version(&self) -> &str {
        self.prompts.version()
    }

    /// Classify reviews after text cleaning. Unlike [`Pipeline::digest`], no
    /// review is dropped for its age, so evaluation sets of any vintage can
    /// be classified.
    pub async fn classify(
        &self,
        reviews: &RestaurantReviewSet,
    ) -> Result<Vec<ClassifiedReview>, PipelineError> {
        let cfg = PreprocessConfig {
            max_age_days: None,
            ..self.preprocess
        };
        // `today` only matters to the age rule, which is off here
        let kept = filter_reviews(reviews, &cfg, NaiveDate::MIN);
        classify_all(&kept, &self.gateway, &self.prompts).await
    }

    pub async fn digest(
        &self,
        reviews: &RestaurantReviewSet,
        today: NaiveDate,
        generated_at: DateTime<Utc>,
    ) -> Result<DigestHierarchy, PipelineError> {
        let kept = filter_reviews(reviews, &self.preprocess, today);
        debug!(
            restaurant_id = %reviews.restaurant_id,
            received = reviews.reviews.len(),
            kept = kept.reviews.len(),
            "building digest"
        );
        let classified = classify_all(&kept, &self.gateway, &self.prompts).await?;
        let buckets = group_by_pair(&classified);
        let by_id: HashMap<&str, &Review> =
            kept.reviews.iter().map(|r| (r.id.as_str(), r)).collect();
        let summaries = summarize_buckets(
            &buckets,
            &by_id,
            &self.gateway,
            &self.prompts,
            &self.summarize,
        )
        .await?;
        Ok(assemble(
            &reviews.restaurant_id,
            summaries,
            generated_at,
            self.prompt_version(),
        ))
    }
}
