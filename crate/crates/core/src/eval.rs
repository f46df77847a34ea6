//! Scoring of classifications against gold annotations, and aggregation of
//! human summary ratings.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Aspect, AspectSentimentPair, PairSet, Sentiment};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyDataset,
    #[error("review {0:?} is annotated more than once")]
    DuplicateReviewId(String),
    #[error("annotator {annotator_id:?} scored example {example_id:?} more than once")]
    DuplicateScore {
        example_id: String,
        annotator_id: String,
    },
    #[error("{metric} score {value} for example {example_id:?} is outside 1..=10")]
    ScoreOutOfRange {
        example_id: String,
        metric: &'static str,
        value: u8,
    },
}

/// Gold file entry: `{"review_id": "r1", "pairs": [["Food", "Positive"]]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldAnnotation {
    pub review_id: String,
    #[serde(rename = "pairs")]
    pub gold_pairs: PairSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviewMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ReviewMetrics {
    fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// `tp / n`, with the empty-set conventions: 1 when both sets are empty,
/// 0 when only the denominator set is.
fn ratio(tp: usize, n: usize, other_empty: bool) -> f64 {
    match (n, other_empty) {
        (0, true) => 1.0,
        (0, false) => 0.0,
        _ => tp as f64 / n as f64,
    }
}

pub fn per_review_prf(predicted: &PairSet, gold: &PairSet) -> ReviewMetrics {
    let tp = predicted.intersection(gold).count();
    ReviewMetrics::from_pr(
        ratio(tp, predicted.len(), gold.is_empty()),
        ratio(tp, gold.len(), predicted.is_empty()),
    )
}

/// Field-wise mean. The aggregate f1 is the mean of per-review f1 values,
/// not recomputed from the averaged precision and recall.
pub fn macro_average(per_review: &[ReviewMetrics]) -> Result<ReviewMetrics, EvalError> {
    if per_review.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let n = per_review.len() as f64;
    let mean = |f: fn(&ReviewMetrics) -> f64| per_review.iter().map(f).sum::<f64>() / n;
    Ok(ReviewMetrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    })
}

/// Row order of frequency tables.
pub const FREQUENCY_ORDER: [AspectSentimentPair; 10] = {
    use Aspect::*;
    use Sentiment::*;
    const fn p(a: Aspect, s: Sentiment) -> AspectSentimentPair {
        AspectSentimentPair::new(a, s)
    }
    [
        p(Food, Negative),
        p(Food, Positive),
        p(CustomerService, Negative),
        p(CustomerService, Positive),
        p(Pricing, Negative),
        p(Pricing, Positive),
        p(Ambiance, Negative),
        p(Ambiance, Positive),
        p(Hygiene, Negative),
        p(Hygiene, Positive),
    ]
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFrequency {
    pub pair: AspectSentimentPair,
    pub gold: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewEvaluation {
    pub review_id: String,
    pub gold: PairSet,
    pub predicted: PairSet,
    #[serde(flatten)]
    pub metrics: ReviewMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(rename = "macro")]
    pub macro_metrics: ReviewMetrics,
    pub reviews: Vec<ReviewEvaluation>,
    pub frequencies: Vec<PairFrequency>,
    /// Gold reviews without a prediction; scored as empty predictions.
    pub missing_predictions: Vec<String>,
    /// Predictions for reviews that are not in the gold set; ignored.
    pub unmatched_predictions: Vec<String>,
}

/// Count how many reviews carry each pair.
pub fn pair_frequencies<'a>(
    sets: impl IntoIterator<Item = &'a PairSet>,
) -> BTreeMap<AspectSentimentPair, usize> {
    let mut counts: BTreeMap<_, _> = AspectSentimentPair::all().map(|p| (p, 0)).collect();
    for set in sets {
        for pair in set {
            *counts.get_mut(pair).expect("all pairs present") += 1;
        }
    }
    counts
}

pub fn evaluate_classifier(
    gold: &[GoldAnnotation],
    predictions: &HashMap<String, PairSet>,
) -> Result<EvaluationReport, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut seen = BTreeSet::new();
    for g in gold {
        if !seen.insert(g.review_id.as_str()) {
            return Err(EvalError::DuplicateReviewId(g.review_id.clone()));
        }
    }

    let empty = PairSet::new();
    let mut missing = Vec::new();
    let reviews: Vec<ReviewEvaluation> = gold
        .iter()
        .map(|g| {
            let predicted = predictions.get(&g.review_id).unwrap_or_else(|| {
                missing.push(g.review_id.clone());
                &empty
            });
            ReviewEvaluation {
                review_id: g.review_id.clone(),
                gold: g.gold_pairs.clone(),
                predicted: predicted.clone(),
                metrics: per_review_prf(predicted, &g.gold_pairs),
            }
        })
        .collect();
    if !missing.is_empty() {
        tracing::warn!(
            count = missing.len(),
            "gold reviews without predictions scored as empty"
        );
    }
    let mut unmatched: Vec<String> = predictions
        .keys()
        .filter(|id| !seen.contains(id.as_str()))
        .cloned()
        .collect();
    unmatched.sort();

    let per_review: Vec<_> = reviews.iter().map(|r| r.metrics).collect();
    let gold_counts = pair_frequencies(reviews.iter().map(|r| &r.gold));
    let pred_counts = pair_frequencies(reviews.iter().map(|r| &r.predicted));
    Ok(EvaluationReport {
        macro_metrics: macro_average(&per_review)?,
        frequencies: FREQUENCY_ORDER
            .iter()
            .map(|p| PairFrequency {
                pair: *p,
                gold: gold_counts[p],
                predicted: pred_counts[p],
            })
            .collect(),
        reviews,
        missing_predictions: missing,
        unmatched_predictions: unmatched,
    })
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.macro_metrics;
        writeln!(f, "reviews evaluated: {}", self.reviews.len())?;
        writeln!(
            f,
            "macro precision {:.4}  recall {:.4}  f1 {:.4}",
            m.precision, m.recall, m.f1
        )?;
        writeln!(f)?;
        writeln!(f, "{:<30} {:>5} {:>9}", "pair", "gold", "predicted")?;
        for row in &self.frequencies {
            writeln!(
                f,
                "{:<30} {:>5} {:>9}",
                row.pair.to_string(),
                row.gold,
                row.predicted
            )?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "{:<20} {:>9} {:>9} {:>9}",
            "review", "precision", "recall", "f1"
        )?;
        for r in &self.reviews {
            writeln!(
                f,
                "{:<20} {:>9.4} {:>9.4} {:>9.4}",
                r.review_id, r.metrics.precision, r.metrics.recall, r.metrics.f1
            )?;
        }
        if !self.missing_predictions.is_empty() {
            writeln!(
                f,
                "\nwarning: no prediction for {} review(s), scored as empty: {}",
                self.missing_predictions.len(),
                self.missing_predictions.join(", ")
            )?;
        }
        if !self.unmatched_predictions.is_empty() {
            writeln!(
                f,
                "\nwarning: ignored {} prediction(s) without gold annotation: {}",
                self.unmatched_predictions.len(),
                self.unmatched_predictions.join(", ")
            )?;
        }
        Ok(())
    }
}

/// One annotator's ratings of one generated summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationScore {
    pub example_id: String,
    pub annotator_id: String,
    pub factuality: u8,
    pub noisiness: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub factuality: f64,
    pub noisiness: f64,
    pub examples: usize,
}

/// Mean per example across its annotators, then the unweighted mean of those
/// per-example means.
pub fn aggregate_annotations(scores: &[AnnotationScore]) -> Result<AnnotationSummary, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut per_example: BTreeMap<&str, BTreeMap<&str, (u8, u8)>> = BTreeMap::new();
    for s in scores {
        for (metric, value) in [("factuality", s.factuality), ("noisiness", s.noisiness)] {
            if !(1..=10).contains(&value) {
                return Err(EvalError::ScoreOutOfRange {
                    example_id: s.example_id.clone(),
                    metric,
                    value,
                });
            }
        }
        let by_annotator = per_example.entry(&s.example_id).or_default();
        if by_annotator
            .insert(&s.annotator_id, (s.factuality, s.noisiness))
            .is_some()
        {
            return Err(EvalError::DuplicateScore {
                example_id: s.example_id.clone(),
                annotator_id: s.annotator_id.clone(),
            });
        }
    }
    let mean = |values: &mut dyn Iterator<Item = f64>| {
        let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        sum / n as f64
    };
    let example_means: Vec<(f64, f64)> = per_example
        .values()
        .map(|a| {
            (
                mean(&mut a.values().map(|(f, _)| f64::from(*f))),
                mean(&mut a.values().map(|(_, n)| f64::from(*n))),
            )
        })
        .collect();
    Ok(AnnotationSummary {
        factuality: mean(&mut example_means.iter().map(|m| m.0)),
        noisiness: mean(&mut example_means.iter().map(|m| m.1)),
        examples: example_means.len(),
    })
}
