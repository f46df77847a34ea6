//! Closed vocabularies and the value types shared across the crate.
//!
//! Labels coming back from a language model are matched leniently (case and
//! whitespace are ignored) but the vocabularies themselves are closed: there
//! are exactly five aspects and two sentiments.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::de::{self, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("unknown aspect label {0:?}")]
    UnknownAspect(String),
    #[error("unknown sentiment label {0:?}")]
    UnknownSentiment(String),
    #[error("{path}: {message}")]
    InvalidReviewSet { path: String, message: String },
}

/// Collapse internal whitespace runs to one space and trim the ends.
pub(crate) fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Aspect {
    Food,
    Ambiance,
    Hygiene,
    CustomerService,
    Pricing,
}

impl Aspect {
    /// Vocabulary order, as listed to the classifier.
    pub const ALL: [Aspect; 5] = [
        Aspect::Food,
        Aspect::Ambiance,
        Aspect::Hygiene,
        Aspect::CustomerService,
        Aspect::Pricing,
    ];

    /// Section order of a digest (highest user priority first).
    pub const DIGEST_ORDER: [Aspect; 5] = [
        Aspect::Food,
        Aspect::Pricing,
        Aspect::CustomerService,
        Aspect::Hygiene,
        Aspect::Ambiance,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            Aspect::Food => "Food",
            Aspect::Ambiance => "Ambiance",
            Aspect::Hygiene => "Hygiene",
            Aspect::CustomerService => "Customer Service",
            Aspect::Pricing => "Pricing",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Aspect {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_aspect(s)
    }
}

/// Match a label against the five aspect display strings, ignoring case and
/// surrounding or repeated whitespace.
pub fn parse_aspect(label: &str) -> Result<Aspect, DomainError> {
    let normalized = normalize_label(label);
    Aspect::ALL
        .into_iter()
        .find(|a| a.display_name().eq_ignore_ascii_case(&normalized))
        .ok_or_else(|| DomainError::UnknownAspect(label.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sentiment {
    Positive,
    Negative,
}

impl Sentiment {
    pub const ALL: [Sentiment; 2] = [Sentiment::Positive, Sentiment::Negative];

    pub fn display_name(self) -> &'static str {
        match self {
            Sentiment::Positive => "Positive",
            Sentiment::Negative => "Negative",
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Sentiment {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_sentiment(s)
    }
}

pub fn parse_sentiment(label: &str) -> Result<Sentiment, DomainError> {
    let normalized = normalize_label(label);
    Sentiment::ALL
        .into_iter()
        .find(|s| s.display_name().eq_ignore_ascii_case(&normalized))
        .ok_or_else(|| DomainError::UnknownSentiment(label.to_string()))
}

macro_rules! label_serde {
    ($ty:ty, $parse:path, $what:literal) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.display_name())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(deserializer)?;
                $parse(&raw).map_err(|_| {
                    de::Error::custom(format!(concat!("unknown ", $what, " {:?}"), raw))
                })
            }
        }
    };
}

label_serde!(Aspect, parse_aspect, "aspect");
label_serde!(Sentiment, parse_sentiment, "sentiment");

/// The atomic classification label. Serialized as a two-element array,
/// `["Food", "Positive"]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AspectSentimentPair {
    pub aspect: Aspect,
    pub sentiment: Sentiment,
}

impl AspectSentimentPair {
    pub const fn new(aspect: Aspect, sentiment: Sentiment) -> Self {
        Self { aspect, sentiment }
    }

    /// All ten pairs, aspect-major in vocabulary order.
    pub fn all() -> impl Iterator<Item = AspectSentimentPair> {
        Aspect::ALL
            .into_iter()
            .flat_map(|a| Sentiment::ALL.into_iter().map(move |s| Self::new(a, s)))
    }
}

impl fmt::Display for AspectSentimentPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.aspect, self.sentiment)
    }
}

impl Serialize for AspectSentimentPair {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (self.aspect, self.sentiment).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AspectSentimentPair {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PairVisitor;

        impl<'de> Visitor<'de> for PairVisitor {
            type Value = AspectSentimentPair;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a two-element [aspect, sentiment] array")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let aspect = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let sentiment = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                Ok(AspectSentimentPair { aspect, sentiment })
            }
        }

        deserializer.deserialize_seq(PairVisitor)
    }
}

/// A set of pairs; ordered so that rendering and serialization are stable.
pub type PairSet = BTreeSet<AspectSentimentPair>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
}

impl Review {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            rating: None,
            date: None,
            author: None,
        }
    }

    pub fn with_date(mut self, date: NaiveDate) -> Self {
        self.date = Some(date);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedReview {
    pub review: Review,
    pub pairs: PairSet,
    /// Set when the review could not be classified; `pairs` is then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl ClassifiedReview {
    pub fn new(review: Review, pairs: PairSet) -> Self {
        Self {
            review,
            pairs,
            diagnostic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestaurantReviewSet {
    pub restaurant_id: String,
    pub reviews: Vec<Review>,
}

impl RestaurantReviewSet {
    pub fn new(restaurant_id: impl Into<String>, reviews: Vec<Review>) -> Self {
        Self {
            restaurant_id: restaurant_id.into(),
            reviews,
        }
    }

    /// Check the invariants serde cannot express: non-empty, pairwise
    /// distinct ids and ratings within 1..=5.
    pub fn validate(&self) -> Result<(), DomainError> {
        let mut seen = HashSet::with_capacity(self.reviews.len());
        for (i, review) in self.reviews.iter().enumerate() {
            if review.id.is_empty() {
                return Err(DomainError::InvalidReviewSet {
                    path: format!("reviews[{i}].id"),
                    message: "review id must not be empty".into(),
                });
            }
            if !seen.insert(review.id.as_str()) {
                return Err(DomainError::InvalidReviewSet {
                    path: format!("reviews[{i}].id"),
                    message: format!("duplicate review id {:?}", review.id),
                });
            }
            if let Some(rating) = review.rating {
                if !(1..=5).contains(&rating) {
                    return Err(DomainError::InvalidReviewSet {
                        path: format!("reviews[{i}].rating"),
                        message: format!("rating {rating} outside 1..=5"),
                    });
                }
            }
        }
        Ok(())
    }
}
