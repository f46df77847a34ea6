//! Review text cleaning and the recency filter applied before classification.

use std::num::NonZeroU32;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::RestaurantReviewSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Reviews older than this many days are dropped. `None` disables the
    /// age rule entirely.
    pub max_age_days: Option<NonZeroU32>,
    /// Minimum number of non-whitespace characters after cleaning.
    pub min_text_length: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            max_age_days: NonZeroU32::new(365),
            min_text_length: 1,
        }
    }
}

/// Emoji, pictograph and emoji-sequence code points.
///
/// Covers the emoji blocks proper plus the joiners, variation selectors and
/// tag characters that glue emoji sequences together. Ordinary punctuation
/// and symbols such as `©` or arrows are left alone.
const PICTOGRAPH_RANGES: &[(u32, u32)] = &[
    (0x200D, 0x200D),   // zero width joiner
    (0x20E3, 0x20E3),   // combining enclosing keycap
    (0x2300, 0x23FF),   // misc technical (watch, hourglass, ...)
    (0x25A0, 0x25FF),   // geometric shapes
    (0x2600, 0x27BF),   // misc symbols, dingbats
    (0x2900, 0x297F),   // supplemental arrows-B
    (0x2B00, 0x2BFF),   // misc symbols and arrows (stars, ...)
    (0x3030, 0x3030),   // wavy dash
    (0x303D, 0x303D),   // part alternation mark
    (0x3297, 0x3297),   // circled ideograph congratulation
    (0x3299, 0x3299),   // circled ideograph secret
    (0xFE00, 0xFE0F),   // variation selectors
    (0x1F000, 0x1FAFF), // mahjong .. symbols and pictographs extended-A
    (0xE0020, 0xE007F), // tag characters
];

pub fn is_pictograph(c: char) -> bool {
    let cp = c as u32;
    PICTOGRAPH_RANGES
        .iter()
        .any(|&(lo, hi)| (lo..=hi).contains(&cp))
}

/// Strip emoji and control characters and collapse whitespace.
///
/// Whitespace control characters (tab, CR, LF, ...) count as whitespace and
/// pictographs act as separators, so `"good😍food"` becomes `"good food"`.
/// Other control characters are dropped outright.
pub fn clean_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        if c.is_whitespace() || is_pictograph(c) {
            pending_space = true;
            continue;
        }
        if c.is_control() {
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        out.push(c);
    }
    out
}

fn non_whitespace_len(text: &str) -> usize {
    text.chars().filter(|c| !c.is_whitespace()).count()
}

/// Keep reviews that are long enough after cleaning and recent enough.
///
/// Reviews without a date are never dropped by the age rule. Survivors carry
/// their cleaned text and keep their original order.
pub fn filter_reviews(
    set: &RestaurantReviewSet,
    cfg: &PreprocessConfig,
    today: NaiveDate,
) -> RestaurantReviewSet {
    let reviews = set
        .reviews
        .iter()
        .filter(|review| match (review.date, cfg.max_age_days) {
            (Some(date), Some(max_age)) => (today - date).num_days() <= i64::from(max_age.get()),
            _ => true,
        })
        .filter_map(|review| {
            let text = clean_text(&review.text);
            (non_whitespace_len(&text) >= cfg.min_text_length).then(|| {
                let mut review = review.clone();
                review.text = text;
                review
            })
        })
        .collect();
    RestaurantReviewSet {
        restaurant_id: set.restaurant_id.clone(),
        reviews,
    }
}
