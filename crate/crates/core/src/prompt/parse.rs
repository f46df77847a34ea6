//! Parsers for the structured tail of model responses.

use std::sync::LazyLock;

use regex::Regex;

use super::ParseError;
use crate::domain::{parse_aspect, parse_sentiment, AspectSentimentPair, PairSet};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    List(Vec<Node>),
    Str(String),
}

impl Node {
    fn render(&self) -> String {
        match self {
            Node::Str(s) => format!("{s:?}"),
            Node::List(items) => {
                let inner: Vec<String> = items.iter().map(Node::render).collect();
                format!("[{}]", inner.join(", "))
            }
        }
    }

    fn is_flat_pair_like(&self) -> bool {
        matches!(self, Node::List(items) if !items.is_empty() && items.iter().all(|n| matches!(n, Node::Str(_))))
    }
}

fn closing_quote(open: char) -> Option<&'static [char]> {
    match open {
        '"' | '\u{201C}' | '\u{201D}' => Some(&['"', '\u{201C}', '\u{201D}']),
        '\'' | '\u{2018}' | '\u{2019}' => Some(&['\'', '\u{2018}', '\u{2019}']),
        _ => None,
    }
}

/// Recursive-descent reader for bracketed lists of quoted strings.
///
/// Separators between items are optional and may be any mix of commas and
/// whitespace, which admits `["Food," "Positive"]` as written by some models.
struct Reader<'a> {
    chars: &'a [char],
}

impl Reader<'_> {
    fn node(&self, mut i: usize) -> Option<(Node, usize)> {
        let c = *self.chars.get(i)?;
        if c == '[' {
            i += 1;
            let mut items = Vec::new();
            loop {
                while matches!(self.chars.get(i), Some(c) if c.is_whitespace() || *c == ',') {
                    i += 1;
                }
                match self.chars.get(i)? {
                    ']' => return Some((Node::List(items), i + 1)),
                    _ => {
                        let (item, next) = self.node(i)?;
                        items.push(item);
                        i = next;
                    }
                }
            }
        }
        let closers = closing_quote(c)?;
        i += 1;
        let mut s = String::new();
        loop {
            let c = *self.chars.get(i)?;
            if c == '\\' {
                s.push(*self.chars.get(i + 1)?);
                i += 2;
                continue;
            }
            if closers.contains(&c) {
                return Some((Node::Str(s), i + 1));
            }
            if c == '\n' {
                return None;
            }
            s.push(c);
            i += 1;
        }
    }
}

enum Candidate {
    Nested(Vec<Node>),
    Run(Vec<Node>),
}

/// Find the final pair-list structure in `raw`.
///
/// A structure is either a list whose items are lists (`[["Food",
/// "Positive"]]`, or `[]`), or a run of adjacent bare pairs separated only by
/// commas and whitespace (`["Food", "Positive"] ["Pricing", "Negative"]`).
fn last_structure(raw: &str) -> Option<Candidate> {
    let chars: Vec<char> = raw.chars().collect();
    let reader = Reader { chars: &chars };

    let mut found: Vec<(usize, usize, Node)> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '[' {
            if let Some((node, end)) = reader.node(i) {
                found.push((i, end, node));
                i = end;
                continue;
            }
        }
        i += 1;
    }

    let mut last: Option<Candidate> = None;
    let mut run: Vec<Node> = Vec::new();
    let mut run_end = 0;
    for (start, end, node) in found {
        if node.is_flat_pair_like() {
            let adjacent = !run.is_empty()
                && chars[run_end..start]
                    .iter()
                    .all(|c| c.is_whitespace() || *c == ',');
            if !adjacent {
                run.clear();
            }
            run.push(node);
            run_end = end;
            last = Some(Candidate::Run(run.clone()));
        } else {
            run.clear();
            if let Node::List(items) = node {
                last = Some(Candidate::Nested(items));
            }
        }
    }
    last
}

fn clean_label(label: &str) -> &str {
    label.trim().trim_matches(',').trim()
}

fn pair_from_node(node: &Node) -> Result<AspectSentimentPair, ParseError> {
    let element = node.render();
    let Node::List(items) = node else {
        return Err(ParseError::MalformedPair { element });
    };
    let [Node::Str(aspect), Node::Str(sentiment)] = items.as_slice() else {
        return Err(ParseError::MalformedPair { element });
    };
    let aspect = parse_aspect(clean_label(aspect)).map_err(|_| ParseError::UnknownAspect {
        label: aspect.clone(),
        element: element.clone(),
    })?;
    let sentiment =
        parse_sentiment(clean_label(sentiment)).map_err(|_| ParseError::UnknownSentiment {
            label: sentiment.clone(),
            element: element.clone(),
        })?;
    Ok(AspectSentimentPair::new(aspect, sentiment))
}

/// Extract the set of pairs from a classifier response.
///
/// Scans for the last list-of-pairs structure, so leading CLUES and
/// REASONING prose is ignored.
pub fn parse_pair_list(raw_llm_output: &str) -> Result<PairSet, ParseError> {
    let items = match last_structure(raw_llm_output).ok_or(ParseError::NoPairListFound)? {
        Candidate::Nested(items) | Candidate::Run(items) => items,
    };
    items.iter().map(pair_from_node).collect()
}

/// Render pairs in list-of-lists notation, `[["Food", "Positive"]]`.
pub fn render_pairs(pairs: &PairSet) -> String {
    let inner: Vec<String> = pairs
        .iter()
        .map(|p| format!("[\"{}\", \"{}\"]", p.aspect, p.sentiment))
        .collect();
    format!("[{}]", inner.join(", "))
}

static BULLET: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:[-*+•◦‣▪●]|\(?\d{1,3}[.)])(?:\s+(.*))?$").expect("bullet regex")
});

/// Collect bullet lines (`-`, `*`, `•`, `1.`, `2)` ...) in order, markers
/// stripped. Non-bullet lines are ignored.
pub fn parse_bullets(raw_llm_output: &str) -> Result<Vec<String>, ParseError> {
    let bullets: Vec<String> = raw_llm_output
        .lines()
        .filter_map(|line| BULLET.captures(line))
        .filter_map(|caps| caps.get(1).map(|m| m.as_str().trim().to_string()))
        .filter(|b| !b.is_empty())
        .collect();
    if bullets.is_empty() && !raw_llm_output.trim().is_empty() {
        return Err(ParseError::NoBulletsFound);
    }
    Ok(bullets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Aspect, Sentiment};
    use proptest::prelude::*;

    fn pair(a: Aspect, s: Sentiment) -> AspectSentimentPair {
        AspectSentimentPair::new(a, s)
    }

    #[test]
    fn parses_worked_output() {
        let got =
            parse_pair_list(r#"[["Food", "Positive"],["Customer Service", "Negative"]]"#).unwrap();
        let want: PairSet = [
            pair(Aspect::Food, Sentiment::Positive),
            pair(Aspect::CustomerService, Sentiment::Negative),
        ]
        .into();
        assert_eq!(got, want);
    }

    #[test]
    fn tolerates_comma_inside_quotes() {
        let got =
            parse_pair_list(r#"[["Food," "Positive"],["Customer Service," "Negative"]]."#).unwrap();
        assert_eq!(got.len(), 2);
        assert!(got.contains(&pair(Aspect::CustomerService, Sentiment::Negative)));
    }

    #[test]
    fn empty_and_duplicates() {
        assert!(parse_pair_list("[]").unwrap().is_empty());
        let got = parse_pair_list(r#"[["Food","Positive"],["Food","Positive"]]"#).unwrap();
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn juxtaposed_bare_pairs() {
        let got = parse_pair_list(
            "ASPECT-SENTIMENT Pairs: [“Ambiance”, “Positive”] [“Food”, “Negative”]",
        )
        .unwrap();
        let want: PairSet = [
            pair(Aspect::Ambiance, Sentiment::Positive),
            pair(Aspect::Food, Sentiment::Negative),
        ]
        .into();
        assert_eq!(got, want);
    }

    #[test]
    fn errors() {
        assert_eq!(
            parse_pair_list("no structure here"),
            Err(ParseError::NoPairListFound)
        );
        assert_eq!(
            parse_pair_list("[[\"Food\""),
            Err(ParseError::NoPairListFound)
        );
        assert!(matches!(
            parse_pair_list(r#"[["Dessert", "Positive"]]"#),
            Err(ParseError::UnknownAspect { ref label, .. }) if label == "Dessert"
        ));
        assert!(matches!(
            parse_pair_list(r#"[["Food", "Neutral"]]"#),
            Err(ParseError::UnknownSentiment { ref element, .. }) if element.contains("Neutral")
        ));
        assert!(matches!(
            parse_pair_list(r#"[["Food", "Positive", "Extra"]]"#),
            Err(ParseError::MalformedPair { .. })
        ));
        assert!(matches!(
            parse_pair_list(r#"[["Food"]]"#),
            Err(ParseError::MalformedPair { .. })
        ));
    }

    #[test]
    fn bracketed_clue_prose_is_not_mistaken_for_answer() {
        let raw = "CLUES: [ambiance, warm], [pasta, undercooked]\nREASONING: fine.\nASPECT-SENTIMENT Pairs: []";
        assert!(parse_pair_list(raw).unwrap().is_empty());
    }

    /// Reference scanner: walk backwards from the last `]`, count bracket
    /// depth to find its opener, and return that slice.
    fn reference_last_balanced(raw: &str) -> Option<&str> {
        let bytes = raw.as_bytes();
        let end = raw.rfind(']')?;
        let mut depth = 0i32;
        for start in (0..=end).rev() {
            match bytes[start] {
                b']' => depth += 1,
                b'[' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(&raw[start..=end]);
                    }
                }
                _ => {}
            }
        }
        None
    }

    fn arb_pairs() -> impl Strategy<Value = PairSet> {
        proptest::collection::btree_set((0usize..5, 0usize..2), 0..=10).prop_map(|s| {
            s.into_iter()
                .map(|(a, b)| pair(Aspect::ALL[a], Sentiment::ALL[b]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn round_trip(pairs in arb_pairs()) {
            prop_assert_eq!(parse_pair_list(&render_pairs(&pairs)).unwrap(), pairs);
        }

        #[test]
        fn leading_prose_matches_reference_scanner(
            pairs in arb_pairs(),
            prose in "[A-Za-z .:,]{0,80}",
        ) {
            let raw = format!("CLUES: {prose}\nREASONING: {prose}\n{}", render_pairs(&pairs));
            let tail = reference_last_balanced(&raw).unwrap();
            prop_assert_eq!(parse_pair_list(&raw).unwrap(), parse_pair_list(tail).unwrap());
            prop_assert_eq!(parse_pair_list(&raw).unwrap(), pairs);
        }
    }

    #[test]
    fn prose_then_hygiene() {
        let got = parse_pair_list(r#"CLUES: ... REASONING: ... [["Hygiene","Negative"]]"#).unwrap();
        assert_eq!(got, [pair(Aspect::Hygiene, Sentiment::Negative)].into());
        assert_eq!(
            reference_last_balanced(r#"CLUES: ... REASONING: ... [["Hygiene","Negative"]]"#),
            Some(r#"[["Hygiene","Negative"]]"#)
        );
    }

    #[test]
    fn bullets_basic() {
        assert_eq!(
            parse_bullets("- slow service\n- rude staff").unwrap(),
            ["slow service", "rude staff"]
        );
        assert_eq!(
            parse_bullets("Summary:\n* A\n* B\n* C").unwrap(),
            ["A", "B", "C"]
        );
        assert_eq!(
            parse_bullets("1. waits were long\n2. orders wrong").unwrap(),
            ["waits were long", "orders wrong"]
        );
        assert_eq!(
            parse_bullets("• one\n  - two\n-\n- \n3) three").unwrap(),
            ["one", "two", "three"]
        );
        assert!(parse_bullets("").unwrap().is_empty());
        assert_eq!(
            parse_bullets("no bullets at all"),
            Err(ParseError::NoBulletsFound)
        );
        assert_eq!(
            parse_bullets("---\n**bold**"),
            Err(ParseError::NoBulletsFound)
        );
    }

    /// Reference line scanner written without regexes.
    fn reference_bullets(raw: &str) -> Vec<String> {
        let mut out = Vec::new();
        for line in raw.lines() {
            let t = line.trim_start();
            let mut chars = t.char_indices();
            let rest = match chars.next() {
                Some((_, c)) if "-*+•◦‣▪●".contains(c) => &t[c.len_utf8()..],
                Some((_, c)) if c.is_ascii_digit() || c == '(' => {
                    let body = t.strip_prefix('(').unwrap_or(t);
                    let digits = body.chars().take_while(|c| c.is_ascii_digit()).count();
                    if digits == 0 || digits > 3 {
                        continue;
                    }
                    match body[digits..].chars().next() {
                        Some('.') | Some(')') => &body[digits + 1..],
                        _ => continue,
                    }
                }
                _ => continue,
            };
            if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
                continue;
            }
            let item = rest.trim();
            if !item.is_empty() {
                out.push(item.to_string());
            }
        }
        out
    }

    proptest! {
        #[test]
        fn bullets_match_reference_scanner(
            lines in proptest::collection::vec(
                ("(- |\\* |• |[0-9]{1,2}\\. |[0-9]\\) |  - |)", "[a-z ]{0,12}"),
                0..8,
            )
        ) {
            let raw: String = lines.iter().map(|(m, t)| format!("{m}{t}\n")).collect();
            let expected = reference_bullets(&raw);
            match parse_bullets(&raw) {
                Ok(got) => prop_assert_eq!(got, expected),
                Err(ParseError::NoBulletsFound) => prop_assert!(expected.is_empty()),
                Err(e) => prop_assert!(false, "unexpected {e:?}"),
            }
        }
    }
}
