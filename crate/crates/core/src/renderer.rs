//! Slot substitution, token estimation and budget checks.
//!
//! Templates use `{slot}` placeholders, where a slot name matches
//! `[a-z_][a-z0-9_]*`. Any other brace sequence is literal text, so data
//! examples such as `{'graph': {...}}` need no escaping. A span wrapped in
//! `[[` and `]]` is an optional segment: it is rendered only when every slot
//! it references is bound, and dropped otherwise.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composer::PromptPlan;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("unbound placeholder `{{{0}}}`")]
    UnboundPlaceholder(String),
}

/// A `{name}` occurrence inside a template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placeholder {
    pub name: String,
    /// Byte range of the whole `{name}` token.
    pub range: Range<usize>,
    /// Whether the placeholder sits inside a `[[ ... ]]` segment.
    pub optional: bool,
}

pub fn is_slot_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug)]
enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
    Optional(Vec<Piece<'a>>),
}

/// Splits a template into literal text, slots and optional segments.
fn parse_template(text: &str) -> (Vec<Piece<'_>>, Vec<Placeholder>) {
    let mut pieces = Vec::new();
    let mut found = Vec::new();
    let mut rest = 0usize;
    while rest < text.len() {
        match text[rest..].find("[[") {
            Some(off) => {
                let open = rest + off;
                match text[open + 2..].find("]]") {
                    Some(close_off) => {
                        let inner_start = open + 2;
                        let inner_end = inner_start + close_off;
                        scan_slots(&text[rest..open], rest, false, &mut pieces, &mut found);
                        let mut inner = Vec::new();
                        scan_slots(&text[inner_start..inner_end], inner_start, true, &mut inner, &mut found);
                        pieces.push(Piece::Optional(inner));
                        rest = inner_end + 2;
                    }
                    None => {
                        scan_slots(&text[rest..], rest, false, &mut pieces, &mut found);
                        rest = text.len();
                    }
                }
            }
            None => {
                scan_slots(&text[rest..], rest, false, &mut pieces, &mut found);
                rest = text.len();
            }
        }
    }
    (pieces, found)
}

fn scan_slots<'a>(text: &'a str, base: usize, optional: bool, out: &mut Vec<Piece<'a>>, found: &mut Vec<Placeholder>) {
    let bytes = text.as_bytes();
    let mut literal_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(len) = text[i + 1..].find('}') {
                let name = &text[i + 1..i + 1 + len];
                if is_slot_name(name) {
                    if literal_start < i {
                        out.push(Piece::Text(&text[literal_start..i]));
                    }
                    out.push(Piece::Slot(name));
                    found.push(Placeholder { name: name.to_string(), range: base + i..base + i + len + 2, optional });
                    i += len + 2;
                    literal_start = i;
                    continue;
                }
            }
        }
        i += 1;
    }
    if literal_start < text.len() {
        out.push(Piece::Text(&text[literal_start..]));
    }
}

/// Every placeholder in `text`, in source order.
pub fn placeholders(text: &str) -> Vec<Placeholder> {
    parse_template(text).1
}

/// Substitutes bound slots into `template`.
///
/// Values are inserted verbatim and never rescanned. Optional segments whose
/// slots are not all bound are dropped.
pub fn render(template: &str, bindings: &BTreeMap<String, String>) -> Result<String, RenderError> {
    let (pieces, _) = parse_template(template);
    let mut out = String::with_capacity(template.len());
    for piece in &pieces {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(name) => match bindings.get(*name) {
                Some(v) => out.push_str(v),
                None => return Err(RenderError::UnboundPlaceholder((*name).to_string())),
            },
            Piece::Optional(inner) => {
                let complete = inner.iter().all(|p| match p {
                    Piece::Slot(name) => bindings.contains_key(*name),
                    _ => true,
                });
                if complete {
                    for p in inner {
                        match p {
                            Piece::Text(t) => out.push_str(t),
                            Piece::Slot(name) => out.push_str(&bindings[*name]),
                            Piece::Optional(_) => {}
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Collapses runs of whitespace to single spaces and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEstimate {
    pub count: usize,
    pub method: String,
}

/// Pluggable token counting. Only [`ByteHeuristic`] ships here.
pub trait TokenEstimator {
    fn estimate(&self, text: &str) -> TokenEstimate;
}

/// `ceil(bytes / 4)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteHeuristic;

impl ByteHeuristic {
    pub const METHOD: &'static str = "bytes-div-4";
}

impl TokenEstimator for ByteHeuristic {
    fn estimate(&self, text: &str) -> TokenEstimate {
        TokenEstimate { count: text.len().div_ceil(4), method: Self::METHOD.to_string() }
    }
}

pub fn estimate_tokens(text: &str) -> TokenEstimate {
    ByteHeuristic.estimate(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitEstimate {
    pub index: usize,
    pub pattern_id: String,
    pub tokens: usize,
    /// The unit alone exceeds the whole budget.
    pub oversized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub budget: usize,
    pub total: usize,
    pub overflow: usize,
    pub units: Vec<UnitEstimate>,
    /// First unit at which the running total passes the budget.
    pub first_overflowing_unit: usize,
}

impl BudgetReport {
    pub fn oversized_units(&self) -> impl Iterator<Item = &UnitEstimate> {
        self.units.iter().filter(|u| u.oversized)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BudgetOutcome {
    Fits(PromptPlan),
    OverBudget(BudgetReport),
}

/// Checks a plan against a token budget. Over-budget plans are reported,
/// never trimmed.
pub fn fit_to_budget(plan: PromptPlan, budget: usize) -> BudgetOutcome {
    let units: Vec<UnitEstimate> = plan
        .units
        .iter()
        .enumerate()
        .map(|(index, unit)| {
            let tokens = estimate_tokens(&unit.text).count;
            UnitEstimate { index, pattern_id: unit.pattern_id.clone(), tokens, oversized: tokens > budget }
        })
        .collect();
    let total: usize = units.iter().map(|u| u.tokens).sum();
    if total <= budget {
        return BudgetOutcome::Fits(plan);
    }
    let mut running = 0;
    let mut first = 0;
    for u in &units {
        running += u.tokens;
        if running > budget {
            first = u.index;
            break;
        }
    }
    BudgetOutcome::OverBudget(BudgetReport {
        budget,
        total,
        overflow: total - budget,
        units,
        first_overflowing_unit: first,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn identity_without_slots() {
        assert_eq!(render("no slots", &BTreeMap::new()).unwrap(), "no slots");
    }

    #[test]
    fn literal_braces_survive() {
        let t = "format {'graph':{ ... }, 'a': ['b','c'...]} for {name}";
        let out = render(t, &b(&[("name", "x")])).unwrap();
        assert_eq!(out, "format {'graph':{ ... }, 'a': ['b','c'...]} for x");
    }

    #[test]
    fn unbound_is_error() {
        assert_eq!(render("hi {who}", &BTreeMap::new()), Err(RenderError::UnboundPlaceholder("who".into())));
    }

    #[test]
    fn optional_segments() {
        let t = "Make {n} examples[[ related to {focus}]].";
        assert_eq!(render(t, &b(&[("n", "3")])).unwrap(), "Make 3 examples.");
        assert_eq!(render(t, &b(&[("n", "3"), ("focus", "login")])).unwrap(), "Make 3 examples related to login.");
        let ph = placeholders(t);
        assert_eq!(ph.len(), 2);
        assert!(!ph[0].optional && ph[1].optional);
    }

    #[test]
    fn values_are_not_rescanned() {
        let out = render("{a}", &b(&[("a", "{b}")])).unwrap();
        assert_eq!(out, "{b}");
    }

    #[test]
    fn token_rule() {
        assert_eq!(estimate_tokens("").count, 0);
        assert_eq!(estimate_tokens("abcd").count, 1);
        assert_eq!(estimate_tokens("abcde").count, 2);
        assert_eq!(estimate_tokens("é").count, 1);
        assert_eq!(estimate_tokens("x").method, "bytes-div-4");
    }

    proptest! {
        #[test]
        fn subadditive(a in ".*", c in ".*") {
            let joined = format!("{a}{c}");
            prop_assert!(estimate_tokens(&joined).count
                <= estimate_tokens(&a).count + estimate_tokens(&c).count + 1);
        }

        #[test]
        fn monotone(a in ".*", c in ".*") {
            let joined = format!("{a}{c}");
            prop_assert!(estimate_tokens(&joined).count >= estimate_tokens(&a).count);
        }

        #[test]
        fn zero_iff_empty(a in ".*") {
            prop_assert_eq!(estimate_tokens(&a).count == 0, a.is_empty());
        }

        #[test]
        fn placeholder_free_identity(t in "[^{\\[]*") {
            prop_assert_eq!(render(&t, &BTreeMap::new()).unwrap(), t);
        }

        #[test]
        fn injective_on_bindings(v1 in "[^{]{0,12}", v2 in "[^{]{0,12}") {
            let t = "<{x}>";
            let r1 = render(t, &b(&[("x", &v1)])).unwrap();
            let r2 = render(t, &b(&[("x", &v2)])).unwrap();
            prop_assert_eq!(r1 == r2, v1 == v2);
        }
    }
}
