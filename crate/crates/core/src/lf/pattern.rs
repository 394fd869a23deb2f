use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{is_predicate, is_variable, split_compound, LogicalForm, ParamAnnotation, ParamKind, Span};
use crate::error::{Error, Result};

/// Position of every parameter surface in the question, numbered per kind.
///
/// Surfaces are ordered by span start; a surface annotated twice keeps the
/// number of its first span.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuestionOrder {
    slots: BTreeMap<String, (ParamKind, usize)>,
}

impl QuestionOrder {
    pub fn from_params(params: &[ParamAnnotation]) -> Self {
        let mut sorted: Vec<&ParamAnnotation> = params.iter().collect();
        sorted.sort_by_key(|p| p.span);
        let mut counts: BTreeMap<ParamKind, usize> = BTreeMap::new();
        let mut slots = BTreeMap::new();
        for p in sorted {
            if slots.contains_key(&p.surface) {
                continue;
            }
            let n = counts.entry(p.kind).or_insert(0);
            *n += 1;
            slots.insert(p.surface.clone(), (p.kind, *n));
        }
        QuestionOrder { slots }
    }

    /// Placeholder token (`entity1`, `value2`, ...) for a surface.
    pub fn placeholder(&self, surface: &str) -> Option<String> {
        self.slots
            .get(surface)
            .map(|(kind, k)| format!("{}{k}", kind.slot_stem()))
    }

    pub fn get(&self, surface: &str) -> Option<(ParamKind, usize)> {
        self.slots.get(surface).copied()
    }

    pub fn arity(&self, kind: ParamKind) -> usize {
        self.slots.values().filter(|(k, _)| *k == kind).count()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub(crate) fn check_covers(&self, params: &[ParamAnnotation]) -> Result<()> {
        match params.iter().find(|p| !self.slots.contains_key(&p.surface)) {
            Some(p) => Err(Error::UnknownEntity(p.surface.clone())),
            None => Ok(()),
        }
    }
}

/// A question with every parameter span collapsed to its placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuestionPattern {
    pub tokens: Vec<String>,
}

impl fmt::Display for QuestionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// A structure-stripped logical form with split predicate words and
/// parameter placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LfPattern {
    pub tokens: Vec<String>,
}

impl fmt::Display for LfPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// Replaces each annotated span of `question` by its placeholder, left to right.
pub fn derive_question_pattern(question: &[String], params: &[ParamAnnotation]) -> Result<QuestionPattern> {
    let mut spans: Vec<(Span, &ParamAnnotation)> = params.iter().map(|p| (p.span, p)).collect();
    spans.sort_by_key(|(s, _)| *s);
    for (s, _) in &spans {
        s.check(question.len())?;
    }
    if spans.windows(2).any(|w| w[0].0.overlaps(w[1].0)) {
        return Err(Error::OverlappingSpans);
    }
    let order = QuestionOrder::from_params(params);

    let mut tokens = Vec::with_capacity(question.len());
    let mut pos = 0;
    for (span, p) in spans {
        tokens.extend_from_slice(&question[pos..span.start()]);
        tokens.push(order.placeholder(&p.surface).expect("surface is in its own order"));
        pos = span.end() + 1;
    }
    tokens.extend_from_slice(&question[pos..]);
    Ok(QuestionPattern { tokens })
}

/// Derives the logical-form pattern: parentheses and `lambda <var>` are
/// dropped, predicates are split into lowercase words and parameters are
/// replaced by their question-order placeholders.
pub fn derive_lf_pattern(lf: &LogicalForm, params: &[ParamAnnotation], order: &QuestionOrder) -> Result<LfPattern> {
    order.check_covers(params)?;
    Ok(pattern_of_tokens(lf.tokens(), |tok| {
        if params.iter().any(|p| p.surface == tok) {
            order.placeholder(tok)
        } else {
            None
        }
    }))
}

pub(crate) fn pattern_of_tokens<F>(tokens: &[String], mut slot: F) -> LfPattern
where
    F: FnMut(&str) -> Option<String>,
{
    let mut out = Vec::with_capacity(tokens.len());
    let mut iter = tokens.iter().peekable();
    while let Some(tok) = iter.next() {
        match tok.as_str() {
            "(" | ")" => {}
            "lambda" => {
                if iter.peek().is_some_and(|t| is_variable(t)) {
                    iter.next();
                }
            }
            _ => {
                if let Some(placeholder) = slot(tok) {
                    out.push(placeholder);
                } else if is_predicate(tok) {
                    out.extend(split_compound(tok).map(str::to_lowercase));
                } else {
                    out.push(tok.clone());
                }
            }
        }
    }
    LfPattern { tokens: out }
}
