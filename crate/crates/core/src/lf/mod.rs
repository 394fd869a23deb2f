//! Text algebra over questions and logical forms.
//!
//! Everything here is a pure function of its inputs: tokenization, logical
//! form parsing, sketch extraction, question/logical-form patterns and the
//! entity-abstracted templates used to rebuild full logical forms.

mod pattern;
mod sketch;
mod template;

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pattern::{derive_lf_pattern, derive_question_pattern, LfPattern, QuestionOrder, QuestionPattern};
pub use sketch::{extract_sketch, Sketch};
pub use template::{derive_template, substitute_template, LfTemplate, SlotFillers};

/// Separates the turns of a multi-turn question or logical form.
pub const TURN_SEPARATOR: &str = "|||";
/// Namespace prefix carried by knowledge-base predicates.
pub const PREDICATE_PREFIX: &str = "mso:";

/// A whitespace-tokenized, non-empty sequence of tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(TokenSeq(tokens))
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// Tokenizes a question: whitespace split, lowercased.
pub fn tokenize_question(text: &str) -> Result<TokenSeq> {
    TokenSeq::new(text.split_whitespace().map(str::to_lowercase).collect())
}

/// Tokenizes logical-form text: whitespace split, case preserved.
pub fn tokenize_form(text: &str) -> Result<TokenSeq> {
    TokenSeq::new(text.split_whitespace().map(str::to_owned).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Entity,
    Value,
    Type,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Entity => "entity",
            ParamKind::Value => "value",
            ParamKind::Type => "type",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "entity" => Some(ParamKind::Entity),
            "value" => Some(ParamKind::Value),
            "type" => Some(ParamKind::Type),
            _ => None,
        }
    }

    /// Placeholder stem used in patterns and templates (`entity1`, `value1`, ...).
    pub fn slot_stem(self) -> &'static str {
        self.as_str()
    }
}

/// Inclusive token span `[start, end]` into a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span(pub usize, pub usize);

impl Span {
    pub fn start(self) -> usize {
        self.0
    }

    pub fn end(self) -> usize {
        self.1
    }

    pub fn len(self) -> usize {
        self.1 + 1 - self.0
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn overlaps(self, other: Span) -> bool {
        self.0 <= other.1 && other.0 <= self.1
    }

    pub fn check(self, question_len: usize) -> Result<()> {
        if self.0 > self.1 || self.1 >= question_len {
            return Err(Error::SpanOutOfRange {
                start: self.0,
                end: self.1,
                len: question_len,
            });
        }
        Ok(())
    }

    /// Underscore-joined surface of the span.
    pub fn surface(self, question: &[String]) -> String {
        question[self.0..=self.1].join("_")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamAnnotation {
    pub surface: String,
    pub kind: ParamKind,
    pub span: Span,
}

impl ParamAnnotation {
    pub fn new(surface: impl Into<String>, kind: ParamKind, start: usize, end: usize) -> Self {
        ParamAnnotation {
            surface: surface.into(),
            kind,
            span: Span(start, end),
        }
    }

    /// Checks the span bounds and that the span spells the surface.
    pub fn validate(&self, question: &[String]) -> Result<()> {
        self.span.check(question.len())?;
        if self.span.surface(question) != self.surface {
            return Err(Error::SpanMismatch {
                surface: self.surface.clone(),
                start: self.span.0,
                end: self.span.1,
            });
        }
        Ok(())
    }
}

/// A tokenized logical form with parentheses balanced in every turn.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LogicalForm {
    tokens: Vec<String>,
}

/// Parses logical-form text, verifying per-turn parenthesis balance.
pub fn parse_logical_form(text: &str) -> Result<LogicalForm> {
    let tokens = tokenize_form(text).map_err(|_| Error::EmptyForm)?;
    LogicalForm::from_tokens(tokens.into_inner())
}

impl LogicalForm {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyForm);
        }
        let mut turn = 0;
        let mut depth: i64 = 0;
        for tok in &tokens {
            match tok.as_str() {
                "(" => depth += 1,
                ")" => {
                    depth -= 1;
                    if depth < 0 {
                        return Err(Error::UnbalancedParens(turn));
                    }
                }
                TURN_SEPARATOR => {
                    if depth != 0 {
                        return Err(Error::UnbalancedParens(turn));
                    }
                    turn += 1;
                }
                _ => {}
            }
        }
        if depth != 0 {
            return Err(Error::UnbalancedParens(turn));
        }
        Ok(LogicalForm { tokens })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn turns(&self) -> Vec<&[String]> {
        self.tokens.split(|t| t == TURN_SEPARATOR).collect()
    }

    /// Predicate tokens in order of appearance, repeats included.
    pub fn predicates(&self) -> Vec<&str> {
        self.tokens
            .iter()
            .filter(|t| is_predicate(t))
            .map(String::as_str)
            .collect()
    }
}

impl fmt::Display for LogicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

pub fn is_predicate(token: &str) -> bool {
    token.starts_with(PREDICATE_PREFIX)
}

pub fn is_variable(token: &str) -> bool {
    token.starts_with('?')
}

/// Decimal integer or float literal (`12`, `-3`, `4.5`, `1e3`).
pub fn is_numeric(token: &str) -> bool {
    token.bytes().any(|b| b.is_ascii_digit())
        && token
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'))
        && token.parse::<f64>().is_ok()
}

/// Splits a compound predicate or entity into words on `:`, `.` and `_`,
/// dropping the `mso` namespace piece.
pub fn split_compound(token: &str) -> impl Iterator<Item = &str> {
    token.split([':', '.', '_']).filter(|w| !w.is_empty() && *w != "mso")
}
