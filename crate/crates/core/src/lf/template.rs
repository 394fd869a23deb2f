use std::fmt;

use serde::{Deserialize, Serialize};

use super::pattern::pattern_of_tokens;
use super::{LfPattern, LogicalForm, ParamAnnotation, ParamKind, QuestionOrder};
use crate::error::{Error, Result};

/// A logical form whose parameters are replaced by question-order slots
/// (`entityK`, `valueK`, `typeK`). Predicates stay concrete.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LfTemplate {
    pub tokens: Vec<String>,
    pub entity_arity: usize,
    pub value_arity: usize,
    pub type_arity: usize,
}

impl LfTemplate {
    pub fn arity(&self, kind: ParamKind) -> usize {
        match kind {
            ParamKind::Entity => self.entity_arity,
            ParamKind::Value => self.value_arity,
            ParamKind::Type => self.type_arity,
        }
    }

    pub fn total_arity(&self) -> usize {
        self.entity_arity + self.value_arity + self.type_arity
    }

    /// Pattern of the template; equals the pattern of the form it came from.
    pub fn pattern(&self) -> LfPattern {
        pattern_of_tokens(&self.tokens, |_| None)
    }
}

impl fmt::Display for LfTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// Surfaces filling each slot kind, in question order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotFillers {
    pub entities: Vec<String>,
    pub values: Vec<String>,
    pub types: Vec<String>,
}

impl SlotFillers {
    pub fn entities<S: Into<String>>(entities: impl IntoIterator<Item = S>) -> Self {
        SlotFillers {
            entities: entities.into_iter().map(Into::into).collect(),
            ..Default::default()
        }
    }

    /// Gold fillers of an annotated sample, in question order.
    pub fn from_params(params: &[ParamAnnotation]) -> Self {
        let order = QuestionOrder::from_params(params);
        let mut out = SlotFillers::default();
        let mut seen: Vec<(ParamKind, usize, &str)> = params
            .iter()
            .filter_map(|p| order.get(&p.surface).map(|(kind, k)| (kind, k, p.surface.as_str())))
            .collect();
        seen.sort();
        seen.dedup();
        for (kind, _, surface) in seen {
            out.list_mut(kind).push(surface.to_string());
        }
        out
    }

    pub fn list(&self, kind: ParamKind) -> &[String] {
        match kind {
            ParamKind::Entity => &self.entities,
            ParamKind::Value => &self.values,
            ParamKind::Type => &self.types,
        }
    }

    fn list_mut(&mut self, kind: ParamKind) -> &mut Vec<String> {
        match kind {
            ParamKind::Entity => &mut self.entities,
            ParamKind::Value => &mut self.values,
            ParamKind::Type => &mut self.types,
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len() + self.values.len() + self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Abstracts every annotated parameter of `lf` to its question-order slot.
pub fn derive_template(lf: &LogicalForm, params: &[ParamAnnotation], order: &QuestionOrder) -> Result<LfTemplate> {
    order.check_covers(params)?;
    let tokens = lf
        .tokens()
        .iter()
        .map(|tok| {
            if params.iter().any(|p| p.surface == *tok) {
                order.placeholder(tok).expect("covered above")
            } else {
                tok.clone()
            }
        })
        .collect();
    let mut arity = [0usize; 3];
    for p in params {
        if let Some((kind, k)) = order.get(&p.surface) {
            let slot = &mut arity[kind as usize];
            *slot = (*slot).max(k);
        }
    }
    Ok(LfTemplate {
        tokens,
        entity_arity: arity[ParamKind::Entity as usize],
        value_arity: arity[ParamKind::Value as usize],
        type_arity: arity[ParamKind::Type as usize],
    })
}

fn parse_slot(token: &str) -> Option<(ParamKind, usize)> {
    for kind in [ParamKind::Entity, ParamKind::Value, ParamKind::Type] {
        if let Some(rest) = token.strip_prefix(kind.slot_stem()) {
            if let Ok(k) = rest.parse::<usize>() {
                if k >= 1 {
                    return Some((kind, k));
                }
            }
        }
    }
    None
}

/// Fills the template slots; `entityK` takes `fillers.entities[K-1]` and so on.
pub fn substitute_template(template: &LfTemplate, fillers: &SlotFillers) -> Result<LogicalForm> {
    for kind in [ParamKind::Entity, ParamKind::Value, ParamKind::Type] {
        let expected = template.arity(kind);
        let got = fillers.list(kind).len();
        if expected != got {
            return Err(Error::ArityMismatch {
                expected: template.total_arity(),
                got: fillers.len(),
            });
        }
    }
    let tokens = template
        .tokens
        .iter()
        .map(|tok| match parse_slot(tok) {
            Some((kind, k)) if k <= template.arity(kind) => fillers.list(kind)[k - 1].clone(),
            _ => tok.clone(),
        })
        .collect();
    LogicalForm::from_tokens(tokens)
}
