use std::collections::HashMap;
use std::fmt;

use super::{is_numeric, is_predicate, is_variable, LogicalForm, ParamAnnotation, ParamKind};
use crate::error::{Error, Result};

/// A delexicalized logical form.
///
/// Predicates become `P1..Pn` and entities `E1..Em`, numbered by first
/// occurrence. Values become `V` and types `T`; a second distinct value or
/// type in the same form gets `V2`/`T2` so that `bindings` stay a function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sketch {
    pub tokens: Vec<String>,
    /// Placeholder to concrete token, in first-occurrence order.
    pub bindings: Vec<(String, String)>,
}

impl Sketch {
    pub fn binding(&self, placeholder: &str) -> Option<&str> {
        self.bindings
            .iter()
            .find(|(p, _)| p == placeholder)
            .map(|(_, t)| t.as_str())
    }

    /// Substitutes the bindings back, reproducing the source form.
    pub fn lexicalize(&self) -> Result<LogicalForm> {
        let lookup: HashMap<&str, &str> = self.bindings.iter().map(|(p, t)| (p.as_str(), t.as_str())).collect();
        let tokens = self
            .tokens
            .iter()
            .map(|t| lookup.get(t.as_str()).map_or_else(|| t.clone(), |c| c.to_string()))
            .collect();
        LogicalForm::from_tokens(tokens)
    }

    /// The class key: the sketch tokens joined by single spaces.
    pub fn class_key(&self) -> String {
        self.tokens.join(" ")
    }
}

impl fmt::Display for Sketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Series {
    Predicate,
    Entity,
    Value,
    Type,
}

impl Series {
    fn name(self, index: usize) -> String {
        match self {
            Series::Predicate => format!("P{index}"),
            Series::Entity => format!("E{index}"),
            Series::Value if index == 1 => "V".to_string(),
            Series::Value => format!("V{index}"),
            Series::Type if index == 1 => "T".to_string(),
            Series::Type => format!("T{index}"),
        }
    }
}

/// Extracts the sketch of `lf` given its parameter annotations.
pub fn extract_sketch(lf: &LogicalForm, params: &[ParamAnnotation]) -> Result<Sketch> {
    for p in params {
        if !lf.tokens().contains(&p.surface) {
            return Err(Error::MissingSurface(p.surface.clone()));
        }
    }
    let kind_of = |tok: &str| params.iter().find(|p| p.surface == tok).map(|p| p.kind);

    let mut assigned: HashMap<&str, String> = HashMap::new();
    let mut counters: HashMap<Series, usize> = HashMap::new();
    let mut bindings = Vec::new();
    let mut tokens = Vec::with_capacity(lf.tokens().len());
    let mut after_isa = false;

    for tok in lf.tokens() {
        let series = match kind_of(tok) {
            Some(ParamKind::Entity) => Some(Series::Entity),
            Some(ParamKind::Value) => Some(Series::Value),
            Some(ParamKind::Type) => Some(Series::Type),
            None if after_isa && !is_variable(tok) && tok != "(" && tok != ")" => Some(Series::Type),
            None if is_predicate(tok) => Some(Series::Predicate),
            None if is_numeric(tok) => Some(Series::Value),
            None => None,
        };
        if tok == "isa" {
            after_isa = true;
        } else if !is_variable(tok) {
            after_isa = false;
        }

        match series {
            Some(series) => {
                let placeholder = assigned.entry(tok.as_str()).or_insert_with(|| {
                    let n = counters.entry(series).or_insert(0);
                    *n += 1;
                    let name = series.name(*n);
                    bindings.push((name.clone(), tok.clone()));
                    name
                });
                tokens.push(placeholder.clone());
            }
            None => tokens.push(tok.clone()),
        }
    }
    Ok(Sketch { tokens, bindings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lf::parse_logical_form;

    fn ent(s: &str, a: usize, b: usize) -> ParamAnnotation {
        ParamAnnotation::new(s, ParamKind::Entity, a, b)
    }

    #[test]
    fn single_relation() {
        let lf = parse_logical_form("( lambda ?x ( mso:people.person.date_of_birth chris_pine ?x ) )").unwrap();
        let sk = extract_sketch(&lf, &[ent("chris_pine", 5, 6)]).unwrap();
        assert_eq!(sk.to_string(), "( lambda ?x ( P1 E1 ?x ) )");
        assert_eq!(sk.binding("P1"), Some("mso:people.person.date_of_birth"));
        assert_eq!(sk.binding("E1"), Some("chris_pine"));
        assert_eq!(sk.lexicalize().unwrap(), lf);
    }

    #[test]
    fn multi_turn_entity() {
        let e = "travels_in_the_interior_districts_of_africa";
        let lf = parse_logical_form(&format!(
            "( lambda ?x ( mso:book.edition.number_of_pages {e} ?x ) ) ||| ( lambda ?x ( mso:book.edition.publication_date {e} ?x ) )"
        ))
        .unwrap();
        let sk = extract_sketch(&lf, &[ent(e, 0, 6)]).unwrap();
        assert_eq!(
            sk.to_string(),
            "( lambda ?x ( P1 E1 ?x ) ) ||| ( lambda ?x ( P2 E1 ?x ) )"
        );
        assert_eq!(sk.bindings.len(), 3);
        assert_eq!(sk.lexicalize().unwrap(), lf);
    }

    #[test]
    fn nothing_to_delexicalize() {
        let lf = parse_logical_form("( lambda ?x ( foo ?x ) )").unwrap();
        let sk = extract_sketch(&lf, &[]).unwrap();
        assert_eq!(sk.tokens, lf.tokens());
        assert!(sk.bindings.is_empty());
    }

    #[test]
    fn missing_surface() {
        let lf = parse_logical_form("( mso:a.b x ?x )").unwrap();
        assert!(matches!(
            extract_sketch(&lf, &[ent("y", 0, 0)]),
            Err(Error::MissingSurface(s)) if s == "y"
        ));
    }

    #[test]
    fn values_and_types() {
        let lf = parse_logical_form(
            "( lambda ?x ( and ( isa ?x film ) ( mso:film.film.budget ?x ?y ) ( argmore ?y 1000 ) ( argless ?y 20.5 ) ) )",
        )
        .unwrap();
        let sk = extract_sketch(&lf, &[]).unwrap();
        assert_eq!(
            sk.to_string(),
            "( lambda ?x ( and ( isa ?x T ) ( P1 ?x ?y ) ( argmore ?y V ) ( argless ?y V2 ) ) )"
        );
        assert_eq!(sk.lexicalize().unwrap(), lf);

        // kind annotations take precedence over the lexical rules
        let lf = parse_logical_form("( mso:a.b e1 1990 )").unwrap();
        let params = [ent("1990", 0, 0)];
        assert_eq!(extract_sketch(&lf, &params).unwrap().to_string(), "( P1 e1 E1 )");
    }

    #[test]
    fn yesno_shape() {
        let lf = parse_logical_form("( mso:a.b.c foo bar )").unwrap();
        let sk = extract_sketch(&lf, &[ent("bar", 0, 0), ent("foo", 2, 2)]).unwrap();
        assert_eq!(sk.to_string(), "( P1 E1 E2 )");
        assert_eq!(sk.binding("E1"), Some("foo"));
    }

    #[test]
    fn repeated_tokens_reuse_placeholders() {
        let lf = parse_logical_form(
            "( lambda ?x ( mso:a.b e ?x ) ) ||| ( lambda ?x exist ?y ( and ( mso:a.b e ?y ) ( mso:c.d ?y ?x ) ) )",
        )
        .unwrap();
        let sk = extract_sketch(&lf, &[ent("e", 0, 0)]).unwrap();
        assert_eq!(
            sk.to_string(),
            "( lambda ?x ( P1 E1 ?x ) ) ||| ( lambda ?x exist ?y ( and ( P1 E1 ?y ) ( P2 ?y ?x ) ) )"
        );
    }
}
