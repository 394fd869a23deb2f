use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::lf::{tokenize_form, Span};

/// What the system produced for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub predicted_class: String,
    pub predicted_spans: Vec<Span>,
    /// Top-ranked logical form; `None` when no candidate was generated.
    pub predicted_form: Option<String>,
    /// Whether the gold logical form was among the candidates.
    pub gold_generated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub count: usize,
    pub err_s: f64,
    pub err_e: f64,
    pub err_m: f64,
    pub err_l: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: ClassMetrics,
    pub per_class: BTreeMap<String, ClassMetrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub no_candidates: usize,
    pub wrong_sketch: usize,
    pub wrong_entities: usize,
    pub wrong_order: usize,
    pub wrong_predicate: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub metrics: MetricsReport,
    pub acc_l: f64,
    /// Fraction of samples whose gold form was among the candidates; an
    /// upper bound on `acc_l`.
    pub gold_inclusion: f64,
    /// Fraction of samples whose gold pattern is in the index.
    pub pattern_coverage: f64,
    pub taxonomy: Taxonomy,
    /// Order errors among exchangeable `or` arguments.
    pub near_misses: usize,
    /// Samples whose gold sketch class is outside the trained inventory.
    pub inventory_misses: usize,
}

pub(crate) fn forms_equal(a: &str, b: &str) -> bool {
    match (tokenize_form(a), tokenize_form(b)) {
        (Ok(x), Ok(y)) => *x == *y,
        _ => a == b,
    }
}

fn sorted_tokens(s: &str) -> Vec<String> {
    let mut t: Vec<String> = s.split_whitespace().map(str::to_string).collect();
    t.sort();
    t
}

struct Judged {
    sketch: bool,
    entities: bool,
    form: bool,
}

fn judge(sample: &Sample, out: &Outcome) -> Judged {
    Judged {
        sketch: out.predicted_class == sample.sketch_class,
        entities: out.predicted_spans == sample.gold_spans(),
        form: out
            .predicted_form
            .as_deref()
            .is_some_and(|f| forms_equal(f, &sample.logical_form)),
    }
}

/// Error rates per gold class and overall. Sketch error is `1 − F1` of the
/// class; the overall values weight classes by support.
pub fn compute_metrics(samples: &[Sample], outcomes: &[Outcome]) -> MetricsReport {
    assert_eq!(samples.len(), outcomes.len());
    let judged: Vec<Judged> = samples.iter().zip(outcomes).map(|(s, o)| judge(s, o)).collect();

    let mut support: BTreeMap<&str, usize> = BTreeMap::new();
    let mut predicted: BTreeMap<&str, usize> = BTreeMap::new();
    let mut true_pos: BTreeMap<&str, usize> = BTreeMap::new();
    for (s, o) in samples.iter().zip(outcomes) {
        *support.entry(&s.sketch_class).or_insert(0) += 1;
        *predicted.entry(&o.predicted_class).or_insert(0) += 1;
        if s.sketch_class == o.predicted_class {
            *true_pos.entry(&s.sketch_class).or_insert(0) += 1;
        }
    }

    let mut per_class = BTreeMap::new();
    for (&class, &n) in &support {
        let tp = true_pos.get(class).copied().unwrap_or(0) as f64;
        let pred = predicted.get(class).copied().unwrap_or(0) as f64;
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (pred + n as f64) };
        let mut m = ClassMetrics {
            count: n,
            err_s: 1.0 - f1,
            ..Default::default()
        };
        let mut wrong = [0usize; 3];
        for (s, j) in samples.iter().zip(&judged) {
            if s.sketch_class != class {
                continue;
            }
            wrong[0] += usize::from(!j.entities);
            wrong[1] += usize::from(!(j.entities && j.sketch));
            wrong[2] += usize::from(!j.form);
        }
        m.err_e = wrong[0] as f64 / n as f64;
        m.err_m = wrong[1] as f64 / n as f64;
        m.err_l = wrong[2] as f64 / n as f64;
        per_class.insert(class.to_string(), m);
    }

    let total = samples.len();
    let mut overall = ClassMetrics {
        count: total,
        ..Default::default()
    };
    if total > 0 {
        for m in per_class.values() {
            let w = m.count as f64 / total as f64;
            overall.err_s += w * m.err_s;
            overall.err_e += w * m.err_e;
            overall.err_m += w * m.err_m;
            overall.err_l += w * m.err_l;
        }
    }
    MetricsReport { overall, per_class }
}

/// Samples whose top-ranked form equals the gold form.
pub fn exact_matches(samples: &[Sample], outcomes: &[Outcome]) -> usize {
    samples.iter().zip(outcomes).filter(|(s, o)| judge(s, o).form).count()
}

/// Buckets each logical-form error by its first failing stage.
pub fn classify_errors(samples: &[Sample], outcomes: &[Outcome]) -> (Taxonomy, usize) {
    let mut tax = Taxonomy::default();
    let mut near = 0;
    for (s, o) in samples.iter().zip(outcomes) {
        let j = judge(s, o);
        if j.form {
            continue;
        }
        let Some(form) = o.predicted_form.as_deref() else {
            tax.no_candidates += 1;
            continue;
        };
        if !j.sketch {
            tax.wrong_sketch += 1;
        } else if !j.entities {
            tax.wrong_entities += 1;
        } else if sorted_tokens(form) == sorted_tokens(&s.logical_form) {
            tax.wrong_order += 1;
            if s.logical_form.split_whitespace().any(|t| t == "or") {
                near += 1;
            }
        } else {
            tax.wrong_predicate += 1;
        }
    }
    (tax, near)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lf::{ParamAnnotation, ParamKind};

    fn single(q: &str, ent: &str, span: (usize, usize), pred: &str) -> Sample {
        Sample::new(
            q,
            format!("( lambda ?x ( {pred} {ent} ?x ) )"),
            vec![ParamAnnotation::new(ent, ParamKind::Entity, span.0, span.1)],
            "single-relation",
        )
        .unwrap()
    }

    fn outcome(class: &str, spans: Vec<Span>, form: Option<&str>) -> Outcome {
        Outcome {
            predicted_class: class.into(),
            predicted_spans: spans,
            predicted_form: form.map(str::to_string),
            gold_generated: true,
        }
    }

    #[test]
    fn perfect_predictions() {
        let s = single("what is birth date for chris pine", "chris_pine", (5, 6), "mso:a.b.c");
        let o = outcome(&s.sketch_class, s.gold_spans(), Some(&s.logical_form));
        let r = compute_metrics(&[s.clone(), s.clone()], &[o.clone(), o]);
        assert_eq!(r.overall.err_s, 0.0);
        assert_eq!(r.overall.err_e, 0.0);
        assert_eq!(r.overall.err_m, 0.0);
        assert_eq!(r.overall.err_l, 0.0);
    }

    #[test]
    fn wrong_span_counts_against_entities_only() {
        let s = single("what is birth date for chris pine", "chris_pine", (5, 6), "mso:a.b.c");
        let o = outcome(&s.sketch_class, vec![Span(6, 6)], None);
        let r = compute_metrics(&[s], &[o]);
        assert_eq!(r.overall.err_s, 0.0);
        assert_eq!(r.overall.err_e, 1.0);
        assert_eq!(r.overall.err_m, 1.0);
        assert_eq!(r.overall.err_l, 1.0);
    }

    #[test]
    fn taxonomy_buckets() {
        let s = Sample::new(
            "does ann have bo",
            "( mso:a.b.d ann bo )",
            vec![
                ParamAnnotation::new("ann", ParamKind::Entity, 1, 1),
                ParamAnnotation::new("bo", ParamKind::Entity, 3, 3),
            ],
            "yesno",
        )
        .unwrap();
        let c = s.sketch_class.clone();
        let spans = s.gold_spans();
        let outs = vec![
            outcome(&c, spans.clone(), None),
            outcome("( x )", spans.clone(), Some("( x )")),
            outcome(&c, vec![Span(1, 1)], Some("( mso:a.b.d ann ann )")),
            outcome(&c, spans.clone(), Some("( mso:a.b.d bo ann )")),
            outcome(&c, spans.clone(), Some("( mso:a.b.e ann bo )")),
            outcome(&c, spans, Some("( mso:a.b.d ann bo )")),
        ];
        let samples = vec![s; 6];
        let (t, near) = classify_errors(&samples, &outs);
        assert_eq!(
            t,
            Taxonomy {
                no_candidates: 1,
                wrong_sketch: 1,
                wrong_entities: 1,
                wrong_order: 1,
                wrong_predicate: 1,
            }
        );
        assert_eq!(near, 0);
    }
}
