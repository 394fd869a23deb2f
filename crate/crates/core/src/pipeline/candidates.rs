use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lf::{
    derive_question_pattern, is_numeric, substitute_template, LfPattern, LfTemplate, LogicalForm, ParamAnnotation,
    ParamKind, QuestionPattern, SlotFillers, Span,
};
use crate::matchers::PatternIndex;

/// Convex weights over the three reranking scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w_pattern: f64,
    pub w_pe: f64,
    pub w_gen: f64,
}

impl FusionWeights {
    pub const PATTERN_ONLY: FusionWeights = FusionWeights {
        w_pattern: 1.0,
        w_pe: 0.0,
        w_gen: 0.0,
    };

    pub fn new(w_pattern: f64, w_pe: f64, w_gen: f64) -> Result<Self> {
        let w = FusionWeights { w_pattern, w_pe, w_gen };
        if [w_pattern, w_pe, w_gen].iter().any(|v| !v.is_finite() || *v < 0.0)
            || (w_pattern + w_pe + w_gen - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "fusion weights must be non-negative and sum to 1, got {w_pattern}, {w_pe}, {w_gen}"
            )));
        }
        Ok(w)
    }

    pub fn fuse(&self, pattern: f64, pe: f64, gen: f64) -> f64 {
        self.w_pattern * pattern + self.w_pe * pe + self.w_gen * gen
    }

    /// Simplex lattice with spacing `step`, largest `w_pattern` first, then
    /// largest `w_pe`.
    pub fn grid(step: f64) -> Result<Vec<FusionWeights>> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::Config(format!("grid step must lie in (0, 1], got {step}")));
        }
        let n = (1.0 / step).round() as usize;
        let mut out = Vec::with_capacity((n + 1) * (n + 2) / 2);
        for i in (0..=n).rev() {
            for j in (0..=n - i).rev() {
                let k = n - i - j;
                out.push(FusionWeights {
                    w_pattern: i as f64 / n as f64,
                    w_pe: j as f64 / n as f64,
                    w_gen: k as f64 / n as f64,
                });
            }
        }
        Ok(out)
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights::PATTERN_ONLY
    }
}

/// A full logical form built from one indexed template.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub template: LfTemplate,
    pub pattern: LfPattern,
    /// Question pattern under this candidate's slot-kind assignment.
    pub question_pattern: QuestionPattern,
    pub fillers: SlotFillers,
    pub logical_form: LogicalForm,
    /// Training frequency of the pattern within its class.
    pub frequency: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub logical_form: String,
    pub pattern_score: f64,
    pub pe_score: f64,
    pub gen_score: f64,
    pub fused: f64,
    #[serde(skip)]
    pub frequency: usize,
}

/// Parameter annotations for `spans`: numeric single tokens become values,
/// the named spans at positions `types` become types and the rest entities.
fn assign_kinds(question: &[String], spans: &[Span], types: &[usize]) -> Vec<ParamAnnotation> {
    let mut named = 0;
    spans
        .iter()
        .map(|s| {
            let surface = s.surface(question);
            let kind = if is_value_span(question, *s) {
                ParamKind::Value
            } else {
                named += 1;
                if types.contains(&(named - 1)) {
                    ParamKind::Type
                } else {
                    ParamKind::Entity
                }
            };
            ParamAnnotation::new(surface, kind, s.start(), s.end())
        })
        .collect()
}

fn is_value_span(question: &[String], s: Span) -> bool {
    s.len() == 1 && is_numeric(&question[s.start()])
}

/// Ways to pick `t` of `n` named spans as types. The trailing choice comes
/// first, so entities take the earliest spans by default.
fn type_choices(n: usize, t: usize) -> Vec<Vec<usize>> {
    if t > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..t).collect();
    loop {
        out.push(combo.clone());
        let Some(i) = (0..t).rev().find(|&i| combo[i] < n - t + i) else {
            break;
        };
        combo[i] += 1;
        for j in i + 1..t {
            combo[j] = combo[j - 1] + 1;
        }
    }
    out.reverse();
    out
}

/// Instantiates every template of `class` whose slot counts match the
/// labeled spans. Templates with type slots yield one candidate per way of
/// choosing the type spans.
pub fn generate_candidates(
    question: &[String],
    spans: &[Span],
    class: &str,
    index: &PatternIndex,
) -> Result<Vec<Candidate>> {
    let entries = index.entries(class);
    if entries.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut spans = spans.to_vec();
    spans.sort();
    let named = spans.iter().filter(|s| !is_value_span(question, **s)).count();
    let mut out = Vec::new();
    for entry in entries {
        let t = &entry.template;
        for types in type_choices(named, t.type_arity) {
            let params = assign_kinds(question, &spans, &types);
            let fillers = SlotFillers::from_params(&params);
            if fillers.entities.len() != t.entity_arity
                || fillers.values.len() != t.value_arity
                || fillers.types.len() != t.type_arity
            {
                continue;
            }
            let logical_form = substitute_template(t, &fillers)?;
            out.push(Candidate {
                template: t.clone(),
                pattern: entry.pattern.clone(),
                question_pattern: derive_question_pattern(question, &params)?,
                fillers,
                logical_form,
                frequency: entry.count,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::NoCandidates);
    }
    Ok(out)
}

fn order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.fused
        .total_cmp(&a.fused)
        .then_with(|| b.frequency.cmp(&a.frequency))
        .then_with(|| a.logical_form.cmp(&b.logical_form))
}

/// Recomputes fused scores under `w` and sorts best first.
pub fn rank(mut scored: Vec<ScoredCandidate>, w: &FusionWeights) -> Vec<ScoredCandidate> {
    for c in &mut scored {
        c.fused = w.fuse(c.pattern_score, c.pe_score, c.gen_score);
    }
    scored.sort_by(order);
    scored
}

/// Logical form ranked first under `w`, without materializing the ranking.
pub fn top1<'a>(scored: &'a [ScoredCandidate], w: &FusionWeights) -> Option<&'a ScoredCandidate> {
    scored.iter().min_by(|a, b| {
        let fa = w.fuse(a.pattern_score, a.pe_score, a.gen_score);
        let fb = w.fuse(b.pattern_score, b.pe_score, b.gen_score);
        fb.total_cmp(&fa)
            .then_with(|| b.frequency.cmp(&a.frequency))
            .then_with(|| a.logical_form.cmp(&b.logical_form))
    })
}

/// Scored candidate pools with their gold logical forms.
pub struct TuningPool<'a> {
    pub candidates: &'a [ScoredCandidate],
    pub gold: &'a str,
}

/// Exact-match accuracy of the top candidate under `w`.
pub fn pool_accuracy(pools: &[TuningPool<'_>], w: &FusionWeights) -> f64 {
    if pools.is_empty() {
        return 0.0;
    }
    let hits = pools
        .iter()
        .filter(|p| top1(p.candidates, w).is_some_and(|c| c.logical_form == p.gold))
        .count();
    hits as f64 / pools.len() as f64
}

/// Grid search maximizing exact match; ties keep the earlier grid point,
/// i.e. the larger pattern weight.
pub fn tune_weights(pools: &[TuningPool<'_>], step: f64) -> Result<(FusionWeights, f64)> {
    if pools.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut best = (FusionWeights::PATTERN_ONLY, f64::NEG_INFINITY);
    for w in FusionWeights::grid(step)? {
        let acc = pool_accuracy(pools, &w);
        if acc > best.1 {
            best = (w, acc);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::{Corpus, Sample, SplitTag};
    use crate::lf::tokenize_question;
    use crate::matchers::build_pattern_index;

    fn sc(lf: &str, p: f64, e: f64, g: f64, freq: usize) -> ScoredCandidate {
        ScoredCandidate {
            logical_form: lf.into(),
            pattern_score: p,
            pe_score: e,
            gen_score: g,
            fused: 0.0,
            frequency: freq,
        }
    }

    #[test]
    fn grid_size_and_order() {
        let g = FusionWeights::grid(0.05).unwrap();
        assert_eq!(g.len(), 231);
        assert_eq!(g[0], FusionWeights::PATTERN_ONLY);
        for w in &g {
            assert!((w.w_pattern + w.w_pe + w.w_gen - 1.0).abs() < 1e-12);
            assert!(FusionWeights::new(w.w_pattern, w.w_pe, w.w_gen).is_ok());
        }
        assert!(g.windows(2).all(|p| p[0].w_pattern >= p[1].w_pattern));
        assert!(FusionWeights::new(0.5, 0.6, -0.1).is_err());
        assert!(FusionWeights::grid(0.0).is_err());
    }

    #[test]
    fn pattern_only_follows_pattern_scores() {
        let pool = vec![
            sc("a", 0.2, 0.9, 0.9, 1),
            sc("b", 0.7, 0.1, 0.0, 1),
            sc("c", 0.5, 0.5, 0.5, 1),
        ];
        let ranked = rank(pool, &FusionWeights::PATTERN_ONLY);
        let names: Vec<&str> = ranked.iter().map(|c| c.logical_form.as_str()).collect();
        assert_eq!(names, vec!["b", "c", "a"]);
    }

    #[test]
    fn ties_break_by_frequency_then_text() {
        let pool = vec![
            sc("b", 0.5, 0.5, 0.5, 1),
            sc("c", 0.5, 0.5, 0.5, 3),
            sc("a", 0.5, 0.5, 0.5, 1),
        ];
        let names: Vec<String> = rank(pool, &FusionWeights::PATTERN_ONLY)
            .into_iter()
            .map(|c| c.logical_form)
            .collect();
        assert_eq!(names, vec!["c", "a", "b"]);
    }

    proptest! {
        #[test]
        fn ranking_is_permutation_invariant(
            scores in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0usize..3), 1..12),
            wi in 0usize..231,
            seed in any::<u64>(),
        ) {
            let w = FusionWeights::grid(0.05).unwrap()[wi];
            let pool: Vec<ScoredCandidate> = scores
                .iter()
                .enumerate()
                .map(|(i, (p, e, g, f))| sc(&format!("lf{i}"), *p, *e, *g, *f))
                .collect();
            let mut shuffled = pool.clone();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = rank(pool.clone(), &w);
            let b = rank(shuffled, &w);
            prop_assert_eq!(&a, &b);
            prop_assert!(a.iter().all(|c| (0.0..=1.0 + 1e-12).contains(&c.fused)));
            prop_assert_eq!(&top1(&pool, &w).unwrap().logical_form, &a[0].logical_form);
        }

        #[test]
        fn raising_gold_pattern_score_never_lowers_rank(
            scores in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 2..10),
            bump in 0.0f64..1.0,
            wi in 0usize..231,
        ) {
            let w = FusionWeights::grid(0.05).unwrap()[wi];
            let pool: Vec<ScoredCandidate> = scores
                .iter()
                .enumerate()
                .map(|(i, (p, e, g))| sc(&format!("lf{i}"), *p, *e, *g, 1))
                .collect();
            let pos = |v: &[ScoredCandidate]| v.iter().position(|c| c.logical_form == "lf0").unwrap();
            let before = pos(&rank(pool.clone(), &w));
            let mut raised = pool;
            raised[0].pattern_score = (raised[0].pattern_score + bump).min(1.0);
            prop_assert!(pos(&rank(raised, &w)) <= before);
        }
    }

    #[test]
    fn single_candidate_pools_keep_baseline() {
        let pools_data = [vec![sc("x", 0.3, 0.2, 0.1, 1)], vec![sc("y", 0.9, 0.1, 0.4, 1)]];
        let pools: Vec<TuningPool> = pools_data
            .iter()
            .zip(["x", "z"])
            .map(|(c, g)| TuningPool { candidates: c, gold: g })
            .collect();
        let (w, acc) = tune_weights(&pools, 0.05).unwrap();
        assert_eq!(w, FusionWeights::PATTERN_ONLY);
        assert_eq!(acc, 0.5);
        assert!(tune_weights(&[], 0.05).is_err());
    }

    #[test]
    fn tuning_finds_a_better_mix() {
        let a = vec![sc("gold", 0.4, 0.9, 0.9, 1), sc("bad", 0.6, 0.1, 0.1, 1)];
        let b = vec![sc("gold", 0.8, 0.5, 0.5, 1), sc("bad", 0.2, 0.5, 0.5, 1)];
        let pools = vec![
            TuningPool {
                candidates: &a,
                gold: "gold",
            },
            TuningPool {
                candidates: &b,
                gold: "gold",
            },
        ];
        let base = pool_accuracy(&pools, &FusionWeights::PATTERN_ONLY);
        let (w, acc) = tune_weights(&pools, 0.05).unwrap();
        assert_eq!(base, 0.5);
        assert_eq!(acc, 1.0);
        assert!(w.w_pattern < 1.0);
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize_question(s).unwrap().into_inner()
    }

    fn sample(q: &str, lf: &str, params: Vec<ParamAnnotation>) -> Sample {
        Sample::new(q, lf, params, "t").unwrap()
    }

    #[test]
    fn table_candidate_includes_gold() {
        let s = sample(
            "what is birth date for chris pine",
            "( lambda ?x ( mso:people.person.date_of_birth chris_pine ?x ) )",
            vec![ParamAnnotation::new("chris_pine", ParamKind::Entity, 5, 6)],
        );
        let index = build_pattern_index(&Corpus::new(vec![s.clone()], SplitTag::Train)).unwrap();
        let cands = generate_candidates(&s.tokens(), &[Span(5, 6)], &s.sketch_class, &index).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].logical_form.to_string(), s.logical_form);
        assert_eq!(cands[0].question_pattern.to_string(), "what is birth date for entity1");
        assert!(matches!(
            generate_candidates(&s.tokens(), &[Span(5, 6)], "( nope )", &index),
            Err(Error::NoCandidates)
        ));
    }

    #[test]
    fn arity_filters_templates() {
        let one = sample(
            "is ann bo good",
            "( mso:a.b.c ann_bo ?x )",
            vec![ParamAnnotation::new("ann_bo", ParamKind::Entity, 1, 2)],
        );
        let two = sample(
            "does ann have bo",
            "( mso:a.b.d ann bo )",
            vec![
                ParamAnnotation::new("ann", ParamKind::Entity, 1, 1),
                ParamAnnotation::new("bo", ParamKind::Entity, 3, 3),
            ],
        );
        let mut index = build_pattern_index(&Corpus::new(vec![one.clone(), two.clone()], SplitTag::Train)).unwrap();
        // pool both templates under one class
        let merged: Vec<_> = index.classes.values().flatten().cloned().collect();
        index.classes.clear();
        index.classes.insert("k".into(), merged);
        let q = toks("does kim have lee");
        let cands = generate_candidates(&q, &[Span(1, 1), Span(3, 3)], "k", &index).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].logical_form.to_string(), "( mso:a.b.d kim lee )");
        assert!(matches!(
            generate_candidates(&q, &[], "k", &index),
            Err(Error::NoCandidates)
        ));
    }

    #[test]
    fn numeric_spans_fill_values_and_extra_spans_fill_types() {
        let s = sample(
            "which film of bo has budget more than 30",
            "( argmore ( lambda ?x ( mso:f.f.x bo ?x ) ) mso:f.f.budget 30 )",
            vec![
                ParamAnnotation::new("bo", ParamKind::Entity, 3, 3),
                ParamAnnotation::new("30", ParamKind::Value, 8, 8),
            ],
        );
        let t = sample(
            "which city is the capital of bo",
            "( lambda ?x ( and ( isa ?x city ) ( mso:l.c.capital bo ?x ) ) )",
            vec![
                ParamAnnotation::new("city", ParamKind::Type, 1, 1),
                ParamAnnotation::new("bo", ParamKind::Entity, 6, 6),
            ],
        );
        let index = build_pattern_index(&Corpus::new(vec![s.clone(), t.clone()], SplitTag::Train)).unwrap();
        let c = generate_candidates(
            &toks("which film of zed has budget more than 7"),
            &[Span(3, 3), Span(8, 8)],
            &s.sketch_class,
            &index,
        )
        .unwrap();
        assert_eq!(
            c[0].logical_form.to_string(),
            "( argmore ( lambda ?x ( mso:f.f.x zed ?x ) ) mso:f.f.budget 7 )"
        );
        assert_eq!(
            c[0].question_pattern.to_string(),
            "which film of entity1 has budget more than value1"
        );
        let c = generate_candidates(&t.tokens(), &t.gold_spans(), &t.sketch_class, &index).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.iter().any(|c| c.logical_form.to_string() == t.logical_form));
        assert!(c
            .iter()
            .any(|c| c.question_pattern.to_string() == "which type1 is the capital of entity1"));
    }

    #[test]
    fn type_choice_order() {
        assert_eq!(type_choices(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(type_choices(3, 1), vec![vec![2], vec![1], vec![0]]);
        assert_eq!(type_choices(3, 2), vec![vec![1, 2], vec![0, 2], vec![0, 1]]);
        assert!(type_choices(1, 2).is_empty());
    }
}
