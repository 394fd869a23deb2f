use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::learn::{cross_entropy, softmax, LinearHead, Mat, OptState, Params, Vocab};
use crate::lf::{is_predicate, LogicalForm, ParamKind};

/// `(predicate, entity)` pairs sharing a parenthesized group of `lf`. Only
/// tokens listed in `entities` count as entities.
pub fn predicate_entity_pairs(lf: &LogicalForm, entities: &[String]) -> Vec<(String, String)> {
    let mut stack: Vec<Vec<&str>> = Vec::new();
    let mut out = Vec::new();
    let close = |group: Vec<&str>, out: &mut Vec<(String, String)>| {
        for p in group.iter().filter(|t| is_predicate(t)) {
            for e in group.iter().filter(|t| entities.iter().any(|x| x == *t)) {
                out.push((p.to_string(), e.to_string()));
            }
        }
    };
    for tok in lf.tokens() {
        match tok.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                if let Some(group) = stack.pop() {
                    close(group, &mut out);
                }
            }
            t => {
                if let Some(group) = stack.last_mut() {
                    group.push(t);
                }
            }
        }
    }
    out
}

/// Pair memory plus a learned two-way head over predicate and entity
/// embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceModel {
    pub pairs: BTreeSet<(String, String)>,
    pub predicates: Vocab,
    pub entities: Vocab,
    pub pred_emb: Mat,
    pub ent_emb: Mat,
    /// `2 × 3h` head over `[p; e; p⊙e]`.
    pub head: LinearHead,
}

impl Params for CooccurrenceModel {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            &self.pred_emb.data,
            &self.ent_emb.data,
            &self.head.weight.data,
            &self.head.bias,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.pred_emb.data,
            &mut self.ent_emb.data,
            &mut self.head.weight.data,
            &mut self.head.bias,
        ]
    }
}

impl CooccurrenceModel {
    fn features(&self, p: usize, e: usize) -> Vec<f64> {
        let pv = self.pred_emb.row(p);
        let ev = self.ent_emb.row(e);
        let mut x = Vec::with_capacity(3 * pv.len());
        x.extend_from_slice(pv);
        x.extend_from_slice(ev);
        x.extend(pv.iter().zip(ev).map(|(a, b)| a * b));
        x
    }

    pub fn zeros_like(&self) -> Self {
        CooccurrenceModel {
            pairs: BTreeSet::new(),
            predicates: self.predicates.clone(),
            entities: self.entities.clone(),
            pred_emb: Mat::zeros(self.pred_emb.rows, self.pred_emb.cols),
            ent_emb: Mat::zeros(self.ent_emb.rows, self.ent_emb.cols),
            head: LinearHead::zeros(2, self.head.in_dim()),
        }
    }

    /// Probability that the pair co-occurs.
    pub fn pair_prob(&self, predicate: &str, entity: &str) -> f64 {
        let x = self.features(self.predicates.id(predicate), self.entities.id(entity));
        softmax(&self.head.forward(&x))[1]
    }

    /// Weighted cross-entropy of one pair by vocabulary ids.
    pub fn pair_loss(&self, p: usize, e: usize, label: u8, weight: f64, grad: Option<&mut CooccurrenceModel>) -> f64 {
        let x = self.features(p, e);
        let (loss, d_logits) = cross_entropy(&self.head.forward(&x), label as usize);
        if let Some(grad) = grad {
            let d_logits: Vec<f64> = d_logits.iter().map(|d| d * weight).collect();
            let dx = self.head.backward(&x, &d_logits, &mut grad.head);
            let h = self.pred_emb.cols;
            let pv = self.pred_emb.row(p);
            let ev = self.ent_emb.row(e);
            let gp = grad.pred_emb.row_mut(p);
            for i in 0..h {
                gp[i] += dx[i] + dx[2 * h + i] * ev[i];
            }
            let ge = grad.ent_emb.row_mut(e);
            for i in 0..h {
                ge[i] += dx[h + i] + dx[2 * h + i] * pv[i];
            }
        }
        weight * loss
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceConfig {
    pub hidden: usize,
    pub epochs: usize,
    /// Unseen predicates drawn per positive pair.
    pub negatives: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CooccurrenceConfig {
    fn default() -> Self {
        CooccurrenceConfig {
            hidden: 32,
            epochs: 3,
            negatives: 5,
            learning_rate: 1e-2,
            batch_size: 32,
            seed: 31,
        }
    }
}

/// Records every training pair and fits the head on them against
/// predicates never seen with the entity.
pub fn build_cooccurrence(train: &Corpus, cfg: &CooccurrenceConfig) -> Result<CooccurrenceModel> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut occurrences: Vec<(String, String)> = Vec::new();
    let mut all_predicates: BTreeSet<String> = BTreeSet::new();
    for s in &train.samples {
        let lf = s.form();
        all_predicates.extend(lf.predicates().into_iter().map(str::to_string));
        let entities: Vec<String> = s
            .params
            .iter()
            .filter(|p| p.kind == ParamKind::Entity)
            .map(|p| p.surface.clone())
            .collect();
        occurrences.extend(predicate_entity_pairs(&lf, &entities));
    }
    let pairs: BTreeSet<(String, String)> = occurrences.iter().cloned().collect();
    let predicates = Vocab::build(all_predicates.iter().map(String::as_str), 1);
    let entities = Vocab::build(pairs.iter().map(|(_, e)| e.as_str()), 1);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = cfg.hidden.max(1);
    let mut model = CooccurrenceModel {
        pred_emb: Mat::uniform(predicates.len(), h, 0.1, &mut rng),
        ent_emb: Mat::uniform(entities.len(), h, 0.1, &mut rng),
        head: LinearHead::new(2, 3 * h, &mut rng),
        pairs,
        predicates,
        entities,
    };

    let mut seen_with: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let positives: Vec<(usize, usize)> = occurrences
        .iter()
        .map(|(p, e)| (model.predicates.id(p), model.entities.id(e)))
        .collect();
    for &(p, e) in &positives {
        seen_with.entry(e).or_default().insert(p);
    }
    let pred_ids: Vec<usize> = all_predicates.iter().map(|p| model.predicates.id(p)).collect();

    let mut grad = model.zeros_like();
    let mut opt = OptState::new(cfg.learning_rate, cfg.seed);
    for _ in 0..cfg.epochs {
        let mut batch_pairs: Vec<(usize, usize, u8)> = positives.iter().map(|&(p, e)| (p, e, 1)).collect();
        for &(_, e) in &positives {
            let seen = &seen_with[&e];
            let pool: Vec<usize> = pred_ids.iter().copied().filter(|p| !seen.contains(p)).collect();
            batch_pairs.extend(
                pool.choose_multiple(&mut rng, cfg.negatives.min(pool.len()))
                    .map(|&p| (p, e, 0)),
            );
        }
        let n_pos = positives.len() as f64;
        let n_neg = (batch_pairs.len() - positives.len()).max(1) as f64;
        let total = batch_pairs.len() as f64;
        let weights = [total / (2.0 * n_neg), total / (2.0 * n_pos.max(1.0))];
        batch_pairs.shuffle(&mut rng);
        for batch in batch_pairs.chunks(cfg.batch_size.max(1)) {
            grad.zero();
            for &(p, e, label) in batch {
                model.pair_loss(p, e, label, weights[label as usize], Some(&mut grad));
            }
            grad.scale(1.0 / batch.len() as f64);
            opt.step(&mut model, &grad)?;
        }
    }
    Ok(model)
}

/// Mean pair probability over the candidate's pairs; 0.5 without pairs.
pub fn score_candidate_pe(lf: &LogicalForm, entities: &[String], model: &CooccurrenceModel) -> f64 {
    let pairs = predicate_entity_pairs(lf, entities);
    if pairs.is_empty() {
        return 0.5;
    }
    pairs.iter().map(|(p, e)| model.pair_prob(p, e)).sum::<f64>() / pairs.len() as f64
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::data::{generate_synthetic, GenConfig, Sample, SplitTag};
    use crate::lf::{parse_logical_form, ParamAnnotation};

    fn random_pair(model: &CooccurrenceModel, rng: &mut ChaCha8Rng) -> (usize, usize) {
        (
            rng.gen_range(0..model.predicates.len()),
            rng.gen_range(0..model.entities.len()),
        )
    }

    fn table_corpus() -> Corpus {
        let s = Sample::new(
            "what is birth date for chris pine",
            "( lambda ?x ( mso:people.person.date_of_birth chris_pine ?x ) )",
            vec![ParamAnnotation::new("chris_pine", ParamKind::Entity, 5, 6)],
            "single-relation",
        )
        .unwrap();
        Corpus::new(vec![s], SplitTag::Train)
    }

    #[test]
    fn table_pair() {
        let m = build_cooccurrence(&table_corpus(), &CooccurrenceConfig::default()).unwrap();
        assert_eq!(
            m.pairs.iter().collect::<Vec<_>>(),
            vec![&("mso:people.person.date_of_birth".to_string(), "chris_pine".to_string())]
        );
        assert!(!m.pairs.iter().any(|(_, e)| e == "zoe_saldana"));
    }

    #[test]
    fn pairless_candidate_is_neutral() {
        let m = build_cooccurrence(&table_corpus(), &CooccurrenceConfig::default()).unwrap();
        let lf = parse_logical_form("( lambda ?x ( mso:people.person.date_of_birth ?y ?x ) )").unwrap();
        assert_eq!(score_candidate_pe(&lf, &[], &m), 0.5);
    }

    #[test]
    fn two_pairs_average() {
        let m = build_cooccurrence(&table_corpus(), &CooccurrenceConfig::default()).unwrap();
        let lf = parse_logical_form("( mso:a.b.c x1 x2 )").unwrap();
        let ents = vec!["x1".to_string(), "x2".to_string()];
        let expected = (m.pair_prob("mso:a.b.c", "x1") + m.pair_prob("mso:a.b.c", "x2")) / 2.0;
        assert!((score_candidate_pe(&lf, &ents, &m) - expected).abs() < 1e-15);
    }

    /// Independent scan: a pair co-occurs when the entity sits directly
    /// between the nearest brackets that also enclose the predicate.
    fn brute_pairs(lf: &LogicalForm, entities: &[String]) -> BTreeSet<(String, String)> {
        let toks = lf.tokens();
        let depth_at = |i: usize| -> Vec<usize> {
            // indices of open brackets enclosing position i, innermost last
            let mut stack = Vec::new();
            for (j, t) in toks.iter().enumerate().take(i) {
                match t.as_str() {
                    "(" => stack.push(j),
                    ")" => {
                        stack.pop();
                    }
                    _ => {}
                }
            }
            stack
        };
        let mut out = BTreeSet::new();
        for (i, p) in toks.iter().enumerate() {
            if !is_predicate(p) {
                continue;
            }
            let pi = depth_at(i).last().copied();
            for (j, e) in toks.iter().enumerate() {
                if entities.contains(e) && depth_at(j).last().copied() == pi && pi.is_some() {
                    out.insert((p.clone(), e.clone()));
                }
            }
        }
        out
    }

    #[test]
    fn pairs_match_scan() {
        let c = generate_synthetic(&GenConfig {
            shapes: crate::data::Shape::ALL.to_vec(),
            per_class: 40,
            ..GenConfig::default()
        });
        let m = build_cooccurrence(
            &c,
            &CooccurrenceConfig {
                epochs: 0,
                ..CooccurrenceConfig::default()
            },
        )
        .unwrap();
        let mut oracle = BTreeSet::new();
        for s in &c.samples {
            let ents: Vec<String> = s
                .params
                .iter()
                .filter(|p| p.kind == ParamKind::Entity)
                .map(|p| p.surface.clone())
                .collect();
            oracle.extend(brute_pairs(&s.form(), &ents));
        }
        assert_eq!(m.pairs, oracle);
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let c = generate_synthetic(&GenConfig {
            per_class: 5,
            ..GenConfig::default()
        });
        let m = build_cooccurrence(
            &c,
            &CooccurrenceConfig {
                hidden: 3,
                epochs: 0,
                ..CooccurrenceConfig::default()
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let eps = 1e-4;
        for trial in 0..6 {
            let (p, e) = random_pair(&m, &mut rng);
            let label = (trial % 2) as u8;
            let weight = 0.5 + trial as f64;
            let mut grad = m.zeros_like();
            m.pair_loss(p, e, label, weight, Some(&mut grad));
            let analytic = grad.tensors().concat();
            let offsets = [
                (0, p * 3, 3),
                (m.pred_emb.data.len(), e * 3, 3),
                (
                    m.pred_emb.data.len() + m.ent_emb.data.len(),
                    0,
                    m.head.weight.data.len() + 2,
                ),
            ];
            for (base, start, len) in offsets {
                for idx in base + start..base + start + len {
                    let f = |by: f64| {
                        let mut q = m.clone();
                        let mut i = idx;
                        for t in q.tensors_mut() {
                            if i < t.len() {
                                t[i] += by;
                                break;
                            }
                            i -= t.len();
                        }
                        q.pair_loss(p, e, label, weight, None)
                    };
                    let numeric = (f(eps) - f(-eps)) / (2.0 * eps);
                    let g = analytic[idx];
                    assert!((numeric - g).abs() <= 1e-4 * numeric.abs().max(g.abs()).max(1e-2));
                }
            }
        }
    }

    #[test]
    fn seen_pairs_score_high() {
        let c = generate_synthetic(&GenConfig::default());
        let m = build_cooccurrence(&c, &CooccurrenceConfig::default()).unwrap();
        let above = m.pairs.iter().filter(|(p, e)| m.pair_prob(p, e) > 0.5).count();
        assert!(above as f64 >= 0.95 * m.pairs.len() as f64, "{above}/{}", m.pairs.len());
    }
}
