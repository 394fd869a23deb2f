use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PatternIndex;
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::learn::{
    cross_entropy, pair_features, pair_features_backward, softmax, EncoderParams, LinearHead, OptState, Params, Vocab,
};
use crate::lf::{LfPattern, QuestionPattern};

/// Binary matcher over mean-pooled question and logical-form patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherModel {
    pub encoder: EncoderParams,
    /// `2 × 4h` head over `[a; b; |a−b|; a⊙b]`.
    pub head: LinearHead,
}

impl MatcherModel {
    pub fn new<R: Rng>(vocab_size: usize, hidden: usize, rng: &mut R) -> Self {
        MatcherModel {
            encoder: EncoderParams::new(vocab_size, hidden, 0, rng),
            head: LinearHead::new(2, 4 * hidden, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let h = self.encoder.hidden();
        MatcherModel {
            encoder: EncoderParams::zeros(self.encoder.embeddings.rows, h, 0),
            head: LinearHead::zeros(2, 4 * h),
        }
    }

    /// Probability of a match given both side encodings.
    pub fn prob_encoded(&self, a: &[f64], b: &[f64]) -> f64 {
        softmax(&self.head.forward(&pair_features(a, b)))[1]
    }

    pub fn score_ids(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        Ok(self.prob_encoded(&self.encoder.encode_sentence(a)?, &self.encoder.encode_sentence(b)?))
    }

    /// Cross-entropy of one labeled pair; gradients accumulate into `grad`.
    pub fn loss(&self, a: &[usize], b: &[usize], label: u8, grad: Option<&mut MatcherModel>) -> Result<f64> {
        let ea = self.encoder.encode_sentence(a)?;
        let eb = self.encoder.encode_sentence(b)?;
        let features = pair_features(&ea, &eb);
        let (loss, d_logits) = cross_entropy(&self.head.forward(&features), label as usize);
        if let Some(grad) = grad {
            let d_features = self.head.backward(&features, &d_logits, &mut grad.head);
            let (da, db) = pair_features_backward(&ea, &eb, &d_features);
            self.encoder.sentence_backward(a, &da, &mut grad.encoder);
            self.encoder.sentence_backward(b, &db, &mut grad.encoder);
        }
        Ok(loss)
    }
}

impl Params for MatcherModel {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.encoder.embeddings.data, &self.head.weight.data, &self.head.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.encoder.embeddings.data,
            &mut self.head.weight.data,
            &mut self.head.bias,
        ]
    }
}

/// Members share one vocabulary; the ensemble score is their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherEnsemble {
    pub vocab: Vocab,
    pub members: Vec<MatcherModel>,
}

impl MatcherEnsemble {
    pub fn member_scores(&self, qp: &QuestionPattern, lfp: &LfPattern) -> Result<Vec<f64>> {
        let a = self.vocab.ids(&qp.tokens);
        let b = self.vocab.ids(&lfp.tokens);
        self.members.iter().map(|m| m.score_ids(&a, &b)).collect()
    }

    pub fn score(&self, qp: &QuestionPattern, lfp: &LfPattern) -> Result<f64> {
        let scores = self.member_scores(qp, lfp)?;
        if scores.is_empty() {
            return Err(Error::Config("matcher ensemble has no members".into()));
        }
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub threshold: f64,
    pub hard: usize,
    pub easy: usize,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig {
            threshold: 1e-4,
            hard: 20,
            easy: 5,
        }
    }
}

/// Chooses negatives from one question's scored pool: up to `hard` of those
/// scoring above the threshold and up to `easy` of the rest, uniformly.
/// Returns indices into `probs`, hard picks first.
pub fn ranking_resample<R: Rng>(probs: &[f64], cfg: &ResampleConfig, rng: &mut R) -> Vec<usize> {
    let (hard, easy): (Vec<usize>, Vec<usize>) = (0..probs.len()).partition(|&i| probs[i] > cfg.threshold);
    let mut out: Vec<usize> = hard.choose_multiple(rng, cfg.hard.min(hard.len())).copied().collect();
    out.extend(easy.choose_multiple(rng, cfg.easy.min(easy.len())).copied());
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs of the base model on uniform negatives.
    pub epochs: usize,
    /// Epochs of each refit member.
    pub refit_epochs: usize,
    /// Total ensemble size, base model included.
    pub members: usize,
    /// Uniform negatives per positive for the base model.
    pub negatives: usize,
    pub resample: ResampleConfig,
    pub seed: u64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            hidden: 64,
            learning_rate: 5e-3,
            batch_size: 32,
            epochs: 4,
            refit_epochs: 2,
            members: 3,
            negatives: 20,
            resample: ResampleConfig::default(),
            seed: 29,
        }
    }
}

/// Training question with its class candidates, as vocabulary ids.
struct Item {
    qp: Vec<usize>,
    class: usize,
    gold: usize,
}

struct Pools {
    /// Per class, the distinct pattern id sequences.
    patterns: Vec<Vec<Vec<usize>>>,
    items: Vec<Item>,
}

fn build_pools(corpus: &Corpus, index: &PatternIndex, vocab: &Vocab, class_ids: &BTreeMap<&str, usize>) -> Pools {
    let patterns: Vec<Vec<Vec<usize>>> = index
        .classes
        .keys()
        .map(|c| index.patterns(c).iter().map(|p| vocab.ids(&p.tokens)).collect())
        .collect();
    let mut items = Vec::new();
    for s in &corpus.samples {
        let (Ok(qp), Ok(lfp)) = (s.question_pattern(), s.lf_pattern()) else {
            continue;
        };
        let Some(&class) = class_ids.get(s.sketch_class.as_str()) else {
            continue;
        };
        let gold_ids = vocab.ids(&lfp.tokens);
        let Some(gold) = patterns[class].iter().position(|p| *p == gold_ids) else {
            continue;
        };
        items.push(Item {
            qp: vocab.ids(&qp.tokens),
            class,
            gold,
        });
    }
    Pools { patterns, items }
}

/// Match probabilities of every candidate in each item's class.
fn score_pools(model: &MatcherModel, pools: &Pools) -> Result<Vec<Vec<f64>>> {
    let encoded: Vec<Vec<Vec<f64>>> = pools
        .patterns
        .iter()
        .map(|ps| {
            ps.iter()
                .map(|p| model.encoder.encode_sentence(p))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    pools
        .items
        .iter()
        .map(|it| {
            let q = model.encoder.encode_sentence(&it.qp)?;
            Ok(encoded[it.class].iter().map(|p| model.prob_encoded(&q, p)).collect())
        })
        .collect()
}

/// Fraction of items whose gold pattern scores strictly highest.
fn top1_accuracy(model: &MatcherModel, pools: &Pools) -> Result<f64> {
    if pools.items.is_empty() {
        return Ok(0.0);
    }
    let scores = score_pools(model, pools)?;
    let hits = pools
        .items
        .iter()
        .zip(&scores)
        .filter(|(it, s)| s.iter().enumerate().all(|(j, p)| j == it.gold || *p < s[it.gold]))
        .count();
    Ok(hits as f64 / pools.items.len() as f64)
}

fn run_epoch(
    model: &mut MatcherModel,
    grad: &mut MatcherModel,
    opt: &mut OptState,
    pools: &Pools,
    pairs: &mut [(usize, usize, u8)],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    pairs.shuffle(rng);
    for batch in pairs.chunks(batch_size) {
        grad.zero();
        for &(item, pattern, label) in batch {
            let it = &pools.items[item];
            model.loss(&it.qp, &pools.patterns[it.class][pattern], label, Some(grad))?;
        }
        grad.scale(1.0 / batch.len() as f64);
        opt.step(model, grad)?;
    }
    Ok(())
}

fn positives(pools: &Pools) -> Vec<(usize, usize, u8)> {
    pools.items.iter().enumerate().map(|(i, it)| (i, it.gold, 1)).collect()
}

/// Trains a base matcher on uniform same-class negatives, then refit members
/// starting from it on negatives resampled by their own scores before every
/// epoch. Each member keeps its best-dev epoch.
pub fn train_matcher_ensemble(
    train: &Corpus,
    dev: &Corpus,
    index: &PatternIndex,
    cfg: &MatcherConfig,
) -> Result<MatcherEnsemble> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.members == 0 || cfg.hidden == 0 || cfg.batch_size == 0 {
        return Err(Error::Config(
            "matcher members, hidden size and batch size must be positive".into(),
        ));
    }
    let mut tokens: Vec<String> = Vec::new();
    for s in &train.samples {
        tokens.extend(s.question_pattern()?.tokens);
    }
    for entries in index.classes.values() {
        for e in entries {
            tokens.extend(e.pattern.tokens.iter().cloned());
        }
    }
    let vocab = Vocab::build(tokens.iter().map(String::as_str), 1);
    let class_ids: BTreeMap<&str, usize> = index.classes.keys().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let train_pools = build_pools(train, index, &vocab, &class_ids);
    let dev_pools = build_pools(dev, index, &vocab, &class_ids);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut base = MatcherModel::new(vocab.len(), cfg.hidden, &mut rng);
    let mut grad = base.zeros_like();
    let mut opt = OptState::new(cfg.learning_rate, cfg.seed);
    let mut best: Option<(f64, MatcherModel)> = None;
    let keep_best = |model: &MatcherModel, best: &mut Option<(f64, MatcherModel)>| -> Result<()> {
        if dev_pools.items.is_empty() {
            *best = Some((0.0, model.clone()));
            return Ok(());
        }
        let acc = top1_accuracy(model, &dev_pools)?;
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            *best = Some((acc, model.clone()));
        }
        Ok(())
    };

    for _ in 0..cfg.epochs.max(1) {
        let mut pairs = positives(&train_pools);
        for (i, it) in train_pools.items.iter().enumerate() {
            let pool: Vec<usize> = (0..train_pools.patterns[it.class].len())
                .filter(|&j| j != it.gold)
                .collect();
            pairs.extend(
                pool.choose_multiple(&mut rng, cfg.negatives.min(pool.len()))
                    .map(|&j| (i, j, 0)),
            );
        }
        run_epoch(
            &mut base,
            &mut grad,
            &mut opt,
            &train_pools,
            &mut pairs,
            cfg.batch_size,
            &mut rng,
        )?;
        keep_best(&base, &mut best)?;
    }
    let base = best.map_or(base, |(_, m)| m);
    let mut members = vec![base.clone()];

    for m in 1..cfg.members {
        let mut model = base.clone();
        let mut opt = OptState::new(cfg.learning_rate, cfg.seed.wrapping_add(m as u64));
        let mut best: Option<(f64, MatcherModel)> = None;
        for _ in 0..cfg.refit_epochs.max(1) {
            let scores = score_pools(&model, &train_pools)?;
            let mut pairs = positives(&train_pools);
            for (i, (it, probs)) in train_pools.items.iter().zip(&scores).enumerate() {
                let pool: Vec<usize> = (0..probs.len()).filter(|&j| j != it.gold).collect();
                let pool_probs: Vec<f64> = pool.iter().map(|&j| probs[j]).collect();
                pairs.extend(
                    ranking_resample(&pool_probs, &cfg.resample, &mut rng)
                        .into_iter()
                        .map(|k| (i, pool[k], 0)),
                );
            }
            run_epoch(
                &mut model,
                &mut grad,
                &mut opt,
                &train_pools,
                &mut pairs,
                cfg.batch_size,
                &mut rng,
            )?;
            keep_best(&model, &mut best)?;
        }
        members.push(best.map_or(model, |(_, m)| m));
    }
    Ok(MatcherEnsemble { vocab, members })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split, GenConfig};
    use crate::matchers::build_pattern_index;

    #[test]
    fn zero_model_is_neutral() {
        let m = MatcherModel::new(10, 4, &mut ChaCha8Rng::seed_from_u64(0)).zeros_like();
        assert_eq!(m.score_ids(&[2, 3], &[4]).unwrap(), 0.5);
    }

    #[test]
    fn probabilities_are_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = MatcherModel::new(12, 6, &mut rng);
        for _ in 0..100 {
            let a: Vec<usize> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..12)).collect();
            let b: Vec<usize> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..12)).collect();
            let p = m.score_ids(&a, &b).unwrap();
            assert!(p > 0.0 && p < 1.0);
            assert_eq!(p, m.score_ids(&a, &b).unwrap());
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eps = 1e-4;
        for trial in 0..6 {
            let m = MatcherModel::new(7, 3, &mut rng);
            let a: Vec<usize> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(0..7)).collect();
            let b: Vec<usize> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(0..7)).collect();
            let label = (trial % 2) as u8;
            let mut grad = m.zeros_like();
            m.loss(&a, &b, label, Some(&mut grad)).unwrap();
            let analytic = grad.tensors().concat();
            for idx in 0..m.num_params() {
                let f = |by: f64| {
                    let mut p = m.clone();
                    let mut i = idx;
                    for t in p.tensors_mut() {
                        if i < t.len() {
                            t[i] += by;
                            break;
                        }
                        i -= t.len();
                    }
                    p.loss(&a, &b, label, None).unwrap()
                };
                let numeric = (f(eps) - f(-eps)) / (2.0 * eps);
                let g = analytic[idx];
                assert!(
                    (numeric - g).abs() <= 1e-4 * numeric.abs().max(g.abs()).max(1e-2),
                    "{idx}: {numeric} vs {g}"
                );
            }
        }
    }

    #[test]
    fn resample_counts() {
        let cfg = ResampleConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pool = [0.3, 0.2, 0.01, 1e-5, 1e-6];
        let mut picks = ranking_resample(&pool, &cfg, &mut rng);
        picks.sort();
        assert_eq!(picks, vec![0, 1, 2, 3, 4]);

        let hard = vec![0.5; 100];
        assert_eq!(ranking_resample(&hard, &cfg, &mut rng).len(), 20);

        let mixed: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { 0.4 } else { 1e-4 }).collect();
        let picks = ranking_resample(&mixed, &cfg, &mut rng);
        assert_eq!(picks.len(), 25);
        assert!(picks[..20].iter().all(|&i| mixed[i] > 1e-4));
        assert!(picks[20..].iter().all(|&i| mixed[i] <= 1e-4));
    }

    #[test]
    fn ensemble_of_copies_scores_like_one() {
        let m = MatcherModel::new(10, 4, &mut ChaCha8Rng::seed_from_u64(5));
        let vocab = Vocab::build(["a", "b", "entity1"], 1);
        let one = MatcherEnsemble {
            vocab: vocab.clone(),
            members: vec![m.clone()],
        };
        let three = MatcherEnsemble {
            vocab,
            members: vec![m.clone(), m.clone(), m],
        };
        let qp = QuestionPattern {
            tokens: vec!["a".into(), "entity1".into()],
        };
        let lfp = LfPattern {
            tokens: vec!["b".into(), "entity1".into()],
        };
        assert!((one.score(&qp, &lfp).unwrap() - three.score(&qp, &lfp).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn trained_ensemble_ranks_gold_first() {
        let c = generate_synthetic(&GenConfig {
            per_class: 100,
            ..GenConfig::default()
        });
        let (train, dev, _) = split(&c, [0.8, 0.1, 0.1], 2).unwrap();
        let index = build_pattern_index(&train).unwrap();
        let cfg = MatcherConfig {
            hidden: 32,
            ..MatcherConfig::default()
        };
        let ens = train_matcher_ensemble(&train, &dev, &index, &cfg).unwrap();
        assert_eq!(ens.members.len(), 3);
        let base = MatcherEnsemble {
            vocab: ens.vocab.clone(),
            members: ens.members[..1].to_vec(),
        };
        let top1 = |e: &MatcherEnsemble, qp: &QuestionPattern, gold: &LfPattern, class: &str| {
            let g = e.score(qp, gold).unwrap();
            index
                .patterns(class)
                .iter()
                .all(|p| *p == gold || e.score(qp, p).unwrap() < g)
        };
        let (mut hits, mut base_hits) = (0, 0);
        for s in &dev.samples {
            let qp = s.question_pattern().unwrap();
            let gold = s.lf_pattern().unwrap();
            let g = ens.score(&qp, &gold).unwrap();
            let members = ens.member_scores(&qp, &gold).unwrap();
            let lo = members.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = members.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(g >= lo - 1e-12 && g <= hi + 1e-12);
            hits += usize::from(top1(&ens, &qp, &gold, &s.sketch_class));
            base_hits += usize::from(top1(&base, &qp, &gold, &s.sketch_class));
        }
        let n = dev.len() as f64;
        assert!(hits as f64 >= 0.9 * n, "{hits}/{}", dev.len());
        assert!(
            hits as f64 / n >= base_hits as f64 / n - 0.005,
            "ensemble {hits}, base {base_hits}"
        );
    }
}
