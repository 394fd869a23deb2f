//! Generation-loss reranking with a copy-augmented bigram model.
//!
//! Each candidate logical form is split into words and scored by how well a
//! per-class bigram mixed with copying from the question predicts it. Losses
//! are normalized within a candidate pool as `1 − loss / max`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::learn::UNK_TOKEN;
use crate::lf::{is_numeric, is_variable, split_compound, LogicalForm};

pub const START: &str = "<s>";
pub const END: &str = "</s>";

/// Splits predicates and entities into words; structure tokens, variables
/// and numbers are kept whole.
pub fn split_logical_form(lf: &LogicalForm) -> Vec<String> {
    split_tokens(lf.tokens())
}

pub fn split_tokens(tokens: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for tok in tokens {
        if is_variable(tok) || is_numeric(tok) || !tok.contains([':', '.', '_']) {
            out.push(tok.to_lowercase());
        } else {
            out.extend(split_compound(tok).map(str::to_lowercase));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub next: BTreeMap<String, BTreeMap<String, u64>>,
    pub totals: BTreeMap<String, u64>,
}

impl Counts {
    fn add(&mut self, prev: &str, word: &str) {
        *self
            .next
            .entry(prev.to_string())
            .or_default()
            .entry(word.to_string())
            .or_insert(0) += 1;
        *self.totals.entry(prev.to_string()).or_insert(0) += 1;
    }

    fn get(&self, prev: &str, word: &str) -> (u64, u64) {
        let c = self.next.get(prev).and_then(|m| m.get(word)).copied().unwrap_or(0);
        (c, self.totals.get(prev).copied().unwrap_or(0))
    }
}

/// Bigram counts over split logical forms, per sketch class and pooled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BigramStats {
    pub classes: BTreeMap<String, Counts>,
    pub global: Counts,
    pub vocab: BTreeSet<String>,
}

impl BigramStats {
    pub fn fit(train: &Corpus) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut stats = BigramStats::default();
        stats.vocab.insert(END.to_string());
        stats.vocab.insert(UNK_TOKEN.to_string());
        for s in &train.samples {
            let words = split_logical_form(&s.form());
            stats.vocab.extend(words.iter().cloned());
            let class = stats.classes.entry(s.sketch_class.clone()).or_default();
            let mut prev = START;
            for w in words.iter().map(String::as_str).chain(std::iter::once(END)) {
                class.add(prev, w);
                stats.global.add(prev, w);
                prev = w;
            }
        }
        Ok(stats)
    }

    /// Add-α probability of `word` after `prev`; unseen classes fall back to
    /// the pooled counts. Sums to one over the vocabulary.
    pub fn prob(&self, class: &str, prev: &str, word: &str, alpha: f64) -> f64 {
        let counts = self.classes.get(class).unwrap_or(&self.global);
        let word = if self.vocab.contains(word) { word } else { UNK_TOKEN };
        let (c, total) = counts.get(prev, word);
        (c as f64 + alpha) / (total as f64 + alpha * self.vocab.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenModel {
    /// Copy weight λ.
    pub lambda: f64,
    /// Smoothing constant α.
    pub alpha: f64,
}

impl GenModel {
    /// Mean negative log-likelihood of `target` (end marker included) given
    /// the question, under `λ·copy + (1−λ)·bigram`.
    pub fn seq_loss(&self, stats: &BigramStats, question: &[String], class: &str, target: &[String]) -> Result<f64> {
        if target.is_empty() {
            return Err(Error::EmptyCandidate);
        }
        let qlen = question.len().max(1) as f64;
        let mut total = 0.0;
        let mut prev = START;
        let mut steps = 0usize;
        for w in target.iter().map(String::as_str).chain(std::iter::once(END)) {
            let copy = question.iter().filter(|q| *q == w).count() as f64 / qlen;
            let p = self.lambda * copy + (1.0 - self.lambda) * stats.prob(class, prev, w, self.alpha);
            total -= p.ln();
            steps += 1;
            prev = w;
        }
        Ok((total / steps as f64).max(0.0))
    }
}

/// Normalized scores plus a flag for the degenerate all-zero pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub scores: Vec<f64>,
    pub all_zero: bool,
}

/// `1 − loss / max(losses)`; an all-zero pool scores 1 everywhere.
pub fn normalize_losses(losses: &[f64]) -> Result<Normalized> {
    if losses.is_empty() {
        return Err(Error::EmptyInput);
    }
    let max = losses.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(Normalized {
            scores: vec![1.0; losses.len()],
            all_zero: true,
        });
    }
    Ok(Normalized {
        scores: losses.iter().map(|l| (1.0 - l / max).clamp(0.0, 1.0)).collect(),
        all_zero: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenScoreConfig {
    pub members: Vec<GenModel>,
}

impl Default for GenScoreConfig {
    fn default() -> Self {
        GenScoreConfig {
            members: [0.3, 0.5, 0.7]
                .into_iter()
                .map(|lambda| GenModel { lambda, alpha: 0.1 })
                .collect(),
        }
    }
}

/// Shared counts with several (λ, α) members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenScorer {
    pub stats: BigramStats,
    pub members: Vec<GenModel>,
}

pub fn fit_genmodel(train: &Corpus, cfg: &GenScoreConfig) -> Result<GenScorer> {
    if cfg.members.is_empty() {
        return Err(Error::Config("at least one generation member is required".into()));
    }
    if cfg
        .members
        .iter()
        .any(|m| !(m.lambda > 0.0 && m.lambda < 1.0) || m.alpha <= 0.0)
    {
        return Err(Error::Config(
            "copy weight must lie in (0, 1) and smoothing must be positive".into(),
        ));
    }
    Ok(GenScorer {
        stats: BigramStats::fit(train)?,
        members: cfg.members.clone(),
    })
}

impl GenScorer {
    /// Mean over members of the normalized scores of a candidate pool.
    pub fn scores(&self, question: &[String], class: &str, candidates: &[Vec<String>]) -> Result<Vec<f64>> {
        if candidates.is_empty() {
            return Err(Error::NoCandidates);
        }
        let mut acc = vec![0.0; candidates.len()];
        for m in &self.members {
            let losses: Vec<f64> = candidates
                .iter()
                .map(|c| m.seq_loss(&self.stats, question, class, c))
                .collect::<Result<_>>()?;
            for (a, s) in acc.iter_mut().zip(normalize_losses(&losses)?.scores) {
                *a += s;
            }
        }
        Ok(acc.into_iter().map(|a| a / self.members.len() as f64).collect())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::{generate_synthetic, split, GenConfig};
    use crate::lf::{parse_logical_form, substitute_template, SlotFillers};
    use crate::matchers::build_pattern_index;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn split_examples() {
        let lf = parse_logical_form("( lambda ?x ( mso:people.person.date_of_birth chris_pine ?x ) )").unwrap();
        assert_eq!(
            split_logical_form(&lf).join(" "),
            "( lambda ?x ( people person date of birth chris pine ?x ) )"
        );
        let plain = parse_logical_form("( count ?x 12 2.5 )").unwrap();
        assert_eq!(split_logical_form(&plain), plain.tokens());
        let once = split_logical_form(&lf);
        assert_eq!(split_tokens(&once), once);
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_losses(&[2.0, 4.0, 1.0]).unwrap().scores, vec![0.5, 0.0, 0.75]);
        assert_eq!(normalize_losses(&[3.3]).unwrap().scores, vec![0.0]);
        let z = normalize_losses(&[0.0, 0.0]).unwrap();
        assert!(z.all_zero);
        assert_eq!(z.scores, vec![1.0, 1.0]);
        assert!(normalize_losses(&[]).is_err());
    }

    proptest! {
        #[test]
        fn normalization_law(losses in prop::collection::vec(0.0f64..50.0, 1..20), c in 0.01f64..100.0) {
            prop_assume!(losses.iter().any(|l| *l > 0.0));
            let n = normalize_losses(&losses).unwrap();
            let max = losses.iter().copied().fold(0.0, f64::max);
            for (s, l) in n.scores.iter().zip(&losses) {
                prop_assert!((s - (1.0 - l / max)).abs() <= 1e-12);
                prop_assert!((0.0..=1.0).contains(s));
            }
            let arg = losses.iter().position(|l| *l == max).unwrap();
            prop_assert_eq!(n.scores[arg], 0.0);
            let scaled: Vec<f64> = losses.iter().map(|l| l * c).collect();
            for (a, b) in n.scores.iter().zip(normalize_losses(&scaled).unwrap().scores) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    fn fitted() -> (GenScorer, Corpus, Corpus) {
        let c = generate_synthetic(&GenConfig {
            per_class: 100,
            ..GenConfig::default()
        });
        let (train, dev, _) = split(&c, [0.8, 0.1, 0.1], 4).unwrap();
        (fit_genmodel(&train, &GenScoreConfig::default()).unwrap(), train, dev)
    }

    #[test]
    fn bigram_distributions_sum_to_one() {
        let (g, train, _) = fitted();
        let class = &train.samples[0].sketch_class;
        for prev in [START, "(", "lambda", "never-seen"] {
            let total: f64 = g.stats.vocab.iter().map(|w| g.stats.prob(class, prev, w, 0.1)).sum();
            assert!((total - 1.0).abs() < 1e-9, "{prev}: {total}");
        }
    }

    #[test]
    fn copy_dominant_limit() {
        let (g, _, _) = fitted();
        let q = words("a b c d");
        let m = GenModel {
            lambda: 1.0 - 1e-9,
            alpha: 0.1,
        };
        let loss = m.seq_loss(&g.stats, &q, "x", &words("a b")).unwrap();
        // the end marker is never copied, so it alone is priced by the bigram
        assert!(loss.is_finite() && loss >= 0.0);
        let m = GenModel {
            lambda: 0.5,
            alpha: 0.1,
        };
        assert!(m.seq_loss(&g.stats, &q, "x", &[]).is_err());
    }

    #[test]
    fn gold_beats_same_class_alternatives() {
        let (g, train, dev) = fitted();
        let index = build_pattern_index(&train).unwrap();
        let mut wins = 0;
        let mut total = 0;
        for (i, s) in dev.samples.iter().enumerate() {
            let q = s.tokens();
            let gold = split_logical_form(&s.form());
            let entries = index.entries(&s.sketch_class);
            let gold_pattern = s.lf_pattern().unwrap();
            let fillers = SlotFillers::from_params(&s.params);
            let Some(other) = entries
                .iter()
                .cycle()
                .skip(i % entries.len())
                .take(entries.len())
                .find(|e| e.pattern != gold_pattern)
            else {
                continue;
            };
            let alt = split_logical_form(&substitute_template(&other.template, &fillers).unwrap());
            total += 1;
            let m = g.members[1];
            if m.seq_loss(&g.stats, &q, &s.sketch_class, &gold).unwrap()
                < m.seq_loss(&g.stats, &q, &s.sketch_class, &alt).unwrap()
            {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.85 * total as f64, "{wins}/{total}");
    }

    #[test]
    fn member_scores_average() {
        let (g, train, _) = fitted();
        let s = &train.samples[3];
        let q = s.tokens();
        let pool = vec![split_logical_form(&s.form()), words("( foo )"), words("( lambda ?x )")];
        let scores = g.scores(&q, &s.sketch_class, &pool).unwrap();
        assert!(scores.iter().all(|v| (0.0..=1.0).contains(v)));
        let single = GenScorer {
            stats: g.stats.clone(),
            members: vec![g.members[0]; 3],
        };
        let one = GenScorer {
            stats: g.stats.clone(),
            members: vec![g.members[0]],
        };
        let a = single.scores(&q, &s.sketch_class, &pool).unwrap();
        let b = one.scores(&q, &s.sketch_class, &pool).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-15));
        assert_eq!(g.members.len(), 3);
    }
}
