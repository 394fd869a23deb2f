//! Stage-three scorers: the pattern pair matcher and the predicate-entity
//! co-occurrence model, plus the per-class pattern inventory they rank over.

mod cooccur;
mod network;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::lf::{LfPattern, LfTemplate, QuestionPattern};

pub use cooccur::{
    build_cooccurrence, predicate_entity_pairs, score_candidate_pe, CooccurrenceConfig, CooccurrenceModel,
};
pub use network::{
    ranking_resample, train_matcher_ensemble, MatcherConfig, MatcherEnsemble, MatcherModel, ResampleConfig,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternEntry {
    pub pattern: LfPattern,
    pub template: LfTemplate,
    pub count: usize,
}

/// Logical-form patterns and templates seen in training, per sketch class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternIndex {
    pub classes: BTreeMap<String, Vec<PatternEntry>>,
}

impl PatternIndex {
    pub fn entries(&self, class: &str) -> &[PatternEntry] {
        self.classes.get(class).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, class: &str, pattern: &LfPattern) -> bool {
        self.entries(class).iter().any(|e| e.pattern == *pattern)
    }

    /// Training frequency of `pattern` within `class`.
    pub fn frequency(&self, class: &str, pattern: &LfPattern) -> usize {
        self.entries(class)
            .iter()
            .filter(|e| e.pattern == *pattern)
            .map(|e| e.count)
            .sum()
    }

    /// Distinct patterns of `class`, in index order.
    pub fn patterns(&self, class: &str) -> Vec<&LfPattern> {
        let mut out: Vec<&LfPattern> = Vec::new();
        for e in self.entries(class) {
            if !out.contains(&&e.pattern) {
                out.push(&e.pattern);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Fraction of `corpus` samples whose gold pattern is indexed under their
    /// gold class.
    pub fn coverage(&self, corpus: &Corpus) -> f64 {
        if corpus.is_empty() {
            return 1.0;
        }
        let hits = corpus
            .samples
            .iter()
            .filter(|s| s.lf_pattern().is_ok_and(|p| self.contains(&s.sketch_class, &p)))
            .count();
        hits as f64 / corpus.len() as f64
    }
}

pub fn build_pattern_index(train: &Corpus) -> Result<PatternIndex> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: BTreeMap<String, BTreeMap<LfTemplate, usize>> = BTreeMap::new();
    for s in &train.samples {
        let template = s.template()?;
        *counts
            .entry(s.sketch_class.clone())
            .or_default()
            .entry(template)
            .or_insert(0) += 1;
    }
    let classes = counts
        .into_iter()
        .map(|(class, templates)| {
            let mut entries: Vec<PatternEntry> = templates
                .into_iter()
                .map(|(template, count)| PatternEntry {
                    pattern: template.pattern(),
                    template,
                    count,
                })
                .collect();
            entries.sort_by(|a, b| a.pattern.cmp(&b.pattern).then_with(|| a.template.cmp(&b.template)));
            (class, entries)
        })
        .collect();
    Ok(PatternIndex { classes })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternPairSample {
    pub qp: QuestionPattern,
    pub lfp: LfPattern,
    pub label: u8,
}

/// Up to `k` distinct non-gold patterns of `class`, uniform without
/// replacement.
pub fn sample_negatives(
    qp: &QuestionPattern,
    gold: &LfPattern,
    class: &str,
    index: &PatternIndex,
    k: usize,
    seed: u64,
) -> Result<Vec<PatternPairSample>> {
    if index.entries(class).is_empty() {
        return Err(Error::EmptyClass(class.to_string()));
    }
    let pool: Vec<&LfPattern> = index.patterns(class).into_iter().filter(|p| *p != gold).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(pool
        .choose_multiple(&mut rng, k.min(pool.len()))
        .map(|p| PatternPairSample {
            qp: qp.clone(),
            lfp: (*p).clone(),
            label: 0,
        })
        .collect())
}
