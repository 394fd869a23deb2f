//! End-to-end system: training every stage, candidate reranking, evaluation
//! and the on-disk checkpoint.

mod candidates;
mod metrics;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Sample};
use crate::error::{Error, Result};
use crate::genscore::{fit_genmodel, split_logical_form, GenScoreConfig, GenScorer};
use crate::lf::{tokenize_question, ParamKind, Span};
use crate::matchers::{
    build_cooccurrence, build_pattern_index, score_candidate_pe, train_matcher_ensemble, CooccurrenceConfig,
    CooccurrenceModel, MatcherConfig, MatcherEnsemble, PatternIndex,
};
use crate::multitask::{train_multitask, MultiTaskConfig, MultiTaskModel};

pub use candidates::{
    generate_candidates, pool_accuracy, rank, top1, tune_weights, Candidate, FusionWeights, ScoredCandidate, TuningPool,
};
pub use metrics::{
    classify_errors, compute_metrics, exact_matches, ClassMetrics, EvalReport, MetricsReport, Outcome, Taxonomy,
};

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_FILE: &str = "model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub multitask: MultiTaskConfig,
    pub matcher: MatcherConfig,
    pub cooccurrence: CooccurrenceConfig,
    pub generator: GenScoreConfig,
    pub grid_step: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            multitask: MultiTaskConfig::default(),
            matcher: MatcherConfig::default(),
            cooccurrence: CooccurrenceConfig::default(),
            generator: GenScoreConfig::default(),
            grid_step: 0.05,
        }
    }
}

impl SystemConfig {
    /// Derives every stage seed from one base seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.multitask.seed = seed;
        self.matcher.seed = seed.wrapping_add(1);
        self.cooccurrence.seed = seed.wrapping_add(2);
        self
    }
}

/// Dev accuracy before and after weight tuning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TuningSummary {
    pub dev_samples: usize,
    pub baseline_accuracy: f64,
    pub tuned_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct System {
    pub format_version: u32,
    pub config: SystemConfig,
    pub multitask: MultiTaskModel,
    pub index: PatternIndex,
    pub matcher: MatcherEnsemble,
    pub cooccurrence: CooccurrenceModel,
    pub generator: GenScorer,
    pub weights: FusionWeights,
    pub tuning: TuningSummary,
}

/// Ranked output for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: String,
    pub spans: Vec<Span>,
    pub candidates: Vec<ScoredCandidate>,
    /// Why no candidate was produced, if so.
    pub diagnostic: Option<String>,
}

impl Prediction {
    pub fn top(&self) -> Option<&str> {
        self.candidates.first().map(|c| c.logical_form.as_str())
    }
}

impl System {
    fn score_candidates(&self, question: &[String], class: &str, cands: &[Candidate]) -> Result<Vec<ScoredCandidate>> {
        let split: Vec<Vec<String>> = cands.iter().map(|c| split_logical_form(&c.logical_form)).collect();
        let gen = self.generator.scores(question, class, &split)?;
        cands
            .iter()
            .zip(gen)
            .map(|(c, gen_score)| {
                Ok(ScoredCandidate {
                    logical_form: c.logical_form.to_string(),
                    pattern_score: self.matcher.score(&c.question_pattern, &c.pattern)?,
                    pe_score: score_candidate_pe(&c.logical_form, &c.fillers.entities, &self.cooccurrence),
                    gen_score,
                    fused: 0.0,
                    frequency: c.frequency,
                })
            })
            .collect()
    }

    /// Runs every stage; candidates are ranked under `weights`.
    pub fn analyze_with(&self, question: &[String], weights: &FusionWeights) -> Result<Prediction> {
        let a = self.multitask.analyze(question)?;
        let class = self.multitask.classes[a.class].clone();
        let scored = match generate_candidates(question, &a.spans, &class, &self.index) {
            Ok(cands) => self.score_candidates(question, &class, &cands)?,
            Err(Error::NoCandidates) => {
                return Ok(Prediction {
                    class,
                    spans: a.spans,
                    candidates: Vec::new(),
                    diagnostic: Some("no template of the predicted class matches the labeled spans".into()),
                })
            }
            Err(e) => return Err(e),
        };
        Ok(Prediction {
            class,
            spans: a.spans,
            candidates: rank(scored, weights),
            diagnostic: None,
        })
    }

    pub fn analyze(&self, question: &[String]) -> Result<Prediction> {
        self.analyze_with(question, &self.weights)
    }

    /// Top-ranked logical form, or an empty string when nothing was generated.
    pub fn predict(&self, question: &str) -> Result<String> {
        let tokens = tokenize_question(question)?;
        Ok(self.analyze(&tokens)?.top().unwrap_or_default().to_string())
    }

    pub fn evaluate(&self, corpus: &Corpus) -> Result<EvalReport> {
        let mut outcomes = Vec::with_capacity(corpus.len());
        let mut inventory_misses = 0;
        for s in &corpus.samples {
            let p = self.analyze(&s.tokens())?;
            if self.multitask.class_index(&s.sketch_class).is_none() {
                inventory_misses += 1;
            }
            outcomes.push(Outcome {
                gold_generated: p
                    .candidates
                    .iter()
                    .any(|c| metrics::forms_equal(&c.logical_form, &s.logical_form)),
                predicted_form: p.top().map(str::to_string),
                predicted_class: p.class,
                predicted_spans: p.spans,
            });
        }
        let metrics = compute_metrics(&corpus.samples, &outcomes);
        let (taxonomy, near_misses) = classify_errors(&corpus.samples, &outcomes);
        let n = corpus.len().max(1) as f64;
        Ok(EvalReport {
            samples: corpus.len(),
            acc_l: exact_matches(&corpus.samples, &outcomes) as f64 / n,
            gold_inclusion: outcomes.iter().filter(|o| o.gold_generated).count() as f64 / n,
            pattern_coverage: self.index.coverage(corpus),
            metrics,
            taxonomy,
            near_misses,
            inventory_misses,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MODEL_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<System> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let path = dir.join(MODEL_FILE);
        let mut text = String::new();
        BufReader::new(File::open(&path).map_err(|e| Error::io(&path, e))?)
            .read_to_string(&mut text)
            .map_err(|e| Error::io(&path, e))?;
        let header: Header = serde_json::from_str(&text)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Version(header.format_version));
        }
        Ok(serde_json::from_str(&text)?)
    }
}

/// Trains all stages on `train`, then tunes the fusion weights on `dev`.
pub fn train_system(train: &Corpus, dev: &Corpus, cfg: &SystemConfig) -> Result<System> {
    let multitask = train_multitask(train, dev, &cfg.multitask)?;
    let index = build_pattern_index(train)?;
    let matcher = train_matcher_ensemble(train, dev, &index, &cfg.matcher)?;
    let cooccurrence = build_cooccurrence(train, &cfg.cooccurrence)?;
    let generator = fit_genmodel(train, &cfg.generator)?;
    let mut system = System {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        multitask,
        index,
        matcher,
        cooccurrence,
        generator,
        weights: FusionWeights::PATTERN_ONLY,
        tuning: TuningSummary::default(),
    };
    if !dev.is_empty() {
        let mut pools = Vec::with_capacity(dev.len());
        for s in &dev.samples {
            pools.push(
                system
                    .analyze_with(&s.tokens(), &FusionWeights::PATTERN_ONLY)?
                    .candidates,
            );
        }
        let tuning: Vec<TuningPool> = pools
            .iter()
            .zip(&dev.samples)
            .map(|(c, s)| TuningPool {
                candidates: c,
                gold: &s.logical_form,
            })
            .collect();
        let (weights, tuned) = tune_weights(&tuning, cfg.grid_step)?;
        system.weights = weights;
        system.tuning = TuningSummary {
            dev_samples: dev.len(),
            baseline_accuracy: pool_accuracy(&tuning, &FusionWeights::PATTERN_ONLY),
            tuned_accuracy: tuned,
        };
    }
    Ok(system)
}

fn is_hard(s: &Sample) -> bool {
    let entities = s.params.iter().filter(|p| p.kind == ParamKind::Entity).count();
    s.form().predicates().len() >= 2 || entities >= 2
}

/// Samples with at least two predicates or two entities.
pub fn hard_subset(corpus: &Corpus) -> Corpus {
    Corpus::new(
        corpus.samples.iter().filter(|s| is_hard(s)).cloned().collect(),
        crate::data::SplitTag::Hard,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split, GenConfig};

    fn small_config() -> SystemConfig {
        let mut cfg = SystemConfig::default().with_seed(5);
        cfg.multitask.hidden = 32;
        cfg.matcher.hidden = 32;
        cfg.matcher.epochs = 2;
        cfg.matcher.refit_epochs = 1;
        cfg
    }

    fn corpus() -> (Corpus, Corpus, Corpus) {
        let c = generate_synthetic(&GenConfig {
            per_class: 120,
            ..GenConfig::default()
        });
        split(&c, [0.8, 0.1, 0.1], 9).unwrap()
    }

    #[test]
    fn small_end_to_end() {
        let (train, dev, test) = corpus();
        let sys = train_system(&train, &dev, &small_config()).unwrap();
        assert!(sys.tuning.tuned_accuracy >= sys.tuning.baseline_accuracy);
        let report = sys.evaluate(&test).unwrap();
        assert!(report.acc_l <= report.gold_inclusion);
        assert!(report.acc_l >= 0.7, "{report:?}");
        let m = &report.metrics.overall;
        for v in [m.err_s, m.err_e, m.err_m, m.err_l] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(m.err_m + 1e-12 >= m.err_e);

        let s = &test.samples[0];
        let a = sys.predict(&s.question).unwrap();
        assert_eq!(a, sys.predict(&s.question).unwrap());

        let dir = tempfile::tempdir().unwrap();
        sys.save(dir.path()).unwrap();
        let back = System::load(dir.path()).unwrap();
        assert_eq!(back, sys);
        assert_eq!(back.evaluate(&test).unwrap(), report);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(MODEL_FILE), r#"{"format_version": 99}"#).unwrap();
        assert!(matches!(System::load(dir.path()), Err(Error::Version(99))));
        assert!(matches!(
            System::load(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn hard_subset_selects_multi_part_samples() {
        let c = generate_synthetic(&GenConfig {
            per_class: 10,
            ..GenConfig::default()
        });
        let hard = hard_subset(&c);
        assert!(!hard.is_empty() && hard.len() < c.len());
        assert!(hard.samples.iter().all(|s| s.question_type != "single-relation"));
        assert!(hard.samples.iter().any(|s| s.question_type == "yesno"));
    }
}
