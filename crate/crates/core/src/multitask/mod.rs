//! Joint sketch classification and entity labeling over one shared encoder.

mod crf;

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Sample};
use crate::error::{Error, Result};
use crate::learn::{cross_entropy, softmax, EncoderParams, LinearHead, Mat, OptState, Params, Vocab, UNK};
use crate::lf::Span;

pub use crf::{crf_log_partition, crf_nll, crf_nll_grad, path_score, viterbi, CrfGrad};

/// Token labels: span start, span continuation, outside, padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    B,
    I,
    O,
    P,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::B, Label::I, Label::O, Label::P];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Label> {
        Label::ALL.get(i).copied().ok_or(Error::BadLabel(i))
    }

    pub fn as_char(self) -> char {
        match self {
            Label::B => 'b',
            Label::I => 'i',
            Label::O => 'o',
            Label::P => 'p',
        }
    }
}

/// Per-position labels over a padded sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSeq(pub Vec<Label>);

impl LabelSeq {
    /// Gold labels for `n` real tokens padded to `len`.
    pub fn from_spans(n: usize, spans: &[Span], len: usize) -> Self {
        let len = len.max(n);
        let mut labels = vec![Label::P; len];
        labels[..n].fill(Label::O);
        for s in spans {
            if s.start() >= n {
                continue;
            }
            labels[s.start()] = Label::B;
            for l in labels.iter_mut().take(s.end().min(n - 1) + 1).skip(s.start() + 1) {
                *l = Label::I;
            }
        }
        LabelSeq(labels)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().map(|l| l.index()).collect()
    }
}

impl fmt::Display for LabelSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|l| l.as_char().to_string()).collect();
        f.write_str(&s.join(","))
    }
}

/// Spans of `b i*` runs over the real tokens of `question`. A stray `i`
/// opens a new span.
pub fn extract_entities(question: &[String], labels: &[Label]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    let n = question.len().min(labels.len());
    for (t, label) in labels.iter().take(n).enumerate() {
        match label {
            Label::B => {
                if let Some(s) = open {
                    spans.push(Span(s, t - 1));
                }
                open = Some(t);
            }
            Label::I => {
                if open.is_none() {
                    open = Some(t);
                }
            }
            Label::O | Label::P => {
                if let Some(s) = open.take() {
                    spans.push(Span(s, t - 1));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push(Span(s, n - 1));
    }
    spans
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskParams {
    pub encoder: EncoderParams,
    pub cls: LinearHead,
    pub emit: LinearHead,
    /// `4 × 4` label transition scores.
    pub trans: Mat,
}

impl MultiTaskParams {
    pub fn new<R: Rng>(vocab_size: usize, classes: usize, hidden: usize, window: usize, rng: &mut R) -> Self {
        let encoder = EncoderParams::new(vocab_size, hidden, window, rng);
        let col = encoder.column_dim();
        MultiTaskParams {
            cls: LinearHead::new(classes, hidden, rng),
            emit: LinearHead::new(Label::COUNT, col, rng),
            trans: Mat::zeros(Label::COUNT, Label::COUNT),
            encoder,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let v = self.encoder.embeddings.rows;
        let h = self.encoder.hidden();
        MultiTaskParams {
            encoder: EncoderParams::zeros(v, h, self.encoder.window),
            cls: LinearHead::zeros(self.cls.out_dim(), h),
            emit: LinearHead::zeros(Label::COUNT, self.encoder.column_dim()),
            trans: Mat::zeros(Label::COUNT, Label::COUNT),
        }
    }

    pub fn class_logits(&self, ids: &[usize]) -> Result<Vec<f64>> {
        Ok(self.cls.forward(&self.encoder.encode_sentence(ids)?))
    }

    /// Emission scores over the real tokens; padding is never a candidate.
    pub fn emissions(&self, ids: &[usize]) -> Result<Mat> {
        if ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut e = Mat::zeros(Label::COUNT, ids.len());
        for t in 0..ids.len() {
            let scores = self.emit.forward(&self.encoder.column(ids, t));
            for (k, s) in scores.into_iter().enumerate() {
                e.set(k, t, s);
            }
            e.set(Label::P.index(), t, f64::NEG_INFINITY);
        }
        Ok(e)
    }

    /// Joint loss `w_cls·CE + w_crf·NLL` for one example. Gradients are
    /// accumulated into `grad` when given.
    pub fn joint_loss(
        &self,
        ids: &[usize],
        class: usize,
        gold: &[usize],
        weights: LossWeights,
        grad: Option<&mut MultiTaskParams>,
    ) -> Result<LossParts> {
        if class >= self.cls.out_dim() {
            return Err(Error::BadLabel(class));
        }
        let sentence = self.encoder.encode_sentence(ids)?;
        let logits = self.cls.forward(&sentence);
        let (ce, d_logits) = cross_entropy(&logits, class);
        let emissions = self.emissions(ids)?;
        let crf = crf_nll_grad(&emissions, &self.trans, gold)?;
        let parts = LossParts {
            ce,
            nll: crf.loss,
            total: weights.classification * ce + weights.labeling * crf.loss,
        };
        if let Some(grad) = grad {
            let d_logits: Vec<f64> = d_logits.iter().map(|g| g * weights.classification).collect();
            let d_sentence = self.cls.backward(&sentence, &d_logits, &mut grad.cls);
            self.encoder.sentence_backward(ids, &d_sentence, &mut grad.encoder);
            for t in 0..ids.len() {
                let d_scores: Vec<f64> = (0..Label::COUNT)
                    .map(|k| weights.labeling * crf.emissions.get(k, t))
                    .collect();
                let column = self.encoder.column(ids, t);
                let d_col = self.emit.backward(&column, &d_scores, &mut grad.emit);
                self.encoder.column_backward(ids, t, &d_col, &mut grad.encoder);
            }
            for (g, d) in grad.trans.data.iter_mut().zip(&crf.transitions.data) {
                *g += weights.labeling * d;
            }
        }
        Ok(parts)
    }
}

impl Params for MultiTaskParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            &self.encoder.embeddings.data,
            &self.cls.weight.data,
            &self.cls.bias,
            &self.emit.weight.data,
            &self.emit.bias,
            &self.trans.data,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.encoder.embeddings.data,
            &mut self.cls.weight.data,
            &mut self.cls.bias,
            &mut self.emit.weight.data,
            &mut self.emit.bias,
            &mut self.trans.data,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub classification: f64,
    pub labeling: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            classification: 1.0,
            labeling: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub ce: f64,
    pub nll: f64,
    pub total: f64,
}

/// Output of the first two stages for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub class: usize,
    pub probs: Vec<f64>,
    pub labels: LabelSeq,
    pub spans: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskModel {
    pub vocab: Vocab,
    pub classes: Vec<String>,
    pub max_len: usize,
    pub params: MultiTaskParams,
}

impl MultiTaskModel {
    fn ids(&self, question: &[String]) -> Result<Vec<usize>> {
        if question.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = question.len().min(self.max_len);
        Ok(self.vocab.ids(&question[..n]))
    }

    /// Class probabilities, in inventory order.
    pub fn classify_sketch(&self, question: &[String]) -> Result<Vec<f64>> {
        Ok(softmax(&self.params.class_logits(&self.ids(question)?)?))
    }

    /// Viterbi labels, padded with `p` to `max_len`.
    pub fn label(&self, question: &[String]) -> Result<LabelSeq> {
        let ids = self.ids(question)?;
        let path = viterbi(&self.params.emissions(&ids)?, &self.params.trans);
        let mut labels: Vec<Label> = path.into_iter().map(|i| Label::ALL[i]).collect();
        labels.resize(self.max_len.max(labels.len()), Label::P);
        Ok(LabelSeq(labels))
    }

    pub fn analyze(&self, question: &[String]) -> Result<Analysis> {
        let probs = self.classify_sketch(question)?;
        let class = argmax(&probs);
        let labels = self.label(question)?;
        let spans = extract_entities(question, &labels.0);
        Ok(Analysis {
            class,
            probs,
            labels,
            spans,
        })
    }

    pub fn class_index(&self, sketch: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == sketch)
    }

    /// Inventory class sharing the most tokens with `sketch`; ties go to the
    /// earlier class.
    pub fn nearest_class(&self, sketch: &str) -> usize {
        if let Some(i) = self.class_index(sketch) {
            return i;
        }
        let target: Vec<&str> = sketch.split_whitespace().collect();
        let overlap = |c: &String| -> usize {
            let mut pool: Vec<&str> = c.split_whitespace().collect();
            let mut shared = 0;
            for t in &target {
                if let Some(p) = pool.iter().position(|x| x == t) {
                    pool.swap_remove(p);
                    shared += 1;
                }
            }
            shared
        };
        let mut best = 0;
        let mut best_score = 0;
        for (i, c) in self.classes.iter().enumerate() {
            let s = overlap(c);
            if s > best_score {
                best = i;
                best_score = s;
            }
        }
        best
    }

    /// Fraction of samples with both the class and every gold span right.
    pub fn joint_accuracy(&self, corpus: &Corpus) -> f64 {
        if corpus.is_empty() {
            return 0.0;
        }
        let correct = corpus
            .samples
            .iter()
            .filter(|s| match self.analyze(&s.tokens()) {
                Ok(a) => self.class_index(&s.sketch_class) == Some(a.class) && a.spans == s.gold_spans(),
                Err(_) => false,
            })
            .count();
        correct as f64 / corpus.len() as f64
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub window: usize,
    pub max_len: usize,
    pub loss_weights: LossWeights,
    /// Probability of replacing a training token with the unknown token.
    pub unk_dropout: f64,
    pub seed: u64,
}

impl Default for MultiTaskConfig {
    fn default() -> Self {
        MultiTaskConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-2,
            hidden: 64,
            window: 2,
            max_len: 64,
            loss_weights: LossWeights::default(),
            unk_dropout: 0.1,
            seed: 13,
        }
    }
}

struct Example {
    ids: Vec<usize>,
    class: usize,
    gold: Vec<usize>,
}

fn prepare(sample: &Sample, vocab: &Vocab, classes: &[String], max_len: usize) -> Option<Example> {
    let tokens = sample.tokens();
    if tokens.is_empty() {
        return None;
    }
    let n = tokens.len().min(max_len);
    let class = classes.iter().position(|c| *c == sample.sketch_class)?;
    let labels = LabelSeq::from_spans(n, &sample.gold_spans(), n);
    Some(Example {
        ids: vocab.ids(&tokens[..n]),
        class,
        gold: labels.indices(),
    })
}

/// Trains both heads jointly and returns the snapshot with the best dev
/// joint accuracy (the last epoch when `dev` is empty).
pub fn train_multitask(train: &Corpus, dev: &Corpus, cfg: &MultiTaskConfig) -> Result<MultiTaskModel> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || cfg.hidden == 0 || cfg.max_len == 0 {
        return Err(Error::Config(
            "epochs, batch size, hidden size and max length must be positive".into(),
        ));
    }
    let classes = train.sketch_classes();
    let all_tokens: Vec<Vec<String>> = train.samples.iter().map(|s| s.tokens()).collect();
    let vocab = Vocab::build(all_tokens.iter().flatten().map(String::as_str), 1);
    let examples: Vec<Example> = train
        .samples
        .iter()
        .filter_map(|s| prepare(s, &vocab, &classes, cfg.max_len))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = MultiTaskParams::new(vocab.len(), classes.len(), cfg.hidden, cfg.window, &mut rng);
    let mut grad = params.zeros_like();
    let mut model = MultiTaskModel {
        vocab,
        classes,
        max_len: cfg.max_len,
        params,
    };
    let mut opt = OptState::new(cfg.learning_rate, cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut best: Option<(f64, MultiTaskParams)> = None;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.zero();
            for &i in batch {
                let ex = &examples[i];
                let ids: Vec<usize> = ex
                    .ids
                    .iter()
                    .map(|&id| if rng.gen::<f64>() < cfg.unk_dropout { UNK } else { id })
                    .collect();
                model
                    .params
                    .joint_loss(&ids, ex.class, &ex.gold, cfg.loss_weights, Some(&mut grad))?;
            }
            grad.scale(1.0 / batch.len() as f64);
            opt.step(&mut model.params, &grad)?;
        }
        if !dev.is_empty() {
            let acc = model.joint_accuracy(dev);
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, model.params.clone()));
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(model)
}
