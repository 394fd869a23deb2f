//! Corpus records, loaders, the synthetic generator and split management.

mod jsonl;
mod mspars;
mod split;
mod synth;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lf::{
    derive_lf_pattern, derive_question_pattern, derive_template, extract_sketch, parse_logical_form, tokenize_question,
    LfPattern, LfTemplate, LogicalForm, ParamAnnotation, QuestionOrder, QuestionPattern, Sketch,
};

pub use jsonl::{load_jsonl, read_jsonl, save_jsonl, write_jsonl, Record};
pub use mspars::{load_mspars_text, read_mspars_text};
pub use split::split;
pub use synth::{generate_synthetic, GenConfig, Shape};

/// One annotated question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub question: String,
    pub logical_form: String,
    pub params: Vec<ParamAnnotation>,
    pub question_type: String,
    /// Sketch string of the logical form; assigned at construction.
    pub sketch_class: String,
}

impl Sample {
    /// Builds a sample, checking spans against the question and deriving its
    /// sketch class.
    pub fn new(
        question: impl Into<String>,
        logical_form: impl Into<String>,
        params: Vec<ParamAnnotation>,
        question_type: impl Into<String>,
    ) -> Result<Self> {
        let question = question.into();
        let logical_form = logical_form.into();
        let tokens = tokenize_question(&question)?;
        for p in &params {
            p.span.check(tokens.len())?;
        }
        let lf = parse_logical_form(&logical_form)?;
        let sketch = extract_sketch(&lf, &params)?;
        Ok(Sample {
            question,
            logical_form,
            params,
            question_type: question_type.into(),
            sketch_class: sketch.class_key(),
        })
    }

    pub fn tokens(&self) -> Vec<String> {
        tokenize_question(&self.question)
            .map(|t| t.into_inner())
            .unwrap_or_default()
    }

    pub fn form(&self) -> LogicalForm {
        parse_logical_form(&self.logical_form).expect("validated at construction")
    }

    pub fn sketch(&self) -> Sketch {
        extract_sketch(&self.form(), &self.params).expect("validated at construction")
    }

    pub fn order(&self) -> QuestionOrder {
        QuestionOrder::from_params(&self.params)
    }

    pub fn question_pattern(&self) -> Result<QuestionPattern> {
        derive_question_pattern(&self.tokens(), &self.params)
    }

    pub fn lf_pattern(&self) -> Result<LfPattern> {
        derive_lf_pattern(&self.form(), &self.params, &self.order())
    }

    pub fn template(&self) -> Result<LfTemplate> {
        derive_template(&self.form(), &self.params, &self.order())
    }

    /// Gold parameter spans sorted by position.
    pub fn gold_spans(&self) -> Vec<crate::lf::Span> {
        let mut spans: Vec<_> = self.params.iter().map(|p| p.span).collect();
        spans.sort();
        spans.dedup();
        spans
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitTag {
    Train,
    Dev,
    Test,
    Hard,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Dev => "dev",
            SplitTag::Test => "test",
            SplitTag::Hard => "hard",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "dev" => Ok(SplitTag::Dev),
            "test" => Ok(SplitTag::Test),
            "hard" => Ok(SplitTag::Hard),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub samples: Vec<Sample>,
    pub split: SplitTag,
}

impl Corpus {
    pub fn new(samples: Vec<Sample>, split: SplitTag) -> Self {
        Corpus { samples, split }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sorted, deduplicated sketch classes present in the corpus.
    pub fn sketch_classes(&self) -> Vec<String> {
        let mut classes: Vec<String> = self.samples.iter().map(|s| s.sketch_class.clone()).collect();
        classes.sort();
        classes.dedup();
        classes
    }

    /// Classes of `self` missing from `reference` (reported, not enforced).
    pub fn classes_missing_from(&self, reference: &Corpus) -> Vec<String> {
        let known = reference.sketch_classes();
        self.sketch_classes()
            .into_iter()
            .filter(|c| known.binary_search(c).is_err())
            .collect()
    }
}
