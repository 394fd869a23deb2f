use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, Sample, SplitTag};
use crate::error::{Error, Result};
use crate::lf::ParamAnnotation;

/// On-disk JSONL record; field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub question: String,
    pub logical_form: String,
    #[serde(default)]
    pub parameters: Vec<ParamAnnotation>,
    #[serde(default)]
    pub question_type: String,
}

impl From<&Sample> for Record {
    fn from(s: &Sample) -> Self {
        Record {
            question: s.question.clone(),
            logical_form: s.logical_form.clone(),
            parameters: s.params.clone(),
            question_type: s.question_type.clone(),
        }
    }
}

impl Record {
    pub fn into_sample(self) -> Result<Sample> {
        Sample::new(self.question, self.logical_form, self.parameters, self.question_type)
    }
}

pub fn read_jsonl(reader: impl Read, split: SplitTag) -> Result<Corpus> {
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::ParseError {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::ParseError {
            line: lineno,
            message: e.to_string(),
        })?;
        let sample = record.into_sample().map_err(|e| match e {
            e @ Error::SpanOutOfRange { .. } => e,
            other => Error::ParseError {
                line: lineno,
                message: other.to_string(),
            },
        })?;
        samples.push(sample);
    }
    Ok(Corpus::new(samples, split))
}

pub fn load_jsonl(path: impl AsRef<Path>, split: SplitTag) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(file, split)
}

pub fn write_jsonl(corpus: &Corpus, mut out: impl Write) -> Result<()> {
    for s in &corpus.samples {
        serde_json::to_writer(&mut out, &Record::from(s))?;
        out.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_jsonl(corpus, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, GenConfig};
    use crate::lf::{ParamKind, Span};

    const TABLE5: &str = r#"{"question":"what is birth date for chris pine","logical_form":"( lambda ?x ( mso:people.person.date_of_birth chris_pine ?x ) )","parameters":[{"surface":"chris_pine","kind":"entity","span":[5,6]}],"question_type":"single-relation"}"#;

    #[test]
    fn table5_line() {
        let c = read_jsonl(TABLE5.as_bytes(), SplitTag::Train).unwrap();
        assert_eq!(c.len(), 1);
        let s = &c.samples[0];
        assert_eq!(s.params.len(), 1);
        assert_eq!(s.params[0].kind, ParamKind::Entity);
        assert_eq!(s.params[0].span, Span(5, 6));

        let mut out = Vec::new();
        write_jsonl(&c, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{TABLE5}\n"));
    }

    #[test]
    fn empty_file() {
        let c = read_jsonl("".as_bytes(), SplitTag::Dev).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.split, SplitTag::Dev);
    }

    #[test]
    fn span_out_of_range() {
        let line = TABLE5.replace("[5,6]", "[9,9]");
        assert!(matches!(
            read_jsonl(line.as_bytes(), SplitTag::Train),
            Err(Error::SpanOutOfRange {
                start: 9,
                end: 9,
                len: 7
            })
        ));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = format!("{TABLE5}\n\n{{not json\n");
        assert!(matches!(
            read_jsonl(text.as_bytes(), SplitTag::Train),
            Err(Error::ParseError { line: 3, .. })
        ));
        let bad_lf = TABLE5.replace("?x ) )\"", "?x ) ) )\"");
        let text = format!("{TABLE5}\n{bad_lf}\n");
        assert!(matches!(
            read_jsonl(text.as_bytes(), SplitTag::Train),
            Err(Error::ParseError { line: 2, .. })
        ));
    }

    #[test]
    fn generated_corpus_round_trips_bit_exact() {
        let cfg = GenConfig {
            per_class: 20,
            ..GenConfig::default()
        };
        let corpus = generate_synthetic(&cfg);
        let mut first = Vec::new();
        write_jsonl(&corpus, &mut first).unwrap();
        let back = read_jsonl(first.as_slice(), corpus.split).unwrap();
        assert_eq!(back, corpus);
        let mut second = Vec::new();
        write_jsonl(&back, &mut second).unwrap();
        assert_eq!(first, second);
    }
}
