//! Reader for the tagged-text layout of the official shared-task files:
//!
//! ```text
//! <question id=1>    what is birth date for chris pine
//! <logical form id=1>    ( lambda ?x ( mso:people.person.date_of_birth chris_pine ?x ) )
//! <parameters id=1>    chris_pine (entity) [5,6]
//! <question type id=1>    single-relation
//! ==================================================
//! ```
//!
//! Tags and content are tab-separated. Blocks are separated by blank lines or lines of `=`. Several parameters
//! on one line are separated by `|||`.

use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::{Corpus, Sample, SplitTag};
use crate::error::{Error, Result};
use crate::lf::{ParamAnnotation, ParamKind, Span};

#[derive(Default)]
struct Block {
    question: Option<String>,
    logical_form: Option<String>,
    parameters: Option<String>,
    question_type: Option<String>,
    lines: usize,
}

fn split_tag(line: &str) -> Option<(String, &str)> {
    let rest = line.strip_prefix('<')?;
    let close = rest.find('>')?;
    let tag = &rest[..close];
    let tag = tag.split(" id=").next().unwrap_or(tag).trim().to_lowercase();
    Some((tag, rest[close + 1..].trim()))
}

fn parse_param(text: &str) -> Option<ParamAnnotation> {
    // "surface (kind) [start,end]"
    let open_kind = text.rfind('(')?;
    let close_kind = open_kind + text[open_kind..].find(')')?;
    let open_span = text.rfind('[')?;
    let close_span = open_span + text[open_span..].find(']')?;
    if !(open_kind < close_kind && close_kind < open_span) {
        return None;
    }
    let surface = text[..open_kind].trim();
    let kind = ParamKind::parse(text[open_kind + 1..close_kind].trim())?;
    let (a, b) = text[open_span + 1..close_span].split_once(',')?;
    let start = a.trim().parse().ok()?;
    let end = b.trim().parse().ok()?;
    if surface.is_empty() {
        return None;
    }
    Some(ParamAnnotation {
        surface: surface.to_string(),
        kind,
        span: Span(start, end),
    })
}

fn finish(block: Block, index: usize) -> Result<Sample> {
    let malformed = || Error::MalformedBlock(index);
    let question = block.question.ok_or_else(malformed)?;
    let logical_form = block.logical_form.ok_or_else(malformed)?;
    let parameters = block.parameters.ok_or_else(malformed)?;
    let question_type = block.question_type.ok_or_else(malformed)?;
    let params = parameters
        .split("|||")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| parse_param(p).ok_or_else(malformed))
        .collect::<Result<Vec<_>>>()?;
    Sample::new(question, logical_form, params, question_type).map_err(|_| malformed())
}

pub fn read_mspars_text(reader: impl Read, split: SplitTag) -> Result<Corpus> {
    let mut samples = Vec::new();
    let mut block = Block::default();
    let mut index = 0;
    for line in BufReader::new(reader).lines() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.chars().all(|c| c == '=') {
            if block.lines > 0 {
                samples.push(finish(std::mem::take(&mut block), index)?);
                index += 1;
            }
            continue;
        }
        let (tag, content) = split_tag(trimmed).ok_or(Error::MalformedBlock(index))?;
        let slot = match tag.as_str() {
            "question" => &mut block.question,
            "logical form" => &mut block.logical_form,
            "parameters" => &mut block.parameters,
            "question type" => &mut block.question_type,
            _ => return Err(Error::MalformedBlock(index)),
        };
        if slot.is_some() {
            return Err(Error::MalformedBlock(index));
        }
        *slot = Some(content.to_string());
        block.lines += 1;
    }
    if block.lines > 0 {
        samples.push(finish(block, index)?);
    }
    Ok(Corpus::new(samples, split))
}

pub fn load_mspars_text(path: impl AsRef<Path>, split: SplitTag) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_mspars_text(file, split)
}
