//! Parsers for model-written plans: paragraph outlines and search
//! question lists. Model output is messy, so both parsers tolerate list
//! markers, stray numbering, and bullet continuations.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::textproc;

use super::{Outline, OutlineParagraph, Question};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no paragraph headers found in outline text")]
    NoParagraphs,
}

fn header_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(?:[-*•]\s*|\(?\d+[.)]\s*)?paragraph\s+(\d+)\s*:\s*(.*)$")
            .expect("static pattern compiles")
    })
}

/// Extracts a paragraph outline from raw model output.
///
/// A line matching `Paragraph <n>:` (case-insensitive, optional list
/// marker) opens a paragraph; every following line up to the next header
/// is folded into that paragraph's instructions. Paragraphs are
/// renumbered 1..n in order of appearance, whatever the model wrote.
pub fn parse_outline(raw: &str) -> Result<Outline, ParseError> {
    let mut paragraphs: Vec<Vec<String>> = Vec::new();
    for line in raw.lines() {
        if let Some(captures) = header_regex().captures(line) {
            let first = captures[2].trim().to_string();
            let mut lines = Vec::new();
            if !first.is_empty() {
                lines.push(first);
            }
            paragraphs.push(lines);
        } else if let Some(current) = paragraphs.last_mut() {
            let line = line.trim();
            if !line.is_empty() {
                current.push(line.to_string());
            }
        }
    }

    let paragraphs: Vec<OutlineParagraph> = paragraphs
        .into_iter()
        .filter(|lines| !lines.is_empty())
        .enumerate()
        .map(|(i, lines)| OutlineParagraph {
            index: i + 1,
            instructions: lines.join("\n"),
        })
        .collect();

    if paragraphs.is_empty() {
        return Err(ParseError::NoParagraphs);
    }
    Ok(Outline { paragraphs })
}

/// Fallback used when no header matched: the whole text becomes a single
/// paragraph of instructions.
pub fn outline_fallback(raw: &str) -> Outline {
    let text = raw.trim();
    Outline {
        paragraphs: vec![OutlineParagraph {
            index: 1,
            instructions: if text.is_empty() {
                "Write one paragraph.".to_string()
            } else {
                text.to_string()
            },
        }],
    }
}

fn list_marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*•]+\s*|\(?\d+[.)]\s*)*").expect("static pattern compiles"))
}

/// Splits raw model output into questions, one per line. List markers
/// and numbering are stripped, blank lines and fragments shorter than
/// three tokens are dropped, and a terminal `?` is appended when the
/// model forgot it.
pub fn parse_questions(raw: &str, paragraph_index: usize) -> Vec<Question> {
    raw.lines()
        .filter_map(|line| {
            let stripped = list_marker_regex().replace(line, "");
            let stripped = stripped.trim();
            if stripped.is_empty() || textproc::tokenize(stripped).len() < 3 {
                return None;
            }
            let text = if stripped.ends_with('?') {
                stripped.to_string()
            } else {
                format!("{stripped}?")
            };
            Some(Question {
                paragraph_index,
                text,
            })
        })
        .collect()
}
