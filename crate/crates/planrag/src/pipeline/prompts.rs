//! Prompt templates for the five generation stages.
//!
//! Templates are plain text files with `{entity}`, `{snippets}`,
//! `{paragraph}` and `{qa_pairs}` placeholders. The built-in set is
//! compiled in; a template directory can override any of them (for
//! example to wrap prompts in a chat format). Placeholders are
//! substituted by scanning the template only, so snippet or answer text
//! containing braces is never re-interpreted.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::backends::{ScoredAnswer, Snippet};

/// The exact line that renders an unanswerable question's answer slot.
pub const UNANSWERABLE_TEXT: &str = "Not enough information. Skip this question.";

/// Header line opening the question-answer block of the final
/// plan-based prompt.
pub const QA_PAIRS_HEADER: &str = "Consider the following question-answer pairs:";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("missing binding {{{0}}}")]
    MissingBinding(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{0}` could not be read: {1}")]
    TemplateIo(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateId {
    Direct,
    SearchGen,
    Outline,
    Questions,
    QaGen,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::Direct,
        TemplateId::SearchGen,
        TemplateId::Outline,
        TemplateId::Questions,
        TemplateId::QaGen,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::Direct => "direct.txt",
            TemplateId::SearchGen => "search_gen.txt",
            TemplateId::Outline => "outline.txt",
            TemplateId::Questions => "questions.txt",
            TemplateId::QaGen => "qa_gen.txt",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Direct => "direct",
            TemplateId::SearchGen => "search_gen",
            TemplateId::Outline => "outline",
            TemplateId::Questions => "questions",
            TemplateId::QaGen => "qa_gen",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(TemplateId::Direct),
            "search_gen" => Ok(TemplateId::SearchGen),
            "outline" => Ok(TemplateId::Outline),
            "questions" => Ok(TemplateId::Questions),
            "qa_gen" => Ok(TemplateId::QaGen),
            other => Err(PromptError::UnknownTemplate(other.to_string())),
        }
    }
}

/// Placeholder values for one render call.
#[derive(Debug, Clone, Default)]
pub struct Bindings(BTreeMap<&'static str, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(mut self, rendered_name: &str) -> Self {
        self.0.insert("entity", rendered_name.to_string());
        self
    }

    /// Renders snippets as repeated title/text blocks in the given
    /// order. An empty list leaves the binding unset, which surfaces as
    /// `MissingBinding("snippets")`: retrieval templates require
    /// evidence.
    pub fn snippets(mut self, snippets: &[&Snippet]) -> Self {
        if !snippets.is_empty() {
            self.0.insert("snippets", render_snippet_blocks(snippets));
        }
        self
    }

    pub fn paragraph(mut self, description: &str) -> Self {
        self.0.insert("paragraph", description.to_string());
        self
    }

    pub fn qa_pairs(mut self, rendered: String) -> Self {
        self.0.insert("qa_pairs", rendered);
        self
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }
}

/// `Snippet Title: ...` / `Snippet Text: ...` blocks, one snippet after
/// another, each line newline-terminated.
pub fn render_snippet_blocks(snippets: &[&Snippet]) -> String {
    let mut out = String::new();
    for snippet in snippets {
        out.push_str("Snippet Title: ");
        out.push_str(&snippet.title);
        out.push('\n');
        out.push_str("Snippet Text: ");
        out.push_str(&snippet.body);
        out.push('\n');
    }
    out
}

/// Question-answer block for the final plan-based prompt: answered
/// questions carry their kept answers on the same line; unanswerable
/// questions are followed by the exact skip line.
pub fn render_qa_pairs(items: &[(String, Vec<ScoredAnswer>)]) -> String {
    let mut lines = Vec::with_capacity(items.len());
    for (question, answers) in items {
        if answers.is_empty() {
            lines.push(format!("{question}\n{UNANSWERABLE_TEXT}"));
        } else {
            let answer_texts: Vec<&str> = answers.iter().map(|a| a.text.as_str()).collect();
            lines.push(format!("{question} {}", answer_texts.join(" ")));
        }
    }
    lines.join("\n")
}

/// The five loaded templates.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    direct: String,
    search_gen: String,
    outline: String,
    questions: String,
    qa_gen: String,
}

/// Editors append a final newline to template files; the built-ins carry
/// one too. It is not part of the prompt.
fn strip_final_newline(text: &str) -> String {
    text.strip_suffix('\n')
        .map(|t| t.strip_suffix('\r').unwrap_or(t))
        .unwrap_or(text)
        .to_string()
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            direct: strip_final_newline(include_str!("../../templates/direct.txt")),
            search_gen: strip_final_newline(include_str!("../../templates/search_gen.txt")),
            outline: strip_final_newline(include_str!("../../templates/outline.txt")),
            questions: strip_final_newline(include_str!("../../templates/questions.txt")),
            qa_gen: strip_final_newline(include_str!("../../templates/qa_gen.txt")),
        }
    }
}

impl PromptTemplates {
    /// Loads all five templates from a directory. Missing files fall
    /// back to the built-in template, so an override directory only
    /// needs the templates it changes.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut templates = PromptTemplates::default();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path)
                .map_err(|e| PromptError::TemplateIo(id.name().to_string(), e.to_string()))?;
            *templates.slot_mut(id) = strip_final_newline(&text);
        }
        Ok(templates)
    }

    fn slot(&self, id: TemplateId) -> &str {
        match id {
            TemplateId::Direct => &self.direct,
            TemplateId::SearchGen => &self.search_gen,
            TemplateId::Outline => &self.outline,
            TemplateId::Questions => &self.questions,
            TemplateId::QaGen => &self.qa_gen,
        }
    }

    fn slot_mut(&mut self, id: TemplateId) -> &mut String {
        match id {
            TemplateId::Direct => &mut self.direct,
            TemplateId::SearchGen => &mut self.search_gen,
            TemplateId::Outline => &mut self.outline,
            TemplateId::Questions => &mut self.questions,
            TemplateId::QaGen => &mut self.qa_gen,
        }
    }

    /// Instantiates a template. Every `{placeholder}` in the template
    /// must be bound or rendering fails with `MissingBinding`.
    pub fn render(&self, id: TemplateId, bindings: &Bindings) -> Result<String, PromptError> {
        let template = self.slot(id);
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if after[..close].chars().all(|c| c.is_ascii_lowercase() || c == '_') => {
                    let name = &after[..close];
                    match bindings.get(name) {
                        Some(value) => out.push_str(value),
                        None => return Err(PromptError::MissingBinding(name.to_string())),
                    }
                    rest = &after[close + 1..];
                }
                _ => {
                    // A literal brace, not a placeholder.
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}
