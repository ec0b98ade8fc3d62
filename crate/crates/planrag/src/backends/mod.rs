//! The four pluggable model/service interfaces behind the pipeline:
//! text generation, web search, extractive QA, and entailment scoring.
//!
//! Every strategy talks to these traits only, so the same pipeline code
//! runs against HTTP endpoints ([`http`]), deterministic offline
//! implementations ([`offline`] and the synthetic world in
//! [`crate::corpus`]), or cache-wrapped versions of either ([`cache`]).

pub mod cache;
pub mod http;
pub mod offline;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper bound on prompt length, in characters.
pub const DEFAULT_MAX_PROMPT_CHARS: usize = 30_000;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("prompt too long: {len} chars exceeds limit {limit}")]
    PromptTooLong { len: usize, limit: usize },
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("invalid sampling params: {0}")]
    InvalidParams(String),
    #[error("cache io: {0}")]
    CacheIo(#[from] std::io::Error),
    #[error("cache serialization: {0}")]
    CacheEncoding(#[from] serde_json::Error),
}

/// Sampling settings for one generation call.
///
/// Deterministic backends must be pure functions of `(prompt, params)`,
/// so two calls with identical inputs return identical text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
    pub max_output_tokens: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.7,
            top_p: 0.95,
            seed: 0,
            max_output_tokens: 512,
        }
    }
}

impl SamplingParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.temperature < 0.0 {
            return Err(BackendError::InvalidParams(format!(
                "temperature {} < 0",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidParams(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidParams(
                "max_output_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One retrieved evidence passage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub id: String,
    pub title: String,
    pub body: String,
    pub source_url: String,
    /// 1 = best result for `origin_query`.
    pub rank: usize,
    pub origin_query: String,
}

impl Snippet {
    /// The text used as an entailment premise and as ROUGE reference
    /// material: title and body together, matching what the generator
    /// saw in its prompt.
    pub fn passage_text(&self) -> String {
        if self.title.is_empty() {
            self.body.clone()
        } else {
            format!("{}\n{}", self.title, self.body)
        }
    }
}

/// One extractive answer with the QA model's confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAnswer {
    pub text: String,
    /// In [0, 1].
    pub confidence: f64,
    pub source_snippet_id: String,
}

/// Validates the shared generation preconditions. Every generator
/// implementation calls this before doing any work.
pub fn check_prompt(prompt: &str, limit: usize) -> Result<(), BackendError> {
    if prompt.is_empty() {
        return Err(BackendError::EmptyPrompt);
    }
    let len = prompt.chars().count();
    if len > limit {
        return Err(BackendError::PromptTooLong { len, limit });
    }
    Ok(())
}

pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &str, params: &SamplingParams) -> Result<String, BackendError>;
}

pub trait SearchEngine: Send + Sync {
    /// Returns at most `k` snippets with contiguous ranks starting at 1
    /// and `origin_query` set to `query`. Fewer than `k` hits is legal;
    /// no hits is an empty list, not an error.
    fn search(&self, query: &str, k: usize) -> Result<Vec<Snippet>, BackendError>;
}

pub trait AnswerExtractor: Send + Sync {
    /// Extracts answers for `question` from `passages`, sorted by
    /// confidence descending. Every `source_snippet_id` refers to one of
    /// the given passages. Empty when no span is found.
    fn answer(
        &self,
        question: &str,
        passages: &[Snippet],
    ) -> Result<Vec<ScoredAnswer>, BackendError>;
}

pub trait EntailmentScorer: Send + Sync {
    /// Scores in [0, 1] how strongly `premise` supports `hypothesis`.
    fn entail(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError>;
}

/// The full backend bundle a pipeline runs against.
#[derive(Clone)]
pub struct Backends {
    pub generator: Arc<dyn TextGenerator>,
    pub search: Arc<dyn SearchEngine>,
    pub qa: Arc<dyn AnswerExtractor>,
    pub entail: Arc<dyn EntailmentScorer>,
}

/// Shared call counters, incremented by [`Backends::instrumented`].
#[derive(Debug, Default)]
pub struct CallCounts {
    pub generate: AtomicU64,
    pub search: AtomicU64,
    pub qa: AtomicU64,
    pub entail: AtomicU64,
}

/// A point-in-time copy of [`CallCounts`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCountsSnapshot {
    pub generate: u64,
    pub search: u64,
    pub qa: u64,
    pub entail: u64,
}

impl CallCounts {
    pub fn snapshot(&self) -> CallCountsSnapshot {
        CallCountsSnapshot {
            generate: self.generate.load(Ordering::Relaxed),
            search: self.search.load(Ordering::Relaxed),
            qa: self.qa.load(Ordering::Relaxed),
            entail: self.entail.load(Ordering::Relaxed),
        }
    }
}

impl CallCountsSnapshot {
    pub fn total(&self) -> u64 {
        self.generate + self.search + self.qa + self.entail
    }
}

struct CountingGenerator(Arc<dyn TextGenerator>, Arc<CallCounts>);
struct CountingSearch(Arc<dyn SearchEngine>, Arc<CallCounts>);
struct CountingQa(Arc<dyn AnswerExtractor>, Arc<CallCounts>);
struct CountingEntail(Arc<dyn EntailmentScorer>, Arc<CallCounts>);

impl TextGenerator for CountingGenerator {
    fn generate(&self, prompt: &str, params: &SamplingParams) -> Result<String, BackendError> {
        self.1.generate.fetch_add(1, Ordering::Relaxed);
        self.0.generate(prompt, params)
    }
}

impl SearchEngine for CountingSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<Snippet>, BackendError> {
        self.1.search.fetch_add(1, Ordering::Relaxed);
        self.0.search(query, k)
    }
}

impl AnswerExtractor for CountingQa {
    fn answer(
        &self,
        question: &str,
        passages: &[Snippet],
    ) -> Result<Vec<ScoredAnswer>, BackendError> {
        self.1.qa.fetch_add(1, Ordering::Relaxed);
        self.0.answer(question, passages)
    }
}

impl EntailmentScorer for CountingEntail {
    fn entail(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        self.1.entail.fetch_add(1, Ordering::Relaxed);
        self.0.entail(premise, hypothesis)
    }
}

impl Backends {
    /// Wraps every backend so each call increments `counts`. Placed
    /// *under* a cache wrapper, the counters record only the calls the
    /// cache could not serve.
    pub fn instrumented(&self, counts: Arc<CallCounts>) -> Backends {
        Backends {
            generator: Arc::new(CountingGenerator(self.generator.clone(), counts.clone())),
            search: Arc::new(CountingSearch(self.search.clone(), counts.clone())),
            qa: Arc::new(CountingQa(self.qa.clone(), counts.clone())),
            entail: Arc::new(CountingEntail(self.entail.clone(), counts)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_params_validation() {
        assert!(SamplingParams::default().validate().is_ok());
        let bad = SamplingParams {
            top_p: 0.0,
            ..SamplingParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplingParams {
            temperature: -0.1,
            ..SamplingParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_prompt_rejected() {
        assert!(matches!(
            check_prompt("", DEFAULT_MAX_PROMPT_CHARS),
            Err(BackendError::EmptyPrompt)
        ));
    }

    #[test]
    fn long_prompt_rejected() {
        let err = check_prompt("abcdef", 3).unwrap_err();
        match err {
            BackendError::PromptTooLong { len, limit } => {
                assert_eq!((len, limit), (6, 3));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
