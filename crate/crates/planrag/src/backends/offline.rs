//! Deterministic offline backends.
//!
//! These are pure functions of their inputs, so entire experiment runs
//! are byte-reproducible and safe to execute concurrently. The synthetic
//! world in [`crate::corpus::synthetic`] wires them together with
//! generated fact registries; they are also handy as test stubs.

use std::collections::BTreeMap;

use regex::Regex;

use super::{
    check_prompt, AnswerExtractor, BackendError, EntailmentScorer, SamplingParams, ScoredAnswer,
    SearchEngine, Snippet, TextGenerator, DEFAULT_MAX_PROMPT_CHARS,
};

/// Matches the fact identifier tokens planted in synthetic documents,
/// e.g. `fact-avery-stonebrook-birth`.
pub const FACT_ID_PATTERN: &str = r"fact-[a-z0-9][a-z0-9-]*";

/// Entailment oracle over planted fact identifiers.
///
/// The hypothesis is supported (score 1.0) iff it carries at least one
/// fact identifier and all of its identifiers also occur in the premise.
/// A hypothesis with no identifiers is unsupported by definition: it is
/// how this oracle models a fabricated sentence.
pub struct FactIdEntailment {
    pattern: Regex,
}

impl Default for FactIdEntailment {
    fn default() -> Self {
        FactIdEntailment {
            pattern: Regex::new(FACT_ID_PATTERN).expect("static pattern compiles"),
        }
    }
}

impl FactIdEntailment {
    pub fn fact_ids(&self, text: &str) -> Vec<String> {
        self.pattern
            .find_iter(text)
            .map(|m| m.as_str().to_string())
            .collect()
    }
}

impl EntailmentScorer for FactIdEntailment {
    fn entail(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        if premise.is_empty() || hypothesis.is_empty() {
            return Err(BackendError::InvalidParams(
                "premise and hypothesis must be non-empty".into(),
            ));
        }
        let hypothesis_ids = self.fact_ids(hypothesis);
        if hypothesis_ids.is_empty() {
            return Ok(0.0);
        }
        let premise_ids = self.fact_ids(premise);
        let supported = hypothesis_ids.iter().all(|id| premise_ids.contains(id));
        Ok(if supported { 1.0 } else { 0.0 })
    }
}

/// Exact-match extractive QA over a registered fact table.
///
/// Each question is mapped to its registered fact sentence by scanning
/// the question for a registry key. The answer is the fact sentence,
/// sourced from the first passage that contains it verbatim, with
/// confidence 1.0. Questions without a registered fact, or whose fact
/// appears in no passage, yield no answers.
#[derive(Default)]
pub struct RegistryQa {
    /// key token (e.g. a question keyword) -> fact sentence
    facts: BTreeMap<String, String>,
}

impl RegistryQa {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, key: impl Into<String>, fact_sentence: impl Into<String>) {
        self.facts.insert(key.into(), fact_sentence.into());
    }

    fn lookup(&self, question: &str) -> Option<&str> {
        self.facts
            .iter()
            .find(|(key, _)| question.contains(key.as_str()))
            .map(|(_, fact)| fact.as_str())
    }
}

impl AnswerExtractor for RegistryQa {
    fn answer(
        &self,
        question: &str,
        passages: &[Snippet],
    ) -> Result<Vec<ScoredAnswer>, BackendError> {
        if question.is_empty() {
            return Err(BackendError::InvalidParams("question must be non-empty".into()));
        }
        let Some(fact) = self.lookup(question) else {
            return Ok(Vec::new());
        };
        Ok(passages
            .iter()
            .find(|p| p.body.contains(fact) || p.title.contains(fact))
            .map(|p| {
                vec![ScoredAnswer {
                    text: fact.to_string(),
                    confidence: 1.0,
                    source_snippet_id: p.id.clone(),
                }]
            })
            .unwrap_or_default())
    }
}

/// Generator backed by an exact prompt -> response table. Intended for
/// tests that need full control over one or two generations.
#[derive(Default)]
pub struct FixtureGenerator {
    responses: BTreeMap<String, String>,
    max_prompt_chars: Option<usize>,
}

impl FixtureGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_limit(mut self, max_prompt_chars: usize) -> Self {
        self.max_prompt_chars = Some(max_prompt_chars);
        self
    }

    pub fn register(&mut self, prompt: impl Into<String>, response: impl Into<String>) {
        self.responses.insert(prompt.into(), response.into());
    }
}

impl TextGenerator for FixtureGenerator {
    fn generate(&self, prompt: &str, _params: &SamplingParams) -> Result<String, BackendError> {
        check_prompt(prompt, self.max_prompt_chars.unwrap_or(DEFAULT_MAX_PROMPT_CHARS))?;
        self.responses
            .get(prompt)
            .cloned()
            .ok_or_else(|| BackendError::Unavailable("no fixture response for prompt".into()))
    }
}

/// Search stub returning a fixed result list for any query, re-ranked and
/// re-labelled to honor the search contract.
pub struct StaticSearch {
    pub results: Vec<Snippet>,
}

impl SearchEngine for StaticSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<Snippet>, BackendError> {
        if query.is_empty() || k == 0 {
            return Err(BackendError::InvalidParams("query non-empty, k >= 1".into()));
        }
        Ok(self
            .results
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, s)| Snippet {
                rank: i + 1,
                origin_query: query.to_string(),
                ..s.clone()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snippet(id: &str, body: &str) -> Snippet {
        Snippet {
            id: id.into(),
            title: format!("title {id}"),
            body: body.into(),
            source_url: format!("https://example.org/{id}"),
            rank: 1,
            origin_query: "q".into(),
        }
    }

    #[test]
    fn oracle_supports_planted_fact() {
        let oracle = FactIdEntailment::default();
        let premise = "Profile. The subject was born in 1901 (fact-a-birth).";
        let hypothesis = "The subject was born in 1901 (fact-a-birth).";
        assert_eq!(oracle.entail(premise, hypothesis).unwrap(), 1.0);
    }

    #[test]
    fn oracle_rejects_fabricated_sentence() {
        let oracle = FactIdEntailment::default();
        assert_eq!(
            oracle
                .entail("anything at all", "X is associated with birth detail-7.")
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn oracle_is_reflexive_on_fact_sentences() {
        let oracle = FactIdEntailment::default();
        let x = "The subject studied physics (fact-a-education).";
        assert_eq!(oracle.entail(x, x).unwrap(), 1.0);
    }

    #[test]
    fn oracle_requires_all_ids() {
        let oracle = FactIdEntailment::default();
        let premise = "Has fact-a-birth only.";
        let hypothesis = "Claims fact-a-birth and fact-a-awards.";
        assert_eq!(oracle.entail(premise, hypothesis).unwrap(), 0.0);
    }

    #[test]
    fn registry_qa_finds_fact_in_passage() {
        let mut qa = RegistryQa::new();
        qa.register("kw-a-birth", "The subject was born in 1901 (fact-a-birth).");
        let passages = vec![
            snippet("d1", "Unrelated text."),
            snippet("d2", "Intro. The subject was born in 1901 (fact-a-birth)."),
        ];
        let answers = qa.answer("What supports kw-a-birth?", &passages).unwrap();
        assert_eq!(answers.len(), 1);
        assert_eq!(answers[0].confidence, 1.0);
        assert_eq!(answers[0].source_snippet_id, "d2");
    }

    #[test]
    fn registry_qa_empty_cases() {
        let mut qa = RegistryQa::new();
        qa.register("kw-a-birth", "The subject was born in 1901 (fact-a-birth).");
        assert!(qa.answer("What supports kw-a-birth?", &[]).unwrap().is_empty());
        let passages = vec![snippet("d1", "No facts here.")];
        assert!(qa
            .answer("What supports kw-a-birth?", &passages)
            .unwrap()
            .is_empty());
        assert!(qa
            .answer("What supports kw-unknown?", &passages)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn fixture_generator_is_deterministic() {
        let mut gen = FixtureGenerator::new();
        gen.register("hello", "world");
        let params = SamplingParams::default();
        assert_eq!(gen.generate("hello", &params).unwrap(), "world");
        assert_eq!(gen.generate("hello", &params).unwrap(), "world");
        assert!(gen.generate("", &params).is_err());
    }
}
