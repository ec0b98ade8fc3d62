//! The generation strategies and their ablations.
//!
//! Four strategies share one backend bundle:
//!
//! * no-retrieval: one direct prompt, no evidence in context;
//! * one-retrieval: a single name-query search placed in context;
//! * plan-based Var.A: outline -> per-paragraph search questions ->
//!   second search round, with all snippets placed in context;
//! * plan-based Var.B: as Var.A, plus extractive QA over the pool, with
//!   the question-answer plan in context instead of raw snippets.
//!
//! Every run produces a [`RunRecord`] holding all prompts issued, the
//! evidence pool, the output, and per-sentence attribution decisions.

pub mod parse;
pub mod prompts;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    BackendError, Backends, SamplingParams, ScoredAnswer, Snippet,
};
use crate::metrics::{attribute_sentences, AttributionConfig};
use crate::textproc::SentenceSplitter;

use parse::{outline_fallback, parse_outline, parse_questions};
use prompts::{render_qa_pairs, Bindings, PromptError, PromptTemplates, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyVariant {
    NoRetrieval,
    OneRetrieval,
    PlanVarA,
    PlanVarB,
}

impl StrategyVariant {
    pub fn name(self) -> &'static str {
        match self {
            StrategyVariant::NoRetrieval => "no_retrieval",
            StrategyVariant::OneRetrieval => "one_retrieval",
            StrategyVariant::PlanVarA => "plan_var_a",
            StrategyVariant::PlanVarB => "plan_var_b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    EntityBio,
    EventSummary,
}

/// The subject of one trial: an entity or event name, optionally
/// disambiguated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityQuery {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disambiguator: Option<String>,
    pub kind: EntityKind,
}

impl EntityQuery {
    pub fn new(name: impl Into<String>, kind: EntityKind) -> Self {
        EntityQuery {
            name: name.into(),
            disambiguator: None,
            kind,
        }
    }

    pub fn with_disambiguator(mut self, disambiguator: impl Into<String>) -> Self {
        self.disambiguator = Some(disambiguator.into());
        self
    }

    /// `name` or `name (disambiguator)`, as it appears in prompts and
    /// search queries.
    pub fn rendered(&self) -> String {
        match &self.disambiguator {
            Some(d) => format!("{} ({})", self.name, d),
            None => self.name.clone(),
        }
    }
}

fn default_k_initial() -> usize {
    5
}
fn default_multiplier() -> usize {
    1
}
fn default_k_per_query() -> usize {
    3
}
fn default_qa_threshold() -> f64 {
    0.5
}
fn default_max_answers() -> usize {
    3
}
fn default_true() -> bool {
    true
}
fn default_num_runs() -> usize {
    3
}

/// Knobs for one strategy row. The ablation flags are only consulted by
/// the plan-based variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub variant: StrategyVariant,
    #[serde(default = "default_k_initial")]
    pub k_initial: usize,
    /// 2 for the doubled-snippets baseline.
    #[serde(default = "default_multiplier")]
    pub k_initial_multiplier: usize,
    #[serde(default = "default_k_per_query")]
    pub k_per_query: usize,
    #[serde(default = "default_qa_threshold")]
    pub qa_confidence_threshold: f64,
    #[serde(default = "default_max_answers")]
    pub max_answers_per_question: usize,
    #[serde(default = "default_true")]
    pub enable_second_search: bool,
    #[serde(default = "default_true")]
    pub mark_unanswerable: bool,
    #[serde(default = "default_true")]
    pub use_outline: bool,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default = "default_num_runs")]
    pub num_runs: usize,
}

impl PipelineConfig {
    pub fn new(variant: StrategyVariant) -> Self {
        PipelineConfig {
            variant,
            k_initial: default_k_initial(),
            k_initial_multiplier: default_multiplier(),
            k_per_query: default_k_per_query(),
            qa_confidence_threshold: default_qa_threshold(),
            max_answers_per_question: default_max_answers(),
            enable_second_search: true,
            mark_unanswerable: true,
            use_outline: true,
            sampling: SamplingParams::default(),
            num_runs: default_num_runs(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k_initial == 0
            || self.k_initial_multiplier == 0
            || self.k_per_query == 0
            || self.max_answers_per_question == 0
            || self.num_runs == 0
        {
            return Err(PipelineError::Config("all counts must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.qa_confidence_threshold) {
            return Err(PipelineError::Config(format!(
                "qa_confidence_threshold {} outside [0, 1]",
                self.qa_confidence_threshold
            )));
        }
        self.sampling
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// Ablation switches copied into every record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub enable_second_search: bool,
    pub mark_unanswerable: bool,
    pub use_outline: bool,
}

impl From<&PipelineConfig> for AblationFlags {
    fn from(cfg: &PipelineConfig) -> Self {
        AblationFlags {
            enable_second_search: cfg.enable_second_search,
            mark_unanswerable: cfg.mark_unanswerable,
            use_outline: cfg.use_outline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlineParagraph {
    /// 1-based, contiguous after parsing.
    pub index: usize,
    pub instructions: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outline {
    pub paragraphs: Vec<OutlineParagraph>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub paragraph_index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: Question,
    /// Kept answers: confidence at or above the threshold, at most
    /// `max_answers_per_question`, sorted by confidence descending.
    pub answers: Vec<ScoredAnswer>,
    pub unanswerable: bool,
}

/// All evidence gathered during one trial.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidencePool {
    pub initial_snippets: Vec<Snippet>,
    pub query_snippets: Vec<Snippet>,
    pub qa_items: Vec<QaItem>,
}

impl EvidencePool {
    pub fn all_snippets(&self) -> impl Iterator<Item = &Snippet> {
        self.initial_snippets.iter().chain(self.query_snippets.iter())
    }

    /// The passages attribution and ROUGE score against: every snippet
    /// in pool order, then every kept QA answer.
    pub fn scoring_passages(&self) -> Vec<String> {
        let mut passages: Vec<String> = self.all_snippets().map(|s| s.passage_text()).collect();
        for item in &self.qa_items {
            for answer in &item.answers {
                passages.push(answer.text.clone());
            }
        }
        passages
    }
}

/// One prompt sent to the generator, with its pipeline stage label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedPrompt {
    pub stage: String,
    pub text: String,
}

/// One complete trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub entity: EntityQuery,
    pub variant: StrategyVariant,
    pub flags: AblationFlags,
    pub seed: u64,
    pub prompts_issued: Vec<IssuedPrompt>,
    pub evidence: EvidencePool,
    pub output: String,
    pub sentences: Vec<String>,
    /// Aligned 1:1 with `sentences`.
    pub attribution: Vec<bool>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no evidence retrieved for query `{query}`")]
    EmptyEvidence { query: String },
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("variant mismatch: config says {expected:?}, runner is {actual:?}")]
    VariantMismatch {
        expected: StrategyVariant,
        actual: StrategyVariant,
    },
}

/// Paragraph binding used when outline generation is ablated away: the
/// question prompt keeps its shape, with the writing goal in place of a
/// paragraph description.
pub const NO_OUTLINE_PARAGRAPH_GOAL: &str = "covering the full profile";

/// Strategy runner: one backend bundle plus the pieces every strategy
/// shares (templates, sentence splitter, attribution settings).
pub struct Pipeline {
    backends: Backends,
    templates: PromptTemplates,
    splitter: SentenceSplitter,
    attribution: AttributionConfig,
}

impl Pipeline {
    pub fn new(backends: Backends) -> Self {
        Pipeline {
            backends,
            templates: PromptTemplates::default(),
            splitter: SentenceSplitter::default(),
            attribution: AttributionConfig::default(),
        }
    }

    pub fn with_templates(mut self, templates: PromptTemplates) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_splitter(mut self, splitter: SentenceSplitter) -> Self {
        self.splitter = splitter;
        self
    }

    pub fn with_attribution(mut self, attribution: AttributionConfig) -> Self {
        self.attribution = attribution;
        self
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn attribution_config(&self) -> &AttributionConfig {
        &self.attribution
    }

    /// Runs the strategy selected by `cfg.variant`.
    pub fn run(&self, entity: &EntityQuery, cfg: &PipelineConfig) -> Result<RunRecord, PipelineError> {
        match cfg.variant {
            StrategyVariant::NoRetrieval => self.run_no_retrieval(entity, cfg),
            StrategyVariant::OneRetrieval => self.run_one_retrieval(entity, cfg),
            StrategyVariant::PlanVarA => self.run_plan_var_a(entity, cfg),
            StrategyVariant::PlanVarB => self.run_plan_var_b(entity, cfg),
        }
    }

    /// Direct generation from parametric knowledge. A name-query search
    /// still runs, but only to build the evidence pool the output is
    /// scored against; nothing retrieved enters the prompt.
    pub fn run_no_retrieval(
        &self,
        entity: &EntityQuery,
        cfg: &PipelineConfig,
    ) -> Result<RunRecord, PipelineError> {
        self.check(cfg, StrategyVariant::NoRetrieval)?;
        let prompt = self
            .templates
            .render(TemplateId::Direct, &Bindings::new().entity(&entity.rendered()))?;
        let output = self.backends.generator.generate(&prompt, &cfg.sampling)?;

        let evidence = EvidencePool {
            initial_snippets: self.backends.search.search(&entity.rendered(), cfg.k_initial)?,
            ..EvidencePool::default()
        };
        self.finish(
            entity,
            cfg,
            vec![IssuedPrompt {
                stage: "direct".into(),
                text: prompt,
            }],
            evidence,
            output,
        )
    }

    /// One round of retrieval with the entity name as the query; results
    /// go into the generation prompt as title/text blocks.
    pub fn run_one_retrieval(
        &self,
        entity: &EntityQuery,
        cfg: &PipelineConfig,
    ) -> Result<RunRecord, PipelineError> {
        self.check(cfg, StrategyVariant::OneRetrieval)?;
        let initial = self.initial_search(entity, cfg)?;
        let evidence = EvidencePool {
            initial_snippets: initial,
            ..EvidencePool::default()
        };
        let prompt = self.render_search_gen(entity, &evidence)?;
        let output = self.backends.generator.generate(&prompt, &cfg.sampling)?;
        self.finish(
            entity,
            cfg,
            vec![IssuedPrompt {
                stage: "final".into(),
                text: prompt,
            }],
            evidence,
            output,
        )
    }

    /// Plan-based retrieval, variant A: plan and second search expand the
    /// evidence, the final prompt keeps the one-retrieval shape. The QA
    /// backend is never consulted.
    pub fn run_plan_var_a(
        &self,
        entity: &EntityQuery,
        cfg: &PipelineConfig,
    ) -> Result<RunRecord, PipelineError> {
        self.check(cfg, StrategyVariant::PlanVarA)?;
        let initial = self.initial_search(entity, cfg)?;
        let mut issued = Vec::new();
        let (_outline, questions) = self.build_plan(entity, &initial, cfg, &mut issued)?;
        let query_snippets = self.gather_evidence(&questions, &initial, cfg)?;
        let evidence = EvidencePool {
            initial_snippets: initial,
            query_snippets,
            qa_items: Vec::new(),
        };
        let prompt = self.render_search_gen(entity, &evidence)?;
        let output = self.backends.generator.generate(&prompt, &cfg.sampling)?;
        issued.push(IssuedPrompt {
            stage: "final".into(),
            text: prompt,
        });
        self.finish(entity, cfg, issued, evidence, output)
    }

    /// Plan-based retrieval, variant B: the final prompt is the
    /// question-answer plan itself, with below-threshold answers dropped
    /// and unanswerable questions kept but explicitly marked.
    pub fn run_plan_var_b(
        &self,
        entity: &EntityQuery,
        cfg: &PipelineConfig,
    ) -> Result<RunRecord, PipelineError> {
        self.check(cfg, StrategyVariant::PlanVarB)?;
        let initial = self.initial_search(entity, cfg)?;
        let mut issued = Vec::new();
        let (_outline, questions) = self.build_plan(entity, &initial, cfg, &mut issued)?;
        let query_snippets = self.gather_evidence(&questions, &initial, cfg)?;

        let pool: Vec<Snippet> = initial.iter().chain(query_snippets.iter()).cloned().collect();
        let qa_items = self.answer_questions(&questions, &pool, cfg)?;

        let evidence = EvidencePool {
            initial_snippets: initial,
            query_snippets,
            qa_items,
        };
        let pairs: Vec<(String, Vec<ScoredAnswer>)> = evidence
            .qa_items
            .iter()
            .map(|item| (item.question.text.clone(), item.answers.clone()))
            .collect();
        let prompt = self.templates.render(
            TemplateId::QaGen,
            &Bindings::new()
                .entity(&entity.rendered())
                .qa_pairs(render_qa_pairs(&pairs)),
        )?;
        let output = self.backends.generator.generate(&prompt, &cfg.sampling)?;
        issued.push(IssuedPrompt {
            stage: "final".into(),
            text: prompt,
        });
        self.finish(entity, cfg, issued, evidence, output)
    }

    /// Outline generation followed by per-paragraph question writing.
    /// With `use_outline` off, a single question prompt is issued with
    /// the writing goal in place of a paragraph description and every
    /// question lands in paragraph 1.
    pub fn build_plan(
        &self,
        entity: &EntityQuery,
        initial_snippets: &[Snippet],
        cfg: &PipelineConfig,
        issued: &mut Vec<IssuedPrompt>,
    ) -> Result<(Outline, Vec<Question>), PipelineError> {
        let snippet_refs: Vec<&Snippet> = initial_snippets.iter().collect();

        let outline = if cfg.use_outline {
            let prompt = self.templates.render(
                TemplateId::Outline,
                &Bindings::new().entity(&entity.rendered()).snippets(&snippet_refs),
            )?;
            let raw = self.backends.generator.generate(&prompt, &cfg.sampling)?;
            issued.push(IssuedPrompt {
                stage: "outline".into(),
                text: prompt,
            });
            match parse_outline(&raw) {
                Ok(outline) => outline,
                Err(err) => {
                    log::warn!(
                        "outline parse failed for `{}` ({err}); using single-paragraph fallback",
                        entity.rendered()
                    );
                    outline_fallback(&raw)
                }
            }
        } else {
            Outline {
                paragraphs: vec![OutlineParagraph {
                    index: 1,
                    instructions: NO_OUTLINE_PARAGRAPH_GOAL.to_string(),
                }],
            }
        };

        let mut questions = Vec::new();
        for paragraph in &outline.paragraphs {
            let prompt = self.templates.render(
                TemplateId::Questions,
                &Bindings::new()
                    .entity(&entity.rendered())
                    .snippets(&snippet_refs)
                    .paragraph(&paragraph.instructions),
            )?;
            let raw = self.backends.generator.generate(&prompt, &cfg.sampling)?;
            issued.push(IssuedPrompt {
                stage: "questions".into(),
                text: prompt,
            });
            questions.extend(parse_questions(&raw, paragraph.index));
        }
        Ok((outline, questions))
    }

    /// The second search round: one search per deduplicated question,
    /// results de-duplicated by source URL against everything already in
    /// the pool. With the second search ablated away, no queries are
    /// issued at all.
    pub fn gather_evidence(
        &self,
        questions: &[Question],
        initial_snippets: &[Snippet],
        cfg: &PipelineConfig,
    ) -> Result<Vec<Snippet>, PipelineError> {
        if !cfg.enable_second_search {
            return Ok(Vec::new());
        }
        let mut seen_queries = std::collections::HashSet::new();
        let mut seen_urls: std::collections::HashSet<String> = initial_snippets
            .iter()
            .map(|s| s.source_url.clone())
            .collect();
        // Snippet ids must stay unique across the whole pool, whatever
        // id scheme the search backend uses.
        let mut seen_ids: std::collections::HashSet<String> =
            initial_snippets.iter().map(|s| s.id.clone()).collect();
        let mut gathered = Vec::new();
        let mut attempted = 0usize;
        let mut failed = 0usize;

        for question in questions {
            let normalized = normalize_query(&question.text);
            if !seen_queries.insert(normalized) {
                continue;
            }
            attempted += 1;
            match self.backends.search.search(&question.text, cfg.k_per_query) {
                Ok(snippets) => {
                    for snippet in snippets {
                        if seen_urls.insert(snippet.source_url.clone())
                            && seen_ids.insert(snippet.id.clone())
                        {
                            gathered.push(snippet);
                        }
                    }
                }
                Err(err) => {
                    failed += 1;
                    log::warn!("second-round search failed for `{}`: {err}", question.text);
                }
            }
        }
        if attempted > 0 && failed == attempted {
            return Err(PipelineError::EmptyEvidence {
                query: "all second-round queries failed".into(),
            });
        }
        Ok(gathered)
    }

    /// Runs the QA model per question over the whole pool, keeps answers
    /// clearing the confidence threshold (at most
    /// `max_answers_per_question`), and marks questions with no kept
    /// answer as unanswerable. With `mark_unanswerable` off, those
    /// questions are removed from the plan entirely.
    pub fn answer_questions(
        &self,
        questions: &[Question],
        pool: &[Snippet],
        cfg: &PipelineConfig,
    ) -> Result<Vec<QaItem>, PipelineError> {
        let pool_ids: std::collections::HashSet<&str> = pool.iter().map(|s| s.id.as_str()).collect();
        let mut items = Vec::with_capacity(questions.len());
        for question in questions {
            let mut answers = self.backends.qa.answer(&question.text, pool)?;
            // Normalize whatever the backend returned: sources must be in
            // the pool, order is confidence-descending with id tie-break.
            answers.retain(|a| pool_ids.contains(a.source_snippet_id.as_str()));
            answers.sort_by(|a, b| {
                b.confidence
                    .partial_cmp(&a.confidence)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.source_snippet_id.cmp(&b.source_snippet_id))
            });
            answers.retain(|a| a.confidence >= cfg.qa_confidence_threshold);
            answers.truncate(cfg.max_answers_per_question);
            let unanswerable = answers.is_empty();
            if unanswerable && !cfg.mark_unanswerable {
                continue;
            }
            items.push(QaItem {
                question: question.clone(),
                answers,
                unanswerable,
            });
        }
        Ok(items)
    }

    fn check(&self, cfg: &PipelineConfig, expected: StrategyVariant) -> Result<(), PipelineError> {
        cfg.validate()?;
        if cfg.variant != expected {
            return Err(PipelineError::VariantMismatch {
                expected: cfg.variant,
                actual: expected,
            });
        }
        Ok(())
    }

    fn initial_search(
        &self,
        entity: &EntityQuery,
        cfg: &PipelineConfig,
    ) -> Result<Vec<Snippet>, PipelineError> {
        let query = entity.rendered();
        let k = cfg.k_initial * cfg.k_initial_multiplier;
        let snippets = self.backends.search.search(&query, k)?;
        if snippets.is_empty() {
            return Err(PipelineError::EmptyEvidence { query });
        }
        Ok(snippets)
    }

    fn render_search_gen(
        &self,
        entity: &EntityQuery,
        evidence: &EvidencePool,
    ) -> Result<String, PipelineError> {
        let refs: Vec<&Snippet> = evidence.all_snippets().collect();
        Ok(self.templates.render(
            TemplateId::SearchGen,
            &Bindings::new().entity(&entity.rendered()).snippets(&refs),
        )?)
    }

    fn finish(
        &self,
        entity: &EntityQuery,
        cfg: &PipelineConfig,
        prompts_issued: Vec<IssuedPrompt>,
        evidence: EvidencePool,
        output: String,
    ) -> Result<RunRecord, PipelineError> {
        let sentences = self.splitter.split(&output);
        if sentences.is_empty() {
            return Err(PipelineError::Backend(BackendError::EmptyResponse));
        }
        let passages = evidence.scoring_passages();
        let attribution = attribute_sentences(
            &sentences,
            &passages,
            self.backends.entail.as_ref(),
            &self.attribution,
        )
        .map_err(PipelineError::Backend)?;
        Ok(RunRecord {
            entity: entity.clone(),
            variant: cfg.variant,
            flags: AblationFlags::from(cfg),
            seed: cfg.sampling.seed,
            prompts_issued,
            evidence,
            output,
            sentences,
            attribution,
        })
    }
}

/// Lowercase, trim, collapse internal whitespace. Used to deduplicate
/// generated queries before the second search round.
pub fn normalize_query(query: &str) -> String {
    query
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::offline::StaticSearch;
    use crate::backends::{AnswerExtractor, EntailmentScorer, SearchEngine, TextGenerator};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct EchoGenerator;
    impl TextGenerator for EchoGenerator {
        fn generate(&self, _p: &str, _s: &SamplingParams) -> Result<String, BackendError> {
            Ok("One sentence.".into())
        }
    }

    struct NoSearch;
    impl SearchEngine for NoSearch {
        fn search(&self, _q: &str, _k: usize) -> Result<Vec<Snippet>, BackendError> {
            Ok(Vec::new())
        }
    }

    struct NoQa;
    impl AnswerExtractor for NoQa {
        fn answer(&self, _q: &str, _p: &[Snippet]) -> Result<Vec<ScoredAnswer>, BackendError> {
            Ok(Vec::new())
        }
    }

    struct ZeroEntail;
    impl EntailmentScorer for ZeroEntail {
        fn entail(&self, _p: &str, _h: &str) -> Result<f64, BackendError> {
            Ok(0.0)
        }
    }

    fn snippet(id: &str, url: &str) -> Snippet {
        Snippet {
            id: id.into(),
            title: format!("T{id}"),
            body: format!("body {id}"),
            source_url: url.into(),
            rank: 1,
            origin_query: "q".into(),
        }
    }

    fn stub_backends(search: Arc<dyn SearchEngine>) -> Backends {
        Backends {
            generator: Arc::new(EchoGenerator),
            search,
            qa: Arc::new(NoQa),
            entail: Arc::new(ZeroEntail),
        }
    }

    #[test]
    fn one_retrieval_with_no_hits_is_empty_evidence() {
        let pipeline = Pipeline::new(stub_backends(Arc::new(NoSearch)));
        let entity = EntityQuery::new("Nobody", EntityKind::EntityBio);
        let cfg = PipelineConfig::new(StrategyVariant::OneRetrieval);
        match pipeline.run_one_retrieval(&entity, &cfg) {
            Err(PipelineError::EmptyEvidence { query }) => assert_eq!(query, "Nobody"),
            other => panic!("expected EmptyEvidence, got {other:?}"),
        }
    }

    #[test]
    fn doubled_snippets_render_double_blocks() {
        let results: Vec<Snippet> = (0..10)
            .map(|i| snippet(&format!("d{i}"), &format!("https://example.org/{i}")))
            .collect();
        let pipeline = Pipeline::new(stub_backends(Arc::new(StaticSearch { results })));
        let entity = EntityQuery::new("Somebody", EntityKind::EntityBio);
        let mut cfg = PipelineConfig::new(StrategyVariant::OneRetrieval);
        cfg.k_initial = 5;
        cfg.k_initial_multiplier = 2;
        let record = pipeline.run_one_retrieval(&entity, &cfg).unwrap();
        let final_prompt = &record.prompts_issued[0].text;
        assert_eq!(final_prompt.matches("Snippet Title:").count(), 10);
        assert_eq!(record.evidence.initial_snippets.len(), 10);
    }

    #[test]
    fn query_dedup_counts_searches_once() {
        struct CountingSearch(AtomicUsize);
        impl SearchEngine for CountingSearch {
            fn search(&self, q: &str, _k: usize) -> Result<Vec<Snippet>, BackendError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Ok(vec![snippet("d", &format!("https://example.org/{q}"))])
            }
        }
        let search = Arc::new(CountingSearch(AtomicUsize::new(0)));
        let pipeline = Pipeline::new(stub_backends(search.clone()));
        let cfg = PipelineConfig::new(StrategyVariant::PlanVarB);
        let questions = vec![
            Question { paragraph_index: 1, text: "Where born?".into() },
            Question { paragraph_index: 1, text: "where  born?".into() },
            Question { paragraph_index: 2, text: "Awards?".into() },
        ];
        pipeline.gather_evidence(&questions, &[], &cfg).unwrap();
        assert_eq!(search.0.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn gather_dedups_snippets_by_url() {
        struct SameUrlSearch;
        impl SearchEngine for SameUrlSearch {
            fn search(&self, q: &str, _k: usize) -> Result<Vec<Snippet>, BackendError> {
                Ok(vec![Snippet {
                    id: format!("d-{q}"),
                    title: "T".into(),
                    body: "b".into(),
                    source_url: "https://example.org/same".into(),
                    rank: 1,
                    origin_query: q.into(),
                }])
            }
        }
        let pipeline = Pipeline::new(stub_backends(Arc::new(SameUrlSearch)));
        let cfg = PipelineConfig::new(StrategyVariant::PlanVarB);
        let questions = vec![
            Question { paragraph_index: 1, text: "First question here?".into() },
            Question { paragraph_index: 1, text: "Second question here?".into() },
        ];
        let gathered = pipeline.gather_evidence(&questions, &[], &cfg).unwrap();
        assert_eq!(gathered.len(), 1);
    }

    #[test]
    fn second_search_disabled_gathers_nothing() {
        struct PanicSearch;
        impl SearchEngine for PanicSearch {
            fn search(&self, _q: &str, _k: usize) -> Result<Vec<Snippet>, BackendError> {
                panic!("second search must not run");
            }
        }
        let pipeline = Pipeline::new(stub_backends(Arc::new(PanicSearch)));
        let mut cfg = PipelineConfig::new(StrategyVariant::PlanVarB);
        cfg.enable_second_search = false;
        let questions = vec![Question { paragraph_index: 1, text: "Some question here?".into() }];
        let gathered = pipeline.gather_evidence(&questions, &[], &cfg).unwrap();
        assert!(gathered.is_empty());
    }

    #[test]
    fn answer_thresholding_keeps_top_answers() {
        struct FixedQa;
        impl AnswerExtractor for FixedQa {
            fn answer(&self, _q: &str, _p: &[Snippet]) -> Result<Vec<ScoredAnswer>, BackendError> {
                Ok(vec![
                    ScoredAnswer { text: "a".into(), confidence: 0.9, source_snippet_id: "d1".into() },
                    ScoredAnswer { text: "b".into(), confidence: 0.6, source_snippet_id: "d2".into() },
                    ScoredAnswer { text: "c".into(), confidence: 0.3, source_snippet_id: "d3".into() },
                ])
            }
        }
        let mut backends = stub_backends(Arc::new(NoSearch));
        backends.qa = Arc::new(FixedQa);
        let pipeline = Pipeline::new(backends);
        let cfg = PipelineConfig::new(StrategyVariant::PlanVarB);
        let questions = vec![Question { paragraph_index: 1, text: "What is kept here?".into() }];
        let pool: Vec<Snippet> = ["d1", "d2", "d3"]
            .iter()
            .map(|id| snippet(id, &format!("https://example.org/{id}")))
            .collect();
        let items = pipeline.answer_questions(&questions, &pool, &cfg).unwrap();
        assert_eq!(items.len(), 1);
        assert!(!items[0].unanswerable);
        let kept: Vec<&str> = items[0].answers.iter().map(|a| a.text.as_str()).collect();
        assert_eq!(kept, vec!["a", "b"]);
    }

    #[test]
    fn unanswerable_marking_and_dropping() {
        let pipeline = Pipeline::new(stub_backends(Arc::new(NoSearch)));
        let questions = vec![Question { paragraph_index: 1, text: "Anything at all?".into() }];

        let cfg = PipelineConfig::new(StrategyVariant::PlanVarB);
        let items = pipeline.answer_questions(&questions, &[], &cfg).unwrap();
        assert_eq!(items.len(), 1);
        assert!(items[0].unanswerable);
        assert!(items[0].answers.is_empty());

        let mut cfg = cfg;
        cfg.mark_unanswerable = false;
        let items = pipeline.answer_questions(&questions, &[], &cfg).unwrap();
        assert!(items.is_empty());
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        let pipeline = Pipeline::new(stub_backends(Arc::new(NoSearch)));
        let entity = EntityQuery::new("X", EntityKind::EntityBio);
        let cfg = PipelineConfig::new(StrategyVariant::PlanVarA);
        assert!(matches!(
            pipeline.run_no_retrieval(&entity, &cfg),
            Err(PipelineError::VariantMismatch { .. })
        ));
    }

    #[test]
    fn rendered_name_includes_disambiguator() {
        let entity =
            EntityQuery::new("Gerhard Fischer", EntityKind::EntityBio).with_disambiguator("inventor");
        assert_eq!(entity.rendered(), "Gerhard Fischer (inventor)");
    }
}
