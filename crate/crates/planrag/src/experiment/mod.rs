//! Config-driven experiment runner: loads entities and backends, runs
//! strategies x entities x seeds on a bounded worker pool, writes every
//! trial record to disk, and emits comparison and ablation tables.
//!
//! Output layout under the configured directory:
//!
//! ```text
//! records/<strategy>/<entity>__s<seed>.json   one file per trial
//! rows.jsonl                                  per-record metric rows
//! report.csv / report.md                      strategy comparison table
//! uniqueness.csv                              n-gram uniqueness table
//! errors.log                                  skipped trials, one line each
//! ablations/...                               paired ablation tables
//! ```
//!
//! With offline backends and a fixed config, every emitted file is
//! byte-identical across runs and across concurrency limits: trials are
//! collected in plan order and aggregation is single-threaded.

pub mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::cache::ResponseCache;
use crate::backends::http::{
    EndpointConfig, HttpEntail, HttpGenerator, HttpQa, HttpSearch, SearchMethod,
};
use crate::backends::{BackendError, Backends, CallCounts, CallCountsSnapshot};
use crate::corpus::synthetic::{build_synthetic_world, SyntheticWorld};
use crate::corpus::{load_entity_list, CorpusError};
use crate::metrics::{
    aggregate, rescore_row, score_run, AttributionConfig, MetricReport, MetricsError, RecordRow,
};
use crate::pipeline::prompts::{PromptError, PromptTemplates};
use crate::pipeline::{EntityKind, EntityQuery, Pipeline, PipelineConfig, RunRecord, StrategyVariant};
use crate::textproc::SentenceSplitter;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("every trial of strategy `{0}` failed; see errors.log")]
    AllTrialsFailed(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn default_concurrency() -> usize {
    4
}
fn default_base_seed() -> u64 {
    42
}
fn default_nli_threshold() -> f64 {
    0.5
}
fn default_dataset_kind() -> EntityKind {
    EntityKind::EntityBio
}

/// Synthetic-world backend parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticParams {
    #[serde(default = "default_world_entities")]
    pub n_entities: usize,
    #[serde(default = "default_world_facts")]
    pub facts_per_entity: usize,
    #[serde(default = "default_world_coverage")]
    pub generic_coverage: usize,
    /// Defaults to the experiment's base seed.
    #[serde(default)]
    pub world_seed: Option<u64>,
}

fn default_world_entities() -> usize {
    8
}
fn default_world_facts() -> usize {
    6
}
fn default_world_coverage() -> usize {
    2
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            n_entities: default_world_entities(),
            facts_per_entity: default_world_facts(),
            generic_coverage: default_world_coverage(),
            world_seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpEndpointParams {
    pub url: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// `get` or `post`; only meaningful for the search endpoint.
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub rate_limit_per_sec: Option<f64>,
    /// Prompt-length limit in characters; only meaningful for the
    /// generation endpoint.
    #[serde(default)]
    pub max_prompt_chars: Option<usize>,
}

fn default_timeout_ms() -> u64 {
    60_000
}

impl HttpEndpointParams {
    fn endpoint(&self) -> EndpointConfig {
        let mut config = EndpointConfig::new(&self.url);
        config.api_key_env = self.api_key_env.clone();
        config.timeout = Duration::from_millis(self.timeout_ms);
        config.rate_limit_per_sec = self.rate_limit_per_sec;
        config
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Synthetic,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendsSection {
    pub mode: BackendMode,
    #[serde(default)]
    pub synthetic: Option<SyntheticParams>,
    #[serde(default)]
    pub generation: Option<HttpEndpointParams>,
    #[serde(default)]
    pub search: Option<HttpEndpointParams>,
    /// Directory of plain-text documents served by the local tf-idf
    /// engine instead of a search endpoint (http mode only).
    #[serde(default)]
    pub search_dir: Option<PathBuf>,
    #[serde(default)]
    pub qa: Option<HttpEndpointParams>,
    #[serde(default)]
    pub entail: Option<HttpEndpointParams>,
}

/// Everything one experiment needs. Mirrors the TOML config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_dataset_kind")]
    pub dataset_kind: EntityKind,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    /// Abbreviation list for the sentence splitter, one entry per line.
    #[serde(default)]
    pub abbreviations: Option<PathBuf>,
    #[serde(default = "default_nli_threshold")]
    pub nli_threshold: f64,
    /// Labels of the strategy rows to run, in table order.
    pub strategies: Vec<String>,
    pub backends: BackendsSection,
    #[serde(rename = "strategy", default)]
    pub strategy_rows: BTreeMap<String, PipelineConfig>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.strategies.is_empty() {
            return Err(ExperimentError::ConfigInvalid(
                "no strategies selected".into(),
            ));
        }
        for label in &self.strategies {
            if !self.strategy_rows.contains_key(label) {
                return Err(ExperimentError::ConfigInvalid(format!(
                    "unknown strategy label `{label}` (no [strategy.{label}] table)"
                )));
            }
        }
        for (label, row) in &self.strategy_rows {
            row.validate().map_err(|e| {
                ExperimentError::ConfigInvalid(format!("strategy `{label}`: {e}"))
            })?;
        }
        if self.concurrency == 0 {
            return Err(ExperimentError::ConfigInvalid("concurrency must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.nli_threshold) {
            return Err(ExperimentError::ConfigInvalid(format!(
                "nli_threshold {} outside [0, 1]",
                self.nli_threshold
            )));
        }
        match self.backends.mode {
            BackendMode::Synthetic => {}
            BackendMode::Http => {
                let search_missing =
                    self.backends.search.is_none() && self.backends.search_dir.is_none();
                let missing = [
                    ("generation", self.backends.generation.is_none()),
                    ("search", search_missing),
                    ("entail", self.backends.entail.is_none()),
                ]
                .iter()
                .filter(|(_, absent)| *absent)
                .map(|(name, _)| *name)
                .collect::<Vec<_>>();
                if !missing.is_empty() {
                    return Err(ExperimentError::ConfigInvalid(format!(
                        "http mode requires [backends.{}]",
                        missing.join("], [backends.")
                    )));
                }
                let needs_qa = self.strategies.iter().any(|label| {
                    self.strategy_rows
                        .get(label)
                        .is_some_and(|row| row.variant == StrategyVariant::PlanVarB)
                });
                if needs_qa && self.backends.qa.is_none() {
                    return Err(ExperimentError::ConfigInvalid(
                        "plan_var_b strategy requires [backends.qa] in http mode".into(),
                    ));
                }
                if self.dataset.is_none() {
                    return Err(ExperimentError::ConfigInvalid(
                        "http mode requires a dataset path".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Built backends plus the hooks tests and reports need.
pub struct Runtime {
    pub backends: Backends,
    pub counts: Arc<CallCounts>,
    pub world: Option<SyntheticWorld>,
    pub entities: Vec<EntityQuery>,
    pipeline: Pipeline,
}

impl Runtime {
    /// Builds backends (instrumented, then cache-wrapped), the entity
    /// list, and the pipeline from a validated config.
    pub fn build(config: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let counts = Arc::new(CallCounts::default());
        let (backends, world) = match config.backends.mode {
            BackendMode::Synthetic => {
                let params = config.backends.synthetic.clone().unwrap_or_default();
                let world = build_synthetic_world(
                    params.world_seed.unwrap_or(config.base_seed),
                    params.n_entities,
                    params.facts_per_entity,
                    params.generic_coverage,
                )?;
                (world.backends(), Some(world))
            }
            BackendMode::Http => {
                let generation = config.backends.generation.as_ref().expect("validated");
                let entail = config.backends.entail.as_ref().expect("validated");
                let search: Arc<dyn crate::backends::SearchEngine> =
                    match (&config.backends.search_dir, &config.backends.search) {
                        (Some(dir), _) => {
                            let index = crate::corpus::DocumentIndex::from_dir(dir)?;
                            Arc::new(crate::corpus::LocalSearch::new(Arc::new(index)))
                        }
                        (None, Some(params)) => {
                            let method = match params.method.as_deref() {
                                Some("get") => SearchMethod::Get,
                                _ => SearchMethod::Post,
                            };
                            Arc::new(HttpSearch::new(params.endpoint(), method)?)
                        }
                        (None, None) => unreachable!("validated"),
                    };
                let qa: Arc<dyn crate::backends::AnswerExtractor> =
                    match config.backends.qa.as_ref() {
                        Some(params) => Arc::new(HttpQa::new(params.endpoint())?),
                        None => Arc::new(crate::backends::offline::RegistryQa::new()),
                    };
                let mut generator = HttpGenerator::new(generation.endpoint())?;
                if let Some(limit) = generation.max_prompt_chars {
                    generator = generator.with_max_prompt_chars(limit);
                }
                let backends = Backends {
                    generator: Arc::new(generator),
                    search,
                    qa,
                    entail: Arc::new(HttpEntail::new(entail.endpoint())?),
                };
                (backends, None)
            }
        };

        let mut backends = backends.instrumented(counts.clone());
        if let Some(cache_dir) = &config.cache_dir {
            let cache = Arc::new(ResponseCache::open(cache_dir)?);
            backends = backends.cached(cache);
        }

        let entities = match (&world, &config.dataset) {
            (Some(world), dataset) => {
                if dataset.is_some() {
                    log::warn!("synthetic mode ignores the dataset path; using world entities");
                }
                world.entity_queries()
            }
            (None, Some(path)) => load_entity_list(path, config.dataset_kind)?,
            (None, None) => unreachable!("validated"),
        };

        let mut pipeline = Pipeline::new(backends.clone()).with_attribution(
            AttributionConfig::default().with_threshold(config.nli_threshold),
        );
        if let Some(dir) = &config.templates_dir {
            pipeline = pipeline.with_templates(PromptTemplates::from_dir(dir)?);
        }
        if let Some(path) = &config.abbreviations {
            let splitter = SentenceSplitter::from_file(path).map_err(io_err(path))?;
            pipeline = pipeline.with_splitter(splitter);
        }

        Ok(Runtime {
            backends,
            counts,
            world,
            entities,
            pipeline,
        })
    }

    /// Assembles a runtime from explicit parts, for callers that bring
    /// their own backends (tests, embedding in other tools).
    pub fn from_parts(
        backends: Backends,
        entities: Vec<EntityQuery>,
        nli_threshold: f64,
    ) -> Self {
        let counts = Arc::new(CallCounts::default());
        let backends = backends.instrumented(counts.clone());
        let pipeline = Pipeline::new(backends.clone())
            .with_attribution(AttributionConfig::default().with_threshold(nli_threshold));
        Runtime {
            backends,
            counts,
            world: None,
            entities,
            pipeline,
        }
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }
}

/// One planned trial.
#[derive(Debug, Clone)]
struct TrialSpec {
    strategy: String,
    entity: EntityQuery,
    cfg: PipelineConfig,
}

/// A trial that could not produce a record (for example, empty
/// retrieval). Logged and excluded from aggregates.
#[derive(Debug, Clone, Serialize)]
pub struct TrialError {
    pub strategy: String,
    pub entity: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug)]
pub struct StrategyOutcome {
    pub label: String,
    pub records: Vec<RunRecord>,
    pub rows: Vec<RecordRow>,
    pub report: MetricReport,
}

#[derive(Debug)]
pub struct ExperimentSummary {
    pub strategies: Vec<StrategyOutcome>,
    pub errors: Vec<TrialError>,
    pub call_counts: CallCountsSnapshot,
    pub output_dir: PathBuf,
}

impl ExperimentSummary {
    pub fn report_for(&self, label: &str) -> Option<&MetricReport> {
        self.strategies
            .iter()
            .find(|s| s.label == label)
            .map(|s| &s.report)
    }
}

fn plan_trials(config: &ExperimentConfig, entities: &[EntityQuery]) -> Vec<TrialSpec> {
    let mut trials = Vec::new();
    for label in &config.strategies {
        let row = &config.strategy_rows[label];
        for entity in entities {
            for run in 0..row.num_runs {
                let mut cfg = row.clone();
                cfg.sampling.seed = config.base_seed + run as u64;
                trials.push(TrialSpec {
                    strategy: label.clone(),
                    entity: entity.clone(),
                    cfg,
                });
            }
        }
    }
    trials
}

type TrialOutcome = Result<(RunRecord, RecordRow), TrialError>;

/// Runs trials on a worker pool of the configured width. Results come
/// back in plan order regardless of scheduling.
fn execute_trials(
    pipeline: &Pipeline,
    trials: &[TrialSpec],
    concurrency: usize,
) -> Result<Vec<TrialOutcome>, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency)
        .build()
        .map_err(|e| ExperimentError::ConfigInvalid(format!("worker pool: {e}")))?;
    Ok(pool.install(|| {
        trials
            .par_iter()
            .map(|trial| {
                let seed = trial.cfg.sampling.seed;
                match pipeline.run(&trial.entity, &trial.cfg) {
                    Ok(record) => match score_run(&record) {
                        Ok(row) => Ok((record, row)),
                        Err(err) => Err(TrialError {
                            strategy: trial.strategy.clone(),
                            entity: trial.entity.rendered(),
                            seed,
                            error: err.to_string(),
                        }),
                    },
                    Err(err) => Err(TrialError {
                        strategy: trial.strategy.clone(),
                        entity: trial.entity.rendered(),
                        seed,
                        error: err.to_string(),
                    }),
                }
            })
            .collect()
    }))
}

pub fn entity_slug(entity: &EntityQuery) -> String {
    entity
        .rendered()
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '-' })
        .collect::<String>()
        .split('-')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// Strategy labels may contain characters with path meaning (`w/o`);
/// the records directory name keeps only filesystem-safe ones.
fn label_dir(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || matches!(c, ' ' | '_' | '-' | '(' | ')') {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn record_path(records_dir: &Path, label: &str, record: &RunRecord) -> PathBuf {
    records_dir
        .join(label_dir(label))
        .join(format!("{}__s{}.json", entity_slug(&record.entity), record.seed))
}

/// Runs every configured strategy and writes all artifacts. Partial
/// failures are logged per trial; a strategy with no surviving trials is
/// a hard failure.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    config.validate()?;
    let runtime = Runtime::build(config)?;
    run_with_runtime(config, &runtime, &config.output_dir)
}

/// Same as [`run_experiment`] but against an already-built runtime and
/// an explicit output directory (used by the ablation runner and tests).
pub fn run_with_runtime(
    config: &ExperimentConfig,
    runtime: &Runtime,
    out_dir: &Path,
) -> Result<ExperimentSummary, ExperimentError> {
    let trials = plan_trials(config, &runtime.entities);
    let outcomes = execute_trials(runtime.pipeline(), &trials, config.concurrency)?;

    let records_dir = out_dir.join("records");
    let mut errors = Vec::new();
    let mut by_label: BTreeMap<&str, (Vec<RunRecord>, Vec<RecordRow>)> = BTreeMap::new();
    for (trial, outcome) in trials.iter().zip(outcomes) {
        match outcome {
            Ok((record, row)) => {
                let path = record_path(&records_dir, &trial.strategy, &record);
                write_file(&path, &serde_json::to_vec_pretty(&record).expect("record serializes"))?;
                let slot = by_label.entry(trial.strategy.as_str()).or_default();
                slot.0.push(record);
                slot.1.push(row);
            }
            Err(err) => errors.push(err),
        }
    }

    let mut rows_jsonl = String::new();
    let mut table = Vec::new();
    let mut strategies = Vec::new();
    for label in &config.strategies {
        let Some((records, rows)) = by_label.remove(label.as_str()) else {
            return Err(ExperimentError::AllTrialsFailed(label.clone()));
        };
        for row in &rows {
            let mut value = serde_json::to_value(row).expect("row serializes");
            value["strategy"] = serde_json::Value::String(label.clone());
            rows_jsonl.push_str(&serde_json::to_string(&value).expect("row serializes"));
            rows_jsonl.push('\n');
        }
        let report = aggregate(&rows)?;
        write_file(
            &out_dir.join("reports").join(format!("{}.json", label_dir(label))),
            &serde_json::to_vec_pretty(&report).expect("report serializes"),
        )?;
        table.push((label.clone(), report.clone()));
        strategies.push(StrategyOutcome {
            label: label.clone(),
            records,
            rows,
            report,
        });
    }

    write_file(&out_dir.join("rows.jsonl"), rows_jsonl.as_bytes())?;
    write_file(&out_dir.join("report.csv"), report::render_csv(&table).as_bytes())?;
    write_file(
        &out_dir.join("report.md"),
        report::render_markdown("Comparison of generation approaches", &table).as_bytes(),
    )?;
    write_file(
        &out_dir.join("uniqueness.csv"),
        report::render_uniqueness_csv(&table).as_bytes(),
    )?;
    let mut error_log = String::new();
    for err in &errors {
        error_log.push_str(&format!(
            "strategy={} entity={} seed={} error={}\n",
            err.strategy, err.entity, err.seed, err.error
        ));
    }
    write_file(&out_dir.join("errors.log"), error_log.as_bytes())?;

    Ok(ExperimentSummary {
        strategies,
        errors,
        call_counts: runtime.counts.snapshot(),
        output_dir: out_dir.to_path_buf(),
    })
}

/// The four paired ablation tables.
#[derive(Debug)]
pub struct AblationSummary {
    /// Var.B with and without the second search round.
    pub second_search: Vec<(String, MetricReport)>,
    /// Var.B with unanswerable questions marked vs dropped.
    pub unanswerable: Vec<(String, MetricReport)>,
    /// Var.A with and without the outline step, plus one-retrieval.
    pub outline: Vec<(String, MetricReport)>,
    /// One-retrieval rescored against its own vs the expanded pool.
    pub evidence_set: Vec<(String, MetricReport)>,
    pub errors: Vec<TrialError>,
    pub output_dir: PathBuf,
}

fn row_or_default(config: &ExperimentConfig, variant: StrategyVariant) -> PipelineConfig {
    config
        .strategy_rows
        .values()
        .find(|row| row.variant == variant)
        .cloned()
        .unwrap_or_else(|| PipelineConfig::new(variant))
}

/// Runs the ablation grid and writes paired tables under
/// `<out>/ablations/`. The comparison rows reuse the experiment's
/// backends, seeds, and entity list, so ablated and full rows differ
/// only in the flag under study.
pub fn run_ablations(config: &ExperimentConfig) -> Result<AblationSummary, ExperimentError> {
    config.validate()?;
    let runtime = Runtime::build(config)?;
    run_ablations_with_runtime(config, &runtime)
}

pub fn run_ablations_with_runtime(
    config: &ExperimentConfig,
    runtime: &Runtime,
) -> Result<AblationSummary, ExperimentError> {
    let out_dir = config.output_dir.join("ablations");

    let var_b = row_or_default(config, StrategyVariant::PlanVarB);
    let var_a = row_or_default(config, StrategyVariant::PlanVarA);
    let one = row_or_default(config, StrategyVariant::OneRetrieval);

    let mut var_b_no_second = var_b.clone();
    var_b_no_second.enable_second_search = false;
    let mut var_b_drop_unanswerable = var_b.clone();
    var_b_drop_unanswerable.mark_unanswerable = false;
    let mut var_a_no_plan = var_a.clone();
    var_a_no_plan.use_outline = false;

    let mut ablation_config = config.clone();
    ablation_config.strategies = vec![
        "plan-var-b".into(),
        "plan-var-b (w/o 2nd search)".into(),
        "plan-var-b (w/o unanswerable)".into(),
        "plan-var-a".into(),
        "plan-var-a (w/o plan)".into(),
        "one-retrieval".into(),
    ];
    ablation_config.strategy_rows = BTreeMap::from([
        ("plan-var-b".to_string(), var_b),
        ("plan-var-b (w/o 2nd search)".to_string(), var_b_no_second),
        ("plan-var-b (w/o unanswerable)".to_string(), var_b_drop_unanswerable),
        ("plan-var-a".to_string(), var_a),
        ("plan-var-a (w/o plan)".to_string(), var_a_no_plan),
        ("one-retrieval".to_string(), one),
    ]);

    let summary = run_with_runtime(&ablation_config, runtime, &out_dir)?;
    let report_of = |label: &str| -> Result<(String, MetricReport), ExperimentError> {
        summary
            .report_for(label)
            .cloned()
            .map(|r| (label.to_string(), r))
            .ok_or_else(|| ExperimentError::AllTrialsFailed(label.to_string()))
    };

    let second_search = vec![
        report_of("plan-var-b")?,
        report_of("plan-var-b (w/o 2nd search)")?,
    ];
    let unanswerable = vec![
        report_of("plan-var-b")?,
        report_of("plan-var-b (w/o unanswerable)")?,
    ];
    let outline = vec![
        report_of("plan-var-a")?,
        report_of("plan-var-a (w/o plan)")?,
        report_of("one-retrieval")?,
    ];

    // Expanded-evidence rescoring: one-retrieval records against the
    // union of their own pool and the matching Var.B pool.
    let one_records = &summary
        .strategies
        .iter()
        .find(|s| s.label == "one-retrieval")
        .expect("row present")
        .records;
    let var_b_records = &summary
        .strategies
        .iter()
        .find(|s| s.label == "plan-var-b")
        .expect("row present")
        .records;
    let scorer = runtime.backends.entail.clone();
    let attribution = runtime.pipeline().attribution_config().clone();

    let mut expanded_rows = Vec::new();
    let mut var_b_expanded_rows = Vec::new();
    for record in one_records {
        let union = union_passages(record, find_matching(var_b_records, record));
        expanded_rows.push(
            rescore_row(record, &union, scorer.as_ref(), &attribution)
                .map_err(ExperimentError::Backend)?,
        );
    }
    for record in var_b_records {
        let union = union_passages(record, find_matching(one_records, record));
        var_b_expanded_rows.push(
            rescore_row(record, &union, scorer.as_ref(), &attribution)
                .map_err(ExperimentError::Backend)?,
        );
    }
    let evidence_set = vec![
        ("one-retrieval (normal)".to_string(), report_of("one-retrieval")?.1),
        ("one-retrieval (expanded)".to_string(), aggregate(&expanded_rows)?),
        ("plan-var-b (expanded)".to_string(), aggregate(&var_b_expanded_rows)?),
    ];

    for (name, rows) in [
        ("second_search", &second_search),
        ("unanswerable", &unanswerable),
        ("outline", &outline),
        ("evidence_set", &evidence_set),
    ] {
        write_file(
            &out_dir.join(format!("{name}.csv")),
            report::render_csv(rows).as_bytes(),
        )?;
        write_file(
            &out_dir.join(format!("{name}.md")),
            report::render_markdown(&format!("Ablation: {}", name.replace('_', " ")), rows)
                .as_bytes(),
        )?;
    }

    Ok(AblationSummary {
        second_search,
        unanswerable,
        outline,
        evidence_set,
        errors: summary.errors,
        output_dir: out_dir,
    })
}

fn find_matching<'a>(records: &'a [RunRecord], target: &RunRecord) -> Option<&'a RunRecord> {
    records
        .iter()
        .find(|r| r.entity == target.entity && r.seed == target.seed)
}

/// The record's own scoring passages plus everything new the other
/// record contributes, de-duplicated by passage text.
fn union_passages(record: &RunRecord, other: Option<&RunRecord>) -> Vec<String> {
    let mut passages = record.evidence.scoring_passages();
    let mut seen: std::collections::HashSet<String> = passages.iter().cloned().collect();
    if let Some(other) = other {
        for passage in other.evidence.scoring_passages() {
            if seen.insert(passage.clone()) {
                passages.push(passage);
            }
        }
    }
    passages
}

/// Loads every record file under a records directory (as written by
/// [`run_experiment`]), in deterministic path order.
pub fn load_records(dir: &Path) -> Result<Vec<(PathBuf, RunRecord)>, ExperimentError> {
    let mut paths: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut records = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let record: RunRecord = serde_json::from_slice(&bytes).map_err(|e| {
            ExperimentError::ConfigInvalid(format!("{} is not a record: {e}", path.display()))
        })?;
        records.push((path, record));
    }
    Ok(records)
}

/// Rescoring options for the `score` subcommand: a different NLI
/// threshold, a different evidence set (union with another run's
/// records), or both.
#[derive(Debug, Clone)]
pub struct RescoreOptions {
    pub records_dir: PathBuf,
    pub union_with: Option<PathBuf>,
    pub nli_threshold: Option<f64>,
    pub out_dir: PathBuf,
}

/// Rescoring of existing records without rerunning any generation.
pub fn rescore_records(
    config: &ExperimentConfig,
    options: &RescoreOptions,
) -> Result<MetricReport, ExperimentError> {
    config.validate()?;
    let runtime = Runtime::build(config)?;
    let records = load_records(&options.records_dir)?;
    if records.is_empty() {
        return Err(ExperimentError::ConfigInvalid(format!(
            "no records under {}",
            options.records_dir.display()
        )));
    }
    let extra = match &options.union_with {
        Some(dir) => load_records(dir)?,
        None => Vec::new(),
    };
    let extra_records: Vec<RunRecord> = extra.into_iter().map(|(_, r)| r).collect();

    let mut attribution = runtime.pipeline().attribution_config().clone();
    if let Some(threshold) = options.nli_threshold {
        attribution.nli_threshold = threshold;
    }
    let scorer = runtime.backends.entail.clone();

    let mut rows = Vec::new();
    let mut rows_jsonl = String::new();
    for (path, record) in &records {
        let union = union_passages(record, find_matching(&extra_records, record));
        let row = rescore_row(record, &union, scorer.as_ref(), &attribution)
            .map_err(ExperimentError::Backend)?;
        let mut value = serde_json::to_value(&row).expect("row serializes");
        value["record"] = serde_json::Value::String(path.display().to_string());
        rows_jsonl.push_str(&serde_json::to_string(&value).expect("row serializes"));
        rows_jsonl.push('\n');
        rows.push(row);
    }
    let report = aggregate(&rows)?;
    write_file(&options.out_dir.join("rescored_rows.jsonl"), rows_jsonl.as_bytes())?;
    let table = vec![("rescored".to_string(), report.clone())];
    write_file(
        &options.out_dir.join("rescore_report.csv"),
        report::render_csv(&table).as_bytes(),
    )?;
    write_file(
        &options.out_dir.join("rescore_report.md"),
        report::render_markdown("Rescored records", &table).as_bytes(),
    )?;
    Ok(report)
}

/// Options for the offline end-to-end demo.
#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub concurrency: usize,
    pub cache_dir: Option<PathBuf>,
    pub n_entities: usize,
    pub facts_per_entity: usize,
    pub generic_coverage: usize,
    pub num_runs: usize,
}

impl DemoOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        DemoOptions {
            out_dir: out_dir.into(),
            seed: default_base_seed(),
            concurrency: default_concurrency(),
            cache_dir: None,
            n_entities: default_world_entities(),
            facts_per_entity: default_world_facts(),
            generic_coverage: default_world_coverage(),
            num_runs: 3,
        }
    }
}

/// The built-in demo configuration: the default synthetic world and the
/// four headline strategies.
pub fn demo_config(options: &DemoOptions) -> ExperimentConfig {
    let strategy = |variant: StrategyVariant| {
        let mut row = PipelineConfig::new(variant);
        row.num_runs = options.num_runs;
        row
    };
    ExperimentConfig {
        dataset: None,
        dataset_kind: EntityKind::EntityBio,
        output_dir: options.out_dir.clone(),
        cache_dir: options.cache_dir.clone(),
        concurrency: options.concurrency,
        base_seed: options.seed,
        templates_dir: None,
        abbreviations: None,
        nli_threshold: default_nli_threshold(),
        strategies: vec![
            "no-retrieval".into(),
            "one-retrieval".into(),
            "plan-var-a".into(),
            "plan-var-b".into(),
        ],
        backends: BackendsSection {
            mode: BackendMode::Synthetic,
            synthetic: Some(SyntheticParams {
                n_entities: options.n_entities,
                facts_per_entity: options.facts_per_entity,
                generic_coverage: options.generic_coverage,
                world_seed: Some(options.seed),
            }),
            generation: None,
            search: None,
            search_dir: None,
            qa: None,
            entail: None,
        },
        strategy_rows: BTreeMap::from([
            ("no-retrieval".to_string(), strategy(StrategyVariant::NoRetrieval)),
            ("one-retrieval".to_string(), strategy(StrategyVariant::OneRetrieval)),
            ("plan-var-a".to_string(), strategy(StrategyVariant::PlanVarA)),
            ("plan-var-b".to_string(), strategy(StrategyVariant::PlanVarB)),
        ]),
    }
}

/// Runs the full offline demo: comparison table plus ablation grid.
pub fn run_demo(options: &DemoOptions) -> Result<(ExperimentSummary, AblationSummary), ExperimentError> {
    let config = demo_config(options);
    config.validate()?;
    let runtime = Runtime::build(&config)?;
    let summary = run_with_runtime(&config, &runtime, &config.output_dir)?;
    let ablations = run_ablations_with_runtime(&config, &runtime)?;
    Ok((summary, ablations))
}
