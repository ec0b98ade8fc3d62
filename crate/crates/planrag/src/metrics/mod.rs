//! Attribution and aggregate metrics: per-sentence AIS decisions,
//! strict/macro/micro aggregation, ROUGE precision against the evidence,
//! word-count length, and n-gram uniqueness.
//!
//! Everything here is a pure function: the same inputs give bit-identical
//! outputs, so reports are reproducible across runs and concurrency
//! schedules.

pub mod rouge;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, EntailmentScorer};
use crate::pipeline::RunRecord;
use crate::textproc::{ngrams, tokenize, total_grams};

pub use rouge::{lcs_len, rouge_lsum_precision, rouge_n_precision};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

/// How a sentence gets its attribution decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionConfig {
    /// A sentence is attributed when some passage entails it with at
    /// least this score.
    pub nli_threshold: f64,
    /// Long passages are scored in windows of this many words...
    pub window_tokens: usize,
    /// ...with this much overlap between consecutive windows.
    pub window_overlap: usize,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            nli_threshold: 0.5,
            window_tokens: 400,
            window_overlap: 50,
        }
    }
}

impl AttributionConfig {
    pub fn with_threshold(mut self, nli_threshold: f64) -> Self {
        self.nli_threshold = nli_threshold;
        self
    }

    /// Windows over the passage's whitespace-separated words. A passage
    /// that fits in one window is passed through unchanged.
    fn windows(&self, passage: &str) -> Vec<String> {
        let words: Vec<&str> = passage.split_whitespace().collect();
        if words.len() <= self.window_tokens {
            return vec![passage.to_string()];
        }
        let step = self.window_tokens.saturating_sub(self.window_overlap).max(1);
        let mut windows = Vec::new();
        let mut start = 0;
        loop {
            let end = (start + self.window_tokens).min(words.len());
            windows.push(words[start..end].join(" "));
            if end == words.len() {
                break;
            }
            start += step;
        }
        windows
    }
}

/// True iff some evidence passage (some window of it) entails the
/// sentence at or above the threshold. No evidence means not attributed.
pub fn attribute_sentence(
    sentence: &str,
    evidence: &[String],
    scorer: &dyn EntailmentScorer,
    config: &AttributionConfig,
) -> Result<bool, BackendError> {
    for passage in evidence {
        if passage.trim().is_empty() {
            continue;
        }
        for window in config.windows(passage) {
            if scorer.entail(&window, sentence)? >= config.nli_threshold {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// One decision per sentence, in order.
pub fn attribute_sentences(
    sentences: &[String],
    evidence: &[String],
    scorer: &dyn EntailmentScorer,
    config: &AttributionConfig,
) -> Result<Vec<bool>, BackendError> {
    sentences
        .iter()
        .map(|sentence| attribute_sentence(sentence, evidence, scorer, config))
        .collect()
}

/// The three AIS aggregates over a set of outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AisScores {
    /// Fraction of outputs with every sentence attributed.
    pub strict: f64,
    /// Mean over outputs of the within-output attributed fraction.
    pub r#macro: f64,
    /// Attributed sentences over all sentences, across all outputs.
    pub micro: f64,
    pub n_outputs: usize,
    pub n_sentences: usize,
}

/// Computes strict/macro/micro AIS from per-output attribution vectors.
pub fn ais_aggregate(per_output: &[Vec<bool>]) -> Result<AisScores, MetricsError> {
    if per_output.is_empty() {
        return Err(MetricsError::EmptyInput("no outputs"));
    }
    if per_output.iter().any(|v| v.is_empty()) {
        return Err(MetricsError::EmptyInput("output with no sentences"));
    }
    let n = per_output.len();
    let fully_attributed = per_output.iter().filter(|v| v.iter().all(|&b| b)).count();
    let fraction_sum: f64 = per_output
        .iter()
        .map(|v| v.iter().filter(|&&b| b).count() as f64 / v.len() as f64)
        .sum();
    let attributed: usize = per_output
        .iter()
        .map(|v| v.iter().filter(|&&b| b).count())
        .sum();
    let total: usize = per_output.iter().map(|v| v.len()).sum();
    Ok(AisScores {
        strict: fully_attributed as f64 / n as f64,
        r#macro: fraction_sum / n as f64,
        micro: attributed as f64 / total as f64,
        n_outputs: n,
        n_sentences: total,
    })
}

/// N-gram uniqueness of one output: distinct grams over total grams.
/// Outputs shorter than `n` tokens have no grams; the metric is
/// undefined there and reported as 1.0 with the flag set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgramUniqueness {
    pub value: f64,
    pub undefined: bool,
}

pub fn ngram_uniqueness(output: &str, n: usize) -> NgramUniqueness {
    let grams = ngrams(&tokenize(output), n);
    let total = total_grams(&grams);
    if total == 0 {
        return NgramUniqueness {
            value: 1.0,
            undefined: true,
        };
    }
    NgramUniqueness {
        value: grams.len() as f64 / total as f64,
        undefined: false,
    }
}

/// Per-record metric row, the unit the aggregate report is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub entity: String,
    pub seed: u64,
    pub n_sentences: usize,
    pub n_attributed: usize,
    pub all_attributed: bool,
    pub rouge1_p: f64,
    pub rouge2_p: f64,
    pub rouge_lsum_p: f64,
    pub length_tokens: usize,
    pub uniq1: NgramUniqueness,
    pub uniq2: NgramUniqueness,
    pub uniq3: NgramUniqueness,
}

/// Scores one trial. The ROUGE reference is the concatenation of every
/// evidence passage (and kept QA answer) in pool order.
pub fn score_run(record: &RunRecord) -> Result<RecordRow, MetricsError> {
    if record.sentences.is_empty() || record.attribution.len() != record.sentences.len() {
        return Err(MetricsError::EmptyInput(
            "record without aligned sentences and attribution",
        ));
    }
    let reference = record.evidence.scoring_passages().join("\n");
    let n_attributed = record.attribution.iter().filter(|&&b| b).count();
    Ok(RecordRow {
        entity: record.entity.rendered(),
        seed: record.seed,
        n_sentences: record.sentences.len(),
        n_attributed,
        all_attributed: n_attributed == record.sentences.len(),
        rouge1_p: rouge_n_precision(&record.output, &reference, 1),
        rouge2_p: rouge_n_precision(&record.output, &reference, 2),
        rouge_lsum_p: rouge_lsum_precision(&record.output, &reference),
        length_tokens: tokenize(&record.output).len(),
        uniq1: ngram_uniqueness(&record.output, 1),
        uniq2: ngram_uniqueness(&record.output, 2),
        uniq3: ngram_uniqueness(&record.output, 3),
    })
}

/// Recomputes a record's attribution against a caller-supplied evidence
/// pool (for example, the union of two strategies' pools). The record
/// itself is untouched; only the decisions are returned.
pub fn rescore_attribution(
    record: &RunRecord,
    passages: &[String],
    scorer: &dyn EntailmentScorer,
    config: &AttributionConfig,
) -> Result<Vec<bool>, BackendError> {
    attribute_sentences(&record.sentences, passages, scorer, config)
}

/// Full metric row for a record under a different evidence pool: both
/// attribution and the ROUGE reference follow the new pool; length and
/// uniqueness depend only on the output and are unchanged.
pub fn rescore_row(
    record: &RunRecord,
    passages: &[String],
    scorer: &dyn EntailmentScorer,
    config: &AttributionConfig,
) -> Result<RecordRow, BackendError> {
    let attribution = rescore_attribution(record, passages, scorer, config)?;
    let reference = passages.join("\n");
    let n_attributed = attribution.iter().filter(|&&b| b).count();
    Ok(RecordRow {
        entity: record.entity.rendered(),
        seed: record.seed,
        n_sentences: record.sentences.len(),
        n_attributed,
        all_attributed: n_attributed == record.sentences.len(),
        rouge1_p: rouge_n_precision(&record.output, &reference, 1),
        rouge2_p: rouge_n_precision(&record.output, &reference, 2),
        rouge_lsum_p: rouge_lsum_precision(&record.output, &reference),
        length_tokens: tokenize(&record.output).len(),
        uniq1: ngram_uniqueness(&record.output, 1),
        uniq2: ngram_uniqueness(&record.output, 2),
        uniq3: ngram_uniqueness(&record.output, 3),
    })
}

/// Aggregated metrics for one strategy, in table shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ais: AisScores,
    pub rouge1_p: f64,
    pub rouge2_p: f64,
    pub rouge_lsum_p: f64,
    pub mean_length_tokens: f64,
    /// n -> mean uniqueness, for n in {1, 2, 3}.
    pub ngram_uniqueness: BTreeMap<usize, f64>,
}

/// Aggregates rows the way the comparison tables are built: metrics are
/// averaged over seed-runs within each entity first, then across
/// entities. Micro AIS is sentence-weighted within an entity, so it
/// stays distinct from macro when output lengths differ.
pub fn aggregate(rows: &[RecordRow]) -> Result<MetricReport, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyInput("no rows"));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for row in rows {
        if seen.insert(row.entity.as_str()) {
            order.push(row.entity.as_str());
        }
    }

    let n_entities = order.len() as f64;
    let mut strict = 0.0;
    let mut macro_ais = 0.0;
    let mut micro = 0.0;
    let mut rouge1 = 0.0;
    let mut rouge2 = 0.0;
    let mut rouge_lsum = 0.0;
    let mut length = 0.0;
    let mut uniq = [0.0f64; 3];
    let mut n_outputs = 0usize;
    let mut n_sentences = 0usize;

    for entity in &order {
        let group: Vec<&RecordRow> = rows.iter().filter(|r| r.entity == *entity).collect();
        let n = group.len() as f64;
        strict += group.iter().filter(|r| r.all_attributed).count() as f64 / n / n_entities;
        macro_ais += group
            .iter()
            .map(|r| r.n_attributed as f64 / r.n_sentences as f64)
            .sum::<f64>()
            / n
            / n_entities;
        let attributed: usize = group.iter().map(|r| r.n_attributed).sum();
        let sentences: usize = group.iter().map(|r| r.n_sentences).sum();
        micro += attributed as f64 / sentences as f64 / n_entities;
        rouge1 += group.iter().map(|r| r.rouge1_p).sum::<f64>() / n / n_entities;
        rouge2 += group.iter().map(|r| r.rouge2_p).sum::<f64>() / n / n_entities;
        rouge_lsum += group.iter().map(|r| r.rouge_lsum_p).sum::<f64>() / n / n_entities;
        length += group.iter().map(|r| r.length_tokens as f64).sum::<f64>() / n / n_entities;
        uniq[0] += group.iter().map(|r| r.uniq1.value).sum::<f64>() / n / n_entities;
        uniq[1] += group.iter().map(|r| r.uniq2.value).sum::<f64>() / n / n_entities;
        uniq[2] += group.iter().map(|r| r.uniq3.value).sum::<f64>() / n / n_entities;
        n_outputs += group.len();
        n_sentences += sentences;
    }

    Ok(MetricReport {
        ais: AisScores {
            strict,
            r#macro: macro_ais,
            micro,
            n_outputs,
            n_sentences,
        },
        rouge1_p: rouge1,
        rouge2_p: rouge2,
        rouge_lsum_p: rouge_lsum,
        mean_length_tokens: length,
        ngram_uniqueness: BTreeMap::from([(1, uniq[0]), (2, uniq[1]), (3, uniq[2])]),
    })
}
