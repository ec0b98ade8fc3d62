//! Disk-backed response cache, keyed by a digest of the canonical
//! request serialization.
//!
//! One file per entry under the cache directory, named by the hex
//! digest. Each entry stores the canonical request, the response, and a
//! timestamp. Enabling the cache never changes pipeline output, only
//! which calls reach the live backend.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{
    AnswerExtractor, BackendError, EntailmentScorer, SamplingParams, ScoredAnswer, SearchEngine,
    Snippet, TextGenerator,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Generate,
    Search,
    Qa,
    Entail,
}

impl BackendKind {
    fn as_str(self) -> &'static str {
        match self {
            BackendKind::Generate => "generate",
            BackendKind::Search => "search",
            BackendKind::Qa => "qa",
            BackendKind::Entail => "entail",
        }
    }
}

/// Identifies one logical backend request.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub backend_kind: BackendKind,
    /// Hex SHA-256 of the canonical request serialization.
    pub request_digest: String,
}

/// Collapses whitespace runs to single spaces and trims, so prompts that
/// differ only in formatting share a cache entry.
fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Serializes a request value with sorted field names and hashes it.
/// `serde_json`'s map type keeps keys ordered, so two logically identical
/// requests built in any field order produce the same digest.
pub fn canonical_digest(kind: BackendKind, request: &Value) -> CacheKey {
    let canonical = json!({
        "kind": kind.as_str(),
        "request": request,
    });
    let serialized = serde_json::to_string(&canonical).expect("json value serializes");
    let mut hasher = Sha256::new();
    hasher.update(serialized.as_bytes());
    CacheKey {
        backend_kind: kind,
        request_digest: hex::encode(hasher.finalize()),
    }
}

pub fn generate_key(prompt: &str, params: &SamplingParams) -> CacheKey {
    canonical_digest(
        BackendKind::Generate,
        &json!({
            "max_output_tokens": params.max_output_tokens,
            "prompt": normalize_ws(prompt),
            "seed": params.seed,
            "temperature": params.temperature,
            "top_p": params.top_p,
        }),
    )
}

pub fn search_key(query: &str, k: usize) -> CacheKey {
    canonical_digest(BackendKind::Search, &json!({ "k": k, "query": query }))
}

pub fn qa_key(question: &str, passages: &[Snippet]) -> CacheKey {
    let passages: Vec<Value> = passages
        .iter()
        .map(|s| {
            json!({
                "body": s.body,
                "id": s.id,
                "title": s.title,
            })
        })
        .collect();
    canonical_digest(
        BackendKind::Qa,
        &json!({ "passages": passages, "question": question }),
    )
}

pub fn entail_key(premise: &str, hypothesis: &str) -> CacheKey {
    canonical_digest(
        BackendKind::Entail,
        &json!({ "hypothesis": hypothesis, "premise": premise }),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    request: Value,
    response: Value,
    timestamp: u64,
}

/// One-file-per-entry disk cache. Writes go through a temp file plus an
/// atomic rename, so concurrent writers of the same key cannot leave a
/// torn entry behind.
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache { dir })
    }

    fn entry_path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.request_digest))
    }

    pub fn get(&self, key: &CacheKey) -> Option<Value> {
        let path = self.entry_path(key);
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice::<CacheEntry>(&bytes) {
            Ok(entry) => Some(entry.response),
            Err(err) => {
                log::warn!("discarding unreadable cache entry {}: {err}", path.display());
                None
            }
        }
    }

    pub fn put(&self, key: &CacheKey, request: Value, response: Value) -> Result<(), BackendError> {
        static WRITE_SEQ: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
        let entry = CacheEntry {
            request,
            response,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let path = self.entry_path(key);
        // Per-writer temp file, then an atomic rename: concurrent writers
        // of one key cannot tear each other's entry.
        let seq = WRITE_SEQ.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let tmp = self
            .dir
            .join(format!(".{}.{}.{seq}.tmp", key.request_digest, std::process::id()));
        fs::write(&tmp, serde_json::to_vec_pretty(&entry)?)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|rd| {
                rd.filter_map(|e| e.ok())
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn put_best_effort(cache: &ResponseCache, key: &CacheKey, request: Value, response: Value) {
    if let Err(err) = cache.put(key, request, response) {
        log::warn!("cache write failed for {}: {err}", key.request_digest);
    }
}

struct CachedGenerator {
    inner: Arc<dyn TextGenerator>,
    cache: Arc<ResponseCache>,
}

impl TextGenerator for CachedGenerator {
    fn generate(&self, prompt: &str, params: &SamplingParams) -> Result<String, BackendError> {
        let key = generate_key(prompt, params);
        if let Some(value) = self.cache.get(&key) {
            if let Some(text) = value.get("text").and_then(Value::as_str) {
                return Ok(text.to_string());
            }
        }
        let text = self.inner.generate(prompt, params)?;
        put_best_effort(
            &self.cache,
            &key,
            json!({ "prompt": normalize_ws(prompt), "params": params }),
            json!({ "text": text }),
        );
        Ok(text)
    }
}

struct CachedSearch {
    inner: Arc<dyn SearchEngine>,
    cache: Arc<ResponseCache>,
}

impl SearchEngine for CachedSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<Snippet>, BackendError> {
        let key = search_key(query, k);
        if let Some(value) = self.cache.get(&key) {
            if let Ok(snippets) = serde_json::from_value::<Vec<Snippet>>(value) {
                return Ok(snippets);
            }
        }
        let snippets = self.inner.search(query, k)?;
        put_best_effort(
            &self.cache,
            &key,
            json!({ "query": query, "k": k }),
            serde_json::to_value(&snippets)?,
        );
        Ok(snippets)
    }
}

struct CachedQa {
    inner: Arc<dyn AnswerExtractor>,
    cache: Arc<ResponseCache>,
}

impl AnswerExtractor for CachedQa {
    fn answer(
        &self,
        question: &str,
        passages: &[Snippet],
    ) -> Result<Vec<ScoredAnswer>, BackendError> {
        let key = qa_key(question, passages);
        if let Some(value) = self.cache.get(&key) {
            if let Ok(answers) = serde_json::from_value::<Vec<ScoredAnswer>>(value) {
                return Ok(answers);
            }
        }
        let answers = self.inner.answer(question, passages)?;
        put_best_effort(
            &self.cache,
            &key,
            json!({ "question": question, "n_passages": passages.len() }),
            serde_json::to_value(&answers)?,
        );
        Ok(answers)
    }
}

struct CachedEntail {
    inner: Arc<dyn EntailmentScorer>,
    cache: Arc<ResponseCache>,
}

impl EntailmentScorer for CachedEntail {
    fn entail(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        let key = entail_key(premise, hypothesis);
        if let Some(value) = self.cache.get(&key) {
            if let Some(score) = value.get("score").and_then(Value::as_f64) {
                return Ok(score);
            }
        }
        let score = self.inner.entail(premise, hypothesis)?;
        put_best_effort(
            &self.cache,
            &key,
            json!({ "premise": premise, "hypothesis": hypothesis }),
            json!({ "score": score }),
        );
        Ok(score)
    }
}

impl super::Backends {
    /// Wraps every backend with the disk cache. A hit is served without
    /// touching the inner backend; an IO failure falls through to it.
    pub fn cached(&self, cache: Arc<ResponseCache>) -> super::Backends {
        super::Backends {
            generator: Arc::new(CachedGenerator {
                inner: self.generator.clone(),
                cache: cache.clone(),
            }),
            search: Arc::new(CachedSearch {
                inner: self.search.clone(),
                cache: cache.clone(),
            }),
            qa: Arc::new(CachedQa {
                inner: self.qa.clone(),
                cache: cache.clone(),
            }),
            entail: Arc::new(CachedEntail {
                inner: self.entail.clone(),
                cache,
            }),
        }
    }
}
