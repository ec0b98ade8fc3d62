//! HTTP clients for hosted backends.
//!
//! Wire contracts are deliberately plain JSON so any vendor can be
//! adapted with a thin proxy:
//!
//! * generation: `POST {prompt, temperature, top_p, seed,
//!   max_output_tokens}` -> `{text}`
//! * search: `GET ?query=..&k=..` or `POST {query, k}` ->
//!   `[{title, text, url}]`
//! * extractive QA: `POST {question, passages: [{id, title, text, url}]}`
//!   -> `{answers: [{text, confidence, source_id}]}`
//! * entailment: `POST {premise, hypothesis}` -> `{score}`
//!
//! Credentials come from a named environment variable and travel as a
//! bearer token. Transport failures are retried with exponential
//! backoff; 4xx responses are not retried.

use std::thread;
use std::time::{Duration, Instant};

use reqwest::blocking::{Client, RequestBuilder};
use serde::Deserialize;
use serde_json::json;
use std::sync::Mutex;

use super::{
    check_prompt, AnswerExtractor, BackendError, EntailmentScorer, SamplingParams, ScoredAnswer,
    SearchEngine, Snippet, TextGenerator, DEFAULT_MAX_PROMPT_CHARS,
};

/// Retry on transport errors and 5xx: 3 attempts, exponential backoff
/// starting at 500 ms.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        self.base_backoff * 2u32.saturating_pow(attempt)
    }
}

/// Token-bucket rate limiter shared by one backend's calls.
pub struct TokenBucket {
    state: Mutex<BucketState>,
    capacity: f64,
    refill_per_sec: f64,
}

struct BucketState {
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    pub fn new(capacity: u32, refill_per_sec: f64) -> Self {
        TokenBucket {
            state: Mutex::new(BucketState {
                tokens: capacity as f64,
                last: Instant::now(),
            }),
            capacity: capacity as f64,
            refill_per_sec,
        }
    }

    /// Blocks until a token is available, then takes it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("bucket lock");
                let now = Instant::now();
                let elapsed = now.duration_since(state.last).as_secs_f64();
                state.tokens = (state.tokens + elapsed * self.refill_per_sec).min(self.capacity);
                state.last = now;
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.tokens) / self.refill_per_sec)
            };
            thread::sleep(wait);
        }
    }
}

/// Connection settings shared by all HTTP backends.
#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub url: String,
    /// Name of the environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// Sustained requests per second; burst capacity equals the ceiling.
    pub rate_limit_per_sec: Option<f64>,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            api_key_env: None,
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            rate_limit_per_sec: None,
        }
    }

    fn bearer_token(&self) -> Option<String> {
        self.api_key_env
            .as_ref()
            .and_then(|name| std::env::var(name).ok())
            .filter(|v| !v.is_empty())
    }

    fn bucket(&self) -> Option<TokenBucket> {
        self.rate_limit_per_sec
            .map(|rate| TokenBucket::new(rate.ceil().max(1.0) as u32, rate))
    }
}

struct Transport {
    client: Client,
    config: EndpointConfig,
    bucket: Option<TokenBucket>,
}

impl Transport {
    fn new(config: EndpointConfig) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let bucket = config.bucket();
        Ok(Transport {
            client,
            config,
            bucket,
        })
    }

    fn authorize(&self, builder: RequestBuilder) -> RequestBuilder {
        match self.config.bearer_token() {
            Some(token) => builder.bearer_auth(token),
            None => builder,
        }
    }

    /// Sends the request, retrying transport errors and 5xx responses.
    /// Client errors (4xx) fail immediately.
    fn send<T: for<'de> Deserialize<'de>>(
        &self,
        build: impl Fn(&Client) -> RequestBuilder,
    ) -> Result<T, BackendError> {
        let mut last_err = String::new();
        for attempt in 0..self.config.retry.attempts {
            if attempt > 0 {
                thread::sleep(self.config.retry.backoff(attempt - 1));
            }
            if let Some(bucket) = &self.bucket {
                bucket.acquire();
            }
            let request = self.authorize(build(&self.client));
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response
                            .json::<T>()
                            .map_err(|e| BackendError::Unavailable(format!("bad response body: {e}")));
                    }
                    let body = response.text().unwrap_or_default();
                    let msg = format!("{} from {}: {body}", status, self.config.url);
                    if status.is_client_error() {
                        return Err(BackendError::Unavailable(msg));
                    }
                    last_err = msg;
                }
                Err(err) => last_err = err.to_string(),
            }
        }
        Err(BackendError::Unavailable(format!(
            "{} after {} attempts: {last_err}",
            self.config.url, self.config.retry.attempts
        )))
    }
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Client for a hosted completion endpoint.
pub struct HttpGenerator {
    transport: Transport,
    max_prompt_chars: usize,
}

impl HttpGenerator {
    pub fn new(config: EndpointConfig) -> Result<Self, BackendError> {
        Ok(HttpGenerator {
            transport: Transport::new(config)?,
            max_prompt_chars: DEFAULT_MAX_PROMPT_CHARS,
        })
    }

    pub fn with_max_prompt_chars(mut self, limit: usize) -> Self {
        self.max_prompt_chars = limit;
        self
    }
}

impl TextGenerator for HttpGenerator {
    fn generate(&self, prompt: &str, params: &SamplingParams) -> Result<String, BackendError> {
        check_prompt(prompt, self.max_prompt_chars)?;
        params.validate()?;
        let body = json!({
            "prompt": prompt,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "seed": params.seed,
            "max_output_tokens": params.max_output_tokens,
        });
        let url = self.transport.config.url.clone();
        let response: GenerateResponse = self
            .transport
            .send(move |client| client.post(&url).json(&body))?;
        if response.text.is_empty() {
            return Err(BackendError::EmptyResponse);
        }
        Ok(response.text)
    }
}

#[derive(Deserialize)]
struct SearchHit {
    #[serde(default)]
    title: String,
    text: String,
    #[serde(default)]
    url: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    Get,
    Post,
}

/// Client for a search endpoint returning `[{title, text, url}]`.
pub struct HttpSearch {
    transport: Transport,
    method: SearchMethod,
}

impl HttpSearch {
    pub fn new(config: EndpointConfig, method: SearchMethod) -> Result<Self, BackendError> {
        Ok(HttpSearch {
            transport: Transport::new(config)?,
            method,
        })
    }
}

impl SearchEngine for HttpSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<Snippet>, BackendError> {
        if query.is_empty() || k == 0 {
            return Err(BackendError::InvalidParams("query non-empty, k >= 1".into()));
        }
        let url = self.transport.config.url.clone();
        let method = self.method;
        let query_owned = query.to_string();
        let hits: Vec<SearchHit> = self.transport.send(move |client| match method {
            SearchMethod::Get => client
                .get(&url)
                .query(&[("query", query_owned.as_str()), ("k", &k.to_string())]),
            SearchMethod::Post => client
                .post(&url)
                .json(&json!({ "query": query_owned, "k": k })),
        })?;
        Ok(hits
            .into_iter()
            .filter(|hit| !hit.text.is_empty())
            .take(k)
            .enumerate()
            .map(|(i, hit)| Snippet {
                id: format!("web-{}-{}", i + 1, digest_short(&hit.url, &hit.text)),
                title: hit.title,
                body: hit.text,
                source_url: hit.url,
                rank: i + 1,
                origin_query: query.to_string(),
            })
            .collect())
    }
}

fn digest_short(url: &str, text: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(url.as_bytes());
    hasher.update([0]);
    hasher.update(text.as_bytes());
    hex::encode(&hasher.finalize()[..6])
}

#[derive(Deserialize)]
struct QaResponse {
    answers: Vec<QaAnswer>,
}

#[derive(Deserialize)]
struct QaAnswer {
    text: String,
    confidence: f64,
    source_id: String,
}

/// Client for a span-selection QA endpoint.
pub struct HttpQa {
    transport: Transport,
}

impl HttpQa {
    pub fn new(config: EndpointConfig) -> Result<Self, BackendError> {
        Ok(HttpQa {
            transport: Transport::new(config)?,
        })
    }
}

impl AnswerExtractor for HttpQa {
    fn answer(
        &self,
        question: &str,
        passages: &[Snippet],
    ) -> Result<Vec<ScoredAnswer>, BackendError> {
        if question.is_empty() {
            return Err(BackendError::InvalidParams("question must be non-empty".into()));
        }
        if passages.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({
            "question": question,
            "passages": passages.iter().map(|p| json!({
                "id": p.id,
                "title": p.title,
                "text": p.body,
                "url": p.source_url,
            })).collect::<Vec<_>>(),
        });
        let url = self.transport.config.url.clone();
        let response: QaResponse = self
            .transport
            .send(move |client| client.post(&url).json(&body))?;
        let mut answers: Vec<ScoredAnswer> = response
            .answers
            .into_iter()
            .map(|a| ScoredAnswer {
                text: a.text,
                confidence: a.confidence.clamp(0.0, 1.0),
                source_snippet_id: a.source_id,
            })
            .collect();
        answers.sort_by(|a, b| {
            b.confidence
                .partial_cmp(&a.confidence)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.source_snippet_id.cmp(&b.source_snippet_id))
        });
        Ok(answers)
    }
}

#[derive(Deserialize)]
struct EntailResponse {
    score: f64,
}

/// Client for an NLI scoring endpoint.
pub struct HttpEntail {
    transport: Transport,
}

impl HttpEntail {
    pub fn new(config: EndpointConfig) -> Result<Self, BackendError> {
        Ok(HttpEntail {
            transport: Transport::new(config)?,
        })
    }
}

impl EntailmentScorer for HttpEntail {
    fn entail(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        if premise.is_empty() || hypothesis.is_empty() {
            return Err(BackendError::InvalidParams(
                "premise and hypothesis must be non-empty".into(),
            ));
        }
        let body = json!({ "premise": premise, "hypothesis": hypothesis });
        let url = self.transport.config.url.clone();
        let response: EntailResponse = self
            .transport
            .send(move |client| client.post(&url).json(&body))?;
        Ok(response.score.clamp(0.0, 1.0))
    }
}
