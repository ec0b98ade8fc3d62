//! Local document collections: entity list ingestion and a deterministic
//! tf-idf search engine that stands in for a web search API.

pub mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, SearchEngine, Snippet};
use crate::pipeline::{EntityKind, EntityQuery};
use crate::textproc::tokenize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid params: {0}")]
    InvalidParams(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One indexed document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
    pub url: String,
}

/// Immutable inverted index over a document collection. Concurrent
/// reads are safe; rebuilding from the same documents yields identical
/// postings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentIndex {
    docs: Vec<Document>,
    /// token -> (doc position, term frequency), positions ascending.
    postings: BTreeMap<String, Vec<(usize, usize)>>,
    /// Words (not tokens) kept when truncating a body into a snippet.
    snippet_words: usize,
}

pub const DEFAULT_SNIPPET_WORDS: usize = 80;

impl DocumentIndex {
    pub fn build(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = std::collections::HashSet::new();
        for doc in &docs {
            if !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::InvalidParams(format!(
                    "duplicate document id `{}`",
                    doc.id
                )));
            }
        }
        let mut postings: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
        for (pos, doc) in docs.iter().enumerate() {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for token in tokenize(&format!("{} {}", doc.title, doc.body)).into_tokens() {
                *counts.entry(token).or_insert(0) += 1;
            }
            for (token, count) in counts {
                postings.entry(token).or_default().push((pos, count));
            }
        }
        Ok(DocumentIndex {
            docs,
            postings,
            snippet_words: DEFAULT_SNIPPET_WORDS,
        })
    }

    pub fn with_snippet_words(mut self, snippet_words: usize) -> Self {
        self.snippet_words = snippet_words.max(1);
        self
    }

    /// Loads every `.txt` file of a directory as one document: first
    /// line title, optional second line URL (must start with http),
    /// remainder body.
    pub fn from_dir(dir: &Path) -> Result<Self, CorpusError> {
        if !dir.is_dir() {
            return Err(CorpusError::FileNotFound(dir.display().to_string()));
        }
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        let mut docs = Vec::new();
        for path in paths {
            let text = fs::read_to_string(&path)?;
            let mut lines = text.lines();
            let title = lines.next().unwrap_or("").trim().to_string();
            if title.is_empty() {
                return Err(CorpusError::Parse {
                    path: path.display().to_string(),
                    line: 1,
                    message: "first line (title) is empty".into(),
                });
            }
            let mut rest: Vec<&str> = lines.collect();
            let url = match rest.first() {
                Some(line) if line.trim().starts_with("http") => {
                    let url = rest.remove(0).trim().to_string();
                    url
                }
                _ => String::new(),
            };
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| format!("doc{}", docs.len()));
            docs.push(Document {
                id,
                title,
                body: rest.join("\n").trim().to_string(),
                url,
            });
        }
        Self::build(docs)
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Ranks documents by the sum over unique query tokens of
    /// `tf(token, doc) * idf(token)`, with `tf` the raw in-document
    /// count and `idf(t) = ln(1 + N / df(t))`. Ties break by document id
    /// ascending; only positive scores are returned.
    pub fn search(&self, query: &str, k: usize) -> Vec<Snippet> {
        if k == 0 {
            return Vec::new();
        }
        let mut query_tokens = tokenize(query).into_tokens();
        query_tokens.sort();
        query_tokens.dedup();

        let n_docs = self.docs.len() as f64;
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for token in &query_tokens {
            let Some(postings) = self.postings.get(token) else {
                continue;
            };
            let idf = (1.0 + n_docs / postings.len() as f64).ln();
            for &(pos, tf) in postings {
                *scores.entry(pos).or_insert(0.0) += tf as f64 * idf;
            }
        }

        let mut ranked: Vec<(usize, f64)> = scores.into_iter().filter(|&(_, s)| s > 0.0).collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.docs[a.0].id.cmp(&self.docs[b.0].id))
        });
        ranked
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (pos, _))| {
                let doc = &self.docs[pos];
                let mut body = truncate_words(&doc.body, self.snippet_words);
                if body.is_empty() {
                    // title-only document; snippets carry a non-empty body
                    body = doc.title.clone();
                }
                Snippet {
                    id: doc.id.clone(),
                    title: doc.title.clone(),
                    body,
                    source_url: doc.url.clone(),
                    rank: i + 1,
                    origin_query: query.to_string(),
                }
            })
            .collect()
    }
}

fn truncate_words(text: &str, max_words: usize) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= max_words {
        words.join(" ")
    } else {
        words[..max_words].join(" ")
    }
}

/// [`SearchEngine`] over a shared [`DocumentIndex`].
#[derive(Clone)]
pub struct LocalSearch {
    index: Arc<DocumentIndex>,
}

impl LocalSearch {
    pub fn new(index: Arc<DocumentIndex>) -> Self {
        LocalSearch { index }
    }
}

impl SearchEngine for LocalSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<Snippet>, BackendError> {
        if query.is_empty() || k == 0 {
            return Err(BackendError::InvalidParams("query non-empty, k >= 1".into()));
        }
        Ok(self.index.search(query, k))
    }
}

/// Loads an entity or event list: one entry per line, optional
/// parenthesized disambiguator, `#` comments and blank lines skipped.
pub fn load_entity_list(path: &Path, kind: EntityKind) -> Result<Vec<EntityQuery>, CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::FileNotFound(path.display().to_string()));
    }
    let text = fs::read_to_string(path)?;
    let mut entities = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        entities.push(parse_entity_line(line, kind).map_err(|message| CorpusError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message,
        })?);
    }
    Ok(entities)
}

fn parse_entity_line(line: &str, kind: EntityKind) -> Result<EntityQuery, String> {
    if let Some(open) = line.rfind('(') {
        if line.ends_with(')') {
            let name = line[..open].trim();
            let disambiguator = line[open + 1..line.len() - 1].trim();
            if name.is_empty() {
                return Err("entry has a disambiguator but no name".into());
            }
            let mut entity = EntityQuery::new(name, kind);
            if !disambiguator.is_empty() {
                entity = entity.with_disambiguator(disambiguator);
            }
            return Ok(entity);
        }
    }
    Ok(EntityQuery::new(line, kind))
}
