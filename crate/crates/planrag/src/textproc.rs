//! Deterministic text utilities shared by the pipeline and the metrics:
//! word tokenization, rule-based sentence segmentation, and n-gram
//! extraction.
//!
//! All functions here are pure. The metric values downstream depend on
//! these exact rules, so changes here change every reported number.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io;
use std::path::Path;

/// An ordered list of lowercase word tokens.
///
/// Tokens are never empty and never contain whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    /// Joins the tokens back into a single space-separated string.
    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl From<Vec<String>> for TokenSequence {
    fn from(tokens: Vec<String>) -> Self {
        TokenSequence(tokens)
    }
}

/// Lowercases, splits on Unicode whitespace, and strips leading/trailing
/// punctuation from every token. Tokens that become empty are dropped.
pub fn tokenize(text: &str) -> TokenSequence {
    let tokens = text
        .split_whitespace()
        .map(|raw| {
            raw.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect();
    TokenSequence(tokens)
}

/// Counts the number of whitespace-separated words, after punctuation
/// stripping. This is the "length" used throughout the metric reports.
pub fn word_count(text: &str) -> usize {
    tokenize(text).len()
}

/// Multiset of n-grams over a token sequence.
pub type NgramCounts = HashMap<Vec<String>, usize>;

/// Returns the multiset of n-grams of `seq`. Exactly
/// `max(0, len - n + 1)` grams counting multiplicity.
pub fn ngrams(seq: &TokenSequence, n: usize) -> NgramCounts {
    assert!(n >= 1, "n-gram order must be >= 1");
    let tokens = seq.tokens();
    let mut counts = NgramCounts::new();
    if tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        *counts.entry(window.to_vec()).or_insert(0) += 1;
    }
    counts
}

/// Total gram count of a multiset (sum of multiplicities).
pub fn total_grams(counts: &NgramCounts) -> usize {
    counts.values().sum()
}

const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "e.g", "i.e", "etc", "vs", "no", "vol",
];

/// Rule-based sentence segmentation.
///
/// A sentence boundary is a `.`, `!` or `?` followed by whitespace and an
/// uppercase letter (or by end of text). A period whose preceding word is
/// in the abbreviation list does not split. The splitter never drops
/// non-whitespace characters and never produces empty sentences.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: HashSet<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        SentenceSplitter {
            abbreviations: DEFAULT_ABBREVIATIONS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl SentenceSplitter {
    pub fn new<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SentenceSplitter {
            abbreviations: abbreviations
                .into_iter()
                .map(|s| s.into().to_lowercase())
                .collect(),
        }
    }

    /// Loads an abbreviation list from a plain-text file, one entry per
    /// line. Blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(Self::new(text.lines().filter_map(|line| {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                None
            } else {
                Some(line.to_string())
            }
        })))
    }

    pub fn split(&self, text: &str) -> Vec<String> {
        let chars: Vec<char> = text.chars().collect();
        let mut sentences = Vec::new();
        let mut start = 0usize;

        for i in 0..chars.len() {
            let c = chars[i];
            if c != '.' && c != '!' && c != '?' {
                continue;
            }
            if !self.boundary_follows(&chars, i) {
                continue;
            }
            if c == '.' && self.is_abbreviation(&chars, start, i) {
                continue;
            }
            let piece: String = chars[start..=i].iter().collect();
            let piece = piece.trim();
            if !piece.is_empty() {
                sentences.push(piece.to_string());
            }
            start = i + 1;
        }

        if start < chars.len() {
            let piece: String = chars[start..].iter().collect();
            let piece = piece.trim();
            if !piece.is_empty() {
                sentences.push(piece.to_string());
            }
        }
        sentences
    }

    /// True when position `i` (a terminal punctuation char) is followed by
    /// whitespace and an uppercase letter, or only by whitespace.
    fn boundary_follows(&self, chars: &[char], i: usize) -> bool {
        let mut j = i + 1;
        if j >= chars.len() {
            return true;
        }
        if !chars[j].is_whitespace() {
            return false;
        }
        while j < chars.len() && chars[j].is_whitespace() {
            j += 1;
        }
        j >= chars.len() || chars[j].is_uppercase()
    }

    /// Looks back from the period at `i` for the word it terminates and
    /// checks it against the abbreviation list.
    fn is_abbreviation(&self, chars: &[char], start: usize, i: usize) -> bool {
        let mut j = i;
        while j > start && !chars[j - 1].is_whitespace() {
            j -= 1;
        }
        let word: String = chars[j..i].iter().collect();
        let word = word
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        !word.is_empty() && self.abbreviations.contains(&word)
    }
}

/// Splits with the default abbreviation list.
pub fn split_sentences(text: &str) -> Vec<String> {
    SentenceSplitter::default().split(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_strips_punctuation() {
        let toks = tokenize("Lorrie Moore, writer.");
        assert_eq!(toks.tokens(), &["lorrie", "moore", "writer"]);
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn tokenize_collapses_whitespace_keeps_duplicates() {
        let toks = tokenize("a  b\ta");
        assert_eq!(toks.tokens(), &["a", "b", "a"]);
    }

    #[test]
    fn tokenize_idempotent_on_joined_output() {
        let first = tokenize("Dr. Smith's... (well-known) WORK!");
        let second = tokenize(&first.join());
        assert_eq!(first, second);
    }

    #[test]
    fn split_two_sentences() {
        assert_eq!(
            split_sentences("She won. She wrote."),
            vec!["She won.", "She wrote."]
        );
    }

    #[test]
    fn split_respects_abbreviations() {
        assert_eq!(
            split_sentences("Dr. Smith works at NeurIPS."),
            vec!["Dr. Smith works at NeurIPS."]
        );
    }

    #[test]
    fn split_empty_text() {
        assert!(split_sentences("").is_empty());
    }

    #[test]
    fn split_needs_uppercase_after_whitespace() {
        // lowercase continuation does not split
        assert_eq!(split_sentences("version 1. 2 of the series".trim()).len(), 1);
        assert_eq!(
            split_sentences("Stop! Now."),
            vec!["Stop!", "Now."]
        );
    }

    #[test]
    fn split_keeps_all_non_whitespace_chars() {
        let text = "  One. Two!  Three?  ";
        let joined: String = split_sentences(text).concat();
        let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        assert_eq!(strip(&joined), strip(text));
    }

    #[test]
    fn abbreviations_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abbrev.txt");
        std::fs::write(&path, "# custom\nfig\n\nca\n").unwrap();
        let splitter = SentenceSplitter::from_file(&path).unwrap();
        assert_eq!(splitter.split("See fig. A and ca. 1900. Done.").len(), 2);
    }

    #[test]
    fn ngram_counts() {
        let seq = tokenize("a b a");
        let grams = ngrams(&seq, 2);
        assert_eq!(grams.len(), 2);
        assert_eq!(grams[&vec!["a".to_string(), "b".to_string()]], 1);
        assert_eq!(grams[&vec!["b".to_string(), "a".to_string()]], 1);
    }

    #[test]
    fn ngram_too_short() {
        let seq = tokenize("a");
        assert!(ngrams(&seq, 2).is_empty());
    }

    #[test]
    fn ngram_multiplicity() {
        let seq = tokenize("a a a");
        let grams = ngrams(&seq, 1);
        assert_eq!(grams[&vec!["a".to_string()]], 3);
    }
}
