//! ROUGE precision against the evidence the model saw: clipped n-gram
//! overlap for ROUGE-1/2 and a sentence-level LCS for ROUGE-Lsum. High
//! precision means the output is stitched from the reference material.

use crate::textproc::{ngrams, split_sentences, tokenize, total_grams};

/// Fraction of the candidate's n-grams found in the reference, with
/// multiplicity clipping. Empty candidates score 0.
pub fn rouge_n_precision(candidate: &str, reference: &str, n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be >= 1");
    let cand_grams = ngrams(&tokenize(candidate), n);
    let total = total_grams(&cand_grams);
    if total == 0 {
        return 0.0;
    }
    let ref_grams = ngrams(&tokenize(reference), n);
    let overlap: usize = cand_grams
        .iter()
        .map(|(gram, count)| (*count).min(ref_grams.get(gram).copied().unwrap_or(0)))
        .sum();
    overlap as f64 / total as f64
}

/// Longest common subsequence length between two token slices.
/// Two-row dynamic program, O(|a| * |b|).
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Summary-level ROUGE-L precision: each candidate sentence is matched
/// against the full reference token sequence by LCS; precision is the
/// summed LCS length over the summed candidate sentence lengths.
pub fn rouge_lsum_precision(candidate: &str, reference: &str) -> f64 {
    let ref_tokens = tokenize(reference).into_tokens();
    let mut lcs_total = 0usize;
    let mut cand_total = 0usize;
    for sentence in split_sentences(candidate) {
        let sent_tokens = tokenize(&sentence).into_tokens();
        cand_total += sent_tokens.len();
        lcs_total += lcs_len(&sent_tokens, &ref_tokens);
    }
    if cand_total == 0 {
        return 0.0;
    }
    lcs_total as f64 / cand_total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unigram_precision_enumeration() {
        assert_eq!(rouge_n_precision("a b c", "a b d", 1), 2.0 / 3.0);
    }

    #[test]
    fn identical_texts_score_one() {
        assert_eq!(rouge_n_precision("a b c", "a b c", 1), 1.0);
        assert_eq!(rouge_n_precision("a b c", "a b c", 2), 1.0);
        assert_eq!(rouge_lsum_precision("A b c.", "a b c"), 1.0);
    }

    #[test]
    fn bigram_precision_enumeration() {
        // candidate bigrams: (a,b), (b,c); reference bigrams: (a,b), (b,d)
        assert_eq!(rouge_n_precision("a b c", "a b d", 2), 1.0 / 2.0);
    }

    #[test]
    fn clipping_respects_reference_multiplicity() {
        // candidate has "a" three times, reference twice -> clipped to 2
        assert_eq!(rouge_n_precision("a a a", "a a b", 1), 2.0 / 3.0);
    }

    #[test]
    fn empty_candidate_scores_zero() {
        assert_eq!(rouge_n_precision("", "a b", 1), 0.0);
        assert_eq!(rouge_lsum_precision("", "a b"), 0.0);
    }

    #[test]
    fn lsum_subsequence_case() {
        // candidate tokens [a, x, b] vs reference [a, b]: LCS = 2
        assert_eq!(rouge_lsum_precision("a x b", "a b"), 2.0 / 3.0);
    }

    #[test]
    fn lsum_contiguous_span_scores_one() {
        let reference = "one two three four five six";
        assert_eq!(rouge_lsum_precision("two three four.", reference), 1.0);
    }

    #[test]
    fn lcs_basics() {
        let a: Vec<String> = ["a", "x", "b", "y"].iter().map(|s| s.to_string()).collect();
        let b: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(lcs_len(&a, &b), 2);
        assert_eq!(lcs_len(&a, &[]), 0);
    }
}
