use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prefix-sharing proportions over groups of responses to the same question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyStats {
    pub questions: usize,
    pub responses_per_question: usize,
    /// Unordered same-question pairs considered.
    pub pairs: usize,
    /// Pairs where one response is a prefix of the other.
    pub sharing_pairs: usize,
    pub total_words: usize,
    /// Sum over sharing pairs of the shorter length.
    pub shared_words: usize,
    pub p_sentence: f64,
    /// `2 / (M N (N-1)) · Σ 1{prefix} · min(L_i, L_j) / Σ L`, the normalization
    /// as printed, which divides by the corpus word total inside the pair sum.
    pub p_word: f64,
    /// Shared prefix words over the words of all pairs: `Σ 1{prefix} · 2 min(L_i, L_j) / Σ (L_i + L_j)`.
    pub p_word_plain: f64,
}

/// One sequence starts with the other.
pub fn prefix_related<T: PartialEq>(a: &[T], b: &[T]) -> bool {
    let k = a.len().min(b.len());
    a[..k] == b[..k]
}

pub fn prefix_sharing_stats<T: PartialEq>(groups: &[Vec<Vec<T>>]) -> Result<RedundancyStats> {
    let m = groups.len();
    if m == 0 {
        return Err(Error::input("prefix sharing needs at least one question"));
    }
    let n = groups[0].len();
    if n < 2 {
        return Err(Error::input("prefix sharing needs at least two responses per question"));
    }
    if groups.iter().any(|g| g.len() != n) {
        return Err(Error::input("every question needs the same number of responses"));
    }
    let total_words: usize = groups.iter().flatten().map(Vec::len).sum();
    let mut sharing_pairs = 0;
    let mut shared_words = 0;
    let mut pair_words = 0;
    for g in groups {
        for i in 0..n {
            for j in i + 1..n {
                pair_words += g[i].len() + g[j].len();
                if prefix_related(&g[i], &g[j]) {
                    sharing_pairs += 1;
                    shared_words += g[i].len().min(g[j].len());
                }
            }
        }
    }
    let pairs = m * n * (n - 1) / 2;
    let norm = 2.0 / (m * n * (n - 1)) as f64;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(RedundancyStats {
        questions: m,
        responses_per_question: n,
        pairs,
        sharing_pairs,
        total_words,
        shared_words,
        p_sentence: norm * sharing_pairs as f64,
        p_word: norm * ratio(shared_words, total_words),
        p_word_plain: ratio(2 * shared_words, pair_words),
    })
}
