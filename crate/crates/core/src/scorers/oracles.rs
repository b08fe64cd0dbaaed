use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::fnv1a;

/// Three-way natural-language-inference judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entailment {
    Entailment,
    Contradiction,
    Neutral,
}

impl Entailment {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entailment" => Ok(Entailment::Entailment),
            "contradiction" => Ok(Entailment::Contradiction),
            "neutral" => Ok(Entailment::Neutral),
            other => Err(Error::Oracle(format!("unrecognized judgment {other:?}"))),
        }
    }
}

/// Maps a word sequence to a fixed-width vector.
pub trait EmbeddingOracle: Send + Sync {
    fn embed(&self, words: &[String]) -> Result<Vec<f64>>;
}

/// Judges whether `premise` entails `hypothesis`.
pub trait EntailmentOracle: Send + Sync {
    fn judge(&self, premise: &[String], hypothesis: &[String]) -> Result<Entailment>;
}

impl<F> EntailmentOracle for F
where
    F: Fn(&[String], &[String]) -> Entailment + Send + Sync,
{
    fn judge(&self, premise: &[String], hypothesis: &[String]) -> Result<Entailment> {
        Ok(self(premise, hypothesis))
    }
}

/// Hashed bag of words, L2-normalized.
///
/// Each word adds 1 to bucket `fnv1a(word) % width`. The empty sequence maps
/// to a fixed reserved direction so every input has unit norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBagOfWords {
    pub width: usize,
}

pub const DEFAULT_EMBEDDING_WIDTH: usize = 256;

impl Default for HashedBagOfWords {
    fn default() -> Self {
        HashedBagOfWords {
            width: DEFAULT_EMBEDDING_WIDTH,
        }
    }
}

impl EmbeddingOracle for HashedBagOfWords {
    fn embed(&self, words: &[String]) -> Result<Vec<f64>> {
        if self.width == 0 {
            return Err(Error::param("embedding width must be positive"));
        }
        let mut v = vec![0.0; self.width];
        if words.is_empty() {
            v[(fnv1a(b"") % self.width as u64) as usize] = 1.0;
            return Ok(v);
        }
        for w in words {
            v[(fnv1a(w.as_bytes()) % self.width as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

/// Lowercase, strip punctuation, drop empty words.
pub fn normalize_words(words: &[String]) -> Vec<String> {
    words
        .iter()
        .map(|w| w.chars().filter(|c| !c.is_ascii_punctuation()).collect::<String>().to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Entailment iff the normalized hypothesis occurs as a contiguous word run
/// inside the normalized premise; neutral otherwise. Never reports contradiction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContainmentEntailment;

impl EntailmentOracle for ContainmentEntailment {
    fn judge(&self, premise: &[String], hypothesis: &[String]) -> Result<Entailment> {
        let p = normalize_words(premise);
        let h = normalize_words(hypothesis);
        let contained = h.is_empty() || p.windows(h.len()).any(|w| w == h.as_slice());
        Ok(if contained {
            Entailment::Entailment
        } else {
            Entailment::Neutral
        })
    }
}

/// Entailment iff the normalized word sequences are equal.
#[derive(Debug, Clone, Copy, Default)]
pub struct EqualityEntailment;

impl EntailmentOracle for EqualityEntailment {
    fn judge(&self, premise: &[String], hypothesis: &[String]) -> Result<Entailment> {
        Ok(if normalize_words(premise) == normalize_words(hypothesis) {
            Entailment::Entailment
        } else {
            Entailment::Neutral
        })
    }
}
