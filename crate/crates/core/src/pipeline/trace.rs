use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TokenId;

/// How a response token's logits were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// A model forward step ran.
    Forwarded,
    /// Cached logits were reused and the token sampled from them.
    Reused,
    /// Cached logits were reused and the cached token emitted without sampling.
    HardDecoded,
}

impl Provenance {
    pub fn skipped_forward(self) -> bool {
        !matches!(self, Provenance::Forwarded)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Forwarded => "forwarded",
            Provenance::Reused => "reused",
            Provenance::HardDecoded => "hard_decoded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token: TokenId,
    pub provenance: Provenance,
    /// Memory entry that supplied the logits; present iff the forward was skipped.
    pub memory_index: Option<usize>,
    /// Probability of the emitted token under the un-annealed logits.
    pub p_pre: f64,
    /// Probability of the emitted token under the logits actually used.
    pub p_post: f64,
}

/// Per-token provenance of one response.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub records: Vec<TokenRecord>,
    /// Generation hit the step cap before emitting EOS.
    pub truncated: bool,
    /// Extra forward steps spent obtaining the trailing hidden state (0 or 1).
    pub finalize_forwards: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceTotals {
    pub forwarded: usize,
    pub reused: usize,
    pub hard_decoded: usize,
}

impl TraceTotals {
    pub fn total(&self) -> usize {
        self.forwarded + self.reused + self.hard_decoded
    }

    pub fn skipped(&self) -> usize {
        self.reused + self.hard_decoded
    }
}

impl GenerationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn totals(&self) -> TraceTotals {
        let mut t = TraceTotals::default();
        for r in &self.records {
            match r.provenance {
                Provenance::Forwarded => t.forwarded += 1,
                Provenance::Reused => t.reused += 1,
                Provenance::HardDecoded => t.hard_decoded += 1,
            }
        }
        t
    }

    pub fn tokens(&self) -> Vec<TokenId> {
        self.records.iter().map(|r| r.token).collect()
    }

    /// Per-token probabilities, post-anneal (as sampled) or pre-anneal.
    pub fn probabilities(&self, post_anneal: bool) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| if post_anneal { r.p_post } else { r.p_pre })
            .collect()
    }
}

/// Fraction of generated tokens whose forward step was skipped.
pub fn reuse_ratio<'a, I>(traces: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a GenerationTrace>,
{
    let (skipped, total) = traces.into_iter().fold((0usize, 0usize), |(s, t), trace| {
        let totals = trace.totals();
        (s + totals.skipped(), t + totals.total())
    });
    if total == 0 {
        return Err(Error::UndefinedMetric("reuse ratio over zero generated tokens".into()));
    }
    Ok(skipped as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(kinds: &[Provenance]) -> GenerationTrace {
        GenerationTrace {
            records: kinds
                .iter()
                .map(|&provenance| TokenRecord {
                    token: 0,
                    provenance,
                    memory_index: provenance.skipped_forward().then_some(0),
                    p_pre: 1.0,
                    p_post: 1.0,
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn ratio_cases() {
        use Provenance::*;
        assert_eq!(reuse_ratio([&trace(&[Forwarded; 4])]).unwrap(), 0.0);
        assert_eq!(reuse_ratio([&trace(&[Reused, HardDecoded])]).unwrap(), 1.0);
        let a = trace(&[Reused, Forwarded, Forwarded, Forwarded]);
        let b = trace(&[HardDecoded, Forwarded, Forwarded, Forwarded]);
        assert_eq!(reuse_ratio([&a, &b]).unwrap(), 0.25);
        assert!(matches!(reuse_ratio([&trace(&[])]), Err(Error::UndefinedMetric(_))));
        assert!(reuse_ratio(std::iter::empty()).is_err());
    }
}
