//! Self-consistency scorers over a set of sampled responses.

mod eigen;
mod lexical;
mod oracles;
mod semantic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use eigen::{centered_covariance, eigenscore, regularized_logdet};
pub use lexical::{lcs_len, lexical_similarity, ln_entropy, rouge_l};
pub use oracles::{
    normalize_words, ContainmentEntailment, EmbeddingOracle, Entailment, EntailmentOracle, EqualityEntailment,
    HashedBagOfWords,
    DEFAULT_EMBEDDING_WIDTH,
};
pub use semantic::{cluster_responses, semantic_entropy, semantic_entropy_b};

use crate::error::{Error, Result};
use crate::memory::cosine;
use crate::model::{TokenId, Vocab};
use crate::pipeline::PromptGeneration;

/// Everything the scorers may read about one question's responses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredResponseSet {
    pub responses: Vec<Vec<TokenId>>,
    /// Word renderings, one per response.
    pub words: Vec<Vec<String>>,
    /// Per-token probabilities of each response.
    pub probabilities: Option<Vec<Vec<f64>>>,
    /// Per-response sentence embeddings from the model.
    pub embeddings: Option<Vec<Vec<f64>>>,
    /// Words of the greedy reference answer.
    pub reference: Option<Vec<String>>,
}

/// Words for a token sequence, dropping a trailing EOS. Without a vocabulary
/// every id renders as its decimal form.
pub fn render_words(tokens: &[TokenId], eos: TokenId, vocab: Option<&Vocab>) -> Vec<String> {
    let body = match tokens.last() {
        Some(&t) if t == eos => &tokens[..tokens.len() - 1],
        _ => tokens,
    };
    body.iter()
        .map(|&t| match vocab.and_then(|v| v.word(t)) {
            Some(w) => w.to_string(),
            None => t.to_string(),
        })
        .collect()
}

impl ScoredResponseSet {
    /// Word renderings only.
    pub fn from_words(words: Vec<Vec<String>>) -> Self {
        ScoredResponseSet {
            responses: vec![Vec::new(); words.len()],
            words,
            ..Default::default()
        }
    }

    /// Responses, probabilities (annealed or not) and last-token hiddens of a generation run.
    pub fn from_generation(g: &PromptGeneration, eos: TokenId, vocab: Option<&Vocab>, post_anneal: bool) -> Self {
        ScoredResponseSet {
            responses: g.outputs.iter().map(|o| o.response.clone()).collect(),
            words: g.outputs.iter().map(|o| render_words(&o.response, eos, vocab)).collect(),
            probabilities: Some(g.outputs.iter().map(|o| o.trace.probabilities(post_anneal)).collect()),
            embeddings: Some(g.outputs.iter().map(|o| o.last_hidden.clone()).collect()),
            reference: None,
        }
    }

    pub fn with_reference(mut self, reference: Vec<String>) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.words.len();
        if self.responses.len() != n {
            return Err(Error::input("responses and renderings differ in count"));
        }
        if let Some(p) = &self.probabilities {
            if p.len() != n {
                return Err(Error::input("probabilities and responses differ in count"));
            }
            for (probs, resp) in p.iter().zip(&self.responses) {
                if !resp.is_empty() && probs.len() != resp.len() {
                    return Err(Error::input("probability count differs from token count"));
                }
                if probs.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
                    return Err(Error::input("token probability outside (0, 1]"));
                }
            }
        }
        if let Some(e) = &self.embeddings {
            if e.len() != n {
                return Err(Error::input("embeddings and responses differ in count"));
            }
        }
        Ok(())
    }

    fn probabilities(&self) -> Result<&[Vec<f64>]> {
        self.probabilities
            .as_deref()
            .ok_or_else(|| Error::input("token probabilities are required"))
    }

    /// Sequence log-likelihoods `Σ log p`.
    pub fn log_likelihoods(&self) -> Result<Vec<f64>> {
        Ok(self.probabilities()?.iter().map(|p| p.iter().map(|x| x.ln()).sum()).collect())
    }
}

/// SelfCheck-style score: one minus the mean cosine between each response's
/// embedding and the reference's.
pub fn selfcheck_score(set: &ScoredResponseSet, oracle: &dyn EmbeddingOracle) -> Result<f64> {
    let reference = set
        .reference
        .as_ref()
        .ok_or_else(|| Error::input("selfcheck needs the greedy reference answer"))?;
    if set.is_empty() {
        return Err(Error::input("selfcheck needs at least one response"));
    }
    let r = oracle.embed(reference)?;
    let mut total = 0.0;
    for words in &set.words {
        total += cosine(&oracle.embed(words)?, &r)?;
    }
    Ok(1.0 - total / set.len() as f64)
}

/// EigenScore over oracle embeddings of the word renderings.
pub fn eigenscore_b(set: &ScoredResponseSet, oracle: &dyn EmbeddingOracle, reg_alpha: f64) -> Result<f64> {
    let rows = set.words.iter().map(|w| oracle.embed(w)).collect::<Result<Vec<_>>>()?;
    eigenscore(&rows, reg_alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    LnEntropy,
    Lexical,
    Selfcheck,
    Eigenscore,
    EigenscoreB,
    SemanticEntropy,
    SemanticEntropyB,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 7] = [
        ScorerKind::LnEntropy,
        ScorerKind::Lexical,
        ScorerKind::Selfcheck,
        ScorerKind::Eigenscore,
        ScorerKind::EigenscoreB,
        ScorerKind::SemanticEntropy,
        ScorerKind::SemanticEntropyB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::LnEntropy => "ln_entropy",
            ScorerKind::Lexical => "lexical",
            ScorerKind::Selfcheck => "selfcheck",
            ScorerKind::Eigenscore => "eigenscore",
            ScorerKind::EigenscoreB => "eigenscore_b",
            ScorerKind::SemanticEntropy => "semantic_entropy",
            ScorerKind::SemanticEntropyB => "semantic_entropy_b",
        }
    }

    /// Whether a larger score indicates a more likely correct answer.
    /// Only lexical similarity is oriented that way; the others measure
    /// spread or uncertainty.
    pub fn higher_is_factual(self) -> bool {
        matches!(self, ScorerKind::Lexical)
    }

    /// Needs a greedy reference answer.
    pub fn needs_reference(self) -> bool {
        matches!(self, ScorerKind::Selfcheck)
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param(format!("unknown scorer {s:?}")))
    }
}

/// Oracles and hyperparameters shared by all scorers.
pub struct ScoringContext<'a> {
    pub embedding: &'a dyn EmbeddingOracle,
    pub entailment: &'a dyn EntailmentOracle,
    pub reg_alpha: f64,
}

pub const DEFAULT_REG_ALPHA: f64 = 1e-3;

pub fn score(kind: ScorerKind, set: &ScoredResponseSet, ctx: &ScoringContext<'_>) -> Result<f64> {
    set.validate()?;
    match kind {
        ScorerKind::LnEntropy => ln_entropy(set.probabilities()?),
        ScorerKind::Lexical => lexical_similarity(&set.words),
        ScorerKind::Selfcheck => selfcheck_score(set, ctx.embedding),
        ScorerKind::Eigenscore => {
            let rows = set
                .embeddings
                .as_deref()
                .ok_or_else(|| Error::input("eigenscore needs model embeddings"))?;
            eigenscore(rows, ctx.reg_alpha)
        }
        ScorerKind::EigenscoreB => eigenscore_b(set, ctx.embedding, ctx.reg_alpha),
        ScorerKind::SemanticEntropy => {
            let clusters = cluster_responses(&set.words, ctx.entailment)?;
            semantic_entropy(&set.log_likelihoods()?, &clusters)
        }
        ScorerKind::SemanticEntropyB => {
            let clusters = cluster_responses(&set.words, ctx.entailment)?;
            semantic_entropy_b(&clusters, set.len())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &[&str]) -> Vec<Vec<String>> {
        s.iter().map(|r| r.split_whitespace().map(String::from).collect()).collect()
    }

    #[test]
    fn selfcheck_examples() {
        let o = HashedBagOfWords::default();
        let set = ScoredResponseSet::from_words(words(&["a b", "b a"])).with_reference(words(&["a b"]).remove(0));
        assert!(selfcheck_score(&set, &o).unwrap().abs() < 1e-12);
        let set = ScoredResponseSet::from_words(words(&["a b", "zz"])).with_reference(words(&["a b"]).remove(0));
        let b_orth = cosine(&o.embed(&words(&["zz"])[0]).unwrap(), &o.embed(&words(&["a b"])[0]).unwrap()).unwrap();
        assert!((selfcheck_score(&set, &o).unwrap() - (1.0 - (1.0 + b_orth) / 2.0)).abs() < 1e-12);
        assert!(selfcheck_score(&ScoredResponseSet::from_words(words(&["a"])), &o).is_err());
    }

    #[test]
    fn eigenscore_b_identical_rows() {
        let o = HashedBagOfWords { width: 3 };
        let set = ScoredResponseSet::from_words(words(&["q", "q", "q"]));
        assert!((eigenscore_b(&set, &o, 0.5).unwrap() - 3.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn render_strips_eos() {
        let v = Vocab::new(["<eos>", "a", "b"]).unwrap();
        assert_eq!(render_words(&[1, 2, 0], 0, Some(&v)), vec!["a", "b"]);
        assert_eq!(render_words(&[1, 2], 0, None), vec!["1", "2"]);
    }

    #[test]
    fn names_round_trip() {
        for k in ScorerKind::ALL {
            assert_eq!(k.name().parse::<ScorerKind>().unwrap(), k);
        }
        assert!("bogus".parse::<ScorerKind>().is_err());
    }

    #[test]
    fn dispatch_requires_inputs() {
        let ctx = ScoringContext {
            embedding: &HashedBagOfWords::default(),
            entailment: &ContainmentEntailment,
            reg_alpha: DEFAULT_REG_ALPHA,
        };
        let set = ScoredResponseSet::from_words(words(&["a", "a", "b"]));
        assert!(score(ScorerKind::LnEntropy, &set, &ctx).is_err());
        assert!(score(ScorerKind::Eigenscore, &set, &ctx).is_err());
        let se_b = score(ScorerKind::SemanticEntropyB, &set, &ctx).unwrap();
        let p: [f64; 2] = [2.0 / 3.0, 1.0 / 3.0];
        assert!((se_b + p.iter().map(|x| x * x.ln()).sum::<f64>()).abs() < 1e-12);
    }
}
