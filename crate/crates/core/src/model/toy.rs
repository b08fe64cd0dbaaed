//! Deterministic toy models.
//!
//! Every toy model is a pure function of `(prompt, prefix)`. Their opaque
//! state is a 24-byte record `(prompt hash, prefix length, context hash)`,
//! which lets a step extend the context hash by one token instead of
//! re-folding the whole prefix.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{LogitModel, ModelSpec, OpaqueState, StepOutput, TokenId};
use crate::error::{Error, Result};
use crate::hash::{mix, splitmix64, unit_f64};

/// Logit gap used by one-hot tables: `exp(-ONE_HOT_GAP / T)` underflows to
/// exactly zero for any temperature up to 1.4.
pub const ONE_HOT_GAP: f64 = 1000.0;

const PROMPT_SALT: u64 = 0x5052_4f4d_5054_0001;
const HIDDEN_SALT: u64 = 0x4849_4444_454e_0002;
const LOGIT_SALT: u64 = 0x4c4f_4749_5400_0003;

fn prompt_hash(prompt: &[TokenId]) -> u64 {
    prompt
        .iter()
        .fold(splitmix64(PROMPT_SALT ^ prompt.len() as u64), |h, &t| mix(h, u64::from(t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ContextState {
    prompt: u64,
    len: u64,
    chain: u64,
}

impl ContextState {
    fn encode(&self) -> OpaqueState {
        let mut bytes = Vec::with_capacity(24);
        bytes.extend_from_slice(&self.prompt.to_le_bytes());
        bytes.extend_from_slice(&self.len.to_le_bytes());
        bytes.extend_from_slice(&self.chain.to_le_bytes());
        OpaqueState(bytes)
    }

    fn decode(state: &OpaqueState) -> Result<Self> {
        let b = &state.0;
        if b.len() != 24 {
            return Err(Error::State(format!("expected a 24-byte toy state, got {} bytes", b.len())));
        }
        let word = |i: usize| u64::from_le_bytes(b[i * 8..i * 8 + 8].try_into().unwrap());
        Ok(ContextState {
            prompt: word(0),
            len: word(1),
            chain: word(2),
        })
    }

    /// Context hash for `(prompt, prefix)`, reusing `prior` when it covers `prefix[..len-1]`.
    fn resolve(prompt: &[TokenId], prefix: &[TokenId], prior: Option<&OpaqueState>) -> Result<Self> {
        let ph = prompt_hash(prompt);
        match prior {
            None => Ok(ContextState {
                prompt: ph,
                len: prefix.len() as u64,
                chain: prefix.iter().fold(ph, |h, &t| mix(h, u64::from(t))),
            }),
            Some(state) => {
                let prev = Self::decode(state)?;
                let Some(&last) = prefix.last() else {
                    return Err(Error::State("prior state supplied for an empty prefix".into()));
                };
                if prev.prompt != ph {
                    return Err(Error::State("prior state belongs to a different prompt".into()));
                }
                if prev.len + 1 != prefix.len() as u64 {
                    return Err(Error::State(format!(
                        "prior state covers {} tokens but the prefix minus its last token has {}",
                        prev.len,
                        prefix.len() - 1
                    )));
                }
                Ok(ContextState {
                    prompt: ph,
                    len: prefix.len() as u64,
                    chain: mix(prev.chain, u64::from(last)),
                })
            }
        }
    }
}

/// Pseudo-random hidden vector in `[-1, 1)^dim` derived from a context hash.
fn hashed_vector(key: u64, dim: usize) -> Vec<f64> {
    (0..dim as u64)
        .map(|i| 2.0 * unit_f64(mix(key, i)) - 1.0)
        .collect()
}

fn check_inputs(spec: &ModelSpec, prompt: &[TokenId], prefix: &[TokenId]) -> Result<()> {
    spec.check_tokens(prompt)?;
    spec.check_tokens(prefix)
}

/// Parameters selecting one of the toy model families.
#[derive(Debug, Clone, PartialEq)]
pub enum ToyModelKind {
    /// Explicit `(prompt, prefix) -> logits` entries with a hash-derived fallback.
    Table {
        entries: Vec<TableEntry>,
        fallback: TableFallback,
    },
    /// Add-one-smoothed count model conditioned on the last `order` tokens.
    NGram { order: usize, corpus: Vec<Vec<TokenId>> },
    /// One seeded top token per context with probability `p_top`, the rest uniform.
    Peaked { p_top: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub prompt: Vec<TokenId>,
    pub prefix: Vec<TokenId>,
    pub logits: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<f64>>,
}

/// What the table model returns for contexts without an explicit entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TableFallback {
    /// Logits uniform in `[-scale, scale)`, keyed by the context hash.
    Hashed { scale: f64 },
    /// A single hashed winner at 0 with every other logit at `-ONE_HOT_GAP`.
    OneHot,
}

#[derive(Debug, Clone)]
pub struct TableModel {
    spec: ModelSpec,
    entries: HashMap<(Vec<TokenId>, Vec<TokenId>), (Vec<f64>, Option<Vec<f64>>)>,
    fallback: TableFallback,
}

impl TableModel {
    fn fallback_logits(&self, chain: u64) -> Vec<f64> {
        let v = self.spec.vocab_size;
        match self.fallback {
            TableFallback::Hashed { scale } => (0..v as u64)
                .map(|i| scale * (2.0 * unit_f64(mix(chain ^ LOGIT_SALT, i)) - 1.0))
                .collect(),
            TableFallback::OneHot => {
                let top = (mix(chain, LOGIT_SALT) % v as u64) as usize;
                let mut logits = vec![-ONE_HOT_GAP; v];
                logits[top] = 0.0;
                logits
            }
        }
    }
}

impl LogitModel for TableModel {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn step(&self, prompt: &[TokenId], prefix: &[TokenId], prior_state: Option<&OpaqueState>) -> Result<StepOutput> {
        check_inputs(&self.spec, prompt, prefix)?;
        let ctx = ContextState::resolve(prompt, prefix, prior_state)?;
        let explicit = self.entries.get(&(prompt.to_vec(), prefix.to_vec()));
        let logits = match explicit {
            Some((logits, _)) => logits.clone(),
            None => self.fallback_logits(ctx.chain),
        };
        let hidden = match explicit.and_then(|(_, h)| h.as_ref()) {
            Some(h) => h.clone(),
            None => hashed_vector(ctx.chain ^ HIDDEN_SALT, self.spec.hidden_dim),
        };
        Ok(StepOutput {
            logits,
            hidden,
            state: ctx.encode(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    spec: ModelSpec,
    order: usize,
    counts: HashMap<Vec<TokenId>, HashMap<TokenId, u64>>,
}

impl NGramModel {
    fn train(spec: ModelSpec, order: usize, corpus: &[Vec<TokenId>]) -> Result<Self> {
        if order == 0 {
            return Err(Error::Construction("ngram order must be at least 1".into()));
        }
        let mut counts: HashMap<Vec<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
        for line in corpus {
            spec.check_tokens(line)
                .map_err(|e| Error::Construction(format!("corpus: {e}")))?;
            for window in line.windows(order + 1) {
                let (ctx, next) = window.split_at(order);
                *counts.entry(ctx.to_vec()).or_default().entry(next[0]).or_default() += 1;
            }
        }
        Ok(NGramModel { spec, order, counts })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Smoothed next-token logits `ln((c + 1) / (total + V))` after `context`.
    pub fn logits_after(&self, context: &[TokenId]) -> Vec<f64> {
        let v = self.spec.vocab_size;
        let tail = &context[context.len().saturating_sub(self.order)..];
        let row = if tail.len() == self.order { self.counts.get(tail) } else { None };
        let total: u64 = row.map_or(0, |r| r.values().sum());
        let denom = (total + v as u64) as f64;
        (0..v as TokenId)
            .map(|t| {
                let c = row.and_then(|r| r.get(&t)).copied().unwrap_or(0);
                ((c + 1) as f64 / denom).ln()
            })
            .collect()
    }
}

impl LogitModel for NGramModel {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn step(&self, prompt: &[TokenId], prefix: &[TokenId], prior_state: Option<&OpaqueState>) -> Result<StepOutput> {
        check_inputs(&self.spec, prompt, prefix)?;
        let ctx = ContextState::resolve(prompt, prefix, prior_state)?;
        let mut context: Vec<TokenId> = Vec::with_capacity(self.order);
        let full = prompt.iter().chain(prefix);
        let skip = (prompt.len() + prefix.len()).saturating_sub(self.order);
        context.extend(full.skip(skip).copied());
        let key = context
            .iter()
            .fold(splitmix64(context.len() as u64), |h, &t| mix(h, u64::from(t)));
        Ok(StepOutput {
            logits: self.logits_after(&context),
            hidden: hashed_vector(key ^ HIDDEN_SALT, self.spec.hidden_dim),
            state: ctx.encode(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PeakedModel {
    spec: ModelSpec,
    seed: u64,
    top_logit: f64,
    rest_logit: f64,
}

impl PeakedModel {
    fn new(spec: ModelSpec, p_top: f64, seed: u64) -> Result<Self> {
        if !(p_top > 0.0 && p_top < 1.0) {
            return Err(Error::Construction(format!("p_top must lie in (0, 1), got {p_top}")));
        }
        if spec.vocab_size < 2 {
            return Err(Error::Construction("peaked model needs at least two tokens".into()));
        }
        Ok(PeakedModel {
            top_logit: p_top.ln(),
            rest_logit: ((1.0 - p_top) / (spec.vocab_size - 1) as f64).ln(),
            spec,
            seed,
        })
    }

    /// The token favoured after the given context hash.
    fn top_token(&self, chain: u64) -> usize {
        (mix(chain, self.seed) % self.spec.vocab_size as u64) as usize
    }
}

impl LogitModel for PeakedModel {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn step(&self, prompt: &[TokenId], prefix: &[TokenId], prior_state: Option<&OpaqueState>) -> Result<StepOutput> {
        check_inputs(&self.spec, prompt, prefix)?;
        let ctx = ContextState::resolve(prompt, prefix, prior_state)?;
        let mut logits = vec![self.rest_logit; self.spec.vocab_size];
        logits[self.top_token(ctx.chain)] = self.top_logit;
        Ok(StepOutput {
            logits,
            hidden: hashed_vector(mix(ctx.chain, self.seed) ^ HIDDEN_SALT, self.spec.hidden_dim),
            state: ctx.encode(),
        })
    }
}

/// Any of the built-in toy models.
#[derive(Debug, Clone)]
pub enum ToyModel {
    Table(TableModel),
    NGram(NGramModel),
    Peaked(PeakedModel),
}

impl LogitModel for ToyModel {
    fn spec(&self) -> &ModelSpec {
        match self {
            ToyModel::Table(m) => m.spec(),
            ToyModel::NGram(m) => m.spec(),
            ToyModel::Peaked(m) => m.spec(),
        }
    }

    fn step(&self, prompt: &[TokenId], prefix: &[TokenId], prior_state: Option<&OpaqueState>) -> Result<StepOutput> {
        match self {
            ToyModel::Table(m) => m.step(prompt, prefix, prior_state),
            ToyModel::NGram(m) => m.step(prompt, prefix, prior_state),
            ToyModel::Peaked(m) => m.step(prompt, prefix, prior_state),
        }
    }
}

/// Build a toy model, validating `spec` and the kind's parameters.
pub fn build_toy_model(spec: ModelSpec, kind: ToyModelKind) -> Result<ToyModel> {
    spec.validate()?;
    match kind {
        ToyModelKind::Table { entries, fallback } => {
            if let TableFallback::Hashed { scale } = fallback {
                if !scale.is_finite() {
                    return Err(Error::Construction("fallback scale must be finite".into()));
                }
            }
            let mut map = HashMap::with_capacity(entries.len());
            for e in entries {
                spec.check_tokens(&e.prompt)
                    .and_then(|_| spec.check_tokens(&e.prefix))
                    .map_err(|err| Error::Construction(format!("table entry: {err}")))?;
                if e.logits.len() != spec.vocab_size || !e.logits.iter().all(|v| v.is_finite()) {
                    return Err(Error::Construction(format!(
                        "table entry logits must be {} finite values",
                        spec.vocab_size
                    )));
                }
                if let Some(h) = &e.hidden {
                    if h.len() != spec.hidden_dim || !h.iter().all(|v| v.is_finite()) {
                        return Err(Error::Construction(format!(
                            "table entry hidden must be {} finite values",
                            spec.hidden_dim
                        )));
                    }
                }
                map.insert((e.prompt, e.prefix), (e.logits, e.hidden));
            }
            Ok(ToyModel::Table(TableModel {
                spec,
                entries: map,
                fallback,
            }))
        }
        ToyModelKind::NGram { order, corpus } => Ok(ToyModel::NGram(NGramModel::train(spec, order, &corpus)?)),
        ToyModelKind::Peaked { p_top, seed } => Ok(ToyModel::Peaked(PeakedModel::new(spec, p_top, seed)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|x| x / s).collect()
    }

    fn spec(v: usize) -> ModelSpec {
        ModelSpec::new(v, 4, 0, 16).unwrap()
    }

    #[test]
    fn peaked_top_probability() {
        let m = build_toy_model(spec(4), ToyModelKind::Peaked { p_top: 0.9, seed: 1 }).unwrap();
        let out = m.step(&[1, 2], &[3], None).unwrap();
        let p = softmax(&out.logits);
        let max = p.iter().cloned().fold(0.0, f64::max);
        assert!((max - 0.9).abs() < 1e-9);
        for &q in p.iter().filter(|&&q| q < 0.5) {
            assert!((q - 0.1 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn peaked_near_one() {
        let eps = 1e-9;
        let m = build_toy_model(spec(8), ToyModelKind::Peaked { p_top: 1.0 - eps, seed: 3 }).unwrap();
        let p = softmax(&m.step(&[5], &[], None).unwrap().logits);
        assert!(p.iter().cloned().fold(0.0, f64::max) >= 0.999999);
    }

    #[test]
    fn table_explicit_entry_is_returned_exactly() {
        let logits = vec![0.25, -1.5, 3.0, 0.0];
        let kind = ToyModelKind::Table {
            entries: vec![TableEntry {
                prompt: vec![1],
                prefix: vec![2, 3],
                logits: logits.clone(),
                hidden: Some(vec![1.0, 0.0, 0.0, 0.0]),
            }],
            fallback: TableFallback::Hashed { scale: 2.0 },
        };
        let m = build_toy_model(spec(4), kind).unwrap();
        let out = m.step(&[1], &[2, 3], None).unwrap();
        assert_eq!(out.logits, logits);
        assert_eq!(out.hidden, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.step(&[1], &[2, 3], None).unwrap(), out);
    }

    #[test]
    fn bigram_prefers_observed_transition() {
        // corpus "a b a b" with ids a=1, b=2
        let kind = ToyModelKind::NGram {
            order: 1,
            corpus: vec![vec![1, 2, 1, 2]],
        };
        let m = build_toy_model(spec(3), kind).unwrap();
        let logits = m.step(&[1], &[], None).unwrap().logits;
        // counts after "a": b twice, others never -> (0+1, 0+1, 2+1) / (2 + 3)
        let expected = [(1.0f64 / 5.0).ln(), (1.0f64 / 5.0).ln(), (3.0f64 / 5.0).ln()];
        assert_eq!(logits, expected);
        let argmax = (0..3).max_by(|&a, &b| logits[a].total_cmp(&logits[b])).unwrap();
        assert_eq!(argmax, 2);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(build_toy_model(spec(4), ToyModelKind::Peaked { p_top: 1.0, seed: 0 }).is_err());
        assert!(build_toy_model(spec(4), ToyModelKind::Peaked { p_top: 0.0, seed: 0 }).is_err());
        assert!(build_toy_model(spec(4), ToyModelKind::NGram { order: 0, corpus: vec![] }).is_err());
        assert!(ModelSpec::new(4, 4, 4, 1).is_err());
        assert!(ModelSpec::new(4, 4, 0, 0).is_err());
    }

    #[test]
    fn out_of_range_tokens_are_input_errors() {
        let m = build_toy_model(spec(4), ToyModelKind::Peaked { p_top: 0.5, seed: 0 }).unwrap();
        assert!(matches!(m.step(&[4], &[], None), Err(Error::Input(_))));
        assert!(matches!(m.step(&[1], &[9], None), Err(Error::Input(_))));
    }

    #[test]
    fn mismatched_state_is_detected() {
        let m = build_toy_model(spec(4), ToyModelKind::Peaked { p_top: 0.5, seed: 0 }).unwrap();
        let s0 = m.step(&[1], &[], None).unwrap().state;
        // s0 covers the empty prefix, so it is valid for a one-token prefix only
        assert!(m.step(&[1], &[2], Some(&s0)).is_ok());
        assert!(matches!(m.step(&[1], &[2, 3], Some(&s0)), Err(Error::State(_))));
        assert!(matches!(m.step(&[2], &[2], Some(&s0)), Err(Error::State(_))));
        assert!(matches!(m.step(&[1], &[], Some(&s0)), Err(Error::State(_))));
        assert!(matches!(
            m.step(&[1], &[2], Some(&OpaqueState(vec![1, 2, 3]))),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn prompt_embedding_matches_first_step() {
        let m = build_toy_model(spec(4), ToyModelKind::Peaked { p_top: 0.7, seed: 9 }).unwrap();
        let h = m.prompt_embedding(&[3]).unwrap();
        assert_eq!(h, m.step(&[3], &[], None).unwrap().hidden);
        assert_eq!(h, m.prompt_embedding(&[3]).unwrap());
        assert!(m.prompt_embedding(&[]).is_err());
    }
}
