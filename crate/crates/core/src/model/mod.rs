//! The autoregressive logit-provider contract and the built-in toy models.
//!
//! A [`LogitModel`] maps `(prompt, prefix)` to the next-position logits, the
//! final-layer hidden embedding of the last input position, and an opaque
//! incremental state. Passing the state from the previous step is purely an
//! optimization: outputs must be bit-identical with or without it.

mod definition;
mod toy;
mod vocab;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use definition::{load_definition, parse_definition, ToyModelDefinition};
pub use toy::{
    build_toy_model, NGramModel, PeakedModel, TableEntry, TableFallback, TableModel, ToyModel,
    ToyModelKind, ONE_HOT_GAP,
};
pub use vocab::Vocab;

pub type TokenId = u32;

/// A prompt or response as token ids.
pub type TokenSeq = Vec<TokenId>;

/// Static shape of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub eos_token: TokenId,
    pub max_generation: usize,
}

impl ModelSpec {
    pub fn new(vocab_size: usize, hidden_dim: usize, eos_token: TokenId, max_generation: usize) -> Result<Self> {
        let spec = ModelSpec {
            vocab_size,
            hidden_dim,
            eos_token,
            max_generation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::Construction("vocab_size must be positive".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Construction("hidden_dim must be positive".into()));
        }
        if self.eos_token as usize >= self.vocab_size {
            return Err(Error::Construction(format!(
                "eos_token {} outside vocabulary of size {}",
                self.eos_token, self.vocab_size
            )));
        }
        if self.max_generation == 0 {
            return Err(Error::Construction("max_generation must be at least 1".into()));
        }
        Ok(())
    }

    /// Reject any token id outside the vocabulary.
    pub fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        match tokens.iter().find(|&&t| t as usize >= self.vocab_size) {
            Some(t) => Err(Error::input(format!(
                "token id {t} out of range for vocabulary of size {}",
                self.vocab_size
            ))),
            None => Ok(()),
        }
    }
}

/// Model-owned incremental state (the KV-cache surrogate). The engine never looks inside.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpaqueState(pub Vec<u8>);

impl OpaqueState {
    pub fn empty() -> Self {
        OpaqueState(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Output of one forward step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub logits: Vec<f64>,
    pub hidden: Vec<f64>,
    pub state: OpaqueState,
}

impl StepOutput {
    /// Check shapes against `spec` and reject non-finite values.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.logits.len() != spec.vocab_size {
            return Err(Error::Protocol(format!(
                "logits length {} does not match vocab_size {}",
                self.logits.len(),
                spec.vocab_size
            )));
        }
        if self.hidden.len() != spec.hidden_dim {
            return Err(Error::Protocol(format!(
                "hidden length {} does not match hidden_dim {}",
                self.hidden.len(),
                spec.hidden_dim
            )));
        }
        if !self.logits.iter().chain(&self.hidden).all(|v| v.is_finite()) {
            return Err(Error::Protocol("step output contains NaN or Inf".into()));
        }
        Ok(())
    }
}

/// One entry of a batched forward call.
#[derive(Debug, Clone, Copy)]
pub struct StepRequest<'a> {
    pub prompt: &'a [TokenId],
    pub prefix: &'a [TokenId],
    pub prior_state: Option<&'a OpaqueState>,
}

/// An autoregressive logit provider.
///
/// Implementations are immutable after construction and may be shared across
/// threads; every method takes `&self`.
pub trait LogitModel: Send + Sync {
    fn spec(&self) -> &ModelSpec;

    /// Logits, hidden embedding and state for the position after `prompt ++ prefix`.
    ///
    /// `prior_state`, when given, must be the state this model returned for
    /// `prefix[..prefix.len() - 1]`.
    fn step(&self, prompt: &[TokenId], prefix: &[TokenId], prior_state: Option<&OpaqueState>) -> Result<StepOutput>;

    /// Run several independent steps. The default issues them one by one.
    fn step_batch(&self, requests: &[StepRequest<'_>]) -> Result<Vec<StepOutput>> {
        requests
            .iter()
            .map(|r| self.step(r.prompt, r.prefix, r.prior_state))
            .collect()
    }

    /// Hidden embedding of the last prompt token.
    fn prompt_embedding(&self, prompt: &[TokenId]) -> Result<Vec<f64>> {
        if prompt.is_empty() {
            return Err(Error::input("prompt_embedding requires a non-empty prompt"));
        }
        Ok(self.step(prompt, &[], None)?.hidden)
    }
}

impl<M: LogitModel + ?Sized> LogitModel for &M {
    fn spec(&self) -> &ModelSpec {
        (**self).spec()
    }

    fn step(&self, prompt: &[TokenId], prefix: &[TokenId], prior_state: Option<&OpaqueState>) -> Result<StepOutput> {
        (**self).step(prompt, prefix, prior_state)
    }

    fn step_batch(&self, requests: &[StepRequest<'_>]) -> Result<Vec<StepOutput>> {
        (**self).step_batch(requests)
    }

    fn prompt_embedding(&self, prompt: &[TokenId]) -> Result<Vec<f64>> {
        (**self).prompt_embedding(prompt)
    }
}

impl<M: LogitModel + ?Sized> LogitModel for Box<M> {
    fn spec(&self) -> &ModelSpec {
        (**self).spec()
    }

    fn step(&self, prompt: &[TokenId], prefix: &[TokenId], prior_state: Option<&OpaqueState>) -> Result<StepOutput> {
        (**self).step(prompt, prefix, prior_state)
    }

    fn step_batch(&self, requests: &[StepRequest<'_>]) -> Result<Vec<StepOutput>> {
        (**self).step_batch(requests)
    }

    fn prompt_embedding(&self, prompt: &[TokenId]) -> Result<Vec<f64>> {
        (**self).prompt_embedding(prompt)
    }
}

/// Wraps a model and counts forward steps and batched calls.
#[derive(Debug)]
pub struct CountingModel<M> {
    inner: M,
    steps: AtomicUsize,
    batches: AtomicUsize,
}

impl<M: LogitModel> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        CountingModel {
            inner,
            steps: AtomicUsize::new(0),
            batches: AtomicUsize::new(0),
        }
    }

    /// Total single positions evaluated, including those inside batches.
    pub fn steps(&self) -> usize {
        self.steps.load(Ordering::Relaxed)
    }

    pub fn batches(&self) -> usize {
        self.batches.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.steps.store(0, Ordering::Relaxed);
        self.batches.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: LogitModel> LogitModel for CountingModel<M> {
    fn spec(&self) -> &ModelSpec {
        self.inner.spec()
    }

    fn step(&self, prompt: &[TokenId], prefix: &[TokenId], prior_state: Option<&OpaqueState>) -> Result<StepOutput> {
        self.steps.fetch_add(1, Ordering::Relaxed);
        self.inner.step(prompt, prefix, prior_state)
    }

    fn step_batch(&self, requests: &[StepRequest<'_>]) -> Result<Vec<StepOutput>> {
        self.batches.fetch_add(1, Ordering::Relaxed);
        self.steps.fetch_add(requests.len(), Ordering::Relaxed);
        self.inner.step_batch(requests)
    }
}
