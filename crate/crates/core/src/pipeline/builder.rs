//! The per-response step machine shared by sequential and batch generation.

use super::trace::{GenerationTrace, Provenance, TokenRecord};
use super::{AnnealTrigger, GenerationConfig, GenerationOutput, MemoryOutcome};
use crate::decoding::{hard_decode_check, sample_token, temperature_softmax, truncate_distribution, RngStream};
use crate::error::Result;
use crate::memory::{MemoryList, ResponseMemory};
use crate::model::{OpaqueState, StepOutput, TokenId};

pub(crate) struct ResponseBuilder {
    tokens: Vec<TokenId>,
    logits: Vec<Vec<f64>>,
    scales: Vec<f64>,
    states: Vec<OpaqueState>,
    hiddens: Vec<Vec<f64>>,
    trace: GenerationTrace,
    stream: RngStream,
    max_len: usize,
    eos: TokenId,
    done: bool,
    /// First memory entry worth checking at the next position.
    pub(crate) cursor: usize,
}

impl ResponseBuilder {
    pub(crate) fn new(stream: RngStream, max_len: usize, eos: TokenId) -> Self {
        ResponseBuilder {
            tokens: Vec::new(),
            logits: Vec::new(),
            scales: Vec::new(),
            states: Vec::new(),
            hiddens: Vec::new(),
            trace: GenerationTrace::default(),
            stream,
            max_len,
            eos,
            done: false,
            cursor: 0,
        }
    }

    pub(crate) fn prefix(&self) -> &[TokenId] {
        &self.tokens
    }

    pub(crate) fn is_done(&self) -> bool {
        self.done
    }

    /// State covering the current prefix, to pass as `prior_state` to the next forward.
    pub(crate) fn current_state(&self) -> Option<&OpaqueState> {
        self.states.last()
    }

    /// Try to take the next step from memory, scanning from the cursor.
    pub(crate) fn try_reuse(&mut self, memory: &mut MemoryList, config: &GenerationConfig) -> Result<bool> {
        if !config.selective_inference {
            return Ok(false);
        }
        match memory.match_prefix_from(&self.tokens, self.cursor) {
            Some(hit) => {
                self.reuse_from(memory, hit.entry, config)?;
                Ok(true)
            }
            None => Ok(false),
        }
    }

    /// Take the next step from entry `k`, which must extend the current prefix.
    pub(crate) fn reuse_from(&mut self, memory: &mut MemoryList, k: usize, config: &GenerationConfig) -> Result<()> {
        let i = self.tokens.len();
        debug_assert!(memory.entry(k).extends(&self.tokens));
        self.cursor = k;
        if let (AnnealTrigger::OnSkip, Some(eta)) = (config.anneal_trigger, config.sampling.anneal_eta) {
            let entry = memory.entry_mut(k);
            if entry.len() >= config.short_answer_min {
                let prompt_hidden = entry.prompt_hidden().to_vec();
                entry.select_nonexact(&prompt_hidden, config.sampling.alpha)?;
                entry.anneal_step(i, eta)?;
            }
        }
        let entry = memory.entry(k);
        let logits = entry.logits(i).to_vec();
        let scale = entry.scale(i);
        let cached_token = entry.tokens()[i];
        let state = entry.state(i).clone();
        let hidden = entry.hiddens()[i].clone();

        let probs = temperature_softmax(&logits, config.sampling.temperature)?;
        let hard = config
            .sampling
            .hard_threshold
            .is_some_and(|gamma| hard_decode_check(&probs, cached_token, gamma));
        let (token, provenance) = if hard {
            (cached_token, Provenance::HardDecoded)
        } else {
            (self.draw(&probs, i, config)?, Provenance::Reused)
        };
        let p_post = probs[token as usize];
        let p_pre = if scale == 1.0 {
            p_post
        } else {
            let raw: Vec<f64> = logits.iter().map(|s| s / scale).collect();
            temperature_softmax(&raw, config.sampling.temperature)?[token as usize]
        };
        self.push(token, logits, scale, state, hidden, provenance, Some(k), p_pre, p_post);
        Ok(())
    }

    /// Take the next step from a fresh forward output.
    pub(crate) fn apply_forward(&mut self, out: StepOutput, config: &GenerationConfig) -> Result<()> {
        let i = self.tokens.len();
        let probs = temperature_softmax(&out.logits, config.sampling.temperature)?;
        let token = self.draw(&probs, i, config)?;
        let p = probs[token as usize];
        self.push(token, out.logits, 1.0, out.state, out.hidden, Provenance::Forwarded, None, p, p);
        self.cursor = 0;
        Ok(())
    }

    fn draw(&mut self, probs: &[f64], step: usize, config: &GenerationConfig) -> Result<TokenId> {
        let u = self.stream.uniform_at(step);
        let filtered = truncate_distribution(probs, config.sampling.top_k, config.sampling.top_p);
        sample_token(&filtered, u)
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        token: TokenId,
        logits: Vec<f64>,
        scale: f64,
        state: OpaqueState,
        hidden: Vec<f64>,
        provenance: Provenance,
        memory_index: Option<usize>,
        p_pre: f64,
        p_post: f64,
    ) {
        self.tokens.push(token);
        self.logits.push(logits);
        self.scales.push(scale);
        self.states.push(state);
        self.hiddens.push(hidden);
        self.trace.records.push(TokenRecord {
            token,
            provenance,
            memory_index,
            p_pre,
            p_post,
        });
        if token == self.eos {
            self.done = true;
        } else if self.tokens.len() >= self.max_len {
            self.done = true;
            self.trace.truncated = true;
        }
    }

    /// Whether completing this response needs one more forward for the trailing hidden.
    pub(crate) fn needs_trailing_hidden(&self, memory: &MemoryList, config: &GenerationConfig) -> bool {
        !(config.selective_inference && memory.position_of(&self.tokens).is_some())
    }

    /// Insert into memory (or anneal the duplicate) and emit the output.
    pub(crate) fn finish(
        mut self,
        memory: &mut MemoryList,
        config: &GenerationConfig,
        trailing_hidden: Option<Vec<f64>>,
    ) -> Result<GenerationOutput> {
        debug_assert!(self.done);
        if config.selective_inference {
            if let Some(k) = memory.position_of(&self.tokens) {
                let entry = memory.entry_mut(k);
                if let (AnnealTrigger::OnDuplicate, Some(eta)) = (config.anneal_trigger, config.sampling.anneal_eta) {
                    if entry.len() >= config.short_answer_min {
                        let prompt_hidden = entry.prompt_hidden().to_vec();
                        entry.select_nonexact(&prompt_hidden, config.sampling.alpha)?;
                        entry.anneal(eta)?;
                    }
                }
                return Ok(GenerationOutput {
                    last_hidden: entry.last_hidden().to_vec(),
                    response: self.tokens,
                    trace: self.trace,
                    outcome: MemoryOutcome::Duplicate(k),
                });
            }
        }
        let trailing = trailing_hidden.expect("trailing hidden required for a new response");
        self.trace.finalize_forwards = 1;
        self.hiddens.push(trailing.clone());
        let response = self.tokens.clone();
        let outcome = if config.selective_inference {
            let mut entry = ResponseMemory::new(self.tokens, self.logits, self.states, self.hiddens)?;
            entry.restore_parts(self.scales, 0, None)?;
            memory.insert(entry)?;
            MemoryOutcome::Inserted(memory.len() - 1)
        } else {
            MemoryOutcome::NotCached
        };
        Ok(GenerationOutput {
            response,
            trace: self.trace,
            outcome,
            last_hidden: trailing,
        })
    }
}
