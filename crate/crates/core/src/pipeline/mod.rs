//! Multi-response generation with selective inference.
//!
//! For each step of a response, the memory is consulted first: if a cached
//! response extends the current prefix, its logits, state and hidden are
//! reused (and the cached token emitted outright when hard decoding applies);
//! otherwise the model runs one forward step. Finished responses join the
//! memory; a response identical to a cached one anneals that entry instead.

mod batch;
mod builder;
mod trace;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use batch::{generate_batch, BatchRunner, BatchState, RefCursor, Tick};
pub use trace::{reuse_ratio, GenerationTrace, Provenance, TokenRecord, TraceTotals};

use builder::ResponseBuilder;

use crate::decoding::{argmax, RngStream, SamplingConfig};
use crate::error::{Error, Result};
use crate::memory::{MemoryList, SHORT_ANSWER_MIN};
use crate::model::{LogitModel, ModelSpec, TokenId, TokenSeq};

/// When cached logits of non-exact-answer tokens are annealed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnealTrigger {
    /// After a finished response turns out identical to a cached entry.
    #[default]
    OnDuplicate,
    /// Every time a cached step is reused.
    OnSkip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub sampling: SamplingConfig,
    pub selective_inference: bool,
    pub anneal_trigger: AnnealTrigger,
    pub short_answer_min: usize,
    /// Overrides the model's own step cap when set.
    pub max_generation: Option<usize>,
}

impl GenerationConfig {
    /// Selective inference with hard and annealed decoding as configured in `sampling`.
    pub fn new(sampling: SamplingConfig) -> Self {
        GenerationConfig {
            sampling,
            selective_inference: true,
            anneal_trigger: AnnealTrigger::OnDuplicate,
            short_answer_min: SHORT_ANSWER_MIN,
            max_generation: None,
        }
    }

    /// Standard generation: every step is a forward pass.
    pub fn baseline(temperature: f64, seed: u64) -> Self {
        GenerationConfig {
            selective_inference: false,
            ..GenerationConfig::new(SamplingConfig::plain(temperature, seed))
        }
    }

    /// Selective inference only.
    pub fn selective(temperature: f64, seed: u64) -> Self {
        GenerationConfig::new(SamplingConfig::plain(temperature, seed))
    }

    pub fn with_max_generation(mut self, max: usize) -> Self {
        self.max_generation = Some(max);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        if !self.selective_inference {
            if self.sampling.hard_threshold.is_some() {
                return Err(Error::param("hard decoding requires selective inference"));
            }
            if self.sampling.anneal_eta.is_some() {
                return Err(Error::param("annealed decoding requires selective inference"));
            }
        }
        if self.max_generation == Some(0) {
            return Err(Error::param("max_generation must be at least 1"));
        }
        Ok(())
    }

    fn max_len(&self, spec: &ModelSpec) -> usize {
        self.max_generation.unwrap_or(spec.max_generation)
    }
}

/// What happened to a finished response in the memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryOutcome {
    Inserted(usize),
    /// Identical to entry `k`, which was annealed if annealing is enabled.
    Duplicate(usize),
    /// Selective inference is off; nothing is cached.
    NotCached,
}

#[derive(Debug, Clone)]
pub struct GenerationOutput {
    pub response: TokenSeq,
    pub trace: GenerationTrace,
    pub outcome: MemoryOutcome,
    /// Hidden embedding of the last response token.
    pub last_hidden: Vec<f64>,
}

/// All responses for one prompt.
#[derive(Debug, Clone)]
pub struct PromptGeneration {
    pub prompt: TokenSeq,
    pub outputs: Vec<GenerationOutput>,
    pub memory: MemoryList,
}

impl PromptGeneration {
    pub fn responses(&self) -> Vec<&[TokenId]> {
        self.outputs.iter().map(|o| o.response.as_slice()).collect()
    }

    pub fn traces(&self) -> impl Iterator<Item = &GenerationTrace> {
        self.outputs.iter().map(|o| &o.trace)
    }

    pub fn reuse_ratio(&self) -> Result<f64> {
        reuse_ratio(self.traces())
    }
}

/// Generate one response against `memory`, drawing randomness from `stream`.
pub fn generate_one<M: LogitModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    memory: &mut MemoryList,
    config: &GenerationConfig,
    stream: RngStream,
) -> Result<GenerationOutput> {
    config.validate()?;
    model.spec().check_tokens(prompt)?;
    let spec = model.spec();
    let mut builder = ResponseBuilder::new(stream, config.max_len(spec), spec.eos_token);
    while !builder.is_done() {
        if !builder.try_reuse(memory, config)? {
            let out = model.step(prompt, builder.prefix(), builder.current_state())?;
            out.validate(spec)?;
            builder.apply_forward(out, config)?;
        }
    }
    let trailing = if builder.needs_trailing_hidden(memory, config) {
        let out = model.step(prompt, builder.prefix(), builder.current_state())?;
        out.validate(spec)?;
        Some(out.hidden)
    } else {
        None
    };
    builder.finish(memory, config, trailing)
}

/// `n` responses for the prompt at batch position `prompt_index`, sharing one memory.
pub fn generate_n_at<M: LogitModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    prompt_index: u64,
    n: usize,
    config: &GenerationConfig,
) -> Result<PromptGeneration> {
    if n == 0 {
        return Err(Error::input("number of responses must be at least 1"));
    }
    let mut memory = MemoryList::new(prompt.to_vec());
    let outputs = (0..n)
        .map(|r| {
            let stream = RngStream::new(config.sampling.seed, prompt_index, r as u64);
            generate_one(model, prompt, &mut memory, config, stream)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PromptGeneration {
        prompt: prompt.to_vec(),
        outputs,
        memory,
    })
}

/// `n` responses for a single prompt (prompt index 0).
pub fn generate_n<M: LogitModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    n: usize,
    config: &GenerationConfig,
) -> Result<PromptGeneration> {
    generate_n_at(model, prompt, 0, n, config)
}

/// Run [`generate_n_at`] for every prompt, `parallelism` prompts at a time.
/// Output order and content do not depend on `parallelism`.
pub fn generate_prompts<M: LogitModel + ?Sized>(
    model: &M,
    prompts: &[TokenSeq],
    n: usize,
    config: &GenerationConfig,
    parallelism: usize,
) -> Result<Vec<PromptGeneration>> {
    let run = || -> Result<Vec<PromptGeneration>> {
        prompts
            .par_iter()
            .enumerate()
            .map(|(i, p)| generate_n_at(model, p, i as u64, n, config))
            .collect()
    };
    if parallelism <= 1 {
        return prompts
            .iter()
            .enumerate()
            .map(|(i, p)| generate_n_at(model, p, i as u64, n, config))
            .collect();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::param(format!("thread pool: {e}")))?
        .install(run)
}

/// Greedy (argmax) decoding with plain forward steps; returns the response
/// and the trailing hidden of its last token.
pub fn greedy_decode<M: LogitModel + ?Sized>(model: &M, prompt: &[TokenId], max_len: usize) -> Result<(TokenSeq, Vec<f64>)> {
    let spec = model.spec();
    spec.check_tokens(prompt)?;
    let mut tokens = Vec::new();
    let mut state = None;
    loop {
        let out = model.step(prompt, &tokens, state.as_ref())?;
        out.validate(spec)?;
        if tokens.last().is_some_and(|&t| t == spec.eos_token) || tokens.len() >= max_len {
            return Ok((tokens, out.hidden));
        }
        tokens.push(argmax(&out.logits));
        state = Some(out.state);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_toy_model, ModelSpec, TableFallback, ToyModelKind};

    fn one_hot(max: usize) -> crate::model::ToyModel {
        build_toy_model(
            ModelSpec::new(8, 4, 0, max).unwrap(),
            ToyModelKind::Table {
                entries: vec![],
                fallback: TableFallback::OneHot,
            },
        )
        .unwrap()
    }

    #[test]
    fn first_call_forwards_second_reuses() {
        let model = crate::model::CountingModel::new(one_hot(12));
        let config = GenerationConfig::selective(0.8, 1);
        let mut memory = MemoryList::new(vec![3]);
        let first = generate_one(&model, &[3], &mut memory, &config, RngStream::new(1, 0, 0)).unwrap();
        assert_eq!(first.trace.totals().skipped(), 0);
        assert_eq!(first.outcome, MemoryOutcome::Inserted(0));
        model.reset();
        let second = generate_one(&model, &[3], &mut memory, &config, RngStream::new(1, 0, 1)).unwrap();
        assert_eq!(second.response, first.response);
        assert_eq!(second.trace.totals().forwarded, 0);
        assert_eq!(model.steps(), 0);
        assert_eq!(second.outcome, MemoryOutcome::Duplicate(0));
        assert_eq!(second.last_hidden, first.last_hidden);
    }

    #[test]
    fn deterministic_reuse_ratio_is_nine_tenths() {
        let g = generate_n(&one_hot(20), &[1, 2], 10, &GenerationConfig::selective(0.8, 5)).unwrap();
        assert_eq!(g.reuse_ratio().unwrap(), 0.9);
        assert_eq!(g.memory.len(), 1);
        let single = generate_n(&one_hot(20), &[1, 2], 1, &GenerationConfig::selective(0.8, 5)).unwrap();
        assert_eq!(single.reuse_ratio().unwrap(), 0.0);
    }

    #[test]
    fn feature_dependencies_enforced() {
        let mut c = GenerationConfig::new(SamplingConfig::default());
        c.selective_inference = false;
        assert!(c.validate().is_err());
        assert!(GenerationConfig::baseline(0.8, 0).validate().is_ok());
        assert!(generate_n(&one_hot(4), &[1], 0, &GenerationConfig::baseline(0.8, 0)).is_err());
    }

    #[test]
    fn greedy_matches_one_hot_sampling() {
        let model = one_hot(16);
        let (greedy, _) = greedy_decode(&model, &[4], 16).unwrap();
        let g = generate_n(&model, &[4], 1, &GenerationConfig::baseline(0.8, 0)).unwrap();
        assert_eq!(greedy, g.outputs[0].response);
    }

    #[test]
    fn parallel_matches_sequential() {
        let model = build_toy_model(ModelSpec::new(6, 3, 0, 12).unwrap(), ToyModelKind::Peaked { p_top: 0.7, seed: 4 }).unwrap();
        let prompts: Vec<TokenSeq> = (1..5).map(|i| vec![i, i + 1]).collect();
        let cfg = GenerationConfig::new(SamplingConfig::default());
        let a = generate_prompts(&model, &prompts, 5, &cfg, 1).unwrap();
        let b = generate_prompts(&model, &prompts, 5, &cfg, 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.responses(), y.responses());
        }
    }
}
