//! Batch-wise generation with reusing masks.
//!
//! Each slot holds one prompt and its own memory; response `r` of every slot
//! is produced in round `r`. Within a round the runner advances in ticks. A
//! tick either scans: every active slot compares its prefix with its current
//! reference entry and either takes the cached step (Update) or moves to the
//! next entry (Next); or, once every active slot has run out of reference
//! entries, it issues one batched forward for all of them.

use super::builder::ResponseBuilder;
use super::{GenerationConfig, GenerationOutput, PromptGeneration};
use crate::decoding::RngStream;
use crate::error::{Error, Result};
use crate::memory::MemoryList;
use crate::model::{LogitModel, StepRequest, TokenSeq};

/// Reference batch entry of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefCursor {
    Entry(usize),
    /// Every memory entry has been tried for the current position.
    Exhausted,
}

/// What one call to [`BatchRunner::tick`] did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tick {
    /// Slots that took a cached step and slots that moved to the next entry.
    Scan { updated: Vec<usize>, advanced: Vec<usize> },
    /// One batched forward over these slots.
    Forward { slots: Vec<usize> },
    /// Every slot finished the given round.
    RoundComplete { round: usize },
    Finished,
}

/// Masks and reference cursors, one row per slot.
#[derive(Debug, Clone)]
pub struct BatchState {
    prompt_lens: Vec<usize>,
    reference: Vec<RefCursor>,
    attention: Vec<Vec<bool>>,
    reusing: Vec<Vec<bool>>,
}

impl BatchState {
    fn new(prompts: &[TokenSeq], max_len: usize) -> Self {
        let prompt_lens: Vec<usize> = prompts.iter().map(Vec::len).collect();
        let attention = prompt_lens
            .iter()
            .map(|&p| (0..p + max_len).map(|j| j < p).collect())
            .collect();
        let reusing = prompt_lens.iter().map(|&p| vec![false; p + max_len]).collect();
        BatchState {
            reference: vec![RefCursor::Exhausted; prompts.len()],
            prompt_lens,
            attention,
            reusing,
        }
    }

    fn reset_slot(&mut self, slot: usize) {
        let p = self.prompt_lens[slot];
        for (j, a) in self.attention[slot].iter_mut().enumerate() {
            *a = j < p;
        }
        self.reusing[slot].fill(false);
    }

    pub fn slots(&self) -> usize {
        self.reference.len()
    }

    pub fn reference(&self, slot: usize) -> RefCursor {
        self.reference[slot]
    }

    /// Attention mask row: prompt positions followed by generated positions.
    pub fn attention(&self, slot: usize) -> &[bool] {
        &self.attention[slot]
    }

    /// Reusing mask row, same layout as [`BatchState::attention`].
    pub fn reusing(&self, slot: usize) -> &[bool] {
        &self.reusing[slot]
    }

    pub fn reusing_is_zero(&self, slot: usize) -> bool {
        !self.reusing[slot].iter().any(|&b| b)
    }

    /// μ_r ≤ μ_a elementwise for every slot.
    pub fn masks_consistent(&self) -> bool {
        self.attention
            .iter()
            .zip(&self.reusing)
            .all(|(a, r)| a.iter().zip(r).all(|(&a, &r)| a || !r))
    }

    fn update(&mut self, slot: usize, position: usize) {
        let j = self.prompt_lens[slot] + position;
        self.reusing[slot].copy_from_slice(&self.attention[slot]);
        self.reusing[slot][j] = true;
        self.attention[slot].copy_from_slice(&self.reusing[slot]);
    }

    fn fail(&mut self, slot: usize) {
        self.reusing[slot].fill(false);
    }

    fn forwarded(&mut self, slot: usize, position: usize) {
        let j = self.prompt_lens[slot] + position;
        self.attention[slot][j] = true;
    }
}

pub struct BatchRunner<'m, M: LogitModel + ?Sized> {
    model: &'m M,
    config: GenerationConfig,
    prompts: Vec<TokenSeq>,
    n: usize,
    round: usize,
    memories: Vec<MemoryList>,
    builders: Vec<Option<ResponseBuilder>>,
    outputs: Vec<Vec<GenerationOutput>>,
    state: BatchState,
}

impl<'m, M: LogitModel + ?Sized> BatchRunner<'m, M> {
    pub fn new(model: &'m M, prompts: Vec<TokenSeq>, n: usize, config: &GenerationConfig) -> Result<Self> {
        config.validate()?;
        if n == 0 {
            return Err(Error::input("number of responses must be at least 1"));
        }
        if prompts.is_empty() {
            return Err(Error::input("batch needs at least one prompt"));
        }
        for p in &prompts {
            model.spec().check_tokens(p)?;
        }
        let max_len = config.max_len(model.spec());
        let mut runner = BatchRunner {
            model,
            config: config.clone(),
            memories: prompts.iter().map(|p| MemoryList::new(p.clone())).collect(),
            builders: Vec::new(),
            outputs: vec![Vec::with_capacity(n); prompts.len()],
            state: BatchState::new(&prompts, max_len),
            prompts,
            n,
            round: 0,
        };
        runner.start_round();
        Ok(runner)
    }

    pub fn state(&self) -> &BatchState {
        &self.state
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn memory(&self, slot: usize) -> &MemoryList {
        &self.memories[slot]
    }

    /// Tokens generated so far in the current round.
    pub fn prefix(&self, slot: usize) -> Option<&[u32]> {
        self.builders.get(slot)?.as_ref().map(|b| b.prefix())
    }

    pub fn is_finished(&self) -> bool {
        self.round >= self.n
    }

    fn first_reference(&self, slot: usize) -> RefCursor {
        if self.config.selective_inference && !self.memories[slot].is_empty() {
            RefCursor::Entry(0)
        } else {
            RefCursor::Exhausted
        }
    }

    fn start_round(&mut self) {
        let spec = self.model.spec();
        let max_len = self.config.max_len(self.model.spec());
        self.builders = (0..self.prompts.len())
            .map(|slot| {
                let stream = RngStream::new(self.config.sampling.seed, slot as u64, self.round as u64);
                Some(ResponseBuilder::new(stream, max_len, spec.eos_token))
            })
            .collect();
        for slot in 0..self.prompts.len() {
            self.state.reset_slot(slot);
            self.state.reference[slot] = self.first_reference(slot);
        }
    }

    fn active(&self) -> Vec<usize> {
        (0..self.builders.len())
            .filter(|&s| self.builders[s].as_ref().is_some_and(|b| !b.is_done()))
            .collect()
    }

    pub fn tick(&mut self) -> Result<Tick> {
        if self.is_finished() {
            return Ok(Tick::Finished);
        }
        let active = self.active();
        if active.is_empty() {
            return self.complete_round();
        }
        let scanning: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&s| self.state.reference[s] != RefCursor::Exhausted)
            .collect();
        if scanning.is_empty() {
            return self.forward(active);
        }
        let mut updated = Vec::new();
        let mut advanced = Vec::new();
        for slot in scanning {
            let RefCursor::Entry(k) = self.state.reference[slot] else {
                unreachable!()
            };
            let builder = self.builders[slot].as_mut().expect("active slot");
            let memory = &mut self.memories[slot];
            if memory.entry(k).extends(builder.prefix()) {
                let position = builder.prefix().len();
                builder.reuse_from(memory, k, &self.config)?;
                self.state.update(slot, position);
                updated.push(slot);
            } else {
                self.state.fail(slot);
                self.state.reference[slot] = if k + 1 < memory.len() {
                    RefCursor::Entry(k + 1)
                } else {
                    RefCursor::Exhausted
                };
                advanced.push(slot);
            }
        }
        Ok(Tick::Scan { updated, advanced })
    }

    fn forward(&mut self, slots: Vec<usize>) -> Result<Tick> {
        let outs = {
            let requests: Vec<StepRequest<'_>> = slots
                .iter()
                .map(|&s| {
                    let b = self.builders[s].as_ref().expect("active slot");
                    StepRequest {
                        prompt: &self.prompts[s],
                        prefix: b.prefix(),
                        prior_state: b.current_state(),
                    }
                })
                .collect();
            self.model.step_batch(&requests)?
        };
        if outs.len() != slots.len() {
            return Err(Error::Protocol(format!(
                "batched forward returned {} outputs for {} requests",
                outs.len(),
                slots.len()
            )));
        }
        for (&slot, out) in slots.iter().zip(outs) {
            out.validate(self.model.spec())?;
            let builder = self.builders[slot].as_mut().expect("active slot");
            let position = builder.prefix().len();
            builder.apply_forward(out, &self.config)?;
            self.state.forwarded(slot, position);
            self.state.reference[slot] = self.first_reference(slot);
        }
        Ok(Tick::Forward { slots })
    }

    fn complete_round(&mut self) -> Result<Tick> {
        let builders: Vec<ResponseBuilder> = self.builders.iter_mut().map(|b| b.take().expect("slot builder")).collect();
        let need: Vec<usize> = (0..builders.len())
            .filter(|&s| builders[s].needs_trailing_hidden(&self.memories[s], &self.config))
            .collect();
        let mut trailing: Vec<Option<Vec<f64>>> = vec![None; builders.len()];
        if !need.is_empty() {
            let requests: Vec<StepRequest<'_>> = need
                .iter()
                .map(|&s| StepRequest {
                    prompt: &self.prompts[s],
                    prefix: builders[s].prefix(),
                    prior_state: builders[s].current_state(),
                })
                .collect();
            let outs = self.model.step_batch(&requests)?;
            if outs.len() != need.len() {
                return Err(Error::Protocol("batched forward returned the wrong number of outputs".into()));
            }
            for (&s, out) in need.iter().zip(outs) {
                out.validate(self.model.spec())?;
                trailing[s] = Some(out.hidden);
            }
        }
        for (slot, (builder, hidden)) in builders.into_iter().zip(trailing).enumerate() {
            let output = builder.finish(&mut self.memories[slot], &self.config, hidden)?;
            self.outputs[slot].push(output);
        }
        let round = self.round;
        self.round += 1;
        if !self.is_finished() {
            self.start_round();
        }
        Ok(Tick::RoundComplete { round })
    }

    /// Tick until every round is complete.
    pub fn run(mut self) -> Result<Vec<PromptGeneration>> {
        while self.tick()? != Tick::Finished {}
        Ok(self.into_generations())
    }

    fn into_generations(self) -> Vec<PromptGeneration> {
        self.prompts
            .into_iter()
            .zip(self.memories)
            .zip(self.outputs)
            .map(|((prompt, memory), outputs)| PromptGeneration { prompt, outputs, memory })
            .collect()
    }
}

/// Generate `n` responses for every prompt, one prompt per batch slot.
/// Slot `i` uses the rng streams of prompt index `i`, so results equal
/// [`super::generate_n_at`] per slot.
pub fn generate_batch<M: LogitModel + ?Sized>(
    model: &M,
    prompts: &[TokenSeq],
    n: usize,
    config: &GenerationConfig,
) -> Result<Vec<PromptGeneration>> {
    BatchRunner::new(model, prompts.to_vec(), n, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_toy_model, CountingModel, ModelSpec, TableFallback, ToyModelKind};
    use crate::pipeline::generate_n_at;
    use crate::decoding::SamplingConfig;

    fn one_hot() -> crate::model::ToyModel {
        build_toy_model(
            ModelSpec::new(9, 4, 0, 16).unwrap(),
            ToyModelKind::Table {
                entries: vec![],
                fallback: TableFallback::OneHot,
            },
        )
        .unwrap()
    }

    #[test]
    fn deterministic_slots_reuse_four_fifths() {
        let prompts: Vec<TokenSeq> = vec![vec![1], vec![2, 3], vec![4], vec![5, 6, 7]];
        let out = generate_batch(&one_hot(), &prompts, 5, &GenerationConfig::selective(0.8, 3)).unwrap();
        for g in &out {
            assert_eq!(g.reuse_ratio().unwrap(), 0.8);
        }
    }

    #[test]
    fn single_slot_equals_sequential() {
        let model = build_toy_model(ModelSpec::new(7, 3, 0, 20).unwrap(), ToyModelKind::Peaked { p_top: 0.8, seed: 2 }).unwrap();
        let cfg = GenerationConfig::new(SamplingConfig::default());
        let batch = generate_batch(&model, &[vec![3, 4]], 6, &cfg).unwrap();
        let seq = generate_n_at(&model, &[3, 4], 0, 6, &cfg).unwrap();
        for (a, b) in batch[0].outputs.iter().zip(&seq.outputs) {
            assert_eq!(a.response, b.response);
            assert_eq!(a.trace, b.trace);
        }
    }

    #[test]
    fn forwards_are_batched() {
        let model = CountingModel::new(one_hot());
        let prompts: Vec<TokenSeq> = vec![vec![1], vec![2]];
        let cfg = GenerationConfig::baseline(0.8, 0);
        let out = generate_batch(&model, &prompts, 1, &cfg).unwrap();
        let longest = out.iter().map(|g| g.outputs[0].response.len()).max().unwrap();
        // one batch per generated position plus one for the trailing hiddens
        assert_eq!(model.batches(), longest + 1);
    }

    #[test]
    fn masks_stay_consistent() {
        let model = build_toy_model(ModelSpec::new(6, 3, 0, 12).unwrap(), ToyModelKind::Peaked { p_top: 0.6, seed: 9 }).unwrap();
        let prompts: Vec<TokenSeq> = vec![vec![1], vec![2], vec![3]];
        let mut runner = BatchRunner::new(&model, prompts, 4, &GenerationConfig::new(SamplingConfig::default())).unwrap();
        loop {
            let t = runner.tick().unwrap();
            assert!(runner.state().masks_consistent());
            for s in 0..runner.state().slots() {
                if runner.state().reference(s) == RefCursor::Exhausted && matches!(t, Tick::Scan { .. }) {
                    assert!(runner.state().reusing_is_zero(s));
                }
            }
            if t == Tick::Finished {
                break;
            }
        }
    }
}
