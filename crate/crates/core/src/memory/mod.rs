//! Response memory: cached generations for one prompt, prefix matching,
//! deduplication, non-exact-answer token selection and logit annealing.

mod dump;

use std::collections::HashMap;

pub use dump::{compress_logits, dump_memory, expand_logits, restore_memory, CompressedLogits, DumpOptions, DUMP_FORMAT, DUMP_VERSION};

use crate::error::{Error, Result};
use crate::model::{OpaqueState, TokenId, TokenSeq};

/// Responses shorter than this are never annealed: they are already bare answers.
pub const SHORT_ANSWER_MIN: usize = 10;

/// One cached generation.
///
/// `hiddens[0]` is the prompt's last-token embedding and `hiddens[i + 1]`
/// belongs to response token `i`. Step `i` (the logits that produced token
/// `i`) reads its hidden from `hiddens[i]`, the last input position.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMemory {
    tokens: TokenSeq,
    logits: Vec<Vec<f64>>,
    states: Vec<OpaqueState>,
    hiddens: Vec<Vec<f64>>,
    /// Product of all annealing factors applied to each step.
    scales: Vec<f64>,
    anneal_count: u32,
    nonexact: Option<Vec<usize>>,
}

impl ResponseMemory {
    pub fn new(
        tokens: TokenSeq,
        logits: Vec<Vec<f64>>,
        states: Vec<OpaqueState>,
        hiddens: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = tokens.len();
        if n == 0 {
            return Err(Error::input("response memory needs at least one token"));
        }
        if logits.len() != n || states.len() != n || hiddens.len() != n + 1 {
            return Err(Error::input(format!(
                "length mismatch: {n} tokens, {} logit rows, {} states, {} hiddens (expected {})",
                logits.len(),
                states.len(),
                hiddens.len(),
                n + 1
            )));
        }
        let width = logits[0].len();
        if logits.iter().any(|row| row.len() != width) {
            return Err(Error::input("logit rows differ in width"));
        }
        if tokens.iter().any(|&t| t as usize >= width) {
            return Err(Error::input("cached token outside the logit vocabulary"));
        }
        let dim = hiddens[0].len();
        if hiddens.iter().any(|h| h.len() != dim) {
            return Err(Error::input("hidden rows differ in width"));
        }
        Ok(ResponseMemory {
            tokens,
            logits,
            states,
            hiddens,
            scales: vec![1.0; n],
            anneal_count: 0,
            nonexact: None,
        })
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Current (possibly annealed) logits of step `i`.
    pub fn logits(&self, i: usize) -> &[f64] {
        &self.logits[i]
    }

    pub fn logits_per_step(&self) -> &[Vec<f64>] {
        &self.logits
    }

    pub fn state(&self, i: usize) -> &OpaqueState {
        &self.states[i]
    }

    pub fn states(&self) -> &[OpaqueState] {
        &self.states
    }

    pub fn hiddens(&self) -> &[Vec<f64>] {
        &self.hiddens
    }

    pub fn prompt_hidden(&self) -> &[f64] {
        &self.hiddens[0]
    }

    /// Hidden embedding of the final response token.
    pub fn last_hidden(&self) -> &[f64] {
        &self.hiddens[self.tokens.len()]
    }

    /// Cumulative annealing factor applied to step `i` (1.0 when untouched).
    pub fn scale(&self, i: usize) -> f64 {
        self.scales[i]
    }

    pub fn anneal_count(&self) -> u32 {
        self.anneal_count
    }

    pub fn nonexact_set(&self) -> Option<&[usize]> {
        self.nonexact.as_deref()
    }

    /// Whether this entry starts with `prefix` and has at least one more token.
    pub fn extends(&self, prefix: &[TokenId]) -> bool {
        self.tokens.len() > prefix.len() && self.tokens.starts_with(prefix)
    }

    /// Non-exact-answer positions: `I_i = -cos(h(x_-1), h(y_i))` and the set
    /// `{ i : I_i < (alpha / L) * sum_j I_j }`. Cached after the first call.
    pub fn select_nonexact(&mut self, prompt_embedding: &[f64], alpha: f64) -> Result<&[usize]> {
        if self.nonexact.is_none() {
            let set = nonexact_positions(prompt_embedding, &self.hiddens[1..], alpha)?;
            self.nonexact = Some(set);
        }
        Ok(self.nonexact.as_deref().unwrap())
    }

    /// Scale the logits of every selected step by `eta`, in place.
    pub fn anneal(&mut self, eta: f64) -> Result<()> {
        check_eta(eta)?;
        let set = self
            .nonexact
            .clone()
            .ok_or_else(|| Error::input("anneal requires the non-exact set to be selected first"))?;
        for i in set {
            self.scale_step(i, eta);
        }
        self.anneal_count += 1;
        Ok(())
    }

    /// Anneal a single step if it is in the selected set; returns whether it was scaled.
    pub fn anneal_step(&mut self, i: usize, eta: f64) -> Result<bool> {
        check_eta(eta)?;
        let selected = self
            .nonexact
            .as_ref()
            .ok_or_else(|| Error::input("anneal requires the non-exact set to be selected first"))?
            .binary_search(&i)
            .is_ok();
        if selected {
            self.scale_step(i, eta);
            self.anneal_count += 1;
        }
        Ok(selected)
    }

    fn scale_step(&mut self, i: usize, eta: f64) {
        self.logits[i].iter_mut().for_each(|s| *s *= eta);
        self.scales[i] *= eta;
    }

    pub(crate) fn restore_parts(&mut self, scales: Vec<f64>, anneal_count: u32, nonexact: Option<Vec<usize>>) -> Result<()> {
        if scales.len() != self.tokens.len() {
            return Err(Error::Format("scales length does not match token count".into()));
        }
        self.scales = scales;
        self.anneal_count = anneal_count;
        self.nonexact = nonexact;
        Ok(())
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 1.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("annealing speed must exceed 1, got {eta}")))
    }
}

/// Cosine similarity; errors when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::input("cosine of vectors with different lengths"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    Ok(dot / (na * nb))
}

/// Selection rule on raw importance scores. The mean includes negative
/// scores as-is, so when the scores sum to a positive value a larger
/// `alpha` loosens rather than tightens the threshold.
pub fn nonexact_positions(prompt_embedding: &[f64], token_hiddens: &[Vec<f64>], alpha: f64) -> Result<Vec<usize>> {
    if !(alpha > 0.0) {
        return Err(Error::param(format!("alpha must be positive, got {alpha}")));
    }
    if token_hiddens.is_empty() {
        return Ok(Vec::new());
    }
    let importance = token_hiddens
        .iter()
        .map(|h| cosine(prompt_embedding, h).map(|c| -c))
        .collect::<Result<Vec<f64>>>()?;
    let threshold = alpha / importance.len() as f64 * importance.iter().sum::<f64>();
    Ok(importance
        .iter()
        .enumerate()
        .filter(|(_, &s)| s < threshold)
        .map(|(i, _)| i)
        .collect())
}

/// A successful prefix match: entry `entry` supplies step `position`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrefixMatch {
    pub entry: usize,
    pub position: usize,
}

/// Ordered, deduplicated cached responses for one prompt.
#[derive(Debug, Clone, Default)]
pub struct MemoryList {
    prompt: TokenSeq,
    entries: Vec<ResponseMemory>,
    index: HashMap<TokenSeq, usize>,
}

impl MemoryList {
    pub fn new(prompt: TokenSeq) -> Self {
        MemoryList {
            prompt,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.prompt
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ResponseMemory] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &ResponseMemory {
        &self.entries[i]
    }

    pub fn entry_mut(&mut self, i: usize) -> &mut ResponseMemory {
        &mut self.entries[i]
    }

    /// Index of the entry with exactly these tokens.
    pub fn position_of(&self, tokens: &[TokenId]) -> Option<usize> {
        self.index.get(tokens).copied()
    }

    /// First entry (in insertion order) that starts with `prefix` and extends it.
    pub fn match_prefix(&self, prefix: &[TokenId]) -> Option<PrefixMatch> {
        self.match_prefix_from(prefix, 0)
    }

    /// As [`match_prefix`](Self::match_prefix), skipping entries before `start`.
    /// Callers pass a cursor only when they know earlier entries cannot match.
    pub fn match_prefix_from(&self, prefix: &[TokenId], start: usize) -> Option<PrefixMatch> {
        self.entries
            .iter()
            .enumerate()
            .skip(start)
            .find(|(_, e)| e.extends(prefix))
            .map(|(entry, _)| PrefixMatch {
                entry,
                position: prefix.len(),
            })
    }

    /// Append `candidate` unless an entry with the same tokens exists.
    pub fn insert(&mut self, candidate: ResponseMemory) -> Result<bool> {
        if let Some(first) = self.entries.first() {
            if first.logits[0].len() != candidate.logits[0].len() || first.hiddens[0].len() != candidate.hiddens[0].len() {
                return Err(Error::input("candidate shape differs from existing entries"));
            }
        }
        if self.index.contains_key(&candidate.tokens) {
            return Ok(false);
        }
        self.index.insert(candidate.tokens.clone(), self.entries.len());
        self.entries.push(candidate);
        Ok(true)
    }

    /// Approximate bytes held by cached logits, hiddens and states.
    pub fn footprint_bytes(&self) -> usize {
        self.entries
            .iter()
            .map(|e| {
                let floats: usize = e.logits.iter().map(Vec::len).sum::<usize>() + e.hiddens.iter().map(Vec::len).sum::<usize>();
                floats * 8 + e.states.iter().map(|s| s.0.len()).sum::<usize>() + e.tokens.len() * 4
            })
            .sum()
    }
}
