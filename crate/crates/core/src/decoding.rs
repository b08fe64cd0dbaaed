//! Temperature sampling, hard decoding and the seeded randomness contract.
//!
//! Each response owns an [`RngStream`]: a ChaCha12 generator keyed by the run
//! seed, with the ChaCha stream id derived from `(prompt index, response
//! index)`. The uniform variate for generation step `k` always lives at word
//! position `2k` of that stream, so reusing, hard-decoding or skipping a step
//! never shifts the randomness any later step sees.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{mix, splitmix64};
use crate::model::TokenId;

/// Sampling hyperparameters. Defaults follow the reference configuration:
/// `T = 0.8`, `gamma = 0.8`, `eta = 1.4`, `alpha = 0.9`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub temperature: f64,
    /// Hard-decoding confidence threshold; `None` disables hard decoding.
    pub hard_threshold: Option<f64>,
    /// Annealing speed; `None` disables annealed decoding.
    pub anneal_eta: Option<f64>,
    /// Non-exact-answer selection threshold.
    pub alpha: f64,
    pub seed: u64,
    pub top_k: Option<usize>,
    pub top_p: Option<f64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            temperature: 0.8,
            hard_threshold: Some(0.8),
            anneal_eta: Some(1.4),
            alpha: 0.9,
            seed: 0,
            top_k: None,
            top_p: None,
        }
    }
}

impl SamplingConfig {
    /// Plain temperature sampling with hard and annealed decoding switched off.
    pub fn plain(temperature: f64, seed: u64) -> Self {
        SamplingConfig {
            temperature,
            hard_threshold: None,
            anneal_eta: None,
            seed,
            ..SamplingConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::param(format!("temperature must be positive, got {}", self.temperature)));
        }
        if let Some(g) = self.hard_threshold {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::param(format!("hard_threshold must lie in (0, 1], got {g}")));
            }
        }
        if let Some(eta) = self.anneal_eta {
            if !(eta > 1.0 && eta.is_finite()) {
                return Err(Error::param(format!("anneal_eta must exceed 1, got {eta}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.top_k == Some(0) {
            return Err(Error::param("top_k must be at least 1"));
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::param(format!("top_p must lie in (0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// `softmax(logits / T)`, max-subtracted.
pub fn temperature_softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::param(format!("temperature must be positive, got {temperature}")));
    }
    if logits.is_empty() {
        return Err(Error::input("softmax of an empty logit vector"));
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::input("logits contain NaN or Inf"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&s| ((s - max) / temperature).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// Index of the largest entry; ties go to the lowest token id.
pub fn argmax(values: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best as TokenId
}

fn check_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::input("empty distribution"));
    }
    if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::input("distribution has negative or non-finite entries"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!("distribution sums to {total}, not 1")));
    }
    Ok(())
}

/// Inverse-CDF sampling in ascending token-id order for a uniform `u` in `[0, 1)`.
pub fn sample_token(probs: &[f64], u: f64) -> Result<TokenId> {
    check_distribution(probs)?;
    if !(0.0..1.0).contains(&u) {
        return Err(Error::input(format!("uniform variate {u} outside [0, 1)")));
    }
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cumulative += p;
            last_positive = i;
            if u < cumulative {
                return Ok(i as TokenId);
            }
        }
    }
    // rounding left the total just under u
    Ok(last_positive as TokenId)
}

/// True iff the distribution is confident (`max > gamma`) and the cached token is its argmax.
pub fn hard_decode_check(probs: &[f64], cached_token: TokenId, gamma: f64) -> bool {
    if probs.is_empty() {
        return false;
    }
    let top = argmax(probs);
    probs[top as usize] > gamma && top == cached_token
}

/// Optional top-k / top-p truncation followed by renormalization.
pub fn truncate_distribution(probs: &[f64], top_k: Option<usize>, top_p: Option<f64>) -> Vec<f64> {
    if top_k.is_none() && top_p.is_none() {
        return probs.to_vec();
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut keep = top_k.unwrap_or(probs.len()).min(probs.len());
    if let Some(p) = top_p {
        let mut mass = 0.0;
        for (rank, &i) in order.iter().enumerate().take(keep) {
            mass += probs[i];
            if mass >= p {
                keep = rank + 1;
                break;
            }
        }
    }
    let mut out = vec![0.0; probs.len()];
    let kept: f64 = order[..keep].iter().map(|&i| probs[i]).sum();
    for &i in &order[..keep] {
        out[i] = probs[i] / kept;
    }
    out
}

/// Per-response random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha12Rng,
}

impl RngStream {
    /// Stream for response `response_index` of prompt `prompt_index` under `seed`.
    ///
    /// Key: four successive SplitMix64 outputs of `seed`, little-endian.
    /// ChaCha stream id: `mix(splitmix64(prompt_index), response_index)`.
    pub fn new(seed: u64, prompt_index: u64, response_index: u64) -> Self {
        let mut key = [0u8; 32];
        let mut h = seed;
        for chunk in key.chunks_exact_mut(8) {
            h = splitmix64(h);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(mix(splitmix64(prompt_index), response_index));
        RngStream { rng }
    }

    /// The uniform variate in `[0, 1)` reserved for generation step `step`.
    pub fn uniform_at(&mut self, step: usize) -> f64 {
        self.rng.set_word_pos(2 * step as u128);
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
