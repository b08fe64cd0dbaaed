//! Memory dump / restore.
//!
//! Line-delimited JSON: one header line, then one line per entry in insertion
//! order. Floats use serde_json's shortest round-trip form, so exact-mode
//! dumps restore bit-identically. Schema in `docs/FORMATS.md`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{MemoryList, ResponseMemory};
use crate::error::{Error, Result};
use crate::model::{LogitModel, OpaqueState, TokenId};

pub const DUMP_FORMAT: &str = "consistency-engine/response-memory";
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DumpOptions {
    /// Drop opaque states; the loader must re-forward to rebuild them.
    pub elide_states: bool,
    /// Keep only the top-k logits per step plus one uniform tail logit. Lossy.
    pub top_k: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    prompt: Vec<TokenId>,
    entries: usize,
    reforward_on_load: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    top_k: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum StoredLogits {
    Exact(Vec<Vec<f64>>),
    Compressed(Vec<CompressedLogits>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredEntry {
    tokens: Vec<TokenId>,
    logits: StoredLogits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<Vec<OpaqueState>>,
    hiddens: Vec<Vec<f64>>,
    scales: Vec<f64>,
    anneal_count: u32,
    nonexact: Option<Vec<usize>>,
}

/// Top-k logits plus a single logit shared by every other token, chosen so
/// the tail keeps its total softmax mass at temperature 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressedLogits {
    pub vocab: usize,
    pub top: Vec<(TokenId, f64)>,
    pub tail: f64,
}

pub fn compress_logits(logits: &[f64], k: usize) -> CompressedLogits {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    let k = k.min(logits.len());
    let max = logits[order[0]];
    let lse = max + logits.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
    let head_mass: f64 = order[..k].iter().map(|&i| (logits[i] - lse).exp()).sum();
    let rest = logits.len() - k;
    let tail = if rest == 0 {
        0.0
    } else {
        let mass = (1.0 - head_mass).max(f64::MIN_POSITIVE);
        lse + (mass / rest as f64).ln()
    };
    CompressedLogits {
        vocab: logits.len(),
        top: order[..k].iter().map(|&i| (i as TokenId, logits[i])).collect(),
        tail,
    }
}

pub fn expand_logits(c: &CompressedLogits) -> Vec<f64> {
    let mut out = vec![c.tail; c.vocab];
    for &(i, v) in &c.top {
        out[i as usize] = v;
    }
    out
}

pub fn dump_memory<W: Write>(memory: &MemoryList, options: DumpOptions, mut out: W) -> Result<()> {
    let header = Header {
        format: DUMP_FORMAT.to_string(),
        version: DUMP_VERSION,
        prompt: memory.prompt().to_vec(),
        entries: memory.len(),
        reforward_on_load: options.elide_states,
        top_k: options.top_k,
    };
    writeln!(out, "{}", serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?)?;
    for e in memory.entries() {
        let logits = match options.top_k {
            Some(k) => StoredLogits::Compressed(e.logits.iter().map(|row| compress_logits(row, k)).collect()),
            None => StoredLogits::Exact(e.logits.clone()),
        };
        let stored = StoredEntry {
            tokens: e.tokens.clone(),
            logits,
            states: (!options.elide_states).then(|| e.states.clone()),
            hiddens: e.hiddens.clone(),
            scales: e.scales.clone(),
            anneal_count: e.anneal_count,
            nonexact: e.nonexact.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&stored).map_err(|e| Error::Format(e.to_string()))?)?;
    }
    Ok(())
}

/// Load a dump. Dumps written with elided states need `model` to re-forward.
pub fn restore_memory<R: BufRead>(input: R, model: Option<&dyn LogitModel>) -> Result<MemoryList> {
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty memory dump".into()))??;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::Format(format!("dump header: {e}")))?;
    if header.format != DUMP_FORMAT {
        return Err(Error::Format(format!("unexpected dump format {:?}", header.format)));
    }
    if header.version != DUMP_VERSION {
        return Err(Error::Format(format!("unsupported dump version {}", header.version)));
    }
    if header.reforward_on_load && model.is_none() {
        return Err(Error::Format("dump elides opaque states; a model is required to re-forward".into()));
    }
    let mut memory = MemoryList::new(header.prompt.clone());
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let stored: StoredEntry = serde_json::from_str(&line).map_err(|e| Error::Format(format!("dump entry: {e}")))?;
        let logits = match stored.logits {
            StoredLogits::Exact(rows) => rows,
            StoredLogits::Compressed(rows) => rows.iter().map(expand_logits).collect(),
        };
        let n = stored.tokens.len();
        let states = match (stored.states, model) {
            (Some(states), _) => states,
            (None, Some(model)) => reforward_states(model, &header.prompt, &stored.tokens)?,
            (None, None) => return Err(Error::Format("entry has no states and no model was supplied".into())),
        };
        let mut entry = ResponseMemory::new(stored.tokens, logits, states, stored.hiddens)?;
        entry.restore_parts(stored.scales, stored.anneal_count, stored.nonexact)?;
        debug_assert_eq!(entry.len(), n);
        if !memory.insert(entry)? {
            return Err(Error::Format("dump contains duplicate entries".into()));
        }
    }
    if memory.len() != header.entries {
        return Err(Error::Format(format!(
            "header announces {} entries, found {}",
            header.entries,
            memory.len()
        )));
    }
    Ok(memory)
}

fn reforward_states(model: &dyn LogitModel, prompt: &[TokenId], tokens: &[TokenId]) -> Result<Vec<OpaqueState>> {
    let mut states: Vec<OpaqueState> = Vec::with_capacity(tokens.len());
    for i in 0..tokens.len() {
        let out = model.step(prompt, &tokens[..i], states.last())?;
        states.push(out.state);
    }
    Ok(states)
}
