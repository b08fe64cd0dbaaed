//! Prompt, label and response files.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TokenId, TokenSeq};
use crate::pipeline::{GenerationOutput, GenerationTrace, MemoryOutcome};
use crate::scorers::ScoredResponseSet;

/// One line of a prompts file. Exactly one of `tokens` and `text` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<TokenSeq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Reference answer for the exact-match labeler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

fn jsonl<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::input(format!("cannot open {what} {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn load_prompts(path: &Path) -> Result<Vec<PromptRecord>> {
    let prompts: Vec<PromptRecord> = jsonl(path, "prompts file")?;
    let mut seen = std::collections::HashSet::new();
    for p in &prompts {
        if p.tokens.is_some() == p.text.is_some() {
            return Err(Error::Format(format!("prompt {:?}: set exactly one of `tokens` and `text`", p.id)));
        }
        if !seen.insert(p.id.as_str()) {
            return Err(Error::Format(format!("duplicate prompt id {:?}", p.id)));
        }
    }
    if prompts.is_empty() {
        return Err(Error::Format(format!("{} holds no prompts", path.display())));
    }
    Ok(prompts)
}

/// Tab-separated `id<TAB>label` lines; labels are `1`/`0`/`true`/`false`.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_labels(text: &str) -> Result<HashMap<String, bool>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("labels line {}: expected id<TAB>label", i + 1)))?;
        let label = match label.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::Format(format!("labels line {}: bad label {other:?}", i + 1))),
        };
        out.insert(id.to_string(), label);
    }
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<HashMap<String, bool>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::manifest("labels", format!("cannot read {}: {e}", path.display())))?;
    parse_labels(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub tokens: TokenSeq,
    pub words: Vec<String>,
    pub trace: GenerationTrace,
    pub last_hidden: Vec<f64>,
    /// `inserted`, `duplicate` or `not_cached`.
    pub memory: String,
}

impl ResponseRecord {
    pub fn new(output: &GenerationOutput, words: Vec<String>) -> Self {
        ResponseRecord {
            tokens: output.response.clone(),
            words,
            trace: output.trace.clone(),
            last_hidden: output.last_hidden.clone(),
            memory: match output.outcome {
                MemoryOutcome::Inserted(_) => "inserted",
                MemoryOutcome::Duplicate(_) => "duplicate",
                MemoryOutcome::NotCached => "not_cached",
            }
            .to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyRecord {
    pub tokens: TokenSeq,
    pub words: Vec<String>,
}

/// One line of `responses.jsonl`: everything generated for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub prompt: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub greedy: GreedyRecord,
    pub reuse_ratio: f64,
    pub responses: Vec<ResponseRecord>,
}

impl QuestionRecord {
    pub fn scored_set(&self, post_anneal: bool) -> ScoredResponseSet {
        ScoredResponseSet {
            responses: self.responses.iter().map(|r| r.tokens.clone()).collect(),
            words: self.responses.iter().map(|r| r.words.clone()).collect(),
            probabilities: Some(self.responses.iter().map(|r| r.trace.probabilities(post_anneal)).collect()),
            embeddings: Some(self.responses.iter().map(|r| r.last_hidden.clone()).collect()),
            reference: Some(self.greedy.words.clone()),
        }
    }
}

pub fn write_questions(path: &Path, records: &[QuestionRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Format(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_questions(path: &Path) -> Result<Vec<QuestionRecord>> {
    jsonl(path, "responses file")
}
