//! Toy-model definition files.
//!
//! A definition is a TOML document with a `[spec]` table and a `[kind]` table
//! tagged by `variant`. Relative paths inside it resolve against the file's
//! own directory. See `docs/FORMATS.md` for the full schema.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{build_toy_model, ModelSpec, TableEntry, TableFallback, ToyModel, ToyModelKind, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDefinition {
    spec: ModelSpec,
    kind: RawKind,
    #[serde(default)]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
enum RawKind {
    Table {
        #[serde(default)]
        entries: Vec<TableEntry>,
        #[serde(default = "default_fallback")]
        fallback: TableFallback,
    },
    Ngram {
        order: usize,
        corpus: PathBuf,
    },
    Peaked {
        p_top: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_fallback() -> TableFallback {
    TableFallback::Hashed { scale: 4.0 }
}

/// A parsed definition: the built model plus its optional id table.
#[derive(Debug, Clone)]
pub struct ToyModelDefinition {
    pub model: ToyModel,
    pub vocab: Option<Vocab>,
}

/// Parse a definition document; `base` anchors relative paths.
pub fn parse_definition(text: &str, base: &Path) -> Result<ToyModelDefinition> {
    let raw: RawDefinition = toml::from_str(text).map_err(|e| Error::Format(format!("toy model definition: {e}")))?;
    let vocab = raw.vocab.as_ref().map(|p| Vocab::load(&base.join(p))).transpose()?;
    let kind = match raw.kind {
        RawKind::Table { entries, fallback } => ToyModelKind::Table { entries, fallback },
        RawKind::Peaked { p_top, seed } => ToyModelKind::Peaked { p_top, seed },
        RawKind::Ngram { order, corpus } => {
            let vocab = vocab
                .as_ref()
                .ok_or_else(|| Error::Format("ngram models need a `vocab` id table".into()))?;
            let text = std::fs::read_to_string(base.join(&corpus))?;
            let corpus = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| vocab.encode(l))
                .collect::<Result<Vec<_>>>()?;
            ToyModelKind::NGram { order, corpus }
        }
    };
    if let Some(v) = &vocab {
        if v.len() != raw.spec.vocab_size {
            return Err(Error::Format(format!(
                "id table has {} words but spec.vocab_size is {}",
                v.len(),
                raw.spec.vocab_size
            )));
        }
    }
    Ok(ToyModelDefinition {
        model: build_toy_model(raw.spec, kind)?,
        vocab,
    })
}

pub fn load_definition(path: &Path) -> Result<ToyModelDefinition> {
    let text = std::fs::read_to_string(path)?;
    parse_definition(&text, path.parent().unwrap_or_else(|| Path::new(".")))
}
