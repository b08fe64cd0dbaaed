//! The model a manifest points at, with its tokenizer and embedder.

use std::time::Duration;

use crate::error::{Error, Result};
use crate::manifest::{EmbeddingChoice, EntailmentChoice, Manifest};
use crate::model::{build_toy_model, load_definition, LogitModel, ModelSpec, TokenId, TokenSeq, ToyModel, ToyModelKind, Vocab};
use crate::records::PromptRecord;
use crate::remote::{RemoteEmbedding, RemoteModel, RemoteOptions};
use crate::scorers::{render_words, ContainmentEntailment, EmbeddingOracle, EntailmentOracle, EqualityEntailment, HashedBagOfWords};

pub enum Provider {
    Toy { model: ToyModel, vocab: Option<Vocab> },
    Remote(RemoteModel),
}

impl Provider {
    pub fn open(manifest: &Manifest) -> Result<Self> {
        let m = &manifest.model;
        if let Some(path) = &m.toy {
            let def = load_definition(&manifest.resolve(path)).map_err(|e| Error::manifest("model.toy", e.to_string()))?;
            return Ok(Provider::Toy {
                model: def.model,
                vocab: def.vocab,
            });
        }
        if let Some(addr) = &m.remote {
            let options = RemoteOptions {
                timeout: Duration::from_millis(m.timeout_ms),
                retries: m.retries,
                max_generation: manifest.sampling.max_generation,
            };
            return Ok(Provider::Remote(RemoteModel::connect(addr, options)?));
        }
        let b = &m.builtin;
        let spec = ModelSpec::new(b.vocab_size, b.hidden_dim, b.eos, manifest.sampling.max_generation)
            .map_err(|e| Error::manifest("model.builtin", e.to_string()))?;
        let model = build_toy_model(
            spec,
            ToyModelKind::Peaked {
                p_top: b.p_top,
                seed: b.seed,
            },
        )
        .map_err(|e| Error::manifest("model.builtin", e.to_string()))?;
        Ok(Provider::Toy { model, vocab: None })
    }

    pub fn model(&self) -> &dyn LogitModel {
        match self {
            Provider::Toy { model, .. } => model,
            Provider::Remote(r) => r,
        }
    }

    pub fn vocab(&self) -> Option<&Vocab> {
        match self {
            Provider::Toy { vocab, .. } => vocab.as_ref(),
            Provider::Remote(_) => None,
        }
    }

    pub fn encode_prompt(&self, p: &PromptRecord) -> Result<TokenSeq> {
        let tokens = match (&p.tokens, &p.text) {
            (Some(t), _) => t.clone(),
            (None, Some(text)) => match self {
                Provider::Toy { vocab: Some(v), .. } => v.encode(text)?,
                Provider::Toy { vocab: None, .. } => {
                    return Err(Error::input(format!(
                        "prompt {:?} is text but the toy model has no vocabulary",
                        p.id
                    )))
                }
                Provider::Remote(r) => r.tokenize(text)?,
            },
            (None, None) => return Err(Error::input(format!("prompt {:?} has neither tokens nor text", p.id))),
        };
        if tokens.is_empty() {
            return Err(Error::input(format!("prompt {:?} is empty", p.id)));
        }
        self.model().spec().check_tokens(&tokens)?;
        Ok(tokens)
    }

    /// Word rendering of a response, without its trailing EOS.
    pub fn words(&self, tokens: &[TokenId]) -> Result<Vec<String>> {
        let eos = self.model().spec().eos_token;
        match self {
            Provider::Toy { vocab, .. } => Ok(render_words(tokens, eos, vocab.as_ref())),
            Provider::Remote(r) => {
                let body = match tokens.last() {
                    Some(&t) if t == eos => &tokens[..tokens.len() - 1],
                    _ => tokens,
                };
                Ok(r.detokenize(body)?.split_whitespace().map(String::from).collect())
            }
        }
    }

    /// Split `text` into words the way renderings are split.
    pub fn text_words(text: &str) -> Vec<String> {
        text.split_whitespace().map(String::from).collect()
    }

    pub fn embedding_oracle(&self, manifest: &Manifest) -> Result<Box<dyn EmbeddingOracle + '_>> {
        match (manifest.scorers.embedding, self) {
            (EmbeddingChoice::Hashed, _) => Ok(Box::new(HashedBagOfWords {
                width: manifest.scorers.embedding_width,
            })),
            (EmbeddingChoice::Remote, Provider::Remote(r)) => Ok(Box::new(RemoteEmbedding(r))),
            (EmbeddingChoice::Remote, _) => Err(Error::manifest("scorers.embedding", "`remote` embeddings need a remote model")),
        }
    }
}

pub fn entailment_oracle(choice: EntailmentChoice) -> Box<dyn EntailmentOracle> {
    match choice {
        EntailmentChoice::Containment => Box::new(ContainmentEntailment),
        EntailmentChoice::Equality => Box::new(EqualityEntailment),
    }
}
