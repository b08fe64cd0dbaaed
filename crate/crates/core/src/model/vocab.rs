use std::collections::HashMap;
use std::path::Path;

use super::TokenId;
use crate::error::{Error, Result};

/// Explicit word <-> id table. Line `i` of a vocabulary file is the word with id `i`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab::default();
        for w in words {
            let w = w.into();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Format(format!("vocabulary word {w:?} is empty or contains whitespace")));
            }
            let id = vocab.words.len() as TokenId;
            if vocab.index.insert(w.clone(), id).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary word {w:?}")));
            }
            vocab.words.push(w);
        }
        Ok(vocab)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Vocab::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Vocab::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    /// Whitespace-split `text` and map every word to its id.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|w| self.id(w).ok_or_else(|| Error::input(format!("word {w:?} not in vocabulary"))))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let words = ids
            .iter()
            .map(|&id| self.word(id).ok_or_else(|| Error::input(format!("token id {id} not in vocabulary"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(words.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let v = Vocab::parse("<eos>\na\nb\n").unwrap();
        assert_eq!(v.encode("a b a").unwrap(), vec![1, 2, 1]);
        assert_eq!(v.decode(&[1, 2]).unwrap(), "a b");
        assert!(v.encode("c").is_err());
        assert!(v.decode(&[3]).is_err());
        assert!(Vocab::parse("a\na").is_err());
    }
}
