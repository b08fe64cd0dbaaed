#![allow(dead_code)]

use consistency_engine::model::{build_toy_model, ModelSpec, TableEntry, TableFallback, ToyModel, ToyModelKind, ONE_HOT_GAP};

pub fn one_hot(vocab: usize, max: usize) -> ToyModel {
    build_toy_model(
        ModelSpec::new(vocab, 4, 0, max).unwrap(),
        ToyModelKind::Table {
            entries: vec![],
            fallback: TableFallback::OneHot,
        },
    )
    .unwrap()
}

pub fn peaked(vocab: usize, p_top: f64, seed: u64, max: usize) -> ToyModel {
    build_toy_model(ModelSpec::new(vocab, 8, 0, max).unwrap(), ToyModelKind::Peaked { p_top, seed }).unwrap()
}

/// Logits putting all mass on `winners`, split evenly.
pub fn peaks(vocab: usize, winners: &[u32]) -> Vec<f64> {
    (0..vocab as u32)
        .map(|t| if winners.contains(&t) { 0.0 } else { -ONE_HOT_GAP })
        .collect()
}

pub fn entry(prompt: &[u32], prefix: &[u32], logits: Vec<f64>) -> TableEntry {
    TableEntry {
        prompt: prompt.to_vec(),
        prefix: prefix.to_vec(),
        logits,
        hidden: None,
    }
}

pub fn table(vocab: usize, max: usize, entries: Vec<TableEntry>) -> ToyModel {
    build_toy_model(
        ModelSpec::new(vocab, 4, 0, max).unwrap(),
        ToyModelKind::Table {
            entries,
            fallback: TableFallback::OneHot,
        },
    )
    .unwrap()
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}
