//! The three toy model families, built in code and from definition files.
//!
//! Run with `cargo run --example toy_models`.

use std::path::Path;

use consistency_engine::decoding::{argmax, temperature_softmax};
use consistency_engine::model::{build_toy_model, load_definition, LogitModel, ModelSpec, TableEntry, TableFallback, ToyModelKind};

pub fn main() -> consistency_engine::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");

    // A table model: one explicit entry, hashed logits everywhere else.
    let table = build_toy_model(
        ModelSpec::new(5, 3, 0, 8)?,
        ToyModelKind::Table {
            entries: vec![TableEntry {
                prompt: vec![1],
                prefix: vec![],
                logits: vec![-4.0, 2.0, 0.0, 0.0, -1.0],
                hidden: None,
            }],
            fallback: TableFallback::Hashed { scale: 2.0 },
        },
    )?;
    let out = table.step(&[1], &[], None)?;
    println!("table, explicit entry: logits {:?}", out.logits);
    println!("table, fallback:       logits {:?}", table.step(&[1], &[3], None)?.logits);

    // Peaked: one seeded winner per context holding p_top of the mass.
    let peaked = build_toy_model(ModelSpec::new(6, 4, 0, 8)?, ToyModelKind::Peaked { p_top: 0.9, seed: 1 })?;
    let step = peaked.step(&[2, 3], &[], None)?;
    let p = temperature_softmax(&step.logits, 1.0)?;
    println!("peaked: top token {} with p = {:.3}", argmax(&p), p[argmax(&p) as usize]);

    // Incremental decoding: the opaque state from one step seeds the next.
    let a = peaked.step(&[2, 3], &[4], Some(&step.state))?;
    let b = peaked.step(&[2, 3], &[4], None)?;
    println!("incremental step equals full recompute: {}", a == b);

    // An n-gram model from a definition file with its own id table.
    let def = load_definition(&data.join("qa_ngram.toml"))?;
    let vocab = def.vocab.expect("definition names a vocab");
    let prompt = vocab.encode("capital of spain is")?;
    let p = temperature_softmax(&def.model.step(&prompt, &[], None)?.logits, 1.0)?;
    let mut ranked: Vec<(usize, f64)> = p.iter().copied().enumerate().collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1));
    for (id, prob) in ranked.iter().take(3) {
        println!("  capital of spain is {:<10} {prob:.3}", vocab.word(*id as u32).unwrap());
    }
    Ok(())
}
