//! Persisting response memory and picking generation back up later.
//!
//! Run with `cargo run --example memory_dump`.

use consistency_engine::decoding::RngStream;
use consistency_engine::memory::{dump_memory, restore_memory, DumpOptions, MemoryList};
use consistency_engine::model::{build_toy_model, ModelSpec, ToyModelKind};
use consistency_engine::pipeline::{generate_one, GenerationConfig};

pub fn main() -> consistency_engine::Result<()> {
    let model = build_toy_model(ModelSpec::new(8, 4, 0, 10)?, ToyModelKind::Peaked { p_top: 0.8, seed: 4 })?;
    let prompt = vec![3, 1];
    let config = GenerationConfig::selective(0.8, 21);

    let mut memory = MemoryList::new(prompt.clone());
    for i in 0..4 {
        generate_one(&model, &prompt, &mut memory, &config, RngStream::new(21, 0, i))?;
    }

    let mut full = Vec::new();
    dump_memory(&memory, DumpOptions::default(), &mut full)?;
    let mut slim = Vec::new();
    dump_memory(&memory, DumpOptions { elide_states: true, top_k: Some(3) }, &mut slim)?;
    println!("{} entries, {} bytes in memory", memory.len(), memory.footprint_bytes());
    println!("dump: {} bytes exact, {} bytes with states elided and top-3 logits", full.len(), slim.len());
    println!("first line: {}", String::from_utf8_lossy(full.split(|&b| b == b'\n').next().unwrap_or_default()));

    // Continue from the exact dump: identical to never having stopped.
    let mut restored = restore_memory(full.as_slice(), None)?;
    for i in 4..8 {
        let a = generate_one(&model, &prompt, &mut memory, &config, RngStream::new(21, 0, i))?;
        let b = generate_one(&model, &prompt, &mut restored, &config, RngStream::new(21, 0, i))?;
        println!("response {i}: {:?} same after restore: {}", a.response, a.response == b.response && a.trace == b.trace);
    }

    // The lossy dump needs the model to rebuild the elided states.
    let lossy = restore_memory(slim.as_slice(), Some(&model))?;
    println!("lossy restore: {} entries, tokens preserved: {}", lossy.len(), lossy.entries().iter().zip(memory.entries()).all(|(a, b)| a.tokens() == b.tokens()));
    Ok(())
}
