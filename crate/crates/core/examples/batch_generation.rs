//! Batch-wise generation: one prompt per slot, stepped tick by tick.
//!
//! Each tick either lets slots consume cached steps from their reference
//! entry, runs a single batched forward for the slots that ran out of cache,
//! or closes a round. The masks show which positions are attended and which
//! are being copied from memory.
//!
//! Run with `cargo run --example batch_generation`.

use consistency_engine::model::{build_toy_model, CountingModel, ModelSpec, ToyModelKind};
use consistency_engine::pipeline::{generate_n_at, BatchRunner, GenerationConfig, RefCursor, Tick};

fn mask(row: &[bool]) -> String {
    row.iter().map(|&b| if b { '1' } else { '.' }).collect()
}

pub fn main() -> consistency_engine::Result<()> {
    let model = CountingModel::new(build_toy_model(ModelSpec::new(6, 4, 0, 5)?, ToyModelKind::Peaked { p_top: 0.8, seed: 9 })?);
    let prompts = vec![vec![1, 2], vec![3], vec![4, 4, 1]];
    let config = GenerationConfig::selective(0.8, 1);

    let mut runner = BatchRunner::new(&model, prompts.clone(), 3, &config)?;
    loop {
        let tick = runner.tick()?;
        match &tick {
            Tick::Scan { updated, advanced } => println!("round {} scan: updated {updated:?}, advanced {advanced:?}", runner.round()),
            Tick::Forward { slots } => println!("round {} forward over slots {slots:?}", runner.round()),
            Tick::RoundComplete { round } => {
                println!("round {round} complete");
                let state = runner.state();
                for slot in 0..state.slots() {
                    let cursor = match state.reference(slot) {
                        RefCursor::Entry(k) => format!("entry {k}"),
                        RefCursor::Exhausted => "exhausted".into(),
                    };
                    println!("  slot {slot}: attention {} reusing {} ({cursor})", mask(state.attention(slot)), mask(state.reusing(slot)));
                }
            }
            Tick::Finished => break,
        }
    }
    println!("batched forwards {}, single steps {}", model.batches(), model.steps());

    // every slot matches the per-prompt pipeline at the same prompt index
    let batch = BatchRunner::new(&model, prompts.clone(), 3, &config)?.run()?;
    for (slot, g) in batch.iter().enumerate() {
        let alone = generate_n_at(&model, &prompts[slot], slot as u64, 3, &config)?;
        println!("slot {slot}: {:?} matches sequential: {}", g.responses(), g.responses() == alone.responses());
    }
    Ok(())
}
