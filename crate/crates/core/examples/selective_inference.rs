//! Generating N responses with and without response memory.
//!
//! With selective inference on, every response walks the memory of earlier
//! responses and skips the forward pass while it stays on a cached prefix.
//! The token sequences are identical either way; only the forward count
//! changes.
//!
//! Run with `cargo run --example selective_inference`.

use consistency_engine::model::{build_toy_model, CountingModel, ModelSpec, ToyModelKind};
use consistency_engine::pipeline::{generate_n, GenerationConfig};

pub fn main() -> consistency_engine::Result<()> {
    let model = CountingModel::new(build_toy_model(ModelSpec::new(8, 4, 0, 12)?, ToyModelKind::Peaked { p_top: 0.85, seed: 3 })?);
    let prompt = [1, 5, 2];

    let baseline = generate_n(&model, &prompt, 10, &GenerationConfig::baseline(0.8, 42))?;
    let baseline_steps = model.steps();
    model.reset();
    let selective = generate_n(&model, &prompt, 10, &GenerationConfig::selective(0.8, 42))?;
    let selective_steps = model.steps();

    println!("same responses: {}", baseline.responses() == selective.responses());
    println!("forward steps: baseline {baseline_steps}, selective {selective_steps}");
    println!("reuse ratio: {:.3}", selective.reuse_ratio()?);
    println!("memory entries: {}", selective.memory.len());

    // F = forwarded, R = reused from memory
    for (i, out) in selective.outputs.iter().enumerate() {
        let trace: String = out
            .trace
            .records
            .iter()
            .map(|r| if r.provenance.skipped_forward() { 'R' } else { 'F' })
            .collect();
        println!("{i:>2} {:<30} {trace}", format!("{:?}", out.response));
    }
    Ok(())
}
