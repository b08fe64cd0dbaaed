//! Hard decoding and annealed decoding on top of response memory.
//!
//! Hard decoding emits the cached token without sampling when its probability
//! clears `gamma`. Annealing multiplies the cached logits of non-exact steps by
//! `eta` each time the same answer is produced again, which is sampling those
//! steps at temperature `T / eta`.
//!
//! Run with `cargo run --example annealed_decoding`.

use consistency_engine::decoding::{temperature_softmax, SamplingConfig};
use consistency_engine::model::{build_toy_model, ModelSpec, ToyModelKind};
use consistency_engine::pipeline::{generate_n, GenerationConfig, Provenance};

pub fn main() -> consistency_engine::Result<()> {
    let logits = [2.0, 0.5, 0.0];
    let eta = 1.4;
    let annealed: Vec<f64> = logits.iter().map(|s| s * eta).collect();
    println!("softmax(eta*s / T) = {:.4?}", temperature_softmax(&annealed, 0.8)?);
    println!("softmax(s / (T/eta)) = {:.4?}", temperature_softmax(&logits, 0.8 / eta)?);

    let model = build_toy_model(ModelSpec::new(4, 4, 0, 4)?, ToyModelKind::Peaked { p_top: 0.6, seed: 0 })?;
    let prompt = [1, 2];
    let mut config = GenerationConfig::new(SamplingConfig {
        temperature: 0.8,
        hard_threshold: Some(0.8),
        anneal_eta: Some(eta),
        alpha: 0.9,
        seed: 0,
        ..SamplingConfig::default()
    });
    // anneal even these very short answers
    config.short_answer_min = 1;

    let g = generate_n(&model, &prompt, 12, &config)?;
    println!("reuse ratio {:.3}", g.reuse_ratio()?);
    for (i, out) in g.outputs.iter().enumerate() {
        let marks: Vec<String> = out
            .trace
            .records
            .iter()
            .map(|r| {
                let tag = match r.provenance {
                    Provenance::Forwarded => "F",
                    Provenance::Reused => "R",
                    Provenance::HardDecoded => "H",
                };
                if r.p_pre != r.p_post {
                    format!("{tag}({:.2}->{:.2})", r.p_pre, r.p_post)
                } else {
                    tag.to_string()
                }
            })
            .collect();
        println!("{i:>2} {:?} {:?} {}", out.response, out.outcome, marks.join(" "));
    }
    for (k, e) in g.memory.entries().iter().enumerate() {
        println!("entry {k}: {:?} annealed {} times, non-exact steps {:?}", e.tokens(), e.anneal_count(), e.nonexact_set());
    }
    Ok(())
}
