//! A full benchmark from a manifest: generation under several conditions,
//! every scorer, AUROC against exact-match labels, and reuse ratios.
//!
//! Run with `cargo run --example benchmark`. The same run is available as
//! `consistency-engine bench -m crates/core/examples/data/bench.toml`.

use std::path::Path;

use consistency_engine::eval::run_benchmark;
use consistency_engine::manifest::Manifest;
use consistency_engine::provider::Provider;
use consistency_engine::records::load_prompts;

pub fn main() -> consistency_engine::Result<()> {
    let manifest = Manifest::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/bench.toml"))?;
    let prompts = load_prompts(&manifest.resolve(manifest.prompts.as_ref().expect("manifest lists prompts")))?;
    let provider = Provider::open(&manifest)?;

    let report = run_benchmark(&manifest, &provider, &prompts)?;
    print!("{}", report.summary_table());

    for c in &report.summaries {
        if let Some(r) = &c.redundancy {
            println!("{:<22} prefix-sharing pairs {:.3}", c.condition.name(), r.p_sentence);
        }
    }
    let dmp = &report.questions[&report.summaries.last().expect("at least one condition").condition];
    for q in dmp {
        println!("{:<3} greedy {:<10} reference {:<8} reuse {:.2}", q.id, q.greedy.words.join(" "), q.reference.as_deref().unwrap_or("-"), q.reuse_ratio);
    }
    Ok(())
}
