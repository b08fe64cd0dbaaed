//! Every scorer on responses generated from the capital-city n-gram model.
//!
//! Run with `cargo run --example scoring`.

use std::path::Path;

use consistency_engine::model::{load_definition, LogitModel};
use consistency_engine::pipeline::{generate_n, greedy_decode, GenerationConfig};
use consistency_engine::scorers::{
    render_words, score, ContainmentEntailment, HashedBagOfWords, ScoredResponseSet, ScorerKind, ScoringContext,
    DEFAULT_REG_ALPHA,
};

pub fn main() -> consistency_engine::Result<()> {
    let def = load_definition(&Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/qa_ngram.toml"))?;
    let vocab = def.vocab.as_ref().expect("definition names a vocab");
    let model = &def.model;
    let eos = model.spec().eos_token;

    let embedding = HashedBagOfWords::default();
    let ctx = ScoringContext {
        embedding: &embedding,
        entailment: &ContainmentEntailment,
        reg_alpha: DEFAULT_REG_ALPHA,
    };

    for country in ["france", "italy", "portugal"] {
        let prompt = vocab.encode(&format!("capital of {country} is"))?;
        let g = generate_n(model, &prompt, 10, &GenerationConfig::selective(0.8, 11))?;
        let (greedy, _) = greedy_decode(model, &prompt, 8)?;
        let set = ScoredResponseSet::from_generation(&g, eos, Some(vocab), true)
            .with_reference(render_words(&greedy, eos, Some(vocab)));

        println!("capital of {country} is ...");
        for w in set.words.iter().take(4) {
            println!("    {}", w.join(" "));
        }
        for kind in ScorerKind::ALL {
            let value = score(kind, &set, &ctx)?;
            let hint = if kind.higher_is_factual() { "higher = more consistent" } else { "higher = less consistent" };
            println!("  {:<20} {value:>9.4}   ({hint})", kind.name());
        }
    }
    Ok(())
}
