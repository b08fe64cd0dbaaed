//! AUROC over labeled scores and the prefix-sharing statistics that explain
//! why response memory pays off.
//!
//! Run with `cargo run --example auroc_and_redundancy`.

use consistency_engine::eval::{auroc, oriented_auroc, prefix_sharing_stats, LabeledScore};

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

pub fn main() -> consistency_engine::Result<()> {
    // An uncertainty score: high means "probably wrong".
    let items = vec![
        LabeledScore::new("q1", 0.10, true),
        LabeledScore::new("q2", 0.35, true),
        LabeledScore::new("q3", 0.40, false),
        LabeledScore::new("q4", 0.80, false),
        LabeledScore::new("q5", 0.35, false),
    ];
    println!("raw AUROC (higher score = factual): {:.3}", auroc(&items)?);
    println!("oriented AUROC for an uncertainty score: {:.3}", oriented_auroc(&items, false)?);

    let single_class = vec![LabeledScore::new("q1", 0.3, true), LabeledScore::new("q2", 0.4, true)];
    match auroc(&single_class) {
        Ok(v) => println!("unexpected: {v}"),
        Err(e) => println!("one class only: {e}"),
    }

    // Ten sampled answers for two questions.
    let corpus = vec![
        ["paris", "paris", "paris is the capital", "paris", "lyon", "paris", "paris is", "paris", "paris", "lyon"]
            .map(words)
            .to_vec(),
        ["rome", "milan", "rome", "milan is", "rome", "rome", "naples", "milan", "rome", "rome"]
            .map(words)
            .to_vec(),
    ];
    let s = prefix_sharing_stats(&corpus)?;
    println!(
        "{} of {} response pairs share a prefix (p_sentence = {:.3})",
        s.sharing_pairs, s.pairs, s.p_sentence
    );
    // shared words are summed over sharing pairs, so they can exceed the corpus size
    println!(
        "shared-prefix words over pairs {}, corpus words {} (p_word = {:.5}, pairwise ratio {:.3})",
        s.shared_words, s.total_words, s.p_word, s.p_word_plain
    );
    Ok(())
}
