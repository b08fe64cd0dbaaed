mod common;

use consistency_engine::decoding::{argmax, hard_decode_check, temperature_softmax, SamplingConfig};
use consistency_engine::eval::{auroc, prefix_sharing_stats, LabeledScore};
use consistency_engine::model::{build_toy_model, LogitModel, ModelSpec, TableFallback, ToyModelKind};
use consistency_engine::pipeline::{generate_batch, generate_n_at, AnnealTrigger, GenerationConfig};
use consistency_engine::scorers::{
    cluster_responses, eigenscore, lcs_len, ln_entropy, rouge_l, semantic_entropy_b, Entailment,
};
use proptest::prelude::*;

fn word_seq() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..4, 0..7)
}

/// LCS by enumerating every subsequence of the shorter side.
fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let sub: Vec<u8> = (0..short.len()).filter(|i| mask >> i & 1 == 1).map(|i| short[i]).collect();
        let mut it = long.iter();
        if sub.iter().all(|x| it.any(|y| y == x)) {
            best = best.max(sub.len());
        }
    }
    best
}

fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..6, 1usize..5).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), n))
}

proptest! {
    #[test]
    fn rouge_is_symmetric_and_bounded(a in word_seq(), b in word_seq()) {
        let x = rouge_l(&a, &b);
        prop_assert_eq!(x, rouge_l(&b, &a));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
        if !a.is_empty() {
            prop_assert_eq!(rouge_l(&a, &a), 1.0);
        }
    }

    #[test]
    fn eigenscore_ignores_translation(rows in matrix(), shift in prop::collection::vec(-50.0f64..50.0, 5), alpha in 0.05f64..2.0) {
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&shift).map(|(x, c)| x + c).collect()).collect();
        let a = eigenscore(&rows, alpha).unwrap();
        let b = eigenscore(&shifted, alpha).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn eigenscore_increases_with_regularization(rows in matrix(), alpha in 0.05f64..2.0, bump in 0.01f64..1.0) {
        prop_assert!(eigenscore(&rows, alpha + bump).unwrap() > eigenscore(&rows, alpha).unwrap());
    }

    #[test]
    fn count_entropy_is_at_most_log_clusters(sizes in prop::collection::vec(1usize..6, 1..6)) {
        let mut next = 0;
        let clusters: Vec<Vec<usize>> = sizes.iter().map(|&s| { let c = (next..next + s).collect(); next += s; c }).collect();
        let h = semantic_entropy_b(&clusters, next).unwrap();
        let bound = (clusters.len() as f64).ln();
        prop_assert!(h <= bound + 1e-12);
        let uniform = sizes.iter().all(|&s| s == sizes[0]);
        prop_assert_eq!((h - bound).abs() < 1e-12, uniform);
    }

    #[test]
    fn ln_entropy_is_nonnegative(probs in prop::collection::vec(prop::collection::vec(1e-6f64..=1.0, 1..6), 1..5)) {
        prop_assert!(ln_entropy(&probs).unwrap() >= 0.0);
    }

    #[test]
    fn equality_clustering_groups_identical_strings(labels in prop::collection::vec(0u8..3, 1..9)) {
        let responses: Vec<Vec<String>> = labels.iter().map(|l| vec![format!("w{l}")]).collect();
        let eq = |a: &[String], b: &[String]| if a == b { Entailment::Entailment } else { Entailment::Neutral };
        let clusters = cluster_responses(&responses, &eq).unwrap();
        for c in &clusters {
            prop_assert!(c.iter().all(|&i| responses[i] == responses[c[0]]));
        }
        let mut distinct = labels.clone();
        distinct.sort();
        distinct.dedup();
        prop_assert_eq!(clusters.len(), distinct.len());
    }

    #[test]
    fn auroc_is_invariant_under_increasing_maps(scores in prop::collection::vec((-5i32..5, any::<bool>()), 2..30)) {
        let items: Vec<LabeledScore> = scores.iter().map(|&(s, l)| LabeledScore::new("q", s as f64, l)).collect();
        if let Ok(a) = auroc(&items) {
            let mapped: Vec<LabeledScore> = items.iter().map(|s| LabeledScore { score: s.score.powi(3) + 2.0 * s.score, ..s.clone() }).collect();
            prop_assert_eq!(a, auroc(&mapped).unwrap());
        }
    }

    #[test]
    fn prefix_stats_match_brute_force(groups in (1usize..4, 2usize..5).prop_flat_map(|(m, n)| prop::collection::vec(prop::collection::vec(prop::collection::vec(0u8..3, 0..4), n), m))) {
        let s = prefix_sharing_stats(&groups).unwrap();
        let (m, n) = (groups.len(), groups[0].len());
        let total: usize = groups.iter().flatten().map(Vec::len).sum();
        let mut ind = 0.0;
        let mut word = 0.0;
        for g in &groups {
            for i in 0..n {
                for j in i + 1..n {
                    let e = g[i].starts_with(&g[j]) || g[j].starts_with(&g[i]);
                    if e {
                        ind += 1.0;
                        if total > 0 {
                            word += g[i].len().min(g[j].len()) as f64 / total as f64;
                        }
                    }
                }
            }
        }
        let norm = 2.0 / (m * n * (n - 1)) as f64;
        prop_assert!((s.p_sentence - norm * ind).abs() < 1e-12);
        prop_assert!((s.p_word - norm * word).abs() < 1e-12);
        prop_assert!(s.p_word <= s.p_sentence + 1e-15);
    }

    #[test]
    fn annealing_equals_lower_temperature(logits in prop::collection::vec(-20.0f64..20.0, 2..12), t in 0.1f64..2.0, eta in 1.01f64..3.0) {
        let scaled: Vec<f64> = logits.iter().map(|s| s * eta).collect();
        let a = temperature_softmax(&scaled, t).unwrap();
        let b = temperature_softmax(&logits, t / eta).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(argmax(&scaled), argmax(&logits));
    }

    #[test]
    fn hard_check_is_monotone_in_gamma(logits in prop::collection::vec(-5.0f64..5.0, 2..8), g1 in 0.0f64..1.0, g2 in 0.0f64..1.0) {
        let p = temperature_softmax(&logits, 0.8).unwrap();
        let top = argmax(&p);
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        if hard_decode_check(&p, top, hi) {
            prop_assert!(hard_decode_check(&p, top, lo));
        }
    }

    #[test]
    fn incremental_steps_equal_full_steps(seed in any::<u64>(), prompt in prop::collection::vec(1u32..9, 1..4), prefix in prop::collection::vec(0u32..9, 1..6)) {
        let models = [
            build_toy_model(ModelSpec::new(9, 3, 0, 16).unwrap(), ToyModelKind::Peaked { p_top: 0.7, seed }).unwrap(),
            build_toy_model(ModelSpec::new(9, 3, 0, 16).unwrap(), ToyModelKind::Table { entries: vec![], fallback: TableFallback::Hashed { scale: 3.0 } }).unwrap(),
        ];
        for m in &models {
            let prior = m.step(&prompt, &prefix[..prefix.len() - 1], None).unwrap().state;
            let inc = m.step(&prompt, &prefix, Some(&prior)).unwrap();
            let full = m.step(&prompt, &prefix, None).unwrap();
            prop_assert_eq!(inc, full);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn batch_equals_sequential(
        vocab in 3usize..10,
        p_top in 0.3f64..0.99,
        model_seed in any::<u64>(),
        seed in any::<u64>(),
        n in 1usize..6,
        prompts in prop::collection::vec(prop::collection::vec(1u32..3, 1..4), 1..5),
        hard in any::<bool>(),
        anneal in any::<bool>(),
        on_skip in any::<bool>(),
        short_min in 0usize..4,
    ) {
        let model = build_toy_model(ModelSpec::new(vocab, 4, 0, 12).unwrap(), ToyModelKind::Peaked { p_top, seed: model_seed }).unwrap();
        let mut config = GenerationConfig::new(SamplingConfig {
            seed,
            hard_threshold: hard.then_some(0.8),
            anneal_eta: anneal.then_some(1.4),
            ..SamplingConfig::default()
        });
        config.anneal_trigger = if on_skip { AnnealTrigger::OnSkip } else { AnnealTrigger::OnDuplicate };
        config.short_answer_min = short_min;
        let batch = generate_batch(&model, &prompts, n, &config).unwrap();
        for (slot, g) in batch.iter().enumerate() {
            let seq = generate_n_at(&model, &prompts[slot], slot as u64, n, &config).unwrap();
            for (a, b) in g.outputs.iter().zip(&seq.outputs) {
                prop_assert_eq!(&a.response, &b.response);
                prop_assert_eq!(&a.trace, &b.trace);
            }
        }
    }
}
