use super::oracles::{Entailment, EntailmentOracle};
use crate::error::{Error, Result};

/// Greedy bidirectional-entailment clustering in generation order. Each
/// cluster is represented by its first member. Returns 0-based indices.
pub fn cluster_responses(responses: &[Vec<String>], oracle: &dyn EntailmentOracle) -> Result<Vec<Vec<usize>>> {
    if responses.is_empty() {
        return Err(Error::input("clustering needs at least one response"));
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    'next: for (j, resp) in responses.iter().enumerate() {
        for cluster in clusters.iter_mut() {
            let rep = &responses[cluster[0]];
            if oracle.judge(resp, rep)? == Entailment::Entailment && oracle.judge(rep, resp)? == Entailment::Entailment {
                cluster.push(j);
                continue 'next;
            }
        }
        clusters.push(vec![j]);
    }
    Ok(clusters)
}

fn entropy(probs: impl Iterator<Item = f64>) -> f64 {
    -probs.filter(|&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Semantic entropy from per-response sequence log-likelihoods, with cluster
/// masses normalized over the sampled clusters.
pub fn semantic_entropy(log_likelihoods: &[f64], clusters: &[Vec<usize>]) -> Result<f64> {
    check_partition(clusters, log_likelihoods.len())?;
    if log_likelihoods.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(Error::input("sequence log-likelihood must be finite or -inf"));
    }
    let max = log_likelihoods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::input("every sequence likelihood is zero"));
    }
    let masses: Vec<f64> = clusters
        .iter()
        .map(|c| c.iter().map(|&i| (log_likelihoods[i] - max).exp()).sum())
        .collect();
    let total: f64 = masses.iter().sum();
    Ok(entropy(masses.iter().map(|m| m / total)))
}

/// Semantic entropy with cluster probabilities `|c| / N`.
pub fn semantic_entropy_b(clusters: &[Vec<usize>], n: usize) -> Result<f64> {
    check_partition(clusters, n)?;
    Ok(entropy(clusters.iter().map(|c| c.len() as f64 / n as f64)))
}

fn check_partition(clusters: &[Vec<usize>], n: usize) -> Result<()> {
    if clusters.is_empty() || n == 0 {
        return Err(Error::input("empty partition"));
    }
    let mut seen = vec![false; n];
    for &i in clusters.iter().flatten() {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::input("clusters do not partition the responses"));
        }
    }
    if seen.contains(&false) || clusters.iter().any(Vec::is_empty) {
        return Err(Error::input("clusters do not partition the responses"));
    }
    Ok(())
}
