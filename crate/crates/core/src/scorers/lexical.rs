use crate::error::{Error, Result};

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F1 over words. Zero when either side is empty.
pub fn rouge_l<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(a, b) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / a.len() as f64;
    let r = lcs / b.len() as f64;
    2.0 * p * r / (p + r)
}

/// Mean ROUGE-L over all unordered pairs.
pub fn lexical_similarity<T: PartialEq>(responses: &[Vec<T>]) -> Result<f64> {
    let n = responses.len();
    if n < 2 {
        return Err(Error::input("lexical similarity needs at least two responses"));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += rouge_l(&responses[i], &responses[j]);
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Length-normalized entropy: negative mean over responses of the mean token log-probability.
pub fn ln_entropy(probabilities: &[Vec<f64>]) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::input("ln-entropy needs at least one response"));
    }
    let mut total = 0.0;
    for probs in probabilities {
        if probs.is_empty() {
            return Err(Error::input("ln-entropy of an empty response"));
        }
        if let Some(p) = probs.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::input(format!("token probability {p} outside (0, 1]")));
        }
        total += probs.iter().map(|p| p.ln()).sum::<f64>() / probs.len() as f64;
    }
    Ok(-total / probabilities.len() as f64)
}
