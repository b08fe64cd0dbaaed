use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A question's consistency score and whether its answer was correct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub question: String,
    pub score: f64,
    pub factual: bool,
}

impl LabeledScore {
    pub fn new(question: impl Into<String>, score: f64, factual: bool) -> Self {
        LabeledScore {
            question: question.into(),
            score,
            factual,
        }
    }
}

/// Area under the ROC curve with factual answers as the positive class:
/// the probability that a positive outscores a negative, ties counting half.
///
/// Computed from mid-ranks in `O(n log n)`.
pub fn auroc(items: &[LabeledScore]) -> Result<f64> {
    if let Some(s) = items.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::input(format!("non-finite score for question {:?}", s.question)));
    }
    let n_pos = items.iter().filter(|s| s.factual).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both factual and non-factual labels".into()));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[a].score.total_cmp(&items[b].score));
    // Twice the mid-rank sum keeps the arithmetic in integers.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && items[order[j + 1]].score == items[order[i]].score {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the mid-rank (i + j + 2) / 2
        let positives = order[i..=j].iter().filter(|&&k| items[k].factual).count() as u128;
        twice_rank_sum += positives * (i + j + 2) as u128;
        i = j + 1;
    }
    let n_pos = n_pos as u128;
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg as u128) as f64)
}

/// AUROC after orienting scores so that larger means more likely factual.
pub fn oriented_auroc(items: &[LabeledScore], higher_is_factual: bool) -> Result<f64> {
    if higher_is_factual {
        return auroc(items);
    }
    let flipped: Vec<LabeledScore> = items
        .iter()
        .map(|s| LabeledScore {
            score: -s.score,
            ..s.clone()
        })
        .collect();
    auroc(&flipped)
}
