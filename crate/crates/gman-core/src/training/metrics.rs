//! Classification metrics.

use crate::error::{Error, Result};

/// Rank-based AUROC: the probability that a uniformly random positive scores
/// above a uniformly random negative, ties counted as one half. Computed via
/// midranks (Mann-Whitney U), so any strictly monotone transformation of the
/// scores leaves the value unchanged.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            what: "auroc inputs".into(),
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::MetricUndefined(
            "AUROC needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Midranks: tied scores share the average of their 1-based rank range.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Fraction of correct predictions at a probability threshold. A probability
/// exactly at the threshold classifies as positive.
pub fn accuracy(probs: &[f64], labels: &[u8], threshold: f64) -> f64 {
    assert!(!probs.is_empty(), "accuracy of an empty set is undefined");
    assert_eq!(probs.len(), labels.len());
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &l)| u8::from(p >= threshold) == l)
        .count();
    correct as f64 / probs.len() as f64
}
