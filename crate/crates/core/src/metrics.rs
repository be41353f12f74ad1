//! The five evaluation metrics of the method comparison: AUROC, AUPRC,
//! Brier score, log loss, and TNR at a TPR floor.
//!
//! Conventions: AUROC is the Mann–Whitney statistic with half-credit for
//! tied pairs; AUPRC is average precision with tied scores grouped into one
//! threshold step; log loss clips probabilities to `[1e-15, 1 - 1e-15]`;
//! the TNR operating point predicts positive iff `score >= t` and uses the
//! largest observed threshold whose TPR still meets the target, which is
//! the point that maximizes TNR subject to the TPR floor.

use thiserror::Error;

use crate::model::Label;

/// Probability clip for log loss.
const LOG_LOSS_EPS: f64 = 1e-15;

/// All five evaluation metrics for one classifier on one test set.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricSet {
    pub auroc: f64,
    pub auprc: f64,
    pub brier: f64,
    pub log_loss: f64,
    pub tnr_at_tpr95: f64,
}

/// Metric evaluation failures.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("metric undefined: labels contain only one class")]
    SingleClass,
    #[error("metric undefined: no positive labels present")]
    NoPositives,
    #[error("scores and labels have different lengths ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
}

fn check_lengths(scores: &[f64], labels: &[Label]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    Ok(())
}

fn class_counts(labels: &[Label]) -> (usize, usize) {
    let positives = labels.iter().filter(|&&l| l == Label::Valid).count();
    (positives, labels.len() - positives)
}

/// Indices sorted by descending score (stable, so ties keep input order).
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    order
}

/// Area under the ROC curve: `P(score+ > score-) + 0.5 * P(score+ = score-)`
/// over positive/negative pairs, computed via tied ranks.
pub fn auroc(scores: &[f64], labels: &[Label]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    let (positives, negatives) = class_counts(labels);
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass);
    }
    let order = descending_order(scores);
    // Sum of average ranks (1-based, ascending) over the positive class.
    let n = scores.len();
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Descending positions i..j correspond to ascending ranks n-j+1..n-i;
        // every tied element gets the average of that run.
        let avg_rank = ((n - j + 1) + (n - i)) as f64 / 2.0;
        let tied_pos =
            order[i..j].iter().filter(|&&k| labels[k] == Label::Valid).count();
        rank_sum_pos += avg_rank * tied_pos as f64;
        i = j;
    }
    let u = rank_sum_pos - (positives * (positives + 1)) as f64 / 2.0;
    Ok(u / (positives as f64 * negatives as f64))
}

/// Area under the precision-recall curve as average precision:
/// `sum_k (R_k - R_{k-1}) * P_k` over descending unique-score thresholds.
pub fn auprc(scores: &[f64], labels: &[Label]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    let (positives, _) = class_counts(labels);
    if positives == 0 {
        return Err(MetricError::NoPositives);
    }
    let order = descending_order(scores);
    let n = scores.len();
    let mut tp = 0usize;
    let mut predicted_pos = 0usize;
    let mut recall_prev = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        tp += order[i..j].iter().filter(|&&k| labels[k] == Label::Valid).count();
        predicted_pos += j - i;
        let recall = tp as f64 / positives as f64;
        if recall > recall_prev {
            ap += (recall - recall_prev) * (tp as f64 / predicted_pos as f64);
        }
        recall_prev = recall;
        i = j;
    }
    Ok(ap)
}

/// Mean squared error of the probabilities and mean negative log-likelihood
/// with probabilities clipped to `[1e-15, 1 - 1e-15]`.
///
/// Panics if the slices have different lengths or probabilities leave
/// `[0, 1]`; callers own those preconditions.
pub fn brier_and_logloss(probs: &[f64], labels: &[Label]) -> (f64, f64) {
    assert_eq!(probs.len(), labels.len(), "probabilities and labels must align");
    assert!(!probs.is_empty(), "metrics need at least one point");
    let mut brier = 0.0;
    let mut log_loss = 0.0;
    for (&p, &label) in probs.iter().zip(labels) {
        assert!((0.0..=1.0).contains(&p), "probability {p} outside [0, 1]");
        let y = f64::from(label.as_u8());
        brier += (p - y) * (p - y);
        let clipped = p.clamp(LOG_LOSS_EPS, 1.0 - LOG_LOSS_EPS);
        log_loss -= if label == Label::Valid { clipped.ln() } else { (1.0 - clipped).ln() };
    }
    let n = probs.len() as f64;
    (brier / n, log_loss / n)
}

/// True-negative rate at the operating point "predict positive iff
/// `score >= t`", where `t` is the largest observed score (or infinity)
/// whose TPR still reaches `target`.
pub fn tnr_at_tpr(scores: &[f64], labels: &[Label], target: f64) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    let (positives, negatives) = class_counts(labels);
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass);
    }
    // t = infinity: nothing predicted positive.
    if 0.0 >= target {
        return Ok(1.0);
    }
    let order = descending_order(scores);
    let n = scores.len();
    let mut pos_ge = 0usize;
    let mut neg_ge = 0usize;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        for &k in &order[i..j] {
            if labels[k] == Label::Valid {
                pos_ge += 1;
            } else {
                neg_ge += 1;
            }
        }
        if pos_ge as f64 / positives as f64 >= target {
            return Ok((negatives - neg_ge) as f64 / negatives as f64);
        }
        i = j;
    }
    // Unreachable for target <= 1: the smallest observed threshold yields
    // TPR = 1. Kept as the documented total-function fallback.
    Ok(0.0)
}

/// Evaluates all five metrics of [`MetricSet`] from class-1 probabilities.
pub fn evaluate(probs: &[f64], labels: &[Label]) -> Result<MetricSet, MetricError> {
    let auroc = auroc(probs, labels)?;
    let auprc = auprc(probs, labels)?;
    let (brier, log_loss) = brier_and_logloss(probs, labels);
    let tnr_at_tpr95 = tnr_at_tpr(probs, labels, 0.95)?;
    Ok(MetricSet { auroc, auprc, brier, log_loss, tnr_at_tpr95 })
}
