//! Rank AUC, cost-sensitive threshold choice and F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(format!(
            "{pos} positives, {neg} negatives"
        )));
    }
    Ok((pos, neg))
}

/// Midranks (1-based) of `values`, ties sharing the average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction
/// of positive/negative pairs ordered correctly, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Confusion counts for "positive ⇔ score > threshold".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionAtThreshold {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
    pub fnr: f64,
    pub fpr: f64,
    pub cost: f64,
}

impl ConfusionAtThreshold {
    fn from_counts(
        threshold: f64,
        tp: usize,
        fp: usize,
        pos: usize,
        neg: usize,
        cost_fn: f64,
        cost_fp: f64,
    ) -> Self {
        let fn_ = pos - tp;
        ConfusionAtThreshold {
            threshold,
            tp,
            fp,
            tn: neg - fp,
            r#fn: fn_,
            fnr: fn_ as f64 / pos as f64,
            fpr: fp as f64 / neg as f64,
            cost: cost_fn * fn_ as f64 + cost_fp * fp as f64,
        }
    }
}

/// Confusion at a fixed threshold.
pub fn confusion_at(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
    cost_fn: f64,
    cost_fp: f64,
) -> Result<ConfusionAtThreshold> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let (mut tp, mut fp) = (0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        if s > threshold {
            if l {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    Ok(ConfusionAtThreshold::from_counts(
        threshold, tp, fp, pos, neg, cost_fn, cost_fp,
    ))
}

/// Minimum-cost threshold over −∞, the midpoints between consecutive
/// distinct scores, and +∞. Ties go to the lowest threshold.
pub fn optimal_threshold(
    scores: &[f64],
    labels: &[bool],
    cost_fn: f64,
    cost_fp: f64,
) -> Result<ConfusionAtThreshold> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if !(cost_fn >= 0.0 && cost_fp >= 0.0) {
        return Err(Error::InvalidArgument("costs must be non-negative".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let (mut tp, mut fp) = (pos, neg);
    let mut best =
        ConfusionAtThreshold::from_counts(f64::NEG_INFINITY, tp, fp, pos, neg, cost_fn, cost_fp);
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        while i < order.len() && scores[order[i]] == v {
            if labels[order[i]] {
                tp -= 1;
            } else {
                fp -= 1;
            }
            i += 1;
        }
        let threshold = if i < order.len() {
            v + (scores[order[i]] - v) / 2.0
        } else {
            f64::INFINITY
        };
        let c = ConfusionAtThreshold::from_counts(threshold, tp, fp, pos, neg, cost_fn, cost_fp);
        if c.cost < best.cost {
            best = c;
        }
    }
    Ok(best)
}

/// F1 of "positive ⇔ score > threshold"; 0 when nothing is predicted
/// positive and precision and recall are both 0.
pub fn f1_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    let c = confusion_at(scores, labels, threshold, 1.0, 1.0)?;
    Ok(f1_from_counts(c.tp, c.fp, c.r#fn))
}

pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}
