//! Gaussian naive Bayes: `P(h|d) ∝ P(d|h) P(h)` with per-feature
//! independent Gaussian likelihoods, evaluated in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesParams {
    /// Class priors `[P(survived), P(died)]`.
    pub priors: [f64; 2],
    /// Per-class feature means; empty for a class absent from training.
    pub means: [Vec<f64>; 2],
    /// Per-class feature variances, floored at `epsilon`.
    pub variances: [Vec<f64>; 2],
    pub epsilon: f64,
}

pub(crate) fn fit(
    columns: &[Vec<f64>],
    labels: &[bool],
    var_smoothing: f64,
) -> Result<NaiveBayesParams> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "cannot fit naive Bayes on zero rows".into(),
        ));
    }
    let max_var = columns
        .iter()
        .map(|c| moments(c.iter().copied()).1)
        .fold(0.0, f64::max);
    let epsilon = if max_var > 0.0 {
        var_smoothing * max_var
    } else {
        var_smoothing
    };
    let epsilon = epsilon.max(f64::MIN_POSITIVE);

    let mut priors = [0.0; 2];
    let mut means: [Vec<f64>; 2] = Default::default();
    let mut variances: [Vec<f64>; 2] = Default::default();
    for class in 0..2 {
        let members: Vec<usize> = (0..n)
            .filter(|&i| usize::from(labels[i]) == class)
            .collect();
        priors[class] = members.len() as f64 / n as f64;
        if members.is_empty() {
            continue;
        }
        for col in columns {
            let (m, v) = moments(members.iter().map(|&i| col[i]));
            means[class].push(m);
            variances[class].push(v + epsilon);
        }
    }
    Ok(NaiveBayesParams {
        priors,
        means,
        variances,
        epsilon,
    })
}

/// Mean and population variance.
fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

impl NaiveBayesParams {
    fn log_joint(&self, class: usize, row: &[f64]) -> f64 {
        if self.priors[class] == 0.0 {
            return f64::NEG_INFINITY;
        }
        let ll: f64 = row
            .iter()
            .zip(&self.means[class])
            .zip(&self.variances[class])
            .map(|((&x, &m), &v)| {
                -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m).powi(2) / (2.0 * v)
            })
            .sum();
        self.priors[class].ln() + ll
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let l0 = self.log_joint(0, row);
        let l1 = self.log_joint(1, row);
        if l1 == f64::NEG_INFINITY {
            return 0.0;
        }
        if l0 == f64::NEG_INFINITY {
            return 1.0;
        }
        super::sigmoid(l1 - l0)
    }
}
