//! L2-regularized logistic regression on standardized features, fitted by
//! full-batch gradient descent with backtracking line search.

use serde::{Deserialize, Serialize};

use super::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub means: Vec<f64>,
    /// Column standard deviations; constant columns use 1.
    pub sds: Vec<f64>,
    pub lambda: f64,
}

impl LogisticParams {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.raw(row))
    }

    fn raw(&self, row: &[f64]) -> f64 {
        let mut z = self.intercept;
        for (j, x) in row.iter().enumerate() {
            z += self.weights[j] * (x - self.means[j]) / self.sds[j];
        }
        z
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LogisticOptions {
    pub lambda: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct Problem {
    /// Standardized columns.
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    lambda: f64,
}

impl Problem {
    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        let mut z = vec![b; self.y.len()];
        for (col, &wj) in self.x.iter().zip(w) {
            if wj != 0.0 {
                for (zi, &xi) in z.iter_mut().zip(col) {
                    *zi += wj * xi;
                }
            }
        }
        z
    }

    fn loss(&self, w: &[f64], b: f64) -> f64 {
        let n = self.y.len() as f64;
        let data: f64 = self
            .margins(w, b)
            .iter()
            .zip(&self.y)
            .map(|(&z, &y)| softplus(z) - y * z)
            .sum();
        data / n + 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let n = self.y.len() as f64;
        let resid: Vec<f64> = self
            .margins(w, b)
            .iter()
            .zip(&self.y)
            .map(|(&z, &y)| sigmoid(z) - y)
            .collect();
        let gw = self
            .x
            .iter()
            .zip(w)
            .map(|(col, &wj)| {
                col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / n + self.lambda * wj
            })
            .collect();
        let gb = resid.iter().sum::<f64>() / n;
        (gw, gb)
    }
}

/// Fits the model and returns it with the loss after every accepted step
/// (the first entry is the loss at the zero initialization).
pub fn fit_with_trace(
    columns: &[Vec<f64>],
    labels: &[bool],
    opts: LogisticOptions,
) -> (LogisticParams, Vec<f64>) {
    let n = labels.len() as f64;
    let mut means = Vec::with_capacity(columns.len());
    let mut sds = Vec::with_capacity(columns.len());
    let mut x = Vec::with_capacity(columns.len());
    for col in columns {
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        x.push(col.iter().map(|v| (v - mean) / sd).collect());
        means.push(mean);
        sds.push(sd);
    }
    let problem = Problem {
        x,
        y: labels.iter().map(|&l| f64::from(u8::from(l))).collect(),
        lambda: opts.lambda,
    };

    let d = columns.len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut loss = problem.loss(&w, b);
    let mut trace = vec![loss];
    let mut step = 1.0;
    for _ in 0..opts.max_iter {
        let (gw, gb) = problem.gradient(&w, b);
        let gnorm2 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        if gnorm2.sqrt() < opts.tolerance {
            break;
        }
        // Armijo backtracking; the step may grow again after a success.
        step *= 2.0;
        let mut accepted = false;
        while step > 1e-12 {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(wj, g)| wj - step * g).collect();
            let b_new = b - step * gb;
            let l_new = problem.loss(&w_new, b_new);
            if l_new <= loss - 1e-4 * step * gnorm2 {
                w = w_new;
                b = b_new;
                loss = l_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(loss);
    }
    (
        LogisticParams {
            weights: w,
            intercept: b,
            means,
            sds,
            lambda: opts.lambda,
        },
        trace,
    )
}
