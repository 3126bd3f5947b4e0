//! Gradient-boosted trees on the logistic loss, with optional
//! gradient-based one-side sampling (GOSS) of each stage's instances.

use rand::seq::index::sample;

use super::forest::EnsembleParams;
use super::sigmoid;
use super::tree::{grow, NewtonCriterion, Presorted, TreeParams};
use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GossOptions {
    /// Fraction of instances kept for having the largest |gradient|.
    pub top_rate: f64,
    /// Fraction of all instances sampled uniformly from the rest.
    pub other_rate: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GbdtOptions {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
    pub goss: Option<GossOptions>,
    pub seed: u64,
}

/// GOSS selection: the `⌈a·n⌉` largest-|g| instances with weight 1 plus a
/// uniform `⌈b·n⌉` of the remainder with weight `(1-a)/b`.
///
/// Returns indices in ascending order with their weights.
pub fn goss_sample(
    gradients: &[f64],
    top_rate: f64,
    other_rate: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let (a, b) = (top_rate, other_rate);
    let valid_a = (0.0..=1.0).contains(&a);
    let valid_b = if a >= 1.0 {
        (0.0..=1.0).contains(&b)
    } else {
        b > 0.0 && b <= 1.0 - a + 1e-12
    };
    if !(valid_a && valid_b) {
        return Err(Error::InvalidArgument(format!(
            "GOSS fractions need 0 <= a <= 1 and 0 < b <= 1 - a, got a={a} b={b}"
        )));
    }
    let n = gradients.len();
    let n_top = ((a * n as f64).ceil() as usize).min(n);
    let mut by_magnitude: Vec<usize> = (0..n).collect();
    by_magnitude.sort_by(|&i, &j| {
        gradients[j]
            .abs()
            .total_cmp(&gradients[i].abs())
            .then(i.cmp(&j))
    });
    let (top, rest) = by_magnitude.split_at(n_top);

    let mut picked: Vec<(usize, f64)> = top.iter().map(|&i| (i, 1.0)).collect();
    let n_other = ((b * n as f64).ceil() as usize).min(rest.len());
    if n_other > 0 {
        let weight = (1.0 - a) / b;
        let mut rng = rng_for(seed, &[]);
        picked.extend(
            sample(&mut rng, rest.len(), n_other)
                .into_iter()
                .map(|k| (rest[k], weight)),
        );
    }
    picked.sort_unstable_by_key(|p| p.0);
    Ok(picked.into_iter().unzip())
}

pub(crate) fn prior_log_odds(labels: &[bool]) -> f64 {
    let p = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

pub(crate) fn fit(
    columns: &[Vec<f64>],
    labels: &[bool],
    opts: GbdtOptions,
) -> Result<EnsembleParams> {
    let n = labels.len();
    let initial = prior_log_odds(labels);
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let presorted = Presorted::new(columns);
    let mut raw = vec![initial; n];
    let mut trees = Vec::with_capacity(opts.n_trees);
    let mut row = vec![0.0; columns.len()];

    for stage in 0..opts.n_trees {
        let p: Vec<f64> = raw.iter().map(|&f| sigmoid(f)).collect();
        let g: Vec<f64> = p.iter().zip(&y).map(|(p, y)| p - y).collect();
        let h: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();

        let (rows, weights): (Vec<u32>, Vec<f64>) = match opts.goss {
            Some(goss) => {
                let (idx, w) = goss_sample(
                    &g,
                    goss.top_rate,
                    goss.other_rate,
                    crate::rng::derive_seed(opts.seed, &[stage as u64]),
                )?;
                (idx.into_iter().map(|i| i as u32).collect(), w)
            }
            None => ((0..n as u32).collect(), vec![1.0; n]),
        };
        let criterion = NewtonCriterion {
            gradients: rows
                .iter()
                .zip(&weights)
                .map(|(&r, w)| g[r as usize] * w)
                .collect(),
            hessians: rows
                .iter()
                .zip(&weights)
                .map(|(&r, w)| h[r as usize] * w)
                .collect(),
        };
        let tree = grow(columns, &presorted, &rows, &criterion, opts.tree, None);

        for (i, f) in raw.iter_mut().enumerate() {
            for (j, col) in columns.iter().enumerate() {
                row[j] = col[i];
            }
            *f += opts.learning_rate * tree.predict_row(&row);
        }
        trees.push(tree);
    }
    Ok(EnsembleParams {
        trees,
        shrinkage: opts.learning_rate,
        initial_score: initial,
    })
}
