//! Bagged trees: random-forest classification (entropy splits) and the
//! regression forest used for imputation.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{
    grow, Criterion, EntropyCriterion, Presorted, Tree, TreeParams, VarianceCriterion,
};
use crate::rng::rng_for;

/// Trees plus how their outputs combine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub trees: Vec<Tree>,
    /// Per-tree shrinkage for boosting; 1 for averaged forests.
    pub shrinkage: f64,
    /// Starting raw score (prior log-odds for boosting, 0 for forests).
    pub initial_score: f64,
}

impl EnsembleParams {
    /// Average of the trees' outputs.
    pub fn mean_row(&self, row: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// `initial + shrinkage · Σ tree(row)`.
    pub fn raw_row(&self, row: &[f64]) -> f64 {
        self.initial_score
            + self.shrinkage * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    /// Majority vote of hard tree predictions (ties count as positive).
    pub fn vote_row(&self, row: &[f64]) -> bool {
        let yes = self
            .trees
            .iter()
            .filter(|t| t.predict_row(row) > 0.5)
            .count();
        2 * yes >= self.trees.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ForestOptions {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub seed: u64,
}

/// `√d` rounded, at least one.
pub(crate) fn sqrt_features(d: usize) -> usize {
    ((d as f64).sqrt().round() as usize).clamp(1, d.max(1))
}

fn grow_forest<C, F>(columns: &[Vec<f64>], opts: ForestOptions, criterion_for: F) -> Vec<Tree>
where
    C: Criterion,
    F: Fn(&[u32]) -> C + Sync,
{
    let n = columns.first().map_or(0, Vec::len);
    let presorted = Presorted::new(columns);
    (0..opts.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(opts.seed, &[t as u64]);
            let rows: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
            let criterion = criterion_for(&rows);
            grow(
                columns,
                &presorted,
                &rows,
                &criterion,
                opts.tree,
                Some(&mut rng),
            )
        })
        .collect()
}

pub(crate) fn fit_classifier(
    columns: &[Vec<f64>],
    labels: &[bool],
    opts: ForestOptions,
) -> EnsembleParams {
    let trees = grow_forest(columns, opts, |rows| EntropyCriterion {
        labels: rows.iter().map(|&r| labels[r as usize]).collect(),
    });
    EnsembleParams {
        trees,
        shrinkage: 1.0,
        initial_score: 0.0,
    }
}

pub(crate) fn fit_regressor(
    columns: &[Vec<f64>],
    targets: &[f64],
    opts: ForestOptions,
) -> EnsembleParams {
    let trees = grow_forest(columns, opts, |rows| VarianceCriterion {
        targets: rows.iter().map(|&r| targets[r as usize]).collect(),
    });
    EnsembleParams {
        trees,
        shrinkage: 1.0,
        initial_score: 0.0,
    }
}
