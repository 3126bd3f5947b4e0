//! Iterative random-forest imputation in the missForest style.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::matrix::{median, FeatureMatrix};
use crate::error::{Error, Result};
use crate::ingest::VitalKind;
use crate::models::{fit_regressor, sqrt_features, ForestOptions, TreeParams};
use crate::rng::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeParams {
    pub trees: usize,
    pub max_iter: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Observed rows used to fit each column's forest; larger columns are
    /// subsampled without replacement.
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for ImputeParams {
    fn default() -> Self {
        ImputeParams {
            trees: 50,
            max_iter: 10,
            max_depth: 16,
            min_samples_leaf: 3,
            max_samples: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputeReport {
    /// Cells predicted by the forests.
    pub forest_imputed: usize,
    /// Cells filled from a median because no forest could be fitted.
    pub median_filled: usize,
    /// Columns with no observed value at all.
    pub fallback_columns: Vec<String>,
    pub iterations: usize,
    /// Normalized change per completed iteration.
    pub changes: Vec<f64>,
}

/// Typical adult resting values, used only when a vital is never observed.
pub fn reference_value(kind: VitalKind) -> f64 {
    match kind {
        VitalKind::Temperature => 36.8,
        VitalKind::OxygenSaturation => 97.0,
        VitalKind::RespiratoryRate => 16.0,
        VitalKind::BloodGlucose => 100.0,
        VitalKind::SystolicBp => 120.0,
        VitalKind::DiastolicBp => 75.0,
        VitalKind::HeartRate => 80.0,
    }
}

/// Median for a column with nothing observed: the pooled median of the same
/// vital at other timestamps, else a reference value.
fn fallback_value(m: &FeatureMatrix, col: usize) -> f64 {
    let Some((kind, _)) = m.columns[col].vital_offset() else {
        return 0.0;
    };
    let pooled: Vec<f64> = m
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.vital_offset().is_some_and(|(k, _)| k == kind))
        .flat_map(|(j, _)| m.column(j))
        .filter(|v| !v.is_nan())
        .collect();
    if pooled.is_empty() {
        reference_value(kind)
    } else {
        median(pooled)
    }
}

/// Fills every NaN cell. Observed cells are returned bit-identical and the
/// result is reproducible for a fixed seed.
pub fn missforest_impute(
    m: &FeatureMatrix,
    params: &ImputeParams,
) -> Result<(FeatureMatrix, ImputeReport)> {
    let (n, d) = (m.n_rows(), m.n_cols());
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(
            "cannot impute an empty matrix".into(),
        ));
    }
    let mut report = ImputeReport::default();
    let missing: Vec<Vec<usize>> = (0..d)
        .map(|c| (0..n).filter(|&r| m.get(r, c).is_nan()).collect())
        .collect();
    if missing.iter().all(Vec::is_empty) {
        return Ok((m.clone(), report));
    }

    let mut current = m.clone();
    let mut targets = Vec::new();
    for (c, rows) in missing.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let fill = if rows.len() == n {
            report.fallback_columns.push(m.columns[c].name.clone());
            report.median_filled += n;
            fallback_value(m, c)
        } else {
            if d > 1 {
                targets.push(c);
            } else {
                report.median_filled += rows.len();
            }
            median(m.column(c).into_iter().filter(|v| !v.is_nan()).collect())
        };
        for &r in rows {
            current.set(r, c, fill);
        }
    }
    if targets.is_empty() {
        return Ok((current, report));
    }
    targets.sort_by_key(|&c| (missing[c].len(), c));
    report.forest_imputed = targets.iter().map(|&c| missing[c].len()).sum();

    let mut previous_change = f64::INFINITY;
    for iter in 0..params.max_iter {
        let before = current.clone();
        for &c in &targets {
            impute_column(&mut current, c, &missing[c], iter, params);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &c in &targets {
            for &r in &missing[c] {
                let new = current.get(r, c);
                num += (new - before.get(r, c)).powi(2);
                den += new * new;
            }
        }
        let change = if den > 0.0 { num / den } else { 0.0 };
        if change > previous_change {
            report.iterations = iter;
            return Ok((before, report));
        }
        report.changes.push(change);
        report.iterations = iter + 1;
        previous_change = change;
        if change == 0.0 {
            break;
        }
    }
    Ok((current, report))
}

fn impute_column(
    current: &mut FeatureMatrix,
    target: usize,
    missing_rows: &[usize],
    iter: usize,
    params: &ImputeParams,
) {
    let (n, d) = (current.n_rows(), current.n_cols());
    let mut is_missing = vec![false; n];
    for &r in missing_rows {
        is_missing[r] = true;
    }
    let mut observed: Vec<usize> = (0..n).filter(|&r| !is_missing[r]).collect();
    let seed = derive_seed(params.seed, &[iter as u64, target as u64]);
    if observed.len() > params.max_samples {
        let mut rng = rng_for(seed, &[u64::MAX]);
        let mut picked = sample(&mut rng, observed.len(), params.max_samples).into_vec();
        picked.sort_unstable();
        observed = picked.into_iter().map(|i| observed[i]).collect();
    }
    let predictors: Vec<usize> = (0..d).filter(|&c| c != target).collect();
    let columns: Vec<Vec<f64>> = predictors
        .iter()
        .map(|&c| observed.iter().map(|&r| current.get(r, c)).collect())
        .collect();
    let y: Vec<f64> = observed.iter().map(|&r| current.get(r, target)).collect();
    let forest = fit_regressor(
        &columns,
        &y,
        ForestOptions {
            n_trees: params.trees.max(1),
            tree: TreeParams {
                max_depth: params.max_depth,
                min_samples_leaf: params.min_samples_leaf,
                max_features: Some(sqrt_features(predictors.len())),
            },
            seed,
        },
    );
    let mut row = vec![0.0; predictors.len()];
    for &r in missing_rows {
        for (j, &c) in predictors.iter().enumerate() {
            row[j] = current.get(r, c);
        }
        current.set(r, target, forest.mean_row(&row));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::matrix::{ColumnDescriptor, StaticColumn};

    fn static_cols(d: usize) -> Vec<ColumnDescriptor> {
        (0..d)
            .map(|_| ColumnDescriptor::static_column(StaticColumn::Age))
            .collect()
    }

    #[test]
    fn complete_matrix_is_unchanged() {
        let m = FeatureMatrix::from_rows(
            static_cols(2),
            &[vec![1.0, 2.0], vec![3.0, 4.0]],
            &[false, true],
        )
        .unwrap();
        let (out, report) = missforest_impute(&m, &ImputeParams::default()).unwrap();
        assert_eq!(out, m);
        assert_eq!(report, ImputeReport::default());
    }

    #[test]
    fn single_column_uses_median() {
        let rows: Vec<Vec<f64>> = [1.0, f64::NAN, 3.0, 10.0]
            .iter()
            .map(|&v| vec![v])
            .collect();
        let m = FeatureMatrix::from_rows(static_cols(1), &rows, &[false; 4]).unwrap();
        let (out, report) = missforest_impute(&m, &ImputeParams::default()).unwrap();
        assert_eq!(out.column(0), vec![1.0, 3.0, 3.0, 10.0]);
        assert_eq!(report.median_filled, 1);
    }

    #[test]
    fn all_missing_vital_uses_pooled_median() {
        let cols = vec![
            ColumnDescriptor::vital(VitalKind::HeartRate, 1),
            ColumnDescriptor::vital(VitalKind::HeartRate, 0),
            ColumnDescriptor::vital(VitalKind::SystolicBp, 0),
        ];
        let nan = f64::NAN;
        let rows = vec![
            vec![70.0, nan, nan],
            vec![90.0, nan, nan],
            vec![100.0, nan, nan],
        ];
        let m = FeatureMatrix::from_rows(cols, &rows, &[false; 3]).unwrap();
        let (out, report) = missforest_impute(&m, &ImputeParams::default()).unwrap();
        assert_eq!(out.column(1), vec![90.0; 3]);
        assert_eq!(out.column(2), vec![120.0; 3]);
        assert_eq!(
            report.fallback_columns,
            vec!["heart_rate_t", "systolic_bp_t"]
        );
    }

    #[test]
    fn observed_cells_untouched_and_reproducible() {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let x = i as f64;
                vec![
                    x,
                    if i % 4 == 0 { f64::NAN } else { 2.0 * x + 1.0 },
                    if i % 5 == 0 { f64::NAN } else { -x },
                ]
            })
            .collect();
        let m = FeatureMatrix::from_rows(static_cols(3), &rows, &[false; 60]).unwrap();
        let params = ImputeParams {
            trees: 10,
            seed: 5,
            ..ImputeParams::default()
        };
        let (a, report) = missforest_impute(&m, &params).unwrap();
        let (b, _) = missforest_impute(&m, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.missing_count(), 0);
        assert!(report.iterations >= 1);
        for (x, y) in m.values.iter().zip(&a.values) {
            if !x.is_nan() {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn empty_matrix_is_error() {
        let m = FeatureMatrix::from_rows(static_cols(2), &[], &[]).unwrap();
        assert!(missforest_impute(&m, &ImputeParams::default()).is_err());
    }
}
