//! Stratified k-fold, leave-one-group-out and windowing validation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kruskal::feature_screen;
use super::metrics::{auc, f1_at, optimal_threshold};
use crate::error::{Error, Result};
use crate::ews::{ews_as_scorer, Protocol};
use crate::models::{fit, predict_proba, ClassifierSpec};
use crate::preprocess::{leading_timestamps, FeatureMatrix, SLOTS};
use crate::rng::{derive_seed, rng_for};

/// Anything that turns a matrix into per-row risk scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scorer {
    Model { spec: ClassifierSpec },
    Protocol { protocol: Protocol },
}

impl Scorer {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Model { spec } => spec.algorithm.name(),
            Scorer::Protocol { protocol } => protocol.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub folds: usize,
    pub seed: u64,
    pub cost_fn: f64,
    pub cost_fp: f64,
    /// Significance level of the LOGO feature filter.
    pub alpha: f64,
    /// History used by CV and LOGO: models see t-4 .. t-(5-k) and
    /// protocols score t-(5-k). 5 uses the whole window.
    #[serde(default = "all_slots")]
    pub timestamps: usize,
}

fn all_slots() -> usize {
    SLOTS
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            folds: 10,
            seed: 0,
            cost_fn: 10.0,
            cost_fp: 1.0,
            alpha: 0.05,
            timestamps: SLOTS,
        }
    }
}

/// Row indices of one train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub group: Option<String>,
}

impl FoldPlan {
    fn from_test(n: usize, test: Vec<usize>, group: Option<String>) -> Self {
        let mut in_test = vec![false; n];
        for &i in &test {
            in_test[i] = true;
        }
        FoldPlan {
            train: (0..n).filter(|&i| !in_test[i]).collect(),
            test,
            group,
        }
    }

    /// True when no row is in both train and test.
    pub fn is_disjoint(&self) -> bool {
        let mut i = 0;
        let mut j = 0;
        while i < self.train.len() && j < self.test.len() {
            match self.train[i].cmp(&self.test[j]) {
                std::cmp::Ordering::Equal => return false,
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        true
    }
}

/// Stratified folds: each class is shuffled with `seed`, the classes are
/// concatenated, and rows are dealt round-robin to folds.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<FoldPlan>> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "fold count {k} invalid for {n} rows"
        )));
    }
    let mut rng = rng_for(seed, &[]);
    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut tests = vec![Vec::new(); k];
    for (p, i) in pos.into_iter().chain(neg).enumerate() {
        tests[p % k].push(i);
    }
    Ok(tests
        .into_iter()
        .map(|mut t| {
            t.sort_unstable();
            FoldPlan::from_test(n, t, None)
        })
        .collect())
}

/// One fold per distinct group, in group-name order.
pub fn group_folds(groups: &[String]) -> Result<Vec<FoldPlan>> {
    let mut names: Vec<&String> = groups.iter().collect();
    names.sort();
    names.dedup();
    if names.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 groups, got {}",
            names.len()
        )));
    }
    Ok(names
        .into_iter()
        .map(|g| {
            let test = (0..groups.len()).filter(|&i| &groups[i] == g).collect();
            FoldPlan::from_test(groups.len(), test, Some(g.clone()))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub group: Option<String>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub auc: Option<f64>,
    pub f1: Option<f64>,
    pub threshold: f64,
    /// Columns used after feature filtering, when filtering applies.
    pub features_kept: Option<usize>,
    pub flag: Option<String>,
}

/// One (scorer, scheme) cell: fold values and their means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub algorithm: String,
    pub scheme: String,
    pub auc: Option<f64>,
    pub f1: Option<f64>,
    /// Mean of the per-fold thresholds.
    pub threshold: f64,
    pub folds: Vec<FoldResult>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl SchemeResult {
    fn from_folds(algorithm: &str, scheme: String, folds: Vec<FoldResult>) -> Self {
        SchemeResult {
            algorithm: algorithm.to_string(),
            auc: mean(folds.iter().filter_map(|f| f.auc)),
            f1: mean(folds.iter().filter_map(|f| f.f1)),
            threshold: mean(folds.iter().map(|f| f.threshold)).unwrap_or(f64::NAN),
            scheme,
            folds,
        }
    }
}

fn has_both(labels: &[bool]) -> bool {
    labels.iter().any(|&l| l) && labels.iter().any(|&l| !l)
}

fn protocol_scores(protocol: Protocol, m: &FeatureMatrix, offset: usize) -> Vec<f64> {
    ews_as_scorer(protocol, m, offset)
        .scores
        .into_iter()
        .map(|s| s.unwrap_or(0.0))
        .collect()
}

fn fold_seed(spec: &ClassifierSpec, opts: &EvalOptions, fold: usize) -> ClassifierSpec {
    let mut spec = spec.clone();
    let base = spec.seed.unwrap_or(opts.seed);
    spec.seed = Some(derive_seed(base, &[fold as u64]));
    spec
}

fn run_fold(
    scorer: &Scorer,
    m: &FeatureMatrix,
    plan: &FoldPlan,
    fold: usize,
    opts: &EvalOptions,
    ews_offset: usize,
    filter_features: bool,
) -> Result<FoldResult> {
    assert!(plan.is_disjoint(), "fold {fold} trains on test rows");
    let train = m.select_rows(&plan.train);
    let test = m.select_rows(&plan.test);
    let test_labels = test.labels.clone();
    if !has_both(&train.labels) {
        return Err(Error::SingleClass(format!(
            "training portion of fold {fold}"
        )));
    }
    let mut flag = None;
    let mut features_kept = None;
    let (test_scores, threshold) = match scorer {
        Scorer::Protocol { protocol } => {
            let max = protocol.max_total() as f64;
            let t = protocol.default_threshold() as f64 / max;
            (protocol_scores(*protocol, &test, ews_offset), t)
        }
        Scorer::Model { spec } => {
            let (train, test) = if filter_features {
                let screen = feature_screen(&train, opts.alpha)?;
                let mut keep = screen.significant_columns();
                if keep.is_empty() {
                    keep = (0..train.n_cols()).collect();
                    flag = Some("no feature passed the significance filter; all kept".to_string());
                }
                features_kept = Some(keep.len());
                (train.select_columns(&keep), test.select_columns(&keep))
            } else {
                (train, test)
            };
            let model = fit(&fold_seed(spec, opts, fold), &train)?;
            let train_scores = predict_proba(&model, &train)?;
            let c = optimal_threshold(&train_scores, &train.labels, opts.cost_fn, opts.cost_fp)?;
            (predict_proba(&model, &test)?, c.threshold)
        }
    };
    let (auc_v, f1_v) = if has_both(&test_labels) {
        (
            Some(auc(&test_scores, &test_labels)?),
            Some(f1_at(&test_scores, &test_labels, threshold)?),
        )
    } else {
        flag = Some("single-class test fold; AUC undefined".to_string());
        (None, None)
    };
    Ok(FoldResult {
        fold,
        group: plan.group.clone(),
        train_rows: plan.train.len(),
        test_rows: plan.test.len(),
        auc: auc_v,
        f1: f1_v,
        threshold,
        features_kept,
        flag,
    })
}

fn run_plans(
    scorer: &Scorer,
    m: &FeatureMatrix,
    plans: &[FoldPlan],
    opts: &EvalOptions,
    ews_offset: usize,
    filter_features: bool,
    scheme: String,
) -> Result<SchemeResult> {
    let folds = plans
        .par_iter()
        .enumerate()
        .map(|(i, p)| run_fold(scorer, m, p, i, opts, ews_offset, filter_features))
        .collect::<Result<Vec<_>>>()?;
    Ok(SchemeResult::from_folds(scorer.name(), scheme, folds))
}

/// Stratified k-fold CV. Thresholds are picked on each training fold's
/// own scores; protocols use their fixed alert rule.
pub fn kfold_cv(scorer: &Scorer, m: &FeatureMatrix, opts: &EvalOptions) -> Result<SchemeResult> {
    let plans = stratified_folds(&m.labels, opts.folds, opts.seed)?;
    let scheme = with_history(format!("cv{}", opts.folds), opts.timestamps)?;
    run_history(scorer, m, &plans, opts, opts.timestamps, false, scheme)
}

/// One fold per hospital, with a Kruskal-Wallis filter on each training
/// portion for fitted models.
pub fn leave_one_group_out(
    scorer: &Scorer,
    m: &FeatureMatrix,
    opts: &EvalOptions,
) -> Result<SchemeResult> {
    let plans = group_folds(&m.groups)?;
    let scheme = with_history("logo".into(), opts.timestamps)?;
    run_history(scorer, m, &plans, opts, opts.timestamps, true, scheme)
}

fn with_history(scheme: String, k: usize) -> Result<String> {
    if !(1..=SLOTS).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "timestamp count must be in 1..={SLOTS}, got {k}"
        )));
    }
    Ok(if k == SLOTS {
        scheme
    } else {
        format!("{scheme}@{}", window_label(k))
    })
}

/// Runs the plans on the history available at slot t-(5-k).
fn run_history(
    scorer: &Scorer,
    m: &FeatureMatrix,
    plans: &[FoldPlan],
    opts: &EvalOptions,
    k: usize,
    filter_features: bool,
    scheme: String,
) -> Result<SchemeResult> {
    match scorer {
        Scorer::Model { .. } if k != SLOTS => {
            let m = leading_timestamps(m, k)?;
            run_plans(scorer, &m, plans, opts, 0, filter_features, scheme)
        }
        Scorer::Model { .. } => run_plans(scorer, m, plans, opts, 0, filter_features, scheme),
        Scorer::Protocol { .. } => {
            run_plans(scorer, m, plans, opts, SLOTS - k, filter_features, scheme)
        }
    }
}

/// Label of the windowing column for `k` timestamps: t-(5-k).
pub fn window_label(k: usize) -> String {
    match SLOTS - k {
        0 => "t".to_string(),
        o => format!("t-{o}"),
    }
}

/// For k = 1..5: models are cross-validated on timestamps t-4 .. t-(5-k),
/// protocols are scored on timestamp t-(5-k) alone.
pub fn windowing_validation(
    scorer: &Scorer,
    m: &FeatureMatrix,
    opts: &EvalOptions,
) -> Result<Vec<SchemeResult>> {
    let plans = stratified_folds(&m.labels, opts.folds, opts.seed)?;
    (1..=SLOTS)
        .map(|k| {
            let scheme = format!("window:{}", window_label(k));
            run_history(scorer, m, &plans, opts, k, false, scheme)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Algorithm;
    use crate::preprocess::{ColumnDescriptor, StaticColumn};

    #[test]
    fn fold_sizes_105_by_10() {
        let labels: Vec<bool> = (0..105).map(|i| i % 7 == 0).collect();
        let plans = stratified_folds(&labels, 10, 3).unwrap();
        let mut sizes: Vec<usize> = plans.iter().map(|p| p.test.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [10, 10, 10, 10, 10, 11, 11, 11, 11, 11]);
        let mut all: Vec<usize> = plans.iter().flat_map(|p| p.test.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..105).collect::<Vec<_>>());
        assert!(plans.iter().all(FoldPlan::is_disjoint));
        assert!(plans.iter().all(|p| p.train.len() + p.test.len() == 105));
        // Stratification: every fold gets 1 or 2 of the 15 positives.
        assert!(plans
            .iter()
            .all(|p| (1..=2).contains(&p.test.iter().filter(|&&i| labels[i]).count())));
    }

    #[test]
    fn group_folds_are_by_group() {
        let g: Vec<String> = ["b", "a", "b", "a", "c"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let plans = group_folds(&g).unwrap();
        assert_eq!(plans.len(), 3);
        assert_eq!(plans[0].test, vec![1, 3]);
        assert_eq!(plans[0].train, vec![0, 2, 4]);
        assert!(group_folds(&g[..1]).is_err());
    }

    fn separable(n: usize) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let x = if i % 2 == 0 {
                    -1.0 - i as f64
                } else {
                    1.0 + i as f64
                };
                vec![x, (i * 7 % 5) as f64]
            })
            .collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] > 0.0).collect();
        let cols = vec![
            ColumnDescriptor::static_column(StaticColumn::Age),
            ColumnDescriptor::static_column(StaticColumn::LosDays),
        ];
        let mut m = FeatureMatrix::from_rows(cols, &rows, &labels).unwrap();
        m.groups = (0..n).map(|i| format!("H{}", i % 3)).collect();
        m
    }

    #[test]
    fn separable_tree_is_perfect_and_deterministic() {
        let m = separable(100);
        let scorer = Scorer::Model {
            spec: ClassifierSpec::with_defaults(Algorithm::DecisionTree, 1),
        };
        let opts = EvalOptions::default();
        let a = kfold_cv(&scorer, &m, &opts).unwrap();
        assert_eq!(a.auc, Some(1.0));
        assert_eq!(a.folds.len(), 10);
        assert_eq!(a, kfold_cv(&scorer, &m, &opts).unwrap());
        let logo = leave_one_group_out(&scorer, &m, &opts).unwrap();
        assert_eq!(logo.folds.len(), 3);
        assert_eq!(logo.auc, Some(1.0));
    }

    #[test]
    fn windowing_k5_equals_cv() {
        let m = separable(60);
        let scorer = Scorer::Model {
            spec: ClassifierSpec::with_defaults(Algorithm::LogisticRegression, 1),
        };
        let opts = EvalOptions::default();
        let grid = windowing_validation(&scorer, &m, &opts).unwrap();
        assert_eq!(grid.len(), 5);
        assert_eq!(grid[4].scheme, "window:t");
        assert_eq!(grid[0].scheme, "window:t-4");
        let cv = kfold_cv(&scorer, &m, &opts).unwrap();
        assert_eq!(grid[4].folds, cv.folds);

        let short = EvalOptions {
            timestamps: 2,
            ..opts
        };
        let cv2 = kfold_cv(&scorer, &m, &short).unwrap();
        assert_eq!(cv2.scheme, "cv10@t-3");
        assert_eq!(cv2.folds, grid[1].folds);
        assert!(kfold_cv(
            &scorer,
            &m,
            &EvalOptions {
                timestamps: 0,
                ..opts
            }
        )
        .is_err());
    }

    #[test]
    fn single_class_training_is_error() {
        let mut m = separable(20);
        m.labels = vec![false; 20];
        m.labels[0] = true;
        let scorer = Scorer::Model {
            spec: ClassifierSpec::with_defaults(Algorithm::NaiveBayes, 1),
        };
        assert!(kfold_cv(&scorer, &m, &EvalOptions::default()).is_err());
    }
}
