//! Classifiers behind one fit/score contract.
//!
//! Six algorithms: Gaussian naive Bayes, logistic regression, an entropy
//! decision tree, a random forest, and gradient-boosted trees with and
//! without GOSS instance sampling.

mod forest;
mod gbdt;
mod info;
pub mod logistic;
mod naive_bayes;
pub(crate) mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use forest::EnsembleParams;
pub use gbdt::{goss_sample, GossOptions};
pub use info::{entropy, information_gain};
pub use logistic::LogisticParams;
pub use naive_bayes::NaiveBayesParams;
pub use tree::{Node, Tree};

use crate::error::{Error, Result};
use crate::preprocess::{ColumnDescriptor, FeatureMatrix};

pub(crate) use forest::{fit_regressor, sqrt_features, ForestOptions};
pub(crate) use tree::TreeParams;

/// Serialized model format tag.
pub const MODEL_FORMAT: &str = "ews-model/v1";

/// Numerically stable logistic function `1 / (1 + e^-x)`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    NaiveBayes,
    LogisticRegression,
    DecisionTree,
    RandomForest,
    Gbdt,
    GbdtGoss,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::GbdtGoss,
        Algorithm::Gbdt,
        Algorithm::RandomForest,
        Algorithm::DecisionTree,
        Algorithm::LogisticRegression,
        Algorithm::NaiveBayes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::NaiveBayes => "naive_bayes",
            Algorithm::LogisticRegression => "logistic_regression",
            Algorithm::DecisionTree => "decision_tree",
            Algorithm::RandomForest => "random_forest",
            Algorithm::Gbdt => "gbdt",
            Algorithm::GbdtGoss => "gbdt_goss",
        }
    }

    /// Accepted hyperparameters and their defaults.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            Algorithm::NaiveBayes => &[("var_smoothing", 1e-9)],
            Algorithm::LogisticRegression => {
                &[("lambda", 1e-3), ("tolerance", 1e-6), ("max_iter", 5000.0)]
            }
            Algorithm::DecisionTree => &[("max_depth", 8.0), ("min_samples_leaf", 5.0)],
            Algorithm::RandomForest => &[
                ("n_trees", 300.0),
                ("max_depth", 12.0),
                ("min_samples_leaf", 2.0),
                // 0 selects round(sqrt(d)).
                ("max_features", 0.0),
            ],
            Algorithm::Gbdt => &[
                ("n_trees", 100.0),
                ("learning_rate", 0.1),
                ("max_depth", 6.0),
                ("min_samples_leaf", 20.0),
            ],
            Algorithm::GbdtGoss => &[
                ("n_trees", 100.0),
                ("learning_rate", 0.1),
                ("max_depth", 6.0),
                ("min_samples_leaf", 20.0),
                ("top_rate", 0.2),
                ("other_rate", 0.1),
            ],
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Algorithm::RandomForest | Algorithm::GbdtGoss)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

const INTEGER_KEYS: [&str; 5] = [
    "n_trees",
    "max_depth",
    "min_samples_leaf",
    "max_features",
    "max_iter",
];

/// Algorithm choice, hyperparameter overrides and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub algorithm: Algorithm,
    /// Overrides only; missing keys take [`Algorithm::defaults`].
    pub params: BTreeMap<String, f64>,
    pub seed: Option<u64>,
}

impl ClassifierSpec {
    pub fn new(
        algorithm: Algorithm,
        params: BTreeMap<String, f64>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let known = algorithm.defaults();
        for (k, &v) in &params {
            if !known.iter().any(|(name, _)| name == k) {
                return Err(Error::Config(format!(
                    "unknown hyperparameter `{k}` for {algorithm}"
                )));
            }
            let integral = INTEGER_KEYS.contains(&k.as_str());
            if !v.is_finite() || v < 0.0 || (integral && v.fract() != 0.0) {
                return Err(Error::Config(format!("invalid value {v} for `{k}`")));
            }
        }
        if algorithm.is_stochastic() && seed.is_none() {
            return Err(Error::Config(format!("{algorithm} requires a seed")));
        }
        let spec = ClassifierSpec {
            algorithm,
            params,
            seed,
        };
        spec.validate_ranges()?;
        Ok(spec)
    }

    pub fn with_defaults(algorithm: Algorithm, seed: u64) -> Self {
        ClassifierSpec {
            algorithm,
            params: BTreeMap::new(),
            seed: Some(seed),
        }
    }

    /// Same spec with one hyperparameter replaced.
    pub fn set(mut self, key: &str, value: f64) -> Result<Self> {
        self.params.insert(key.to_string(), value);
        ClassifierSpec::new(self.algorithm, self.params, self.seed)
    }

    pub fn param(&self, key: &str) -> f64 {
        self.params.get(key).copied().unwrap_or_else(|| {
            self.algorithm
                .defaults()
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .expect("hyperparameter key is validated")
        })
    }

    fn usize_param(&self, key: &str) -> usize {
        self.param(key) as usize
    }

    fn validate_ranges(&self) -> Result<()> {
        if matches!(self.algorithm, Algorithm::Gbdt | Algorithm::GbdtGoss) {
            let lr = self.param("learning_rate");
            if !(lr > 0.0 && lr <= 1.0) {
                return Err(Error::Config(format!(
                    "learning_rate must be in (0, 1], got {lr}"
                )));
            }
        }
        if self.algorithm == Algorithm::GbdtGoss {
            let (a, b) = (self.param("top_rate"), self.param("other_rate"));
            goss_sample(&[], a, b, 0).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    NaiveBayes(NaiveBayesParams),
    Logistic(LogisticParams),
    Tree { tree: Tree },
    Forest(EnsembleParams),
    Boosted(EnsembleParams),
}

/// A fitted classifier with the column layout it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub spec: ClassifierSpec,
    pub columns: Vec<ColumnDescriptor>,
    pub params: ModelParams,
}

/// Fits `spec` on every row of `m`.
pub fn fit(spec: &ClassifierSpec, m: &FeatureMatrix) -> Result<TrainedModel> {
    m.ensure_finite()?;
    let n = m.n_rows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 rows to fit, got {n}"
        )));
    }
    let positives = m.labels.iter().filter(|&&l| l).count();
    let single_class = positives == 0 || positives == n;
    if single_class && spec.algorithm != Algorithm::NaiveBayes {
        return Err(Error::SingleClass(format!(
            "{} needs both classes in training",
            spec.algorithm
        )));
    }
    let cols = m.columns_major();
    let labels = &m.labels;
    let d = m.n_cols();

    let params = match spec.algorithm {
        Algorithm::NaiveBayes => ModelParams::NaiveBayes(naive_bayes::fit(
            &cols,
            labels,
            spec.param("var_smoothing"),
        )?),
        Algorithm::LogisticRegression => {
            let opts = logistic::LogisticOptions {
                lambda: spec.param("lambda"),
                tolerance: spec.param("tolerance"),
                max_iter: spec.usize_param("max_iter"),
            };
            ModelParams::Logistic(logistic::fit_with_trace(&cols, labels, opts).0)
        }
        Algorithm::DecisionTree => {
            let presorted = tree::Presorted::new(&cols);
            let rows: Vec<u32> = (0..n as u32).collect();
            let crit = tree::EntropyCriterion {
                labels: labels.clone(),
            };
            let params = TreeParams {
                max_depth: spec.usize_param("max_depth"),
                min_samples_leaf: spec.usize_param("min_samples_leaf"),
                max_features: None,
            };
            ModelParams::Tree {
                tree: tree::grow(&cols, &presorted, &rows, &crit, params, None),
            }
        }
        Algorithm::RandomForest => {
            let mf = spec.usize_param("max_features");
            let opts = ForestOptions {
                n_trees: spec.usize_param("n_trees"),
                tree: TreeParams {
                    max_depth: spec.usize_param("max_depth"),
                    min_samples_leaf: spec.usize_param("min_samples_leaf"),
                    max_features: Some(if mf == 0 { sqrt_features(d) } else { mf.min(d) }),
                },
                seed: spec.seed(),
            };
            ModelParams::Forest(forest::fit_classifier(&cols, labels, opts))
        }
        Algorithm::Gbdt | Algorithm::GbdtGoss => {
            let goss = (spec.algorithm == Algorithm::GbdtGoss).then(|| GossOptions {
                top_rate: spec.param("top_rate"),
                other_rate: spec.param("other_rate"),
            });
            let opts = gbdt::GbdtOptions {
                n_trees: spec.usize_param("n_trees"),
                learning_rate: spec.param("learning_rate"),
                tree: TreeParams {
                    max_depth: spec.usize_param("max_depth"),
                    min_samples_leaf: spec.usize_param("min_samples_leaf"),
                    max_features: None,
                },
                goss,
                seed: spec.seed(),
            };
            ModelParams::Boosted(gbdt::fit(&cols, labels, opts)?)
        }
    };
    Ok(TrainedModel {
        format: MODEL_FORMAT.into(),
        spec: spec.clone(),
        columns: m.columns.clone(),
        params,
    })
}

impl TrainedModel {
    /// Probability of the positive class for one row in training layout.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let p = match &self.params {
            ModelParams::NaiveBayes(nb) => nb.predict_row(row),
            ModelParams::Logistic(lr) => lr.predict_row(row),
            ModelParams::Tree { tree } => tree.predict_row(row),
            ModelParams::Forest(f) => f.mean_row(row),
            ModelParams::Boosted(b) => sigmoid(b.raw_row(row)),
        };
        p.clamp(0.0, 1.0)
    }

    pub fn check_columns(&self, columns: &[ColumnDescriptor]) -> Result<()> {
        if self.columns.len() != columns.len() {
            return Err(Error::ColumnMismatch(format!(
                "model expects {} columns, input has {}",
                self.columns.len(),
                columns.len()
            )));
        }
        if let Some((a, b)) = self.columns.iter().zip(columns).find(|(a, b)| a != b) {
            return Err(Error::ColumnMismatch(format!(
                "expected `{}`, found `{}`",
                a.name, b.name
            )));
        }
        Ok(())
    }

    /// Features referenced by the fitted parameters; `None` when every
    /// feature contributes (linear and Bayes models).
    pub fn used_features(&self) -> Option<std::collections::BTreeSet<usize>> {
        match &self.params {
            ModelParams::Tree { tree } => Some(tree.used_features()),
            ModelParams::Forest(e) | ModelParams::Boosted(e) => {
                Some(e.trees.iter().flat_map(|t| t.used_features()).collect())
            }
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(s)?;
        m.check_format()?;
        Ok(m)
    }

    pub(crate) fn check_format(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Data(format!(
                "unsupported model format `{}`",
                self.format
            )));
        }
        let finite = match &self.params {
            ModelParams::Tree { tree } => tree.is_finite(),
            ModelParams::Forest(e) | ModelParams::Boosted(e) => e.trees.iter().all(Tree::is_finite),
            _ => true,
        };
        if !finite {
            return Err(Error::Data("model contains non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainedModel::from_json(&s)
    }
}

/// Scores every row of `m`. Columns must match the training layout.
pub fn predict_proba(model: &TrainedModel, m: &FeatureMatrix) -> Result<Vec<f64>> {
    model.check_columns(&m.columns)?;
    m.ensure_finite()?;
    Ok((0..m.n_rows())
        .into_par_iter()
        .map(|r| model.predict_row(m.row(r)))
        .collect())
}
