//! Metrics, cost-sensitive thresholds, rank tests and validation schemes.

mod kruskal;
mod metrics;
mod report;
mod validation;

pub use kruskal::{
    chi2_sf, feature_screen, gamma_q, kruskal_wallis, kruskal_wallis_by_label, ln_gamma,
    FeatureTest, KruskalWallisResult, KruskalWallisTest,
};
pub use metrics::{
    auc, confusion_at, f1_at, f1_from_counts, midranks, optimal_threshold, ConfusionAtThreshold,
};
pub use report::{emit_report, fmt3, EvalReport};
pub use validation::{
    group_folds, kfold_cv, leave_one_group_out, stratified_folds, window_label,
    windowing_validation, EvalOptions, FoldPlan, FoldResult, SchemeResult, Scorer,
};
