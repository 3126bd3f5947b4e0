//! Global permutation importance and per-alert occlusion explanations.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::auc;
use crate::ews::{table, Protocol};
use crate::ingest::VitalKind;
use crate::models::{predict_proba, TrainedModel};
use crate::preprocess::{ColumnDescriptor, FeatureMatrix};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_drop: f64,
    pub std: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_auc: f64,
    pub repeats: usize,
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    pub fn by_rank(&self) -> Vec<&FeatureImportance> {
        let mut v: Vec<&FeatureImportance> = self.features.iter().collect();
        v.sort_by_key(|f| f.rank);
        v
    }
}

/// AUC lost when each column is shuffled, averaged over `repeats`
/// seeded permutations.
pub fn permutation_importance(
    model: &TrainedModel,
    m: &FeatureMatrix,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be positive".into()));
    }
    let baseline_scores = predict_proba(model, m)?;
    let baseline_auc = auc(&baseline_scores, &m.labels)?;
    let used = model.used_features();
    let n = m.n_rows();

    let drops: Vec<Vec<f64>> = (0..m.n_cols())
        .into_par_iter()
        .map(|c| {
            if used.as_ref().is_some_and(|u| !u.contains(&c)) {
                return Ok(vec![0.0; repeats]);
            }
            let original = m.column(c);
            (0..repeats)
                .map(|r| {
                    let mut shuffled = original.clone();
                    shuffled.shuffle(&mut rng_for(seed, &[c as u64, r as u64]));
                    let mut row = vec![0.0; m.n_cols()];
                    let scores: Vec<f64> = (0..n)
                        .map(|i| {
                            row.copy_from_slice(m.row(i));
                            row[c] = shuffled[i];
                            model.predict_row(&row)
                        })
                        .collect();
                    Ok(baseline_auc - auc(&scores, &m.labels)?)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut features: Vec<FeatureImportance> = drops
        .iter()
        .enumerate()
        .map(|(c, d)| {
            let mean = d.iter().sum::<f64>() / repeats as f64;
            let var = if repeats > 1 {
                d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64
            } else {
                0.0
            };
            FeatureImportance {
                feature: m.columns[c].name.clone(),
                mean_drop: mean,
                std: var.sqrt(),
                rank: 0,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| {
        features[b]
            .mean_drop
            .total_cmp(&features[a].mean_drop)
            .then(a.cmp(&b))
    });
    for (rank, &c) in order.iter().enumerate() {
        features[c].rank = rank + 1;
    }
    Ok(ImportanceReport {
        baseline_auc,
        repeats,
        features,
    })
}

/// Interval with independently open or closed ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalRange {
    /// `null` in JSON for an unbounded end.
    #[serde(with = "unbounded::lower")]
    pub lo: f64,
    pub lo_inclusive: bool,
    #[serde(with = "unbounded::upper")]
    pub hi: f64,
    pub hi_inclusive: bool,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    fn ser<S: Serializer>(v: f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(&v)
        } else {
            s.serialize_none()
        }
    }

    pub mod lower {
        use super::*;

        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            ser(*v, s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
        }
    }

    pub mod upper {
        use super::*;

        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            ser(*v, s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
        }
    }
}

impl NormalRange {
    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_inclusive {
            v >= self.lo
        } else {
            v > self.lo
        };
        let below = if self.hi_inclusive {
            v <= self.hi
        } else {
            v < self.hi
        };
        above && below
    }
}

/// Per-vital ranges outside of which a value is highlighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalRanges(pub BTreeMap<VitalKind, NormalRange>);

impl Default for NormalRanges {
    /// NEWS2 zero-point bands where defined, plus glucose 70-180 mg/dL
    /// and diastolic pressure 60-90 mmHg.
    fn default() -> Self {
        let mut map = BTreeMap::new();
        for p in table(Protocol::News2) {
            let mut lo = f64::NEG_INFINITY;
            let mut lo_inclusive = false;
            for b in p.bands {
                if b.points == 0 {
                    map.insert(
                        p.kind,
                        NormalRange {
                            lo,
                            lo_inclusive,
                            hi: b.upper,
                            hi_inclusive: b.inclusive,
                        },
                    );
                    break;
                }
                lo = b.upper;
                lo_inclusive = !b.inclusive;
            }
        }
        let closed = |lo, hi| NormalRange {
            lo,
            lo_inclusive: true,
            hi,
            hi_inclusive: true,
        };
        map.insert(VitalKind::BloodGlucose, closed(70.0, 180.0));
        map.insert(VitalKind::DiastolicBp, closed(60.0, 90.0));
        NormalRanges(map)
    }
}

impl NormalRanges {
    /// Whether a value in `column` is outside its normal range; static
    /// columns are never flagged.
    pub fn out_of_range(&self, column: &ColumnDescriptor, value: f64) -> bool {
        column
            .vital_offset()
            .and_then(|(kind, _)| self.0.get(&kind))
            .is_some_and(|r| !r.contains(value))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contributor {
    pub feature: String,
    pub value: f64,
    pub delta: f64,
    pub out_of_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertExplanation {
    pub encounter_id: String,
    pub score: f64,
    pub contributors: Vec<Contributor>,
}

pub const DEFAULT_TOP_K: usize = 3;

/// Occlusion attribution: each feature is replaced by its training median
/// and the score drop recorded. The `top_k` largest positive drops are
/// returned.
pub fn explain_alert(
    model: &TrainedModel,
    encounter_id: &str,
    row: &[f64],
    medians: &[f64],
    ranges: &NormalRanges,
    top_k: usize,
) -> Result<AlertExplanation> {
    let d = model.columns.len();
    if row.len() != d || medians.len() != d {
        return Err(Error::ColumnMismatch(format!(
            "model has {d} columns, window has {} and medians {}",
            row.len(),
            medians.len()
        )));
    }
    if let Some(c) = (0..d).find(|&c| !row[c].is_finite() || !medians[c].is_finite()) {
        return Err(Error::NonFinite(format!(
            "column `{}`",
            model.columns[c].name
        )));
    }
    let score = model.predict_row(row);
    let mut occluded = row.to_vec();
    let mut contributors: Vec<(usize, Contributor)> = Vec::new();
    for c in 0..d {
        occluded[c] = medians[c];
        let delta = score - model.predict_row(&occluded);
        occluded[c] = row[c];
        if delta > 0.0 {
            contributors.push((
                c,
                Contributor {
                    feature: model.columns[c].name.clone(),
                    value: row[c],
                    delta,
                    out_of_range: ranges.out_of_range(&model.columns[c], row[c]),
                },
            ));
        }
    }
    contributors.sort_by(|a, b| b.1.delta.total_cmp(&a.1.delta).then(a.0.cmp(&b.0)));
    contributors.truncate(top_k);
    Ok(AlertExplanation {
        encounter_id: encounter_id.to_string(),
        score,
        contributors: contributors.into_iter().map(|(_, c)| c).collect(),
    })
}
