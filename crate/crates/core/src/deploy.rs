//! Deployable model bundles and live scoring of an encounter's recent
//! observations.

use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::optimal_threshold;
use crate::ews::{score, EwsResult, Protocol, Vitals};
use crate::explain::{explain_alert, AlertExplanation, NormalRanges, DEFAULT_TOP_K};
use crate::ingest::Encounter;
use crate::models::{fit, predict_proba, ClassifierSpec, TrainedModel};
use crate::preprocess::{
    standard_columns, window_at, window_row, CategoryEncoding, FeatureMatrix, FeatureWindow,
    WindowConfig, SLOTS,
};

pub const BUNDLE_FORMAT: &str = "ews-bundle/v1";

/// Everything needed to score live windows the way training rows were
/// built: model, alert threshold, imputation medians and category codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub model: TrainedModel,
    /// Alert when the score is strictly above this. Kept within [-1, 1]
    /// so "always" and "never" survive JSON.
    pub threshold: f64,
    /// Per-column training medians, used for missing cells and occlusion.
    pub medians: Vec<f64>,
    pub encoding: CategoryEncoding,
    pub live_window: WindowConfig,
    pub normal_ranges: NormalRanges,
    pub top_k: usize,
}

impl ModelBundle {
    /// Fits `spec` on a complete standard-layout matrix and picks the alert
    /// threshold on the training scores.
    pub fn train(
        spec: &ClassifierSpec,
        m: &FeatureMatrix,
        encoding: CategoryEncoding,
        cost_fn: f64,
        cost_fp: f64,
    ) -> Result<ModelBundle> {
        if m.columns != standard_columns() {
            return Err(Error::ColumnMismatch(
                "bundles need the standard 40-column layout".into(),
            ));
        }
        let model = fit(spec, m)?;
        let scores = predict_proba(&model, m)?;
        let c = optimal_threshold(&scores, &m.labels, cost_fn, cost_fp)?;
        Ok(ModelBundle {
            format: BUNDLE_FORMAT.into(),
            model,
            threshold: c.threshold.clamp(-1.0, 1.0),
            medians: m.column_medians(),
            encoding,
            live_window: WindowConfig::live(6),
            normal_ranges: NormalRanges::default(),
            top_k: DEFAULT_TOP_K,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != BUNDLE_FORMAT {
            return Err(Error::Data(format!(
                "unsupported bundle format `{}`",
                self.format
            )));
        }
        self.model.check_format()?;
        self.model.check_columns(&standard_columns())?;
        if self.medians.len() != self.model.columns.len()
            || self.medians.iter().any(|m| !m.is_finite())
        {
            return Err(Error::Data("bundle medians do not match the model".into()));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Data("bundle threshold must be finite".into()));
        }
        self.live_window.validate()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let b: ModelBundle = serde_json::from_str(s)?;
        b.validate()?;
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelBundle::from_json(&s)
    }

    /// Flattens a window and fills whatever is still missing with the
    /// training medians.
    pub fn window_input(&self, w: &FeatureWindow) -> Vec<f64> {
        let mut row = window_row(w, &self.encoding);
        for (v, m) in row.iter_mut().zip(&self.medians) {
            if v.is_nan() {
                *v = *m;
            }
        }
        row
    }

    /// Model input for `enc` at `now`: live window, forward fill, then
    /// training medians. `None` when the window holds no vitals.
    pub fn live_row(&self, enc: &Encounter, now: NaiveDateTime) -> Option<(Vec<f64>, Vitals)> {
        let (w, _) = window_at(enc, now, &self.live_window).ok()?;
        Some((self.window_input(&w), Vitals(w.vitals[SLOTS - 1])))
    }

    /// Scores `enc` at `now` with the model and both protocols.
    pub fn assess(&self, enc: &Encounter, now: NaiveDateTime) -> LiveAssessment {
        let Some((row, latest)) = self.live_row(enc, now) else {
            return LiveAssessment::default();
        };
        let ml_score = self.model.predict_row(&row);
        LiveAssessment {
            ml_score: Some(ml_score),
            ml_alert: ml_score > self.threshold,
            mews: score(
                Protocol::Mews,
                &latest,
                false,
                Protocol::Mews.default_threshold(),
            )
            .ok(),
            news2: score(
                Protocol::News2,
                &latest,
                false,
                Protocol::News2.default_threshold(),
            )
            .ok(),
            row: Some(row),
        }
    }

    pub fn explain(&self, encounter_id: &str, row: &[f64]) -> Result<AlertExplanation> {
        explain_alert(
            &self.model,
            encounter_id,
            row,
            &self.medians,
            &self.normal_ranges,
            self.top_k,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LiveAssessment {
    pub row: Option<Vec<f64>>,
    pub ml_score: Option<f64>,
    pub ml_alert: bool,
    pub mews: Option<EwsResult>,
    pub news2: Option<EwsResult>,
}

impl LiveAssessment {
    pub fn ews_alert(&self) -> bool {
        self.mews.as_ref().is_some_and(|r| r.alert) || self.news2.as_ref().is_some_and(|r| r.alert)
    }
}
