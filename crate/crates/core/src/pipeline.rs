//! End-to-end preparation: CSV exports to an imputed feature matrix.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    assemble_encounters, filter_outliers, parse_longitudinal_csv, summarize_cohort, CohortSummary,
    ColumnMapping, Encounter, PlausibilityBounds, VitalKind,
};
use crate::preprocess::{
    assemble_matrix, build_windows, missforest_impute, CategoryEncoding, DropReason, FeatureMatrix,
    ImputeParams, WindowConfig,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub mapping: ColumnMapping,
    pub bounds: PlausibilityBounds,
    pub window: WindowConfig,
    pub impute: ImputeParams,
}

/// Row and cell counts for each preprocessing rule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareReport {
    pub measurement_rows: usize,
    pub encounter_rows: usize,
    pub rejected_rows: usize,
    pub outlier_dropped: usize,
    pub outlier_dropped_by_vital: BTreeMap<VitalKind, usize>,
    pub orphan_observations: usize,
    pub out_of_span_observations: usize,
    pub single_collection_excluded: usize,
    pub gap_dropped: usize,
    pub no_vitals_dropped: usize,
    pub forward_filled: usize,
    pub missforest_imputed: usize,
    pub median_filled: usize,
    pub imputation_iterations: usize,
    pub rows: usize,
    pub positives: usize,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub matrix: FeatureMatrix,
    pub encoding: CategoryEncoding,
    pub encounters: Vec<Encounter>,
    pub cohort: CohortSummary,
    pub report: PrepareReport,
}

/// Runs every step from already parsed encounters: windowing, flattening
/// and imputation.
pub fn prepare_encounters(
    encounters: Vec<Encounter>,
    opts: &PrepareOptions,
    mut report: PrepareReport,
) -> Result<Prepared> {
    opts.window.validate()?;
    let cohort = summarize_cohort(&encounters)?;
    let windows = build_windows(&encounters, &opts.window)?;
    report.gap_dropped = windows.dropped_for(DropReason::ShorterThanGap);
    report.no_vitals_dropped = windows.dropped_for(DropReason::NoUsableVitals);
    report.forward_filled = windows.forward_filled;
    if windows.windows.is_empty() {
        return Err(Error::Data("no encounter yields a usable window".into()));
    }
    let encoding = CategoryEncoding::fit(&windows.windows);
    let raw = assemble_matrix(&windows.windows, &encoding)?;
    let (matrix, imputed) = missforest_impute(&raw, &opts.impute)?;
    report.missforest_imputed = imputed.forest_imputed;
    report.median_filled = imputed.median_filled;
    report.imputation_iterations = imputed.iterations;
    report.rows = matrix.n_rows();
    report.positives = matrix.labels.iter().filter(|&&l| l).count();
    Ok(Prepared {
        matrix,
        encoding,
        encounters,
        cohort,
        report,
    })
}

/// Parses the two CSV exports and prepares the feature matrix.
pub fn prepare(measurements: &Path, encounters: &Path, opts: &PrepareOptions) -> Result<Prepared> {
    let parsed = parse_longitudinal_csv(measurements, encounters, &opts.mapping)?;
    let mut report = PrepareReport {
        measurement_rows: parsed.measurement_rows,
        encounter_rows: parsed.encounter_rows,
        rejected_rows: parsed.rejected.len(),
        ..PrepareReport::default()
    };
    let (kept, dropped) = filter_outliers(parsed.observations, &opts.bounds);
    report.outlier_dropped = dropped.values().sum();
    report.outlier_dropped_by_vital = dropped;
    let assembly = assemble_encounters(kept, parsed.encounters);
    report.orphan_observations = assembly.orphan_observations;
    report.out_of_span_observations = assembly.out_of_span;
    report.single_collection_excluded = assembly.excluded_single_collection.len();
    if assembly.encounters.is_empty() {
        return Err(Error::Data(
            "no encounter has two or more collection events".into(),
        ));
    }
    prepare_encounters(assembly.encounters, opts, report)
}
