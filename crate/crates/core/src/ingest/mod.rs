//! Domain model and ingestion of longitudinal EHR exports.

mod cohort;
mod longitudinal;
mod types;

use std::collections::{BTreeMap, HashMap};

pub use cohort::{summarize_cohort, BandCount, CohortSummary, MeanSd};
pub use longitudinal::{
    count_data_lines, parse_longitudinal_csv, write_longitudinal_csv, write_text, ColumnMapping,
    EncounterColumns, MeasurementColumns, ParsedInput, RejectedRow, TIMESTAMP_FORMAT,
};
pub use types::{Encounter, EncounterMeta, Observation, PlausibilityBounds, Range, Sex, VitalKind};

/// Keeps observations whose value lies inside the inclusive plausibility
/// range of their kind. Order is preserved.
pub fn filter_outliers(
    obs: Vec<Observation>,
    bounds: &PlausibilityBounds,
) -> (Vec<Observation>, BTreeMap<VitalKind, usize>) {
    let mut dropped = BTreeMap::new();
    let kept = obs
        .into_iter()
        .filter(|o| {
            let keep = bounds.get(o.kind).contains(o.value);
            if !keep {
                *dropped.entry(o.kind).or_insert(0) += 1;
            }
            keep
        })
        .collect();
    (kept, dropped)
}

/// Result of joining observations onto encounter metadata.
#[derive(Debug, Clone, Default)]
pub struct Assembly {
    pub encounters: Vec<Encounter>,
    /// Encounters with fewer than two collection events.
    pub excluded_single_collection: Vec<String>,
    /// Observations whose encounter id is not in the metadata table.
    pub orphan_observations: usize,
    pub orphan_encounter_ids: Vec<String>,
    /// Observations timestamped outside the admission..outcome span.
    pub out_of_span: usize,
}

/// Groups observations by encounter, sorts them in time, and excludes stays
/// with fewer than two distinct collection timestamps.
///
/// Output encounters follow the metadata order.
pub fn assemble_encounters(obs: Vec<Observation>, metadata: Vec<EncounterMeta>) -> Assembly {
    let index: HashMap<&str, usize> = metadata
        .iter()
        .enumerate()
        .map(|(i, m)| (m.encounter_id.as_str(), i))
        .collect();

    let mut buckets: Vec<Vec<Observation>> = vec![Vec::new(); metadata.len()];
    let mut out = Assembly::default();
    let mut orphans = BTreeMap::new();
    for o in obs {
        match index.get(o.encounter_id.as_str()) {
            Some(&i) => {
                let m = &metadata[i];
                if o.timestamp < m.admission_time || o.timestamp > m.outcome_time {
                    out.out_of_span += 1;
                } else {
                    buckets[i].push(o);
                }
            }
            None => {
                out.orphan_observations += 1;
                orphans.entry(o.encounter_id).or_insert(());
            }
        }
    }
    out.orphan_encounter_ids = orphans.into_keys().collect();

    for (meta, mut observations) in metadata.into_iter().zip(buckets) {
        // Stable: same-timestamp observations keep input order.
        observations.sort_by_key(|o| o.timestamp);
        let enc = Encounter { meta, observations };
        if enc.collection_events() < 2 {
            out.excluded_single_collection.push(enc.meta.encounter_id);
        } else {
            out.encounters.push(enc);
        }
    }
    out
}
