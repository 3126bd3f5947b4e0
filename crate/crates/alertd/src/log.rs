//! Event logs for replay.

use chrono::NaiveDateTime;
use ews_core::Encounter;

use crate::message::{ObservationEvent, Registration};

pub fn registration(enc: &Encounter) -> Registration {
    let m = &enc.meta;
    Registration {
        encounter_id: m.encounter_id.clone(),
        hospital_id: m.hospital_id.clone(),
        age: m.age,
        sex: m.sex,
        ward: m.ward.clone(),
        department: m.department.clone(),
        admission_time: m.admission_time,
    }
}

/// Interleaves the encounters into one time-ordered NDJSON log: each
/// registration at admission, then every observation up to the outcome.
/// Ties keep encounter order, and registrations precede observations.
pub fn encounters_to_log(encounters: &[Encounter]) -> Vec<String> {
    let mut events: Vec<(NaiveDateTime, u8, usize, usize, String)> = Vec::new();
    for (e, enc) in encounters.iter().enumerate() {
        events.push((
            enc.meta.admission_time,
            0,
            e,
            0,
            registration(enc).to_line(),
        ));
        for (i, o) in enc.observations.iter().enumerate() {
            let ev = ObservationEvent {
                encounter_id: o.encounter_id.clone(),
                ts: o.timestamp,
                measure: o.kind,
                value: o.value,
            };
            events.push((o.timestamp, 1, e, i, ev.to_line()));
        }
    }
    events.sort_by_key(|e| (e.0, e.1, e.2, e.3));
    events.into_iter().map(|e| e.4).collect()
}
