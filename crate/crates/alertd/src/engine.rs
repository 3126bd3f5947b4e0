//! Per-encounter state, scoring and alert emission.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{Duration, NaiveDateTime};
use ews_core::ingest::PlausibilityBounds;
use ews_core::{AlertExplanation, Encounter, EncounterMeta, ModelBundle, Observation, VitalKind};
use serde::{Deserialize, Serialize};

use crate::error::{AlertError, AlertResult};
use crate::message::{format_ts, BundleEvent, Message, ObservationEvent, Registration};

pub const DEFAULT_COOLDOWN_HOURS: i64 = 6;
/// Buffered history per encounter, measured back from its newest event.
pub const RETENTION_HOURS: i64 = 36;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub cooldown: Duration,
    pub retention: Duration,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            cooldown: Duration::hours(DEFAULT_COOLDOWN_HOURS),
            retention: Duration::hours(RETENTION_HOURS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwsSummary {
    pub total: u32,
    pub alert: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub encounter_id: String,
    /// Event time of the observation that raised the alert.
    pub time: String,
    pub ml_score: f64,
    pub ml_alert: bool,
    pub mews: Option<EwsSummary>,
    pub news2: Option<EwsSummary>,
    /// What turned on: any of `ml`, `mews`, `news2`.
    pub triggers: Vec<String>,
    pub explanation: AlertExplanation,
    pub dedup_key: String,
}

/// Latest assessment of one encounter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CensusEntry {
    pub encounter_id: String,
    pub hospital_id: String,
    pub clock: Option<String>,
    pub observations: usize,
    pub ml_score: Option<f64>,
    pub mews: Option<EwsSummary>,
    pub news2: Option<EwsSummary>,
    pub last_alert: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub encounters: Vec<CensusEntry>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Flags {
    ml: bool,
    mews: bool,
    news2: bool,
}

#[derive(Debug)]
struct EncounterState {
    meta: EncounterMeta,
    /// Time-ordered; equal timestamps keep arrival order.
    buffer: Vec<Observation>,
    /// Newest event time seen; windows are anchored here.
    clock: Option<NaiveDateTime>,
    flags: Flags,
    ml_score: Option<f64>,
    mews: Option<EwsSummary>,
    news2: Option<EwsSummary>,
    emitted: HashMap<String, NaiveDateTime>,
    last_alert: Option<NaiveDateTime>,
}

impl EncounterState {
    fn new(r: &Registration) -> Self {
        EncounterState {
            meta: meta_for(r),
            buffer: Vec::new(),
            clock: None,
            flags: Flags::default(),
            ml_score: None,
            mews: None,
            news2: None,
            emitted: HashMap::new(),
            last_alert: None,
        }
    }

    fn encounter(&self) -> Encounter {
        let mut meta = self.meta.clone();
        if let Some(clock) = self.clock {
            meta.outcome_time = clock;
        }
        Encounter {
            meta,
            observations: self.buffer.clone(),
        }
    }

    fn census(&self) -> CensusEntry {
        CensusEntry {
            encounter_id: self.meta.encounter_id.clone(),
            hospital_id: self.meta.hospital_id.clone(),
            clock: self.clock.map(format_ts),
            observations: self.buffer.len(),
            ml_score: self.ml_score,
            mews: self.mews.clone(),
            news2: self.news2.clone(),
            last_alert: self.last_alert.map(format_ts),
        }
    }
}

fn meta_for(r: &Registration) -> EncounterMeta {
    EncounterMeta {
        encounter_id: r.encounter_id.clone(),
        hospital_id: r.hospital_id.clone(),
        age: r.age,
        sex: r.sex,
        ward: r.ward.clone(),
        department: r.department.clone(),
        admission_time: r.admission_time,
        outcome_time: r.admission_time,
        died: false,
    }
}

/// Shared state store. Updates to one encounter are serialized by its own
/// lock; distinct encounters proceed in parallel.
pub struct Engine {
    bundle: ModelBundle,
    bounds: PlausibilityBounds,
    config: EngineConfig,
    states: RwLock<HashMap<String, Arc<Mutex<EncounterState>>>>,
}

/// What one message produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Registered,
    Scored(Option<Box<AlertEvent>>),
    Snapshot(Census),
}

impl Engine {
    pub fn new(bundle: ModelBundle, config: EngineConfig) -> Self {
        Engine {
            bundle,
            bounds: PlausibilityBounds::default(),
            config,
            states: RwLock::new(HashMap::new()),
        }
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn handle_line(&self, line: &str) -> AlertResult<Outcome> {
        match Message::parse(line)? {
            Message::Register(r) => {
                self.register(&r);
                Ok(Outcome::Registered)
            }
            Message::Observation(ev) => Ok(Outcome::Scored(self.ingest(&ev)?.map(Box::new))),
            Message::Bundle(ev) => Ok(Outcome::Scored(self.ingest_bundle(&ev)?.map(Box::new))),
            Message::Snapshot => Ok(Outcome::Snapshot(self.snapshot())),
        }
    }

    /// Registers an encounter, or refreshes its metadata keeping the buffer.
    pub fn register(&self, r: &Registration) {
        let mut states = self.states.write().expect("state lock");
        match states.get(&r.encounter_id) {
            Some(s) => s.lock().expect("encounter lock").meta = meta_for(r),
            None => {
                states.insert(
                    r.encounter_id.clone(),
                    Arc::new(Mutex::new(EncounterState::new(r))),
                );
            }
        }
    }

    /// Parses and ingests one observation or bundle line; other message
    /// types are rejected.
    pub fn ingest_event(&self, line: &str) -> AlertResult<Option<AlertEvent>> {
        match Message::parse(line)? {
            Message::Observation(ev) => self.ingest(&ev),
            Message::Bundle(ev) => self.ingest_bundle(&ev),
            _ => Err(AlertError::Malformed("expected an observation".into())),
        }
    }

    /// Buffers one observation, rescores the encounter at its clock and
    /// returns an alert if one is due. Invalid events leave state untouched.
    pub fn ingest(&self, ev: &ObservationEvent) -> AlertResult<Option<AlertEvent>> {
        self.ingest_values(&ev.encounter_id, ev.ts, &[(ev.measure, ev.value)])
    }

    /// Like [`Engine::ingest`] for several vitals at once; rejected as a
    /// whole if any value is implausible.
    pub fn ingest_bundle(&self, ev: &BundleEvent) -> AlertResult<Option<AlertEvent>> {
        let values: Vec<(VitalKind, f64)> = ev.vitals.iter().map(|(&k, &v)| (k, v)).collect();
        self.ingest_values(&ev.encounter_id, ev.ts, &values)
    }

    fn ingest_values(
        &self,
        encounter_id: &str,
        ts: NaiveDateTime,
        values: &[(VitalKind, f64)],
    ) -> AlertResult<Option<AlertEvent>> {
        for &(kind, value) in values {
            if !self.bounds.get(kind).contains(value) {
                return Err(AlertError::Implausible {
                    kind: kind.name().into(),
                    value,
                });
            }
        }
        let state = self
            .states
            .read()
            .expect("state lock")
            .get(encounter_id)
            .cloned()
            .ok_or_else(|| AlertError::UnknownEncounter(encounter_id.to_string()))?;
        let mut s = state.lock().expect("encounter lock");

        for &(kind, value) in values {
            let at = s.buffer.partition_point(|o| o.timestamp <= ts);
            s.buffer.insert(
                at,
                Observation {
                    encounter_id: encounter_id.to_string(),
                    timestamp: ts,
                    kind,
                    value,
                },
            );
        }
        let clock = s.clock.map_or(ts, |c| c.max(ts));
        s.clock = Some(clock);
        let horizon = clock - self.config.retention;
        let stale = s.buffer.partition_point(|o| o.timestamp < horizon);
        s.buffer.drain(..stale);

        let enc = s.encounter();
        let a = self.bundle.assess(&enc, clock);
        let summary = |r: &Option<ews_core::EwsResult>| {
            r.as_ref().map(|r| EwsSummary {
                total: r.total,
                alert: r.alert,
            })
        };
        let now = Flags {
            ml: a.ml_alert,
            mews: a.mews.as_ref().is_some_and(|r| r.alert),
            news2: a.news2.as_ref().is_some_and(|r| r.alert),
        };
        let prev = s.flags;
        s.flags = now;
        s.ml_score = a.ml_score;
        s.mews = summary(&a.mews);
        s.news2 = summary(&a.news2);

        let mut triggers = Vec::new();
        for (name, on, was) in [
            ("ml", now.ml, prev.ml),
            ("mews", now.mews, prev.mews),
            ("news2", now.news2, prev.news2),
        ] {
            if on && !was {
                triggers.push(name.to_string());
            }
        }
        let (Some(row), Some(ml_score)) = (a.row.as_ref(), a.ml_score) else {
            return Ok(None);
        };
        if triggers.is_empty() {
            return Ok(None);
        }
        let dedup_key = format!("{encounter_id}:{}", triggers.join("+"));
        if let Some(&last) = s.emitted.get(&dedup_key) {
            if ts - last < self.config.cooldown {
                return Ok(None);
            }
        }
        s.emitted.insert(dedup_key.clone(), ts);
        s.last_alert = Some(ts);
        let explanation = self.bundle.explain(encounter_id, row)?;
        Ok(Some(AlertEvent {
            encounter_id: encounter_id.to_string(),
            time: format_ts(ts),
            ml_score,
            ml_alert: now.ml,
            mews: s.mews.clone(),
            news2: s.news2.clone(),
            triggers,
            explanation,
            dedup_key,
        }))
    }

    /// Consistent point-in-time census, ordered by encounter id.
    pub fn snapshot(&self) -> Census {
        let states = self.states.read().expect("state lock");
        let ordered: BTreeMap<&String, &Arc<Mutex<EncounterState>>> = states.iter().collect();
        let guards: Vec<_> = ordered
            .values()
            .map(|s| s.lock().expect("encounter lock"))
            .collect();
        Census {
            encounters: guards.iter().map(|g| g.census()).collect(),
        }
    }

    /// The encounter as currently buffered, with its outcome time set to
    /// the encounter clock.
    pub fn buffered(&self, encounter_id: &str) -> Option<(Encounter, Option<NaiveDateTime>)> {
        let states = self.states.read().expect("state lock");
        let s = states.get(encounter_id)?.lock().expect("encounter lock");
        Some((s.encounter(), s.clock))
    }
}
