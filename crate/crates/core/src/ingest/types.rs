use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Vital signs tracked by the engine.
///
/// The declaration order fixes the column layout of every feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VitalKind {
    /// Degrees Celsius.
    Temperature,
    /// Percent.
    OxygenSaturation,
    /// Breaths per minute.
    RespiratoryRate,
    /// mg/dL.
    BloodGlucose,
    /// mmHg.
    SystolicBp,
    /// mmHg.
    DiastolicBp,
    /// Beats per minute.
    HeartRate,
}

impl VitalKind {
    pub const COUNT: usize = 7;

    pub const ALL: [VitalKind; VitalKind::COUNT] = [
        VitalKind::Temperature,
        VitalKind::OxygenSaturation,
        VitalKind::RespiratoryRate,
        VitalKind::BloodGlucose,
        VitalKind::SystolicBp,
        VitalKind::DiastolicBp,
        VitalKind::HeartRate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            VitalKind::Temperature => "temperature",
            VitalKind::OxygenSaturation => "oxygen_saturation",
            VitalKind::RespiratoryRate => "respiratory_rate",
            VitalKind::BloodGlucose => "blood_glucose",
            VitalKind::SystolicBp => "systolic_bp",
            VitalKind::DiastolicBp => "diastolic_bp",
            VitalKind::HeartRate => "heart_rate",
        }
    }

    /// Human-readable label used in alert rendering.
    pub fn label(self) -> &'static str {
        match self {
            VitalKind::Temperature => "Temperature",
            VitalKind::OxygenSaturation => "Oxygen Saturation",
            VitalKind::RespiratoryRate => "Respiratory Rate",
            VitalKind::BloodGlucose => "Blood Glucose",
            VitalKind::SystolicBp => "Systolic Blood Pressure",
            VitalKind::DiastolicBp => "Diastolic Blood Pressure",
            VitalKind::HeartRate => "Heart Rate",
        }
    }
}

impl fmt::Display for VitalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VitalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VitalKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown measure `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    /// Fixed 0/1 encoding used in feature matrices.
    pub fn code(self) -> f64 {
        match self {
            Sex::Female => 0.0,
            Sex::Male => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }
}

impl FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" | "0" => Ok(Sex::Female),
            "m" | "male" | "1" => Ok(Sex::Male),
            other => Err(Error::Data(format!("unknown sex `{other}`"))),
        }
    }
}

/// One timestamped vital-sign measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub encounter_id: String,
    pub timestamp: NaiveDateTime,
    pub kind: VitalKind,
    pub value: f64,
}

/// Encounter-level record as read from the encounters table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterMeta {
    pub encounter_id: String,
    pub hospital_id: String,
    pub age: f64,
    pub sex: Sex,
    pub ward: String,
    pub department: String,
    pub admission_time: NaiveDateTime,
    pub outcome_time: NaiveDateTime,
    pub died: bool,
}

impl EncounterMeta {
    pub fn length_of_stay_days(&self) -> f64 {
        (self.outcome_time - self.admission_time).num_seconds() as f64 / 86_400.0
    }
}

/// A hospital stay with its time-ordered observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encounter {
    pub meta: EncounterMeta,
    pub observations: Vec<Observation>,
}

impl Encounter {
    pub fn id(&self) -> &str {
        &self.meta.encounter_id
    }

    /// Number of distinct timestamps carrying at least one vital.
    pub fn collection_events(&self) -> usize {
        let mut n = 0;
        let mut last = None;
        for o in &self.observations {
            if last != Some(o.timestamp) {
                n += 1;
                last = Some(o.timestamp);
            }
        }
        n
    }
}

/// Inclusive plausibility interval for one vital.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Per-vital physiological plausibility bounds used by the outlier filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityBounds {
    ranges: [Range; VitalKind::COUNT],
}

impl Default for PlausibilityBounds {
    fn default() -> Self {
        PlausibilityBounds {
            ranges: [
                Range::new(30.0, 45.0),
                Range::new(50.0, 100.0),
                Range::new(4.0, 80.0),
                Range::new(10.0, 1000.0),
                Range::new(30.0, 300.0),
                Range::new(10.0, 200.0),
                Range::new(20.0, 300.0),
            ],
        }
    }
}

impl PlausibilityBounds {
    pub fn get(&self, kind: VitalKind) -> Range {
        self.ranges[kind.index()]
    }

    pub fn set(&mut self, kind: VitalKind, range: Range) -> Result<(), Error> {
        if !(range.lo.is_finite() && range.hi.is_finite() && range.lo <= range.hi) {
            return Err(Error::Config(format!(
                "bounds for {kind} must be finite with lo <= hi, got [{}, {}]",
                range.lo, range.hi
            )));
        }
        self.ranges[kind.index()] = range;
        Ok(())
    }
}
