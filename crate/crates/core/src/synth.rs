//! Seeded synthetic ward cohorts in the longitudinal two-table format.
//!
//! Each stay has a latent severity that raises mortality and pushes every
//! vital away from normal; stays ending in death also deteriorate over
//! their final days. Measurement noise, missing measures, occasional
//! entry errors and single-collection stays mimic real exports.

use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    write_longitudinal_csv, ColumnMapping, Encounter, EncounterMeta, Observation, Sex, VitalKind,
};
use crate::models::sigmoid;
use crate::rng::{rng_for, Rng};

/// Share of stays per hospital H1..H6.
pub const HOSPITAL_SHARES: [f64; 6] = [0.136, 0.232, 0.141, 0.163, 0.054, 0.274];

const AGE_BANDS: [(f64, f64, f64); 8] = [
    (0.0, 15.0, 0.123),
    (15.0, 18.0, 0.014),
    (18.0, 30.0, 0.144),
    (30.0, 40.0, 0.151),
    (40.0, 50.0, 0.105),
    (50.0, 60.0, 0.131),
    (60.0, 70.0, 0.150),
    (70.0, 95.0, 0.179),
];

const STAY_BANDS: [(f64, f64, f64); 5] = [
    (0.0, 3.0, 0.593),
    (3.0, 6.0, 0.178),
    (6.0, 9.0, 0.079),
    (9.0, 12.0, 0.041),
    (12.0, 12.0, 0.107),
];

const DEPARTMENTS: [(&str, f64); 5] = [
    ("oncology", 0.9),
    ("internal_medicine", 0.4),
    ("cardiology", 0.2),
    ("surgery", -0.5),
    ("orthopedics", -1.0),
];

/// Normal mean, per-stay spread, measurement noise and change per unit of
/// deterioration for each vital.
struct VitalModel {
    kind: VitalKind,
    mean: f64,
    between: f64,
    noise: f64,
    per_unit: f64,
    decimals: i32,
    missing: f64,
}

const VITALS: [VitalModel; 7] = [
    VitalModel {
        kind: VitalKind::Temperature,
        mean: 36.7,
        between: 0.25,
        noise: 0.35,
        per_unit: 0.45,
        decimals: 1,
        missing: 0.10,
    },
    VitalModel {
        kind: VitalKind::OxygenSaturation,
        mean: 97.0,
        between: 1.2,
        noise: 1.4,
        per_unit: -2.2,
        decimals: 0,
        missing: 0.12,
    },
    VitalModel {
        kind: VitalKind::RespiratoryRate,
        mean: 17.0,
        between: 1.5,
        noise: 2.0,
        per_unit: 3.0,
        decimals: 0,
        missing: 0.15,
    },
    VitalModel {
        kind: VitalKind::BloodGlucose,
        mean: 105.0,
        between: 15.0,
        noise: 22.0,
        per_unit: 45.0,
        decimals: 0,
        missing: 0.45,
    },
    VitalModel {
        kind: VitalKind::SystolicBp,
        mean: 122.0,
        between: 10.0,
        noise: 11.0,
        per_unit: -12.0,
        decimals: 0,
        missing: 0.08,
    },
    VitalModel {
        kind: VitalKind::DiastolicBp,
        mean: 76.0,
        between: 7.0,
        noise: 8.0,
        per_unit: -6.0,
        decimals: 0,
        missing: 0.08,
    },
    VitalModel {
        kind: VitalKind::HeartRate,
        mean: 82.0,
        between: 9.0,
        noise: 9.0,
        per_unit: 13.0,
        decimals: 0,
        missing: 0.06,
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub encounters: usize,
    pub seed: u64,
    /// Baseline log-odds of death before severity and covariates.
    pub mortality_intercept: f64,
    /// Fraction of stays with a single collection event.
    pub single_collection_rate: f64,
    /// Probability that a recorded value is a gross entry error.
    pub entry_error_rate: f64,
    /// Hospital (1-based) whose recordings are much noisier and whose
    /// deterioration signal is muted.
    pub shifted_hospital: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            encounters: 5000,
            seed: 2020,
            mortality_intercept: -4.3,
            single_collection_rate: 0.03,
            entry_error_rate: 0.002,
            shifted_hospital: None,
        }
    }
}

fn pick<T: Copy>(rng: &mut Rng, items: &[(T, f64)]) -> T {
    let total: f64 = items.iter().map(|i| i.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(item, w) in items {
        if u < w {
            return item;
        }
        u -= w;
    }
    items[items.len() - 1].0
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

fn epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2018, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

fn one_encounter(cfg: &SynthConfig, i: usize) -> Encounter {
    let mut rng = rng_for(cfg.seed, &[i as u64]);
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    let hospital = pick(
        &mut rng,
        &[
            (1, HOSPITAL_SHARES[0]),
            (2, HOSPITAL_SHARES[1]),
            (3, HOSPITAL_SHARES[2]),
            (4, HOSPITAL_SHARES[3]),
            (5, HOSPITAL_SHARES[4]),
            (6, HOSPITAL_SHARES[5]),
        ],
    );
    let shifted = cfg.shifted_hospital == Some(hospital);
    let (lo, hi) = pick(&mut rng, &AGE_BANDS.map(|(lo, hi, w)| ((lo, hi), w)));
    let age = (lo + rng.random::<f64>() * (hi - lo)).floor();
    let sex = if rng.random::<f64>() < 0.597 {
        Sex::Female
    } else {
        Sex::Male
    };
    let (dept, dept_effect) = if age < 15.0 {
        ("pediatrics", -1.2)
    } else {
        pick(&mut rng, &DEPARTMENTS.map(|(d, e)| ((d, e), 1.0)))
    };
    let ward = format!("H{hospital}-W{}", rng.random_range(1..=4));

    let (lo, hi) = pick(&mut rng, &STAY_BANDS.map(|(lo, hi, w)| ((lo, hi), w)));
    let stay_days = if lo == hi {
        lo + Exp::new(0.1_f64).unwrap().sample(&mut rng).min(60.0)
    } else {
        lo + rng.random::<f64>() * (hi - lo)
    };
    let stay_minutes = ((stay_days * 1440.0) as i64).max(30);

    let severity: f64 = std_normal.sample(&mut rng);
    let hospital_effect = [0.1, -0.1, 0.2, 0.0, -0.2, 0.0][hospital - 1];
    let logit = cfg.mortality_intercept
        + 1.1 * severity
        + if age >= 65.0 { 1.3 * severity } else { 0.0 }
        + 0.045 * (age - 50.0)
        + dept_effect
        + hospital_effect
        + 0.03 * stay_days.min(30.0);
    let died = rng.random::<f64>() < sigmoid(logit);

    let admission = epoch() + Duration::minutes(rng.random_range(0..600 * 1440));
    let outcome = admission + Duration::minutes(stay_minutes);

    let fever = if rng.random::<bool>() { 1.0 } else { -0.6 };
    let glycemia = if rng.random::<f64>() < 0.6 { 1.0 } else { -0.8 };
    let offsets: Vec<f64> = VITALS
        .iter()
        .map(|v| v.between * std_normal.sample(&mut rng))
        .collect();
    let decline_days = 1.0 + rng.random::<f64>() * 2.0;
    let noise_scale = if shifted { 3.0 } else { 1.4 };
    let signal_scale = if shifted { 0.3 } else { 1.0 };

    let mut collections = Vec::new();
    let mut t = admission + Duration::minutes(rng.random_range(0..120));
    while t <= outcome {
        collections.push(t);
        t += Duration::minutes(360 + rng.random_range(-90..=90));
    }
    if collections.len() < 2 || rng.random::<f64>() < cfg.single_collection_rate {
        collections.truncate(1);
    }

    let mut observations = Vec::new();
    for &when in &collections {
        let hours_left = (outcome - when).num_minutes() as f64 / 60.0;
        let mut level = 0.3 * severity.max(-1.0);
        if died {
            level += 0.6 * (1.0 - hours_left / (24.0 * decline_days)).max(0.0) + 0.1;
        }
        level *= signal_scale;
        for (v, offset) in VITALS.iter().zip(&offsets) {
            if rng.random::<f64>() < v.missing {
                continue;
            }
            let direction = match v.kind {
                VitalKind::Temperature => fever,
                VitalKind::BloodGlucose => glycemia,
                _ => 1.0,
            };
            let mut value = v.mean
                + offset
                + direction * v.per_unit * level
                + noise_scale * v.noise * std_normal.sample(&mut rng);
            if v.kind == VitalKind::OxygenSaturation {
                value = value.min(100.0);
            }
            if rng.random::<f64>() < cfg.entry_error_rate {
                value *= 10.0;
            }
            observations.push(Observation {
                encounter_id: format!("E{i:06}"),
                timestamp: when,
                kind: v.kind,
                value: round_to(value, v.decimals),
            });
        }
    }

    Encounter {
        meta: EncounterMeta {
            encounter_id: format!("E{i:06}"),
            hospital_id: format!("H{hospital}"),
            age,
            sex,
            ward,
            department: dept.to_string(),
            admission_time: admission,
            outcome_time: outcome,
            died,
        },
        observations,
    }
}

/// Generates `cfg.encounters` stays. Output depends only on `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<Encounter>> {
    if cfg.encounters == 0 {
        return Err(Error::InvalidArgument(
            "encounter count must be positive".into(),
        ));
    }
    if cfg
        .shifted_hospital
        .is_some_and(|h| !(1..=HOSPITAL_SHARES.len()).contains(&h))
    {
        return Err(Error::InvalidArgument(
            "shifted hospital must be in 1..=6".into(),
        ));
    }
    Ok((0..cfg.encounters).map(|i| one_encounter(cfg, i)).collect())
}

/// Generates a cohort and writes `measurements.csv` and `encounters.csv`
/// into `dir` with the default column mapping.
pub fn write_sample(cfg: &SynthConfig, dir: &Path) -> Result<Vec<Encounter>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let encounters = generate(cfg)?;
    write_longitudinal_csv(
        &encounters,
        &dir.join("measurements.csv"),
        &dir.join("encounters.csv"),
        &ColumnMapping::default(),
    )?;
    Ok(encounters)
}
