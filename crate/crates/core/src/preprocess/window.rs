use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Encounter, Observation, Sex, VitalKind};

/// Number of timestamps in every window.
pub const SLOTS: usize = 5;

/// Vitals laid out as `SLOTS` rows (t-4 first, t last) by one column per
/// [`VitalKind`].
pub type GridMatrix = [[Option<f64>; VitalKind::COUNT]; SLOTS];

pub const EMPTY_GRID: GridMatrix = [[None; VitalKind::COUNT]; SLOTS];

/// Window geometry in whole hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub window_hours: i64,
    pub gap_hours: i64,
    pub step_hours: i64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_hours: 36,
            gap_hours: 12,
            step_hours: 6,
        }
    }
}

impl WindowConfig {
    /// Settings used when scoring live streams: no discarded gap.
    pub fn live(step_hours: i64) -> Self {
        WindowConfig {
            window_hours: step_hours * (SLOTS as i64 - 1),
            gap_hours: 0,
            step_hours,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_hours <= 0 || self.gap_hours < 0 {
            return Err(Error::Config(format!(
                "window step must be positive and gap non-negative, got step={} gap={}",
                self.step_hours, self.gap_hours
            )));
        }
        let expected = self.gap_hours + self.step_hours * (SLOTS as i64 - 1);
        if self.window_hours != expected {
            return Err(Error::Config(format!(
                "window_hours must equal gap_hours + {} * step_hours = {expected}, got {}",
                SLOTS - 1,
                self.window_hours
            )));
        }
        Ok(())
    }

    pub fn grid(&self, anchor: NaiveDateTime) -> TimeGrid {
        TimeGrid::new(
            anchor,
            Duration::hours(self.gap_hours),
            Duration::hours(self.step_hours),
        )
    }
}

/// Five slot timestamps ending `gap` before the anchor, `step` apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub anchor: NaiveDateTime,
    pub gap: Duration,
    pub step: Duration,
    pub slots: [NaiveDateTime; SLOTS],
}

impl TimeGrid {
    pub fn new(anchor: NaiveDateTime, gap: Duration, step: Duration) -> Self {
        let end = anchor - gap;
        let slots = std::array::from_fn(|k| end - step * (SLOTS - 1 - k) as i32);
        TimeGrid {
            anchor,
            gap,
            step,
            slots,
        }
    }

    /// Latest timestamp any feature may depend on.
    pub fn cutoff(&self) -> NaiveDateTime {
        self.slots[SLOTS - 1]
    }

    /// Exclusive start of the first slot's interval.
    pub fn start(&self) -> NaiveDateTime {
        self.slots[0] - self.step
    }

    /// Slot whose half-open interval `(slot_{k-1}, slot_k]` holds `ts`.
    pub fn slot_of(&self, ts: NaiveDateTime) -> Option<usize> {
        if ts <= self.start() || ts > self.cutoff() {
            return None;
        }
        self.slots.iter().position(|&s| ts <= s)
    }
}

/// Places observations on the grid: each cell holds the latest observation
/// of that kind inside the slot's interval.
pub fn resample_to_grid(enc: &Encounter, grid: &TimeGrid) -> GridMatrix {
    resample_observations(&enc.observations, grid, |_| {})
}

/// Same as [`resample_to_grid`] over a sorted observation slice, calling
/// `visit` for every observation that is read.
pub fn resample_observations(
    observations: &[Observation],
    grid: &TimeGrid,
    mut visit: impl FnMut(&Observation),
) -> GridMatrix {
    let mut m = EMPTY_GRID;
    let start = grid.start();
    let cutoff = grid.cutoff();
    let first = observations.partition_point(|o| o.timestamp <= start);
    let last = observations.partition_point(|o| o.timestamp <= cutoff);
    for o in &observations[first..last] {
        visit(o);
        if let Some(k) = grid.slot_of(o.timestamp) {
            // Sorted input: later observations overwrite earlier ones.
            m[k][o.kind.index()] = Some(o.value);
        }
    }
    m
}

/// Copies the nearest earlier observed value into missing cells at most
/// `max_steps` rows below it. Observed cells are never modified.
pub fn forward_fill(m: &GridMatrix, max_steps: usize) -> GridMatrix {
    let mut out = *m;
    for v in 0..VitalKind::COUNT {
        let mut last: Option<(usize, f64)> = None;
        for k in 0..SLOTS {
            match m[k][v] {
                Some(x) => last = Some((k, x)),
                None => {
                    if let Some((j, x)) = last {
                        if k - j <= max_steps {
                            out[k][v] = Some(x);
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn missing_cells(m: &GridMatrix) -> usize {
    m.iter().flatten().filter(|c| c.is_none()).count()
}

/// Non-vital inputs of a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticFeatures {
    pub age: f64,
    pub sex: Sex,
    /// Days from admission to the window's last slot.
    pub los_days: f64,
    pub ward: String,
    pub department: String,
}

/// One encounter's model input before flattening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    pub encounter_id: String,
    pub hospital_id: String,
    pub grid: TimeGrid,
    /// Resampled and forward-filled vitals; may still hold gaps.
    pub vitals: GridMatrix,
    pub statics: StaticFeatures,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Admission falls after the window's last slot.
    ShorterThanGap,
    /// No vital lands in any slot even after forward filling.
    NoUsableVitals,
}

#[derive(Debug, Clone, Default)]
pub struct WindowSet {
    pub windows: Vec<FeatureWindow>,
    pub dropped: Vec<(String, DropReason)>,
    /// Cells filled by forward filling across all kept windows.
    pub forward_filled: usize,
}

impl WindowSet {
    pub fn dropped_for(&self, reason: DropReason) -> usize {
        self.dropped.iter().filter(|(_, r)| *r == reason).count()
    }
}

/// Window for one encounter anchored at `anchor`. Returns the window and the
/// number of forward-filled cells, or the reason it is unusable.
pub fn window_at(
    enc: &Encounter,
    anchor: NaiveDateTime,
    cfg: &WindowConfig,
) -> Result<(FeatureWindow, usize), DropReason> {
    let grid = cfg.grid(anchor);
    if enc.meta.admission_time > grid.cutoff() {
        return Err(DropReason::ShorterThanGap);
    }
    let raw = resample_to_grid(enc, &grid);
    let vitals = forward_fill(&raw, 2);
    if missing_cells(&vitals) == SLOTS * VitalKind::COUNT {
        return Err(DropReason::NoUsableVitals);
    }
    let filled = missing_cells(&raw) - missing_cells(&vitals);
    let los_days = (grid.cutoff() - enc.meta.admission_time).num_seconds() as f64 / 86_400.0;
    Ok((
        FeatureWindow {
            encounter_id: enc.meta.encounter_id.clone(),
            hospital_id: enc.meta.hospital_id.clone(),
            grid,
            vitals,
            statics: StaticFeatures {
                age: enc.meta.age,
                sex: enc.meta.sex,
                los_days: los_days.max(0.0),
                ward: enc.meta.ward.clone(),
                department: enc.meta.department.clone(),
            },
            label: enc.meta.died,
        },
        filled,
    ))
}

/// One window per encounter, anchored at its outcome time (death or
/// discharge).
pub fn build_windows(encounters: &[Encounter], cfg: &WindowConfig) -> Result<WindowSet> {
    cfg.validate()?;
    let mut set = WindowSet::default();
    for enc in encounters {
        match window_at(enc, enc.meta.outcome_time, cfg) {
            Ok((w, filled)) => {
                set.forward_filled += filled;
                set.windows.push(w);
            }
            Err(reason) => set.dropped.push((enc.meta.encounter_id.clone(), reason)),
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EncounterMeta;
    use chrono::NaiveDate;

    fn t(h: i64) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2020, 3, 10)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
            + Duration::hours(h)
    }

    fn encounter(admit: i64, outcome: i64, obs: &[(i64, VitalKind, f64)], died: bool) -> Encounter {
        Encounter {
            meta: EncounterMeta {
                encounter_id: "E".into(),
                hospital_id: "H1".into(),
                age: 60.0,
                sex: Sex::Male,
                ward: "W".into(),
                department: "D".into(),
                admission_time: t(admit),
                outcome_time: t(outcome),
                died,
            },
            observations: obs
                .iter()
                .map(|&(h, kind, value)| Observation {
                    encounter_id: "E".into(),
                    timestamp: t(h),
                    kind,
                    value,
                })
                .collect(),
        }
    }

    fn col(m: &GridMatrix, kind: VitalKind) -> [Option<f64>; SLOTS] {
        std::array::from_fn(|k| m[k][kind.index()])
    }

    #[test]
    fn grid_slots() {
        let g = WindowConfig::default().grid(t(100));
        assert_eq!(g.slots, [t(64), t(70), t(76), t(82), t(88)]);
        assert!(g.slots.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_value_lands_in_its_slot() {
        let g = WindowConfig::default().grid(t(100));
        // slot t-2 is index 2 = 76h.
        let e = encounter(0, 100, &[(76, VitalKind::HeartRate, 80.0)], false);
        let m = resample_to_grid(&e, &g);
        assert_eq!(m[2][VitalKind::HeartRate.index()], Some(80.0));
        assert_eq!(missing_cells(&m), SLOTS * VitalKind::COUNT - 1);
    }

    #[test]
    fn latest_observation_in_slot_wins() {
        let g = WindowConfig::default().grid(t(100));
        let e = encounter(
            0,
            100,
            &[
                (72, VitalKind::HeartRate, 80.0),
                (75, VitalKind::HeartRate, 90.0),
            ],
            false,
        );
        assert_eq!(
            resample_to_grid(&e, &g)[2][VitalKind::HeartRate.index()],
            Some(90.0)
        );
    }

    #[test]
    fn six_hourly_series_fills_every_slot_and_skips_gap() {
        // Every 6h for 48h before outcome at 100h: 52, 58, ..., 100.
        let obs: Vec<_> = (0..=8)
            .map(|i| (52 + 6 * i, VitalKind::HeartRate, 60.0 + i as f64))
            .collect();
        let e = encounter(0, 100, &obs, false);
        let g = WindowConfig::default().grid(t(100));
        let m = resample_to_grid(&e, &g);
        // Slots 64..88 take the readings at exactly those hours (i = 2..6).
        assert_eq!(
            col(&m, VitalKind::HeartRate),
            [Some(62.0), Some(63.0), Some(64.0), Some(65.0), Some(66.0)]
        );
        let mut read = Vec::new();
        resample_observations(&e.observations, &g, |o| read.push(o.timestamp));
        assert!(read.iter().all(|&ts| ts <= t(88)));
        assert!(!read.contains(&t(94)) && !read.contains(&t(100)));
    }

    #[test]
    fn forward_fill_examples() {
        let x = Some(1.0);
        let y = Some(2.0);
        let mut m = EMPTY_GRID;
        let cases: [([Option<f64>; SLOTS], [Option<f64>; SLOTS]); 3] = [
            ([x, None, None, None, None], [x, x, x, None, None]),
            ([None, None, x, None, None], [None, None, x, x, x]),
            ([x, None, y, None, None], [x, x, y, y, y]),
        ];
        for (input, expected) in cases {
            for k in 0..SLOTS {
                m[k][0] = input[k];
            }
            let out = forward_fill(&m, 2);
            assert_eq!(col(&out, VitalKind::Temperature), expected);
        }
    }

    #[test]
    fn window_geometry_and_los() {
        let obs: Vec<_> = (0..5)
            .map(|i| (64 + 6 * i, VitalKind::SystolicBp, 120.0))
            .collect();
        let e = encounter(40, 100, &obs, true);
        let set = build_windows(&[e], &WindowConfig::default()).unwrap();
        assert_eq!(set.windows.len(), 1);
        let w = &set.windows[0];
        assert_eq!(w.grid.slots, [t(64), t(70), t(76), t(82), t(88)]);
        assert!(w.label);
        assert_eq!(w.statics.los_days, 2.0);
    }

    #[test]
    fn gap_only_vitals_are_dropped() {
        let e = encounter(
            0,
            100,
            &[
                (90, VitalKind::HeartRate, 80.0),
                (99, VitalKind::HeartRate, 85.0),
            ],
            false,
        );
        let set = build_windows(&[e], &WindowConfig::default()).unwrap();
        assert!(set.windows.is_empty());
        assert_eq!(set.dropped_for(DropReason::NoUsableVitals), 1);
    }

    #[test]
    fn short_stay_is_dropped() {
        let e = encounter(
            95,
            100,
            &[
                (96, VitalKind::HeartRate, 80.0),
                (97, VitalKind::HeartRate, 85.0),
            ],
            false,
        );
        let set = build_windows(&[e], &WindowConfig::default()).unwrap();
        assert_eq!(
            set.dropped,
            vec![("E".to_string(), DropReason::ShorterThanGap)]
        );
    }

    #[test]
    fn survivors_anchor_at_discharge() {
        let e = encounter(
            0,
            100,
            &[
                (80, VitalKind::HeartRate, 80.0),
                (86, VitalKind::HeartRate, 85.0),
            ],
            false,
        );
        let w = &build_windows(&[e], &WindowConfig::default())
            .unwrap()
            .windows[0];
        assert_eq!(w.grid.anchor, t(100));
        assert!(!w.label);
    }

    #[test]
    fn window_config_is_validated() {
        let bad = WindowConfig {
            window_hours: 30,
            ..WindowConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(WindowConfig::live(6).validate().is_ok());
    }
}
