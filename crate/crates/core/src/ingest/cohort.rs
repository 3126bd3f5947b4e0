use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::types::{Encounter, Sex};
use crate::error::{Error, Result};

const AGE_BANDS: [(&str, f64, f64); 8] = [
    ("0-15", 0.0, 15.0),
    ("15-17", 15.0, 18.0),
    ("18-29", 18.0, 30.0),
    ("30-39", 30.0, 40.0),
    ("40-49", 40.0, 50.0),
    ("50-59", 50.0, 60.0),
    ("60-69", 60.0, 70.0),
    ("70+", 70.0, f64::INFINITY),
];

/// Whole days since admission; `12+` is open-ended.
const LOS_BANDS: [(&str, i64, i64); 5] = [
    ("0-2", 0, 2),
    ("3-5", 3, 5),
    ("6-8", 6, 8),
    ("9-11", 9, 11),
    ("12+", 12, i64::MAX),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandCount {
    pub label: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub sd: f64,
}

impl MeanSd {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let ss: f64 = values.map(|v| (v - mean).powi(2)).sum();
        let sd = if n > 1.0 {
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }
}

/// Demographic breakdown of a cohort, laid out like a study's
/// population table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSummary {
    pub total: usize,
    pub age: Vec<BandCount>,
    pub age_stats: MeanSd,
    pub sex: Vec<BandCount>,
    pub length_of_stay: Vec<BandCount>,
    pub length_of_stay_stats: MeanSd,
    pub death: Vec<BandCount>,
    pub hospital: Vec<BandCount>,
}

fn bands(labels: Vec<(String, usize)>, total: usize) -> Vec<BandCount> {
    labels
        .into_iter()
        .map(|(label, count)| BandCount {
            label,
            count,
            percent: 100.0 * count as f64 / total as f64,
        })
        .collect()
}

pub fn summarize_cohort(encounters: &[Encounter]) -> Result<CohortSummary> {
    if encounters.is_empty() {
        return Err(Error::Data("cannot summarize an empty cohort".into()));
    }
    let total = encounters.len();

    let mut age = vec![0usize; AGE_BANDS.len()];
    let mut los = vec![0usize; LOS_BANDS.len()];
    let (mut female, mut male, mut died) = (0, 0, 0);
    let mut hospital: BTreeMap<&str, usize> = BTreeMap::new();
    for enc in encounters {
        let m = &enc.meta;
        let a = AGE_BANDS
            .iter()
            .position(|&(_, lo, hi)| m.age >= lo && m.age < hi)
            .expect("age bands cover [0, inf)");
        age[a] += 1;
        let days = m.length_of_stay_days().floor() as i64;
        let l = LOS_BANDS
            .iter()
            .position(|&(_, lo, hi)| days >= lo && days <= hi)
            .expect("LOS bands cover [0, inf)");
        los[l] += 1;
        match m.sex {
            Sex::Female => female += 1,
            Sex::Male => male += 1,
        }
        died += usize::from(m.died);
        *hospital.entry(m.hospital_id.as_str()).or_insert(0) += 1;
    }

    let labelled = |names: Vec<&str>, counts: Vec<usize>| {
        names
            .into_iter()
            .map(String::from)
            .zip(counts)
            .collect::<Vec<_>>()
    };

    Ok(CohortSummary {
        total,
        age: bands(
            labelled(AGE_BANDS.iter().map(|b| b.0).collect(), age),
            total,
        ),
        age_stats: MeanSd::of(encounters.iter().map(|e| e.meta.age)),
        sex: bands(labelled(vec!["female", "male"], vec![female, male]), total),
        length_of_stay: bands(
            labelled(LOS_BANDS.iter().map(|b| b.0).collect(), los),
            total,
        ),
        length_of_stay_stats: MeanSd::of(encounters.iter().map(|e| e.meta.length_of_stay_days())),
        death: bands(labelled(vec!["yes", "no"], vec![died, total - died]), total),
        hospital: bands(
            hospital
                .into_iter()
                .map(|(h, c)| (h.to_string(), c))
                .collect(),
            total,
        ),
    })
}

impl CohortSummary {
    fn sections(&self) -> [(&'static str, &[BandCount]); 5] {
        [
            ("age", &self.age),
            ("sex", &self.sex),
            ("days_from_entrance", &self.length_of_stay),
            ("death_during_stay", &self.death),
            ("attendance_per_hospital", &self.hospital),
        ]
    }

    /// `section,category,count,percent` rows plus mean/sd rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,category,count,percent\n");
        for (section, rows) in self.sections() {
            for b in rows {
                let _ = writeln!(out, "{section},{},{},{:.1}", b.label, b.count, b.percent);
            }
        }
        let _ = writeln!(
            out,
            "age,mean,{:.2},{:.2}",
            self.age_stats.mean, self.age_stats.sd
        );
        let _ = writeln!(
            out,
            "days_from_entrance,mean,{:.2},{:.2}",
            self.length_of_stay_stats.mean, self.length_of_stay_stats.sd
        );
        out
    }

    pub fn to_pretty(&self) -> String {
        let mut out = format!("GLOBAL POPULATION N={}\n", self.total);
        for (section, rows) in self.sections() {
            let _ = writeln!(out, "\n{}", section.replace('_', " ").to_uppercase());
            for b in rows {
                let _ = writeln!(
                    out,
                    "  {:<10} {:>8} {:>6.1}",
                    format!("{}:", b.label),
                    b.count,
                    b.percent
                );
            }
            let stats = match section {
                "age" => Some(self.age_stats),
                "days_from_entrance" => Some(self.length_of_stay_stats),
                _ => None,
            };
            if let Some(s) = stats {
                let _ = writeln!(out, "  {:<10} {:>8.2} (± {:.2})", "Mean:", s.mean, s.sd);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EncounterMeta;
    use chrono::{Duration, NaiveDate};

    fn enc(age: f64, los_hours: i64, died: bool, hospital: &str) -> Encounter {
        let t0 = NaiveDate::from_ymd_opt(2019, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        Encounter {
            meta: EncounterMeta {
                encounter_id: format!("E{age}-{los_hours}"),
                hospital_id: hospital.into(),
                age,
                sex: if died { Sex::Male } else { Sex::Female },
                ward: "W".into(),
                department: "D".into(),
                admission_time: t0,
                outcome_time: t0 + Duration::hours(los_hours),
                died,
            },
            observations: vec![],
        }
    }

    #[test]
    fn two_encounter_age_bands() {
        let s = summarize_cohort(&[enc(10.0, 24, false, "H1"), enc(80.0, 24, true, "H2")]).unwrap();
        assert_eq!(s.age[0].count, 1);
        assert_eq!(s.age[0].percent, 50.0);
        assert_eq!(s.age[7].label, "70+");
        assert_eq!(s.age[7].count, 1);
        assert_eq!(s.age[7].percent, 50.0);
        assert_eq!(s.age_stats.mean, 45.0);
    }

    #[test]
    fn band_edges() {
        let s = summarize_cohort(&[
            enc(15.0, 71, false, "H1"),
            enc(17.9, 72, false, "H1"),
            enc(18.0, 24 * 12, false, "H1"),
        ])
        .unwrap();
        assert_eq!(s.age[1].count, 2);
        assert_eq!(s.age[2].count, 1);
        assert_eq!(s.length_of_stay[0].count, 1);
        assert_eq!(s.length_of_stay[1].count, 1);
        assert_eq!(s.length_of_stay[4].count, 1);
    }

    #[test]
    fn counts_sum_to_total_and_render() {
        let cohort: Vec<_> = (0..37)
            .map(|i| {
                enc(
                    (i * 3) as f64,
                    i * 17,
                    i % 7 == 0,
                    ["H1", "H2", "H3"][i as usize % 3],
                )
            })
            .collect();
        let s = summarize_cohort(&cohort).unwrap();
        for (_, rows) in s.sections() {
            assert_eq!(rows.iter().map(|b| b.count).sum::<usize>(), 37);
            let pct: f64 = rows.iter().map(|b| b.percent).sum();
            assert!((pct - 100.0).abs() <= 0.2);
        }
        assert!(s
            .to_csv()
            .starts_with("section,category,count,percent\nage,0-15,"));
        assert!(s.to_pretty().contains("GLOBAL POPULATION N=37"));
    }

    #[test]
    fn empty_is_error() {
        assert!(summarize_cohort(&[]).is_err());
    }
}
