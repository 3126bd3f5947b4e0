//! MEWS and NEWS2 protocol scoring from a single set of vitals.
//!
//! Band tables are frozen constants. Each band is closed at its listed
//! upper bound and open at the previous band's upper bound, so a value
//! between two integer-valued bands (e.g. SBP 70.5) belongs to the higher
//! band. Missing parameters score 0; consciousness is not assessed and
//! scores 0; supplemental oxygen defaults to room air.

use std::collections::BTreeMap;
use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::VitalKind;
use crate::preprocess::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Mews,
    News2,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Mews, Protocol::News2];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Mews => "mews",
            Protocol::News2 => "news2",
        }
    }

    /// Alert fires when the total is strictly greater than this.
    pub fn default_threshold(self) -> u32 {
        match self {
            Protocol::Mews => 1,
            Protocol::News2 => 2,
        }
    }

    /// Largest total reachable with consciousness unassessed.
    pub fn max_total(self) -> u32 {
        table(self)
            .iter()
            .map(|p| p.bands.iter().map(|b| b.points).max().unwrap_or(0) as u32)
            .sum::<u32>()
            + match self {
                Protocol::Mews => 0,
                Protocol::News2 => NEWS2_OXYGEN_POINTS,
            }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol `{s}`")))
    }
}

/// One band: values up to `upper` (inclusive or not) not claimed by an
/// earlier band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub upper: f64,
    pub inclusive: bool,
    pub points: u8,
}

const fn le(upper: f64, points: u8) -> Band {
    Band {
        upper,
        inclusive: true,
        points,
    }
}

const fn lt(upper: f64, points: u8) -> Band {
    Band {
        upper,
        inclusive: false,
        points,
    }
}

const fn rest(points: u8) -> Band {
    Band {
        upper: f64::INFINITY,
        inclusive: true,
        points,
    }
}

/// Ordered, exhaustive bands for one vital.
#[derive(Debug, Clone, Copy)]
pub struct ParameterBands {
    pub kind: VitalKind,
    pub bands: &'static [Band],
}

impl ParameterBands {
    pub fn points(&self, v: f64) -> u8 {
        self.bands
            .iter()
            .find(|b| v < b.upper || (b.inclusive && v == b.upper))
            .map_or(self.bands[self.bands.len() - 1].points, |b| b.points)
    }
}

const MEWS: [ParameterBands; 4] = [
    ParameterBands {
        kind: VitalKind::SystolicBp,
        bands: &[
            le(70.0, 3),
            le(80.0, 2),
            le(100.0, 1),
            le(199.0, 0),
            rest(2),
        ],
    },
    ParameterBands {
        kind: VitalKind::HeartRate,
        bands: &[
            le(40.0, 2),
            le(50.0, 1),
            le(100.0, 0),
            le(110.0, 1),
            le(129.0, 2),
            rest(3),
        ],
    },
    ParameterBands {
        kind: VitalKind::RespiratoryRate,
        bands: &[le(8.0, 2), le(14.0, 0), le(20.0, 1), le(29.0, 2), rest(3)],
    },
    ParameterBands {
        kind: VitalKind::Temperature,
        bands: &[lt(35.0, 2), le(38.4, 0), rest(2)],
    },
];

const NEWS2: [ParameterBands; 5] = [
    ParameterBands {
        kind: VitalKind::RespiratoryRate,
        bands: &[le(8.0, 3), le(11.0, 1), le(20.0, 0), le(24.0, 2), rest(3)],
    },
    ParameterBands {
        kind: VitalKind::OxygenSaturation,
        bands: &[le(91.0, 3), le(93.0, 2), le(95.0, 1), rest(0)],
    },
    ParameterBands {
        kind: VitalKind::Temperature,
        bands: &[le(35.0, 3), le(36.0, 1), le(38.0, 0), le(39.0, 1), rest(2)],
    },
    ParameterBands {
        kind: VitalKind::SystolicBp,
        bands: &[
            le(90.0, 3),
            le(100.0, 2),
            le(110.0, 1),
            le(219.0, 0),
            rest(3),
        ],
    },
    ParameterBands {
        kind: VitalKind::HeartRate,
        bands: &[
            le(40.0, 3),
            le(50.0, 1),
            le(90.0, 0),
            le(110.0, 1),
            le(130.0, 2),
            rest(3),
        ],
    },
];

const NEWS2_OXYGEN_POINTS: u32 = 2;

pub fn table(protocol: Protocol) -> &'static [ParameterBands] {
    match protocol {
        Protocol::Mews => &MEWS,
        Protocol::News2 => &NEWS2,
    }
}

/// Vitals at one timestamp, indexed by [`VitalKind`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Vitals(pub [Option<f64>; VitalKind::COUNT]);

impl Vitals {
    pub fn with(mut self, kind: VitalKind, value: f64) -> Self {
        self.0[kind.index()] = Some(value);
        self
    }

    pub fn get(&self, kind: VitalKind) -> Option<f64> {
        self.0[kind.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwsResult {
    pub protocol: Protocol,
    pub total: u32,
    /// Points per scored parameter, keyed by parameter name.
    pub per_parameter: BTreeMap<String, u8>,
    pub alert: bool,
    pub threshold_used: u32,
}

/// Scores `vitals` under `protocol`, alerting when the total exceeds
/// `threshold`.
pub fn score(
    protocol: Protocol,
    vitals: &Vitals,
    on_oxygen: bool,
    threshold: u32,
) -> Result<EwsResult> {
    let params = table(protocol);
    if params.iter().all(|p| vitals.get(p.kind).is_none()) {
        return Err(Error::InvalidArgument(format!(
            "no {protocol} parameter present"
        )));
    }
    let mut per_parameter = BTreeMap::new();
    for p in params {
        let pts = vitals.get(p.kind).map_or(0, |v| p.points(v));
        per_parameter.insert(p.kind.name().to_string(), pts);
    }
    if protocol == Protocol::News2 {
        let pts = if on_oxygen {
            NEWS2_OXYGEN_POINTS as u8
        } else {
            0
        };
        per_parameter.insert("supplemental_oxygen".into(), pts);
    }
    per_parameter.insert("consciousness".into(), 0);
    let total = per_parameter.values().map(|&p| p as u32).sum();
    Ok(EwsResult {
        protocol,
        total,
        per_parameter,
        alert: total > threshold,
        threshold_used: threshold,
    })
}

pub fn mews_score(vitals: &Vitals) -> Result<EwsResult> {
    score(
        Protocol::Mews,
        vitals,
        false,
        Protocol::Mews.default_threshold(),
    )
}

pub fn news2_score(vitals: &Vitals, on_oxygen: bool) -> Result<EwsResult> {
    score(
        Protocol::News2,
        vitals,
        on_oxygen,
        Protocol::News2.default_threshold(),
    )
}

/// Protocol totals over a matrix, normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolScores {
    pub totals: Vec<Option<u32>>,
    pub scores: Vec<Option<f64>>,
    /// Rows with nothing to score.
    pub unscored: usize,
}

/// Vitals from the columns at `offset` slots before t (0 = t).
pub fn vitals_at(m: &FeatureMatrix, row: usize, offset: usize) -> Vitals {
    let mut v = Vitals::default();
    let r = m.row(row);
    for (c, desc) in m.columns.iter().enumerate() {
        if let Some((kind, o)) = desc.vital_offset() {
            if o == offset && !r[c].is_nan() {
                v.0[kind.index()] = Some(r[c]);
            }
        }
    }
    v
}

/// Scores each row's vitals at `offset` and divides by the protocol's
/// maximum total, so protocols can be ranked like model probabilities.
pub fn ews_as_scorer(protocol: Protocol, m: &FeatureMatrix, offset: usize) -> ProtocolScores {
    let max = protocol.max_total() as f64;
    let totals: Vec<Option<u32>> = (0..m.n_rows())
        .map(|r| {
            score(
                protocol,
                &vitals_at(m, r, offset),
                false,
                protocol.default_threshold(),
            )
            .ok()
            .map(|res| res.total)
        })
        .collect();
    ProtocolScores {
        unscored: totals.iter().filter(|t| t.is_none()).count(),
        scores: totals.iter().map(|t| t.map(|t| t as f64 / max)).collect(),
        totals,
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Band tables as CSV: `protocol,parameter,band,lower,upper,points`.
///
/// `lower` is exclusive and `upper` inclusive unless the band label says
/// otherwise; consciousness and oxygen rows are categorical.
pub fn dump_tables_csv() -> String {
    let mut out = String::from("protocol,parameter,band,lower,upper,points\n");
    for protocol in Protocol::ALL {
        for p in table(protocol) {
            let mut lower: Option<Band> = None;
            for b in p.bands {
                let label = match (lower, b.upper.is_finite()) {
                    (None, _) => format!(
                        "{}{}",
                        if b.inclusive { "≤" } else { "<" },
                        fmt_num(b.upper)
                    ),
                    (Some(lo), false) => format!(
                        "{}{}",
                        if lo.inclusive { ">" } else { "≥" },
                        fmt_num(lo.upper)
                    ),
                    (Some(lo), true) => format!(
                        "{}{}, {}{}",
                        if lo.inclusive { "(" } else { "[" },
                        fmt_num(lo.upper),
                        fmt_num(b.upper),
                        if b.inclusive { "]" } else { ")" }
                    ),
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    protocol.name(),
                    p.kind.name(),
                    label,
                    lower.map_or(String::new(), |l| fmt_num(l.upper)),
                    if b.upper.is_finite() {
                        fmt_num(b.upper)
                    } else {
                        String::new()
                    },
                    b.points
                );
                lower = Some(*b);
            }
        }
        let categorical: &[(&str, &str, u8)] = match protocol {
            Protocol::Mews => &[
                ("consciousness", "alert", 0),
                ("consciousness", "voice", 1),
                ("consciousness", "pain", 2),
                ("consciousness", "unresponsive", 3),
            ],
            Protocol::News2 => &[
                ("supplemental_oxygen", "no", 0),
                ("supplemental_oxygen", "yes", 2),
                ("consciousness", "alert", 0),
                ("consciousness", "new confusion/voice/pain/unresponsive", 3),
            ],
        };
        for (param, label, pts) in categorical {
            let _ = writeln!(out, "{},{param},{label},,,{pts}", protocol.name());
        }
    }
    out
}
