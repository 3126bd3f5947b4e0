//! Reading and writing the two-table longitudinal export: one table of
//! measurements (encounter, timestamp, measure, value) and one table of
//! encounter metadata.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, FixedOffset, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::types::{Encounter, EncounterMeta, Observation, Sex, VitalKind};
use crate::error::{Error, Result};

/// Minute-precision timestamp layout used when writing.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

const ACCEPTED_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%d %H:%M:%S",
];

/// Column names of the measurements table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementColumns {
    pub encounter_id: String,
    pub timestamp: String,
    pub measure: String,
    pub value: String,
}

impl Default for MeasurementColumns {
    fn default() -> Self {
        MeasurementColumns {
            encounter_id: "encounter_id".into(),
            timestamp: "timestamp".into(),
            measure: "measure".into(),
            value: "value".into(),
        }
    }
}

/// Column names of the encounters table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncounterColumns {
    pub encounter_id: String,
    pub hospital_id: String,
    pub age: String,
    pub sex: String,
    pub ward: String,
    pub department: String,
    pub admission_time: String,
    pub outcome_time: String,
    pub died: String,
}

impl Default for EncounterColumns {
    fn default() -> Self {
        EncounterColumns {
            encounter_id: "encounter_id".into(),
            hospital_id: "hospital_id".into(),
            age: "age".into(),
            sex: "sex".into(),
            ward: "ward".into(),
            department: "department".into(),
            admission_time: "admission_time".into(),
            outcome_time: "outcome_time".into(),
            died: "died".into(),
        }
    }
}

/// Config-driven mapping from export headers onto the domain model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub measurements: MeasurementColumns,
    pub encounters: EncounterColumns,
    /// Extra names accepted for measures, e.g. `hr = "heart_rate"`.
    pub measure_aliases: BTreeMap<String, VitalKind>,
    /// Offset applied when timestamps carry an explicit zone; local
    /// timestamps are taken as already being in this zone.
    pub utc_offset_minutes: i32,
}

impl ColumnMapping {
    fn resolve_measure(&self, raw: &str) -> Option<VitalKind> {
        let raw = raw.trim();
        raw.parse::<VitalKind>()
            .ok()
            .or_else(|| self.measure_aliases.get(raw).copied())
    }

    /// Accepts ISO-like local timestamps or RFC 3339 with a zone.
    pub fn parse_timestamp(&self, raw: &str) -> Option<NaiveDateTime> {
        let raw = raw.trim();
        for fmt in ACCEPTED_FORMATS {
            if let Ok(ts) = NaiveDateTime::parse_from_str(raw, fmt) {
                return Some(ts);
            }
        }
        let zoned = DateTime::parse_from_rfc3339(raw).ok()?;
        let offset = FixedOffset::east_opt(self.utc_offset_minutes * 60)?;
        Some(zoned.with_timezone(&offset).naive_local())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub file: PathBuf,
    /// 1-based line number, header being line 1.
    pub line: u64,
    pub reason: String,
}

/// Output of [`parse_longitudinal_csv`].
#[derive(Debug, Clone, Default)]
pub struct ParsedInput {
    pub observations: Vec<Observation>,
    pub encounters: Vec<EncounterMeta>,
    pub rejected: Vec<RejectedRow>,
    pub measurement_rows: usize,
    pub encounter_rows: usize,
}

fn open(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file)))
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim_start_matches('\u{feff}') == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

fn check_rejection_rate(path: &Path, failed: usize, total: usize) -> Result<()> {
    if total > 0 && failed * 2 > total {
        return Err(Error::TooManyRejected {
            path: path.to_path_buf(),
            failed,
            total,
        });
    }
    Ok(())
}

/// Parses the measurements and encounters tables.
///
/// Malformed rows are collected in [`ParsedInput::rejected`]; the call
/// fails only when a file is missing, a mapped column is absent, or more
/// than half of a file's rows are rejected.
pub fn parse_longitudinal_csv(
    measurements: &Path,
    encounters: &Path,
    mapping: &ColumnMapping,
) -> Result<ParsedInput> {
    let mut out = ParsedInput::default();
    parse_measurements(measurements, mapping, &mut out)?;
    parse_encounters(encounters, mapping, &mut out)?;
    Ok(out)
}

fn parse_measurements(path: &Path, mapping: &ColumnMapping, out: &mut ParsedInput) -> Result<()> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    let cols = &mapping.measurements;
    let id_col = column_index(&headers, &cols.encounter_id, path)?;
    let ts_col = column_index(&headers, &cols.timestamp, path)?;
    let measure_col = column_index(&headers, &cols.measure, path)?;
    let value_col = column_index(&headers, &cols.value, path)?;

    let mut failed = 0;
    for (i, record) in reader.records().enumerate() {
        out.measurement_rows += 1;
        let line = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map_or(i as u64 + 2, |p| p.line());
        let parsed = record
            .map_err(|e| e.to_string())
            .and_then(|r| parse_measurement(&r, [id_col, ts_col, measure_col, value_col], mapping));
        match parsed {
            Ok(obs) => out.observations.push(obs),
            Err(reason) => {
                failed += 1;
                out.rejected.push(RejectedRow {
                    file: path.to_path_buf(),
                    line,
                    reason,
                });
            }
        }
    }
    if out.measurement_rows == 0 {
        return Err(Error::NoObservations);
    }
    check_rejection_rate(path, failed, out.measurement_rows)
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize, name: &str) -> Result<&'r str, String> {
    match record.get(idx) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("missing field `{name}`")),
    }
}

fn parse_measurement(
    record: &csv::StringRecord,
    [id, ts, measure, value]: [usize; 4],
    mapping: &ColumnMapping,
) -> Result<Observation, String> {
    let encounter_id = field(record, id, "encounter_id")?.to_string();
    let raw_ts = field(record, ts, "timestamp")?;
    let timestamp = mapping
        .parse_timestamp(raw_ts)
        .ok_or_else(|| format!("unparseable timestamp `{raw_ts}`"))?;
    let raw_measure = field(record, measure, "measure")?;
    let kind = mapping
        .resolve_measure(raw_measure)
        .ok_or_else(|| format!("unknown measure `{raw_measure}`"))?;
    let value: f64 = field(record, value, "value")?
        .parse()
        .map_err(|_| "non-numeric value".to_string())?;
    if !value.is_finite() {
        return Err("non-finite value".into());
    }
    Ok(Observation {
        encounter_id,
        timestamp,
        kind,
        value,
    })
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" => Some(false),
        _ => None,
    }
}

fn parse_encounters(path: &Path, mapping: &ColumnMapping, out: &mut ParsedInput) -> Result<()> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    let c = &mapping.encounters;
    let idx = [
        column_index(&headers, &c.encounter_id, path)?,
        column_index(&headers, &c.hospital_id, path)?,
        column_index(&headers, &c.age, path)?,
        column_index(&headers, &c.sex, path)?,
        column_index(&headers, &c.ward, path)?,
        column_index(&headers, &c.department, path)?,
        column_index(&headers, &c.admission_time, path)?,
        column_index(&headers, &c.outcome_time, path)?,
        column_index(&headers, &c.died, path)?,
    ];

    let mut seen = HashSet::new();
    let mut failed = 0;
    for (i, record) in reader.records().enumerate() {
        out.encounter_rows += 1;
        let line = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map_or(i as u64 + 2, |p| p.line());
        let parsed = record
            .map_err(|e| e.to_string())
            .and_then(|r| parse_encounter(&r, idx, mapping))
            .and_then(|meta| {
                if seen.insert(meta.encounter_id.clone()) {
                    Ok(meta)
                } else {
                    Err(format!("duplicate encounter `{}`", meta.encounter_id))
                }
            });
        match parsed {
            Ok(meta) => out.encounters.push(meta),
            Err(reason) => {
                failed += 1;
                out.rejected.push(RejectedRow {
                    file: path.to_path_buf(),
                    line,
                    reason,
                });
            }
        }
    }
    if out.encounter_rows == 0 {
        return Err(Error::Data(format!("{}: no encounters", path.display())));
    }
    check_rejection_rate(path, failed, out.encounter_rows)
}

fn parse_encounter(
    r: &csv::StringRecord,
    [id, hospital, age, sex, ward, dept, adm, outc, died]: [usize; 9],
    mapping: &ColumnMapping,
) -> Result<EncounterMeta, String> {
    let ts = |idx: usize, name: &str| -> Result<NaiveDateTime, String> {
        let raw = field(r, idx, name)?;
        mapping
            .parse_timestamp(raw)
            .ok_or_else(|| format!("unparseable timestamp `{raw}`"))
    };
    let age: f64 = field(r, age, "age")?
        .parse()
        .map_err(|_| "non-numeric age".to_string())?;
    if !(age.is_finite() && age >= 0.0) {
        return Err(format!("invalid age {age}"));
    }
    let sex: Sex = field(r, sex, "sex")?
        .parse()
        .map_err(|e: Error| e.to_string())?;
    let raw_died = field(r, died, "died")?;
    let died = parse_bool(raw_died).ok_or_else(|| format!("invalid died flag `{raw_died}`"))?;
    let admission_time = ts(adm, "admission_time")?;
    let outcome_time = ts(outc, "outcome_time")?;
    if outcome_time < admission_time {
        return Err("outcome_time precedes admission_time".into());
    }
    Ok(EncounterMeta {
        encounter_id: field(r, id, "encounter_id")?.to_string(),
        hospital_id: field(r, hospital, "hospital_id")?.to_string(),
        age,
        sex,
        ward: field(r, ward, "ward")?.to_string(),
        department: field(r, dept, "department")?.to_string(),
        admission_time,
        outcome_time,
        died,
    })
}

/// Writes encounters back out as the two-table export using the mapping's
/// column names. Observation rows are written in encounter order.
pub fn write_longitudinal_csv(
    encounters: &[Encounter],
    measurements: &Path,
    encounters_path: &Path,
    mapping: &ColumnMapping,
) -> Result<()> {
    let create = |p: &Path| File::create(p).map_err(|e| Error::io(p, e));

    let mut w = csv::Writer::from_writer(create(measurements)?);
    let m = &mapping.measurements;
    w.write_record([&m.encounter_id, &m.timestamp, &m.measure, &m.value])?;
    for enc in encounters {
        for o in &enc.observations {
            w.write_record([
                o.encounter_id.as_str(),
                &o.timestamp.format(TIMESTAMP_FORMAT).to_string(),
                o.kind.name(),
                &o.value.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(measurements, e))?;

    let mut w = csv::Writer::from_writer(create(encounters_path)?);
    let c = &mapping.encounters;
    w.write_record([
        &c.encounter_id,
        &c.hospital_id,
        &c.age,
        &c.sex,
        &c.ward,
        &c.department,
        &c.admission_time,
        &c.outcome_time,
        &c.died,
    ])?;
    for enc in encounters {
        let e = &enc.meta;
        w.write_record([
            e.encounter_id.as_str(),
            &e.hospital_id,
            &e.age.to_string(),
            e.sex.name(),
            &e.ward,
            &e.department,
            &e.admission_time.format(TIMESTAMP_FORMAT).to_string(),
            &e.outcome_time.format(TIMESTAMP_FORMAT).to_string(),
            if e.died { "1" } else { "0" },
        ])?;
    }
    w.flush().map_err(|e| Error::io(encounters_path, e))?;
    Ok(())
}

/// Counts data lines (non-empty lines after the header) without CSV parsing.
pub fn count_data_lines(path: &Path) -> Result<usize> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .count())
}

/// Helper for tests and tools that build small fixtures.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    File::create(path)
        .and_then(|mut f| f.write_all(contents.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
