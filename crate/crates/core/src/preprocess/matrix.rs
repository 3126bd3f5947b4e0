use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::window::{FeatureWindow, SLOTS};
use crate::error::{Error, Result};
use crate::ingest::VitalKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticColumn {
    Age,
    Sex,
    LosDays,
    Ward,
    Department,
}

impl StaticColumn {
    pub const ALL: [StaticColumn; 5] = [
        StaticColumn::Age,
        StaticColumn::Sex,
        StaticColumn::LosDays,
        StaticColumn::Ward,
        StaticColumn::Department,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StaticColumn::Age => "age",
            StaticColumn::Sex => "sex",
            StaticColumn::LosDays => "los_days",
            StaticColumn::Ward => "ward",
            StaticColumn::Department => "department",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ColumnSource {
    /// `offset` counts slots back from t: 0 is t, 4 is t-4.
    Vital {
        kind: VitalKind,
        offset: usize,
    },
    Static {
        column: StaticColumn,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnDescriptor {
    pub name: String,
    pub source: ColumnSource,
}

impl ColumnDescriptor {
    pub fn vital(kind: VitalKind, offset: usize) -> Self {
        let name = if offset == 0 {
            format!("{}_t", kind.name())
        } else {
            format!("{}_t-{offset}", kind.name())
        };
        ColumnDescriptor {
            name,
            source: ColumnSource::Vital { kind, offset },
        }
    }

    pub fn static_column(column: StaticColumn) -> Self {
        ColumnDescriptor {
            name: column.name().to_string(),
            source: ColumnSource::Static { column },
        }
    }

    pub fn vital_offset(&self) -> Option<(VitalKind, usize)> {
        match self.source {
            ColumnSource::Vital { kind, offset } => Some((kind, offset)),
            ColumnSource::Static { .. } => None,
        }
    }
}

/// Full column layout: vitals kind-major and timestamp-minor (t-4 .. t),
/// then static columns.
pub fn standard_columns() -> Vec<ColumnDescriptor> {
    let mut cols: Vec<_> = VitalKind::ALL
        .iter()
        .flat_map(|&kind| {
            (0..SLOTS)
                .rev()
                .map(move |offset| ColumnDescriptor::vital(kind, offset))
        })
        .collect();
    cols.extend(
        StaticColumn::ALL
            .iter()
            .map(|&c| ColumnDescriptor::static_column(c)),
    );
    cols
}

/// Row-major numeric matrix with labels and group keys.
///
/// Missing cells are NaN; only an imputed matrix is valid model input
/// (see [`FeatureMatrix::ensure_finite`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<ColumnDescriptor>,
    pub values: Vec<f64>,
    pub labels: Vec<bool>,
    pub groups: Vec<String>,
    pub row_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(
        columns: Vec<ColumnDescriptor>,
        values: Vec<f64>,
        labels: Vec<bool>,
        groups: Vec<String>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        if values.len() != n * columns.len() || groups.len() != n || row_ids.len() != n {
            return Err(Error::InvalidArgument(format!(
                "matrix shape mismatch: {} values, {} columns, {} labels, {} groups, {} ids",
                values.len(),
                columns.len(),
                n,
                groups.len(),
                row_ids.len()
            )));
        }
        Ok(FeatureMatrix {
            columns,
            values,
            labels,
            groups,
            row_ids,
        })
    }

    /// Unlabelled single-group matrix, mostly for tests and scoring.
    pub fn from_rows(
        columns: Vec<ColumnDescriptor>,
        rows: &[Vec<f64>],
        labels: &[bool],
    ) -> Result<Self> {
        let values = rows.iter().flatten().copied().collect();
        let n = rows.len();
        FeatureMatrix::new(
            columns,
            values,
            labels.to_vec(),
            vec!["G".into(); n],
            (0..n).map(|i| i.to_string()).collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        let d = self.n_cols();
        self.values[row * d + col] = v;
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.get(r, col)).collect()
    }

    /// Column-major copy of the values.
    pub fn columns_major(&self) -> Vec<Vec<f64>> {
        (0..self.n_cols()).map(|c| self.column(c)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => {
                let d = self.n_cols();
                Err(Error::NonFinite(format!(
                    "row {} column `{}`",
                    i / d,
                    self.columns[i % d].name
                )))
            }
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            columns: self.columns.clone(),
            values,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            groups: rows.iter().map(|&r| self.groups[r].clone()).collect(),
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(cols.len() * self.n_rows());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        FeatureMatrix {
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            values,
            labels: self.labels.clone(),
            groups: self.groups.clone(),
            row_ids: self.row_ids.clone(),
        }
    }

    /// Row indices per group, groups in order of first appearance.
    pub fn group_partition(&self) -> Vec<(String, Vec<usize>)> {
        let mut order: Vec<(String, Vec<usize>)> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, g) in self.groups.iter().enumerate() {
            let slot = *index.entry(g).or_insert_with(|| {
                order.push((g.clone(), Vec::new()));
                order.len() - 1
            });
            order[slot].1.push(i);
        }
        order
    }

    /// Per-column medians over non-missing cells (NaN when a column has none).
    pub fn column_medians(&self) -> Vec<f64> {
        (0..self.n_cols())
            .map(|c| median(self.column(c).into_iter().filter(|v| !v.is_nan()).collect()))
            .collect()
    }
}

/// Median of the values; NaN for an empty input.
pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Frequency-ranked ordinal codes for ward and department. Code 0 is
/// reserved for categories unseen at fit time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryEncoding {
    pub ward: BTreeMap<String, u32>,
    pub department: BTreeMap<String, u32>,
}

fn rank_by_frequency<'a>(values: impl Iterator<Item = &'a str>) -> BTreeMap<String, u32> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0) += 1;
    }
    let mut ranked: Vec<_> = counts.into_iter().collect();
    // Most frequent first; ties alphabetical.
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked
        .into_iter()
        .enumerate()
        .map(|(i, (k, _))| (k.to_string(), i as u32 + 1))
        .collect()
}

impl CategoryEncoding {
    pub fn fit(windows: &[FeatureWindow]) -> Self {
        CategoryEncoding {
            ward: rank_by_frequency(windows.iter().map(|w| w.statics.ward.as_str())),
            department: rank_by_frequency(windows.iter().map(|w| w.statics.department.as_str())),
        }
    }

    pub fn ward_code(&self, ward: &str) -> f64 {
        self.ward.get(ward).copied().unwrap_or(0) as f64
    }

    pub fn department_code(&self, department: &str) -> f64 {
        self.department.get(department).copied().unwrap_or(0) as f64
    }
}

/// Flattens one window onto the standard layout; missing vitals become NaN.
pub fn window_row(w: &FeatureWindow, encoding: &CategoryEncoding) -> Vec<f64> {
    let mut row = Vec::with_capacity(VitalKind::COUNT * SLOTS + StaticColumn::ALL.len());
    for kind in VitalKind::ALL {
        for k in 0..SLOTS {
            row.push(w.vitals[k][kind.index()].unwrap_or(f64::NAN));
        }
    }
    let s = &w.statics;
    row.extend([
        s.age,
        s.sex.code(),
        s.los_days,
        encoding.ward_code(&s.ward),
        encoding.department_code(&s.department),
    ]);
    row
}

pub fn assemble_matrix(
    windows: &[FeatureWindow],
    encoding: &CategoryEncoding,
) -> Result<FeatureMatrix> {
    let mut values = Vec::with_capacity(windows.len() * standard_columns().len());
    for w in windows {
        values.extend(window_row(w, encoding));
    }
    FeatureMatrix::new(
        standard_columns(),
        values,
        windows.iter().map(|w| w.label).collect(),
        windows.iter().map(|w| w.hospital_id.clone()).collect(),
        windows.iter().map(|w| w.encounter_id.clone()).collect(),
    )
}

fn keep_offsets(
    m: &FeatureMatrix,
    k: usize,
    keep: impl Fn(usize) -> bool,
) -> Result<FeatureMatrix> {
    if !(1..=SLOTS).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "timestamp count must be in 1..={SLOTS}, got {k}"
        )));
    }
    let cols: Vec<usize> = m
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.vital_offset().is_none_or(|(_, offset)| keep(offset)))
        .map(|(i, _)| i)
        .collect();
    Ok(m.select_columns(&cols))
}

/// Keeps the last `k` timestamps of every vital (t-(k-1) .. t) and all
/// static columns.
pub fn truncate_timestamps(m: &FeatureMatrix, k: usize) -> Result<FeatureMatrix> {
    keep_offsets(m, k, |offset| offset < k)
}

/// Keeps the first `k` timestamps of every vital (t-4 .. t-(5-k)) and all
/// static columns: the history available at slot t-(5-k).
pub fn leading_timestamps(m: &FeatureMatrix, k: usize) -> Result<FeatureMatrix> {
    keep_offsets(m, k, |offset| offset >= SLOTS - k.min(SLOTS))
}

/// Sidecar descriptor written next to a cached matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDescriptor {
    pub format: String,
    pub rows: usize,
    pub columns: Vec<ColumnDescriptor>,
    /// Free-form provenance: seed, preprocessing parameters.
    pub provenance: serde_json::Value,
}

pub const MATRIX_FORMAT: &str = "ews-matrix/v1";

/// Writes `matrix.csv` and `matrix.json` into `dir`.
pub fn write_matrix_cache(
    m: &FeatureMatrix,
    dir: &Path,
    provenance: serde_json::Value,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("matrix.csv");
    let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec![
        "encounter_id".to_string(),
        "hospital_id".into(),
        "label".into(),
    ];
    header.extend(m.columns.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for r in 0..m.n_rows() {
        let mut rec = vec![
            m.row_ids[r].clone(),
            m.groups[r].clone(),
            u8::from(m.labels[r]).to_string(),
        ];
        rec.extend(m.row(r).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let desc = MatrixDescriptor {
        format: MATRIX_FORMAT.into(),
        rows: m.n_rows(),
        columns: m.columns.clone(),
        provenance,
    };
    let json_path = dir.join("matrix.json");
    let mut f = File::create(&json_path).map_err(|e| Error::io(&json_path, e))?;
    serde_json::to_writer_pretty(&mut f, &desc)?;
    f.write_all(b"\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}

pub fn read_matrix_cache(dir: &Path) -> Result<(FeatureMatrix, MatrixDescriptor)> {
    let json_path = dir.join("matrix.json");
    let f = File::open(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let desc: MatrixDescriptor = serde_json::from_reader(BufReader::new(f))?;
    if desc.format != MATRIX_FORMAT {
        return Err(Error::Data(format!(
            "unsupported matrix format `{}`",
            desc.format
        )));
    }
    let csv_path = dir.join("matrix.csv");
    let f = File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(f));
    let d = desc.columns.len();
    let (mut values, mut labels, mut groups, mut ids) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != d + 3 {
            return Err(Error::Data(format!(
                "{}: row width {} != {}",
                csv_path.display(),
                rec.len(),
                d + 3
            )));
        }
        ids.push(rec[0].to_string());
        groups.push(rec[1].to_string());
        labels.push(&rec[2] == "1");
        for v in rec.iter().skip(3) {
            values.push(
                v.parse::<f64>()
                    .map_err(|_| Error::Data(format!("bad number `{v}`")))?,
            );
        }
    }
    let m = FeatureMatrix::new(desc.columns.clone(), values, labels, groups, ids)?;
    Ok((m, desc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Sex;
    use crate::preprocess::window::{StaticFeatures, TimeGrid, EMPTY_GRID};
    use chrono::{Duration, NaiveDate};

    fn window(id: &str, hospital: &str, sex: Sex, ward: &str) -> FeatureWindow {
        let anchor = NaiveDate::from_ymd_opt(2020, 1, 5)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let mut vitals = EMPTY_GRID;
        vitals[4][VitalKind::HeartRate.index()] = Some(88.0);
        FeatureWindow {
            encounter_id: id.into(),
            hospital_id: hospital.into(),
            grid: TimeGrid::new(anchor, Duration::hours(12), Duration::hours(6)),
            vitals,
            statics: StaticFeatures {
                age: 40.0,
                sex,
                los_days: 1.5,
                ward: ward.into(),
                department: "D".into(),
            },
            label: sex == Sex::Male,
        }
    }

    #[test]
    fn layout_has_forty_columns() {
        let m = assemble_matrix(
            &[window("A", "H1", Sex::Female, "W")],
            &CategoryEncoding::default(),
        )
        .unwrap();
        assert_eq!(m.n_cols(), 40);
        assert_eq!(m.columns[0].name, "temperature_t-4");
        assert_eq!(m.columns[4].name, "temperature_t");
        assert_eq!(m.columns[34].name, "heart_rate_t");
        assert_eq!(m.get(0, 34), 88.0);
        assert!(m.get(0, 33).is_nan());
        assert_eq!(m.columns[35].name, "age");
    }

    #[test]
    fn sex_codes_and_groups() {
        let ws = [
            window("A", "H1", Sex::Female, "W1"),
            window("B", "H2", Sex::Male, "W2"),
            window("C", "H1", Sex::Male, "W2"),
        ];
        let enc = CategoryEncoding::fit(&ws);
        let m = assemble_matrix(&ws, &enc).unwrap();
        let sex = m.column_index("sex").unwrap();
        assert_eq!(m.column(sex), vec![0.0, 1.0, 1.0]);
        // W2 more frequent => code 1.
        let ward = m.column_index("ward").unwrap();
        assert_eq!(m.column(ward), vec![2.0, 1.0, 1.0]);
        assert_eq!(enc.ward_code("unseen"), 0.0);
        let parts = m.group_partition();
        assert_eq!(
            parts,
            vec![("H1".to_string(), vec![0, 2]), ("H2".to_string(), vec![1])]
        );
    }

    #[test]
    fn truncation() {
        let m = assemble_matrix(
            &[window("A", "H1", Sex::Female, "W")],
            &CategoryEncoding::default(),
        )
        .unwrap();
        let full = truncate_timestamps(&m, 5).unwrap();
        assert_eq!(full.columns, m.columns);
        let bits = |m: &FeatureMatrix| m.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&full), bits(&m));
        assert_eq!(truncate_timestamps(&m, 1).unwrap().n_cols(), 7 + 5);
        let t3 = truncate_timestamps(&m, 3).unwrap();
        for c in t3.columns.iter().filter(|c| c.vital_offset().is_some()) {
            assert!(c.name.ends_with("_t-2") || c.name.ends_with("_t-1") || c.name.ends_with("_t"));
        }
        assert_eq!(t3.n_cols(), 21 + 5);
        assert!(truncate_timestamps(&m, 0).is_err());
        assert!(truncate_timestamps(&m, 6).is_err());
    }

    #[test]
    fn leading() {
        let m = assemble_matrix(
            &[window("A", "H1", Sex::Female, "W")],
            &CategoryEncoding::default(),
        )
        .unwrap();
        assert_eq!(leading_timestamps(&m, 5).unwrap().columns, m.columns);
        let t1 = leading_timestamps(&m, 1).unwrap();
        assert_eq!(t1.n_cols(), 7 + 5);
        assert!(t1
            .columns
            .iter()
            .filter(|c| c.vital_offset().is_some())
            .all(|c| c.name.ends_with("_t-4")));
        let t2 = leading_timestamps(&m, 2).unwrap();
        for c in t2.columns.iter().filter(|c| c.vital_offset().is_some()) {
            assert!(c.name.ends_with("_t-4") || c.name.ends_with("_t-3"));
        }
        assert!(leading_timestamps(&m, 0).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let ws = [
            window("A", "H1", Sex::Female, "W1"),
            window("B", "H2", Sex::Male, "W2"),
        ];
        let mut m = assemble_matrix(&ws, &CategoryEncoding::fit(&ws)).unwrap();
        for v in m.values.iter_mut().filter(|v| v.is_nan()) {
            *v = 0.1 + 0.2;
        }
        let dir = tempfile::tempdir().unwrap();
        write_matrix_cache(&m, dir.path(), serde_json::json!({"seed": 1})).unwrap();
        let (back, desc) = read_matrix_cache(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(desc.provenance["seed"], 1);
    }

    #[test]
    fn medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(vec![]).is_nan());
    }
}
