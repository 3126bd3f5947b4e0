//! Report tables: per-scheme summary, per-hospital breakdown and the
//! windowing grid, as CSV and JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::validation::{window_label, SchemeResult};
use crate::error::{Error, Result};
use crate::preprocess::SLOTS;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub results: Vec<SchemeResult>,
}

/// Three decimals, `NA` when undefined.
pub fn fmt3(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.3}"),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        _ => "NA".into(),
    }
}

impl EvalReport {
    pub fn get(&self, algorithm: &str, scheme: &str) -> Option<&SchemeResult> {
        self.results
            .iter()
            .find(|r| r.algorithm == algorithm && r.scheme == scheme)
    }

    /// Algorithms in first-appearance order.
    pub fn algorithms(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.results {
            if !out.contains(&r.algorithm.as_str()) {
                out.push(&r.algorithm);
            }
        }
        out
    }

    /// `algorithm,scheme,auc,f1,threshold`.
    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["algorithm", "scheme", "auc", "f1", "threshold"])?;
        for r in &self.results {
            w.write_record([
                r.algorithm.clone(),
                r.scheme.clone(),
                fmt3(r.auc),
                fmt3(r.f1),
                fmt3(Some(r.threshold)),
            ])?;
        }
        finish(w)
    }

    /// Leave-one-group-out fold AUCs per hospital.
    pub fn per_hospital_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["algorithm", "hospital", "auc", "f1", "test_rows", "flag"])?;
        for r in self.results.iter().filter(|r| r.scheme.starts_with("logo")) {
            for f in &r.folds {
                w.write_record([
                    r.algorithm.clone(),
                    f.group.clone().unwrap_or_default(),
                    fmt3(f.auc),
                    fmt3(f.f1),
                    f.test_rows.to_string(),
                    f.flag.clone().unwrap_or_default(),
                ])?;
            }
        }
        finish(w)
    }

    /// Windowing AUC grid, one row per algorithm and one column per
    /// timestamp count.
    pub fn windowing_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let labels: Vec<String> = (1..=SLOTS).map(window_label).collect();
        let mut header = vec!["algorithm".to_string()];
        header.extend(labels.iter().cloned());
        w.write_record(&header)?;
        for alg in self.algorithms() {
            let cells: Vec<Option<&SchemeResult>> = labels
                .iter()
                .map(|l| self.get(alg, &format!("window:{l}")))
                .collect();
            if cells.iter().all(Option::is_none) {
                continue;
            }
            let mut row = vec![alg.to_string()];
            row.extend(cells.iter().map(|c| fmt3(c.and_then(|r| r.auc))));
            w.write_record(&row)?;
        }
        finish(w)
    }

    pub fn has_scheme(&self, prefix: &str) -> bool {
        self.results.iter().any(|r| r.scheme.starts_with(prefix))
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `report.csv` and `report.json`, plus `per_hospital.csv` and
/// `windowing.csv` when those schemes ran. Returns the written paths.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.results.is_empty() {
        return Err(Error::InvalidArgument("empty report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![
        ("report.csv", report.summary_csv()?),
        ("report.json", serde_json::to_string_pretty(report)? + "\n"),
    ];
    if report.has_scheme("logo") {
        files.push(("per_hospital.csv", report.per_hospital_csv()?));
    }
    if report.has_scheme("window:") {
        files.push(("windowing.csv", report.windowing_csv()?));
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::FoldResult;

    fn result(alg: &str, scheme: &str, auc: Option<f64>) -> SchemeResult {
        SchemeResult {
            algorithm: alg.into(),
            scheme: scheme.into(),
            auc,
            f1: Some(0.5),
            threshold: 0.25,
            folds: vec![FoldResult {
                fold: 0,
                group: Some("H1".into()),
                train_rows: 9,
                test_rows: 3,
                auc,
                f1: Some(0.5),
                threshold: 0.25,
                features_kept: None,
                flag: None,
            }],
        }
    }

    #[test]
    fn single_row_summary() {
        let r = EvalReport {
            results: vec![result("gbdt", "cv10", Some(0.91234))],
        };
        assert_eq!(
            r.summary_csv().unwrap(),
            "algorithm,scheme,auc,f1,threshold\ngbdt,cv10,0.912,0.500,0.250\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&r, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
    }

    #[test]
    fn undefined_values_render_na() {
        assert_eq!(fmt3(None), "NA");
        assert_eq!(fmt3(Some(f64::NAN)), "NA");
        assert_eq!(fmt3(Some(f64::NEG_INFINITY)), "-inf");
    }

    #[test]
    fn grid_and_hospital_tables() {
        let mut results = vec![result("mews", "logo", None)];
        for k in 1..=5 {
            results.push(result(
                "mews",
                &format!("window:{}", window_label(k)),
                Some(0.6),
            ));
        }
        let r = EvalReport { results };
        assert_eq!(
            r.windowing_csv().unwrap(),
            "algorithm,t-4,t-3,t-2,t-1,t\nmews,0.600,0.600,0.600,0.600,0.600\n"
        );
        assert_eq!(
            r.per_hospital_csv().unwrap().lines().nth(1).unwrap(),
            "mews,H1,NA,0.500,3,"
        );
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(emit_report(&r, dir.path()).unwrap().len(), 4);
        assert!(emit_report(&EvalReport::default(), dir.path()).is_err());
    }
}
