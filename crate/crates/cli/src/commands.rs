//! Subcommand implementations. Each returns the text destined for stdout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ews_core::eval::{
    emit_report, kfold_cv, leave_one_group_out, windowing_validation, EvalReport,
};
use ews_core::ews::dump_tables_csv;
use ews_core::ingest::{assemble_encounters, filter_outliers, parse_longitudinal_csv};
use ews_core::preprocess::{read_matrix_cache, window_at, write_matrix_cache, FeatureWindow};
use ews_core::synth::{write_sample, SynthConfig};
use ews_core::{
    prepare, Algorithm, CategoryEncoding, ClassifierSpec, FeatureMatrix, ModelBundle, PrepareReport,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Scheme};
use crate::error::{CliError, CliResult};

pub const ENCODING_FILE: &str = "encoding.json";
pub const PREPARE_REPORT_FILE: &str = "prepare_report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Reproducibility record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub dataset_source: String,
    pub dataset_sha256: String,
    pub scorers: Vec<String>,
    pub schemes: Vec<String>,
    pub timestamps: usize,
    pub cost_ratio: f64,
    /// File name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Output failures are not the input's fault, so they map to internal.
fn write_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Internal(format!("cannot write {}: {e}", path.display()))
}

fn ensure_out(cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| write_err(&cfg.out, e))
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| write_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| write_err(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash over the named files, in order, each prefixed by its name.
fn files_sha256(paths: &[PathBuf]) -> CliResult<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).map_err(|e| io_err(p, e))?;
        h.update(
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
                .as_bytes(),
        );
        h.update([0u8]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn write_manifest(
    cfg: &RunConfig,
    command: &str,
    source: &str,
    dataset_sha256: String,
    outputs: &[PathBuf],
) -> CliResult<PathBuf> {
    let mut hashes = BTreeMap::new();
    for p in outputs {
        let bytes = fs::read(p).map_err(|e| io_err(p, e))?;
        hashes.insert(
            p.file_name().unwrap().to_string_lossy().into_owned(),
            sha256_hex(&bytes),
        );
    }
    let m = Manifest {
        tool: "ews-bench".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed: cfg.seed,
        config_sha256: sha256_hex(cfg.canonical_json().as_bytes()),
        dataset_source: source.into(),
        dataset_sha256,
        scorers: cfg.scorers.iter().map(|s| s.name().to_string()).collect(),
        schemes: cfg.schemes.iter().map(|s| s.name().to_string()).collect(),
        timestamps: cfg.timestamps,
        cost_ratio: cfg.cost_ratio,
        outputs: hashes,
    };
    let path = cfg.out.join(MANIFEST_FILE);
    let body =
        serde_json::to_string_pretty(&m).map_err(|e| CliError::Internal(e.to_string()))? + "\n";
    write_file(&path, body.as_bytes())?;
    Ok(path)
}

/// A feature matrix with the category codes it was built with.
pub struct Dataset {
    pub matrix: FeatureMatrix,
    pub encoding: CategoryEncoding,
    pub source: String,
    pub sha256: String,
    pub report: Option<PrepareReport>,
}

fn json<T: Serialize>(v: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(v).map_err(|e| CliError::Internal(e.to_string()))? + "\n")
}

/// Prepares from the CSV exports and writes the matrix cache, encoding and
/// preprocessing report into `cfg.out`.
fn prepare_into_out(cfg: &RunConfig) -> CliResult<(Dataset, Vec<PathBuf>)> {
    ensure_out(cfg)?;
    let (meas, enc) = (cfg.measurements_path()?, cfg.encounters_path()?);
    let opts = cfg.prepare_options();
    let prepared = prepare(&meas, &enc, &opts)?;
    let sha256 = files_sha256(&[meas, enc])?;
    let provenance = serde_json::json!({
        "seed": cfg.seed,
        "config_sha256": sha256_hex(cfg.canonical_json().as_bytes()),
        "dataset_sha256": sha256,
        "window": opts.window,
        "impute": opts.impute,
    });
    write_matrix_cache(&prepared.matrix, &cfg.out, provenance)?;
    let enc_path = cfg.out.join(ENCODING_FILE);
    write_file(&enc_path, json(&prepared.encoding)?.as_bytes())?;
    let report_path = cfg.out.join(PREPARE_REPORT_FILE);
    write_file(&report_path, json(&prepared.report)?.as_bytes())?;
    let cohort_path = cfg.out.join("cohort.csv");
    write_file(&cohort_path, prepared.cohort.to_csv().as_bytes())?;
    let outputs = vec![
        cfg.out.join("matrix.csv"),
        cfg.out.join("matrix.json"),
        enc_path,
        report_path,
        cohort_path,
    ];
    Ok((
        Dataset {
            matrix: prepared.matrix,
            encoding: prepared.encoding,
            source: "csv".into(),
            sha256,
            report: Some(prepared.report),
        },
        outputs,
    ))
}

fn load_cached(dir: &Path) -> CliResult<Dataset> {
    let (matrix, _) = read_matrix_cache(dir)?;
    let enc_path = dir.join(ENCODING_FILE);
    let encoding: CategoryEncoding = match fs::read_to_string(&enc_path) {
        Ok(s) => serde_json::from_str(&s)
            .map_err(|e| CliError::Data(format!("{}: {e}", enc_path.display())))?,
        Err(e) => return Err(io_err(&enc_path, e)),
    };
    Ok(Dataset {
        matrix,
        encoding,
        source: "matrix-cache".into(),
        sha256: files_sha256(&[dir.join("matrix.csv"), dir.join("matrix.json")])?,
        report: None,
    })
}

/// The cached matrix when one is configured, else a fresh preparation.
fn dataset(cfg: &RunConfig) -> CliResult<(Dataset, Vec<PathBuf>)> {
    match &cfg.matrix_dir {
        Some(dir) => Ok((load_cached(dir)?, Vec::new())),
        None => prepare_into_out(cfg),
    }
}

fn report_lines(r: &PrepareReport) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: usize| out.push_str(&format!("{k:<28}{v}\n"));
    line("measurement rows", r.measurement_rows);
    line("encounter rows", r.encounter_rows);
    line("rejected rows", r.rejected_rows);
    line("outlier dropped", r.outlier_dropped);
    line("orphan observations", r.orphan_observations);
    line("out-of-span observations", r.out_of_span_observations);
    line("single-collection excluded", r.single_collection_excluded);
    line("gap dropped", r.gap_dropped);
    line("no-vitals dropped", r.no_vitals_dropped);
    line("forward filled", r.forward_filled);
    line("missforest imputed", r.missforest_imputed);
    line("median filled", r.median_filled);
    line("imputation iterations", r.imputation_iterations);
    line("rows", r.rows);
    line("positives", r.positives);
    out
}

pub fn cmd_prepare(cfg: &RunConfig) -> CliResult<String> {
    let (data, mut outputs) = prepare_into_out(cfg)?;
    let report = data
        .report
        .as_ref()
        .expect("fresh preparation has a report");
    outputs.push(write_manifest(
        cfg,
        "prepare",
        &data.source,
        data.sha256.clone(),
        &outputs,
    )?);
    Ok(report_lines(report))
}

/// Runs every configured (scorer, scheme) pair.
pub fn run_bench(cfg: &RunConfig, m: &FeatureMatrix) -> CliResult<EvalReport> {
    let opts = cfg.eval_options();
    let mut report = EvalReport::default();
    for scheme in &cfg.schemes {
        for scorer in &cfg.scorers {
            match scheme {
                Scheme::Cv10 => report.results.push(kfold_cv(scorer, m, &opts)?),
                Scheme::Logo => report.results.push(leave_one_group_out(scorer, m, &opts)?),
                Scheme::Window => report
                    .results
                    .extend(windowing_validation(scorer, m, &opts)?),
            }
        }
    }
    Ok(report)
}

pub fn cmd_bench(cfg: &RunConfig) -> CliResult<String> {
    ensure_out(cfg)?;
    let (data, mut outputs) = dataset(cfg)?;
    let report = run_bench(cfg, &data.matrix)?;
    outputs.extend(emit_report(&report, &cfg.out)?);
    write_manifest(cfg, "bench", &data.source, data.sha256, &outputs)?;
    Ok(report.summary_csv()?)
}

pub fn cmd_dump_tables() -> String {
    dump_tables_csv()
}

/// Fits `algorithm` on the whole prepared matrix and writes a deployable
/// bundle to `bundle`.
pub fn cmd_train(cfg: &RunConfig, algorithm: &str, bundle: &Path) -> CliResult<String> {
    let algorithm: Algorithm = algorithm
        .parse()
        .map_err(|e: ews_core::Error| CliError::Config(format!("--algorithm: {e}")))?;
    let spec = cfg
        .scorers
        .iter()
        .find_map(|s| match s {
            ews_core::Scorer::Model { spec } if spec.algorithm == algorithm => Some(spec.clone()),
            _ => None,
        })
        .unwrap_or_else(|| ClassifierSpec::with_defaults(algorithm, cfg.seed));
    let spec = ClassifierSpec {
        seed: Some(cfg.seed),
        ..spec
    };
    let (data, _) = dataset(cfg)?;
    let b = ModelBundle::train(&spec, &data.matrix, data.encoding, cfg.cost_ratio, 1.0)?;
    write_file(bundle, b.to_json()?.as_bytes())?;
    Ok(format!(
        "{}\tthreshold {:.6}\t{}\n",
        algorithm,
        b.threshold,
        bundle.display()
    ))
}

/// Where the window to explain comes from.
pub enum ExplainInput {
    /// A `FeatureWindow` JSON document.
    Window(PathBuf),
    /// The live window of one encounter in the exports, at `at` or at its
    /// outcome time.
    Encounter {
        cfg: Box<RunConfig>,
        id: String,
        at: Option<String>,
    },
}

fn encounter_window(
    b: &ModelBundle,
    cfg: &RunConfig,
    id: &str,
    at: Option<&str>,
) -> CliResult<FeatureWindow> {
    let mapping = &cfg.prepare.mapping;
    let parsed =
        parse_longitudinal_csv(&cfg.measurements_path()?, &cfg.encounters_path()?, mapping)?;
    let (kept, _) = filter_outliers(parsed.observations, &cfg.prepare.bounds);
    let assembly = assemble_encounters(kept, parsed.encounters);
    let enc = assembly
        .encounters
        .iter()
        .find(|e| e.id() == id)
        .ok_or_else(|| {
            CliError::Data(format!(
                "encounter `{id}` not found or has fewer than two collections"
            ))
        })?;
    let now = match at {
        Some(raw) => mapping
            .parse_timestamp(raw)
            .ok_or_else(|| CliError::Config(format!("--at: cannot parse timestamp `{raw}`")))?,
        None => enc.meta.outcome_time,
    };
    window_at(enc, now, &b.live_window)
        .map(|(w, _)| w)
        .map_err(|reason| {
            CliError::Data(format!("encounter `{id}` has no usable window: {reason:?}"))
        })
}

/// Explains one window with a bundle.
pub fn cmd_explain(bundle: &Path, input: &ExplainInput) -> CliResult<String> {
    let b = ModelBundle::load(bundle)?;
    let w = match input {
        ExplainInput::Window(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str::<FeatureWindow>(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        ExplainInput::Encounter { cfg, id, at } => encounter_window(&b, cfg, id, at.as_deref())?,
    };
    let row = b.window_input(&w);
    json(&b.explain(&w.encounter_id, &row)?)
}

pub fn cmd_gen_sample(cfg: &SynthConfig, dir: &Path) -> CliResult<String> {
    let encounters = write_sample(cfg, dir)?;
    let deaths = encounters.iter().filter(|e| e.meta.died).count();
    let observations: usize = encounters.iter().map(|e| e.observations.len()).sum();
    Ok(format!(
        "wrote {} encounters ({deaths} deaths, {observations} observations) to {}\n",
        encounters.len(),
        dir.display()
    ))
}
