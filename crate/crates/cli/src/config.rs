//! Run configuration: a TOML file plus command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ews_core::eval::EvalOptions;
use ews_core::ingest::Range as Bounds;
use ews_core::preprocess::{ImputeParams, WindowConfig, SLOTS};
use ews_core::{
    Algorithm, ClassifierSpec, ColumnMapping, PlausibilityBounds, PrepareOptions, Protocol, Scorer,
    VitalKind,
};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Cv10,
    Logo,
    Window,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Cv10, Scheme::Logo, Scheme::Window];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Cv10 => "cv10",
            Scheme::Logo => "logo",
            Scheme::Window => "window",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s.trim())
            .ok_or_else(|| format!("unknown scheme `{s}` (expected cv10, logo or window)"))
    }
}

/// Every scorer in report order: the six models, then the protocols.
pub fn default_scorer_names() -> Vec<String> {
    Algorithm::ALL
        .iter()
        .map(|a| a.name().to_string())
        .chain(Protocol::ALL.iter().map(|p| p.name().to_string()))
        .collect()
}

/// Fully resolved settings. Serialized (paths excluded) for the config hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(skip)]
    pub data_dir: Option<PathBuf>,
    #[serde(skip)]
    pub matrix_dir: Option<PathBuf>,
    #[serde(skip)]
    pub out: PathBuf,
    pub measurements_file: String,
    pub encounters_file: String,
    pub seed: u64,
    pub scorers: Vec<Scorer>,
    pub schemes: Vec<Scheme>,
    pub cost_ratio: f64,
    pub timestamps: usize,
    pub alpha: f64,
    pub prepare: PrepareOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            matrix_dir: None,
            out: PathBuf::from("out"),
            measurements_file: "measurements.csv".into(),
            encounters_file: "encounters.csv".into(),
            seed: 0,
            scorers: default_scorer_names()
                .iter()
                .map(|n| parse_scorer(n, &BTreeMap::new()).unwrap())
                .collect(),
            schemes: vec![Scheme::Cv10],
            cost_ratio: 10.0,
            timestamps: SLOTS,
            alpha: 0.05,
            prepare: PrepareOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn measurements_path(&self) -> CliResult<PathBuf> {
        Ok(self.require_data_dir()?.join(&self.measurements_file))
    }

    pub fn encounters_path(&self) -> CliResult<PathBuf> {
        Ok(self.require_data_dir()?.join(&self.encounters_file))
    }

    fn require_data_dir(&self) -> CliResult<&Path> {
        self.data_dir.as_deref().ok_or_else(|| {
            CliError::Config("no data directory: set [data] dir or pass --data-dir".into())
        })
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            seed: self.seed,
            cost_fn: self.cost_ratio,
            cost_fp: 1.0,
            alpha: self.alpha,
            timestamps: self.timestamps,
            ..EvalOptions::default()
        }
    }

    /// Preparation settings with imputation seeded from the run seed.
    pub fn prepare_options(&self) -> PrepareOptions {
        let mut p = self.prepare.clone();
        p.impute.seed = self.seed;
        p
    }

    /// Canonical JSON of every result-affecting setting.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Hyperparameter overrides per algorithm name.
type ParamTable = BTreeMap<String, Spanned<BTreeMap<String, f64>>>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    dir: Option<PathBuf>,
    measurements: Option<String>,
    encounters: Option<String>,
    matrix: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    models: Option<Vec<Spanned<String>>>,
    schemes: Option<Vec<Spanned<String>>>,
    cost_ratio: Option<Spanned<f64>>,
    timestamps: Option<Spanned<i64>>,
    alpha: Option<Spanned<f64>>,
    data: Option<DataSection>,
    mapping: Option<ColumnMapping>,
    bounds: Option<Spanned<BTreeMap<String, Spanned<[f64; 2]>>>>,
    window: Option<Spanned<WindowConfig>>,
    impute: Option<Spanned<ImputeParams>>,
    params: Option<ParamTable>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub matrix_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub models: Option<String>,
    pub schemes: Option<String>,
    pub cost_ratio: Option<f64>,
    pub timestamps: Option<usize>,
}

struct Source<'a> {
    name: String,
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        self.text[..span.start.min(self.text.len())]
            .matches('\n')
            .count()
            + 1
    }

    fn err(&self, span: Range<usize>, msg: impl fmt::Display) -> CliError {
        CliError::Config(format!("{}:{}: {msg}", self.name, self.line(span)))
    }
}

fn parse_scorer(
    name: &str,
    params: &BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<Scorer, String> {
    let name = name.trim();
    if let Ok(protocol) = name.parse::<Protocol>() {
        return Ok(Scorer::Protocol { protocol });
    }
    let algorithm: Algorithm = name.parse().map_err(|_| {
        format!(
            "unknown model `{name}` (expected one of {})",
            default_scorer_names().join(", ")
        )
    })?;
    let p = params.get(algorithm.name()).cloned().unwrap_or_default();
    // The run seed is filled in once overrides are applied.
    let spec = ClassifierSpec::new(algorithm, p, Some(0)).map_err(|e| e.to_string())?;
    Ok(Scorer::Model { spec })
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .collect()
}

fn check_cost_ratio(r: f64) -> Result<f64, String> {
    if r.is_finite() && r > 0.0 {
        Ok(r)
    } else {
        Err(format!("cost ratio must be positive and finite, got {r}"))
    }
}

fn check_timestamps(k: i64) -> Result<usize, String> {
    if (1..=SLOTS as i64).contains(&k) {
        Ok(k as usize)
    } else {
        Err(format!("timestamps must be in 1..={SLOTS}, got {k}"))
    }
}

/// Reads and validates a config file, then applies the overrides.
pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    let name = path.map_or_else(|| "<defaults>".to_string(), |p| p.display().to_string());
    let base = path
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    resolve(&text, &name, &base, overrides)
}

/// Validates `text` as a config; relative paths in it are resolved against
/// `base`.
pub fn resolve(text: &str, name: &str, base: &Path, overrides: &Overrides) -> CliResult<RunConfig> {
    let src = Source {
        name: name.to_string(),
        text,
    };
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| src.line(s));
        CliError::Config(format!("{name}:{line}: {}", e.message().trim()))
    })?;
    let mut cfg = RunConfig::default();
    let rel = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

    if let Some(seed) = raw.seed {
        cfg.seed = seed;
    }
    if let Some(out) = raw.out {
        cfg.out = rel(out);
    }
    if let Some(d) = raw.data {
        cfg.data_dir = d.dir.map(rel);
        cfg.matrix_dir = d.matrix.map(rel);
        if let Some(m) = d.measurements {
            cfg.measurements_file = m;
        }
        if let Some(e) = d.encounters {
            cfg.encounters_file = e;
        }
    }
    if let Some(m) = raw.mapping {
        cfg.prepare.mapping = m;
    }
    if let Some(bounds) = raw.bounds {
        let mut b = PlausibilityBounds::default();
        for (vital, range) in bounds.get_ref() {
            let kind: VitalKind = vital.parse().map_err(|_| {
                src.err(
                    bounds.span(),
                    format!("unknown vital `{vital}` in [bounds]"),
                )
            })?;
            let [lo, hi] = *range.get_ref();
            b.set(kind, Bounds::new(lo, hi))
                .map_err(|e| src.err(range.span(), e))?;
        }
        cfg.prepare.bounds = b;
    }
    if let Some(w) = raw.window {
        w.get_ref().validate().map_err(|e| src.err(w.span(), e))?;
        cfg.prepare.window = *w.get_ref();
    }
    if let Some(imp) = raw.impute {
        let p = imp.get_ref();
        if p.trees == 0 || p.max_iter == 0 || p.max_samples < 2 {
            return Err(src.err(
                imp.span(),
                "[impute] needs trees >= 1, max_iter >= 1 and max_samples >= 2",
            ));
        }
        cfg.prepare.impute = *p;
    }
    let mut params = BTreeMap::new();
    for (alg, table) in raw.params.unwrap_or_default() {
        let algorithm: Algorithm = alg
            .parse()
            .map_err(|_| src.err(table.span(), format!("unknown model `{alg}` in [params]")))?;
        ClassifierSpec::new(algorithm, table.get_ref().clone(), Some(0))
            .map_err(|e| src.err(table.span(), e))?;
        params.insert(algorithm.name().to_string(), table.into_inner());
    }
    if let Some(models) = raw.models {
        cfg.scorers = models
            .iter()
            .map(|m| parse_scorer(m.get_ref(), &params).map_err(|e| src.err(m.span(), e)))
            .collect::<CliResult<_>>()?;
    } else {
        cfg.scorers = default_scorer_names()
            .iter()
            .map(|n| parse_scorer(n, &params).expect("default names parse"))
            .collect();
    }
    if let Some(schemes) = raw.schemes {
        cfg.schemes = schemes
            .iter()
            .map(|s| s.get_ref().parse().map_err(|e| src.err(s.span(), e)))
            .collect::<CliResult<_>>()?;
    }
    if let Some(r) = raw.cost_ratio {
        cfg.cost_ratio = check_cost_ratio(*r.get_ref()).map_err(|e| src.err(r.span(), e))?;
    }
    if let Some(k) = raw.timestamps {
        cfg.timestamps = check_timestamps(*k.get_ref()).map_err(|e| src.err(k.span(), e))?;
    }
    if let Some(a) = raw.alpha {
        let v = *a.get_ref();
        if !(v > 0.0 && v < 1.0) {
            return Err(src.err(a.span(), format!("alpha must be in (0, 1), got {v}")));
        }
        cfg.alpha = v;
    }

    let flag = |flag: &str, e: String| CliError::Config(format!("--{flag}: {e}"));
    if let Some(d) = &overrides.data_dir {
        cfg.data_dir = Some(d.clone());
    }
    if let Some(d) = &overrides.matrix_dir {
        cfg.matrix_dir = Some(d.clone());
    }
    if let Some(o) = &overrides.out {
        cfg.out = o.clone();
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(list) = &overrides.models {
        cfg.scorers = split_list(list)
            .into_iter()
            .map(|m| parse_scorer(m, &params).map_err(|e| flag("models", e)))
            .collect::<CliResult<_>>()?;
    }
    if let Some(list) = &overrides.schemes {
        cfg.schemes = split_list(list)
            .into_iter()
            .map(|s| s.parse().map_err(|e| flag("schemes", e)))
            .collect::<CliResult<_>>()?;
    }
    if let Some(r) = overrides.cost_ratio {
        cfg.cost_ratio = check_cost_ratio(r).map_err(|e| flag("cost-ratio", e))?;
    }
    if let Some(k) = overrides.timestamps {
        cfg.timestamps = check_timestamps(k as i64).map_err(|e| flag("timestamps", e))?;
    }

    if cfg.scorers.is_empty() {
        return Err(CliError::Config("at least one model is required".into()));
    }
    if cfg.schemes.is_empty() {
        return Err(CliError::Config("at least one scheme is required".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in &cfg.scorers {
        if !seen.insert(s.name()) {
            return Err(CliError::Config(format!(
                "model `{}` listed twice",
                s.name()
            )));
        }
    }
    cfg.schemes.sort();
    cfg.schemes.dedup();
    for s in &mut cfg.scorers {
        if let Scorer::Model { spec } = s {
            spec.seed = Some(cfg.seed);
        }
    }
    Ok(cfg)
}
