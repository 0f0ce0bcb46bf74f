//! Selection runs driven by a [`RunManifest`]: load the pool / target
//! features, build exactly the kernels the method needs, select, and emit a
//! JSON report.
//!
//! Reports are JSON objects with lexicographically sorted keys:
//!
//! ```text
//! { "evaluations", "gains", "manifest", "selected", "total_value",
//!   "truncated", "wall_time_ms" }
//! ```
//!
//! The `manifest` field echoes the run configuration and can be fed back to
//! `tss select --manifest` to reproduce the run.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{badge_select, random_select, targeted_uncertainty_select, uncertainty_select};
use crate::datastore::{load_features, load_probabilities, FeatureMatrix, ProbabilityMatrix};
use crate::kernel::{build_gram, build_kernel, KernelConfig, Metric, SimilarityKernel, Transform};
use crate::objectives::{Kernels, Objective, ObjectiveKind, ObjectiveParams};
use crate::optimizer::{greedy_maximize, Algorithm, SelectionConfig, SelectionResult};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    Us,
    Tus,
    Badge,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [BaselineKind::Random, BaselineKind::Us, BaselineKind::Tus, BaselineKind::Badge];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::Us => "us",
            BaselineKind::Tus => "tus",
            BaselineKind::Badge => "badge",
        }
    }
}

/// Any selection method: an objective maximized greedily, or a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Objective(ObjectiveKind),
    Baseline(BaselineKind),
}

impl Method {
    pub fn all() -> Vec<Method> {
        ObjectiveKind::ALL
            .into_iter()
            .map(Method::Objective)
            .chain(BaselineKind::ALL.into_iter().map(Method::Baseline))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Objective(k) => k.name(),
            Method::Baseline(b) => b.name(),
        }
    }

    pub fn needs_target(self) -> bool {
        match self {
            Method::Objective(k) => k.uses_target(),
            Method::Baseline(b) => b == BaselineKind::Tus,
        }
    }

    pub fn needs_probs(self) -> bool {
        matches!(self, Method::Baseline(BaselineKind::Us | BaselineKind::Tus))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::all()
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::all().iter().map(|m| m.name()).collect();
                format!("unknown method {s:?}; expected one of: {}", names.join(", "))
            })
    }
}

impl TryFrom<String> for Method {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

fn default_eta() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    1.0
}
fn default_lambda_gc() -> f64 {
    0.5
}
fn default_ridge() -> f64 {
    1e-6
}
fn tool_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

/// Everything that determines a selection run's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub method: Method,
    pub budget: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lambda_gc")]
    pub lambda_gc: f64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub transform: Transform,
    #[serde(default)]
    pub algorithm: Algorithm,
    pub unlabeled: PathBuf,
    #[serde(default)]
    pub target: Option<PathBuf>,
    #[serde(default)]
    pub probs: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "tool_version")]
    pub version: String,
}

impl RunManifest {
    pub fn new(method: Method, budget: usize, unlabeled: impl Into<PathBuf>) -> Self {
        Self {
            method,
            budget,
            eta: default_eta(),
            gamma: default_gamma(),
            lambda_gc: default_lambda_gc(),
            ridge: default_ridge(),
            metric: Metric::default(),
            transform: Transform::default(),
            algorithm: Algorithm::default(),
            unlabeled: unlabeled.into(),
            target: None,
            probs: None,
            seed: 0,
            version: tool_version(),
        }
    }

    pub fn objective_params(&self) -> ObjectiveParams<f64> {
        ObjectiveParams {
            eta: self.eta,
            gamma: self.gamma,
            lambda_gc: self.lambda_gc,
            ridge: self.ridge,
        }
    }

    pub fn settings(&self) -> SelectionSettings {
        SelectionSettings {
            params: self.objective_params(),
            budget: self.budget,
            algorithm: self.algorithm,
            seed: self.seed,
        }
    }

    pub fn kernel_config(&self) -> KernelConfig<f64> {
        KernelConfig::new(self.metric, self.transform)
    }

    /// Reads a manifest from JSON; accepts either a bare manifest or a
    /// report containing one under `"manifest"`.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let inner = match value.get("manifest") {
            Some(m) => m.clone(),
            None => value,
        };
        Ok(serde_json::from_value(inner)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }
}

/// Loads the target features, mapping a missing or blank file to a
/// configuration error: a target-aware method cannot run without one.
fn load_target(manifest: &RunManifest) -> Result<FeatureMatrix<f64>> {
    let missing = || Error::Configuration(format!("method {} requires a nonempty --target file", manifest.method));
    let path = manifest.target.as_ref().ok_or_else(missing)?;
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.clone(), source })?;
    if text.trim().is_empty() {
        return Err(missing());
    }
    crate::datastore::parse_features(&text, &path.display().to_string())
}

/// Builds only the kernels `kind` reads.
pub fn kernels_for(
    kind: ObjectiveKind,
    pool: &FeatureMatrix<f64>,
    target: Option<&FeatureMatrix<f64>>,
    cfg: &KernelConfig<f64>,
) -> Result<Kernels<f64>> {
    KernelBank::new(pool, target, *cfg).kernels_for(kind)
}

/// Lazily built kernels over one pool / target pair, shared across the
/// methods of a run.
pub struct KernelBank<'a> {
    pool: &'a FeatureMatrix<f64>,
    target: Option<&'a FeatureMatrix<f64>>,
    cfg: KernelConfig<f64>,
    uu: OnceLock<SimilarityKernel<f64>>,
    ut: OnceLock<SimilarityKernel<f64>>,
    tt: OnceLock<SimilarityKernel<f64>>,
}

fn cached<'k>(
    cell: &'k OnceLock<SimilarityKernel<f64>>,
    build: impl FnOnce() -> Result<SimilarityKernel<f64>>,
) -> Result<&'k SimilarityKernel<f64>> {
    if let Some(k) = cell.get() {
        return Ok(k);
    }
    let k = build()?;
    Ok(cell.get_or_init(|| k))
}

impl<'a> KernelBank<'a> {
    pub fn new(pool: &'a FeatureMatrix<f64>, target: Option<&'a FeatureMatrix<f64>>, cfg: KernelConfig<f64>) -> Self {
        Self {
            pool,
            target,
            cfg,
            uu: OnceLock::new(),
            ut: OnceLock::new(),
            tt: OnceLock::new(),
        }
    }

    pub fn pool(&self) -> &FeatureMatrix<f64> {
        self.pool
    }

    fn target(&self, what: &str) -> Result<&'a FeatureMatrix<f64>> {
        self.target
            .ok_or_else(|| Error::Configuration(format!("{what} requires a target set")))
    }

    pub fn uu(&self) -> Result<&SimilarityKernel<f64>> {
        cached(&self.uu, || build_gram(self.pool, &self.cfg))
    }

    pub fn ut(&self) -> Result<&SimilarityKernel<f64>> {
        let target = self.target("the pool-target kernel")?;
        cached(&self.ut, || build_kernel(self.pool, target, &self.cfg))
    }

    pub fn tt(&self) -> Result<&SimilarityKernel<f64>> {
        let target = self.target("the target kernel")?;
        cached(&self.tt, || build_gram(target, &self.cfg))
    }

    /// Copies of exactly the kernels `kind` reads.
    pub fn kernels_for(&self, kind: ObjectiveKind) -> Result<Kernels<f64>> {
        let what = format!("objective {kind}");
        if kind.needs_ut() || kind.needs_tt() {
            self.target(&what)?;
        }
        Ok(Kernels {
            uu: if kind.needs_uu() { Some(self.uu()?.clone()) } else { None },
            ut: if kind.needs_ut() { Some(self.ut()?.clone()) } else { None },
            tt: if kind.needs_tt() { Some(self.tt()?.clone()) } else { None },
        })
    }
}

/// Method-independent selection settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionSettings {
    pub params: ObjectiveParams<f64>,
    pub budget: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
}

/// Selects `settings.budget` pool items with `method`. In-memory entry
/// point shared by the CLI and the experiment harness.
pub fn select_method(
    method: Method,
    bank: &KernelBank<'_>,
    probs: Option<&ProbabilityMatrix<f64>>,
    settings: &SelectionSettings,
) -> Result<SelectionResult<f64>> {
    let pool = bank.pool();
    if let Some(p) = probs.filter(|p| p.rows() != pool.rows()) {
        return Err(Error::Shape(format!("probabilities have {} rows, pool has {}", p.rows(), pool.rows())));
    }
    let need_probs = || {
        probs.ok_or_else(|| Error::Configuration(format!("method {method} requires predicted probabilities")))
    };
    match method {
        Method::Objective(kind) => {
            let objective = Objective::new(kind, settings.params, bank.kernels_for(kind)?)?;
            let cfg = SelectionConfig {
                budget: settings.budget,
                algorithm: settings.algorithm,
                rng_seed: settings.seed,
            };
            greedy_maximize(&objective, &cfg)
        }
        Method::Baseline(BaselineKind::Random) => random_select(pool.rows(), settings.budget, settings.seed),
        Method::Baseline(BaselineKind::Us) => uncertainty_select(need_probs()?, settings.budget),
        Method::Baseline(BaselineKind::Tus) => targeted_uncertainty_select(need_probs()?, bank.ut()?, settings.budget),
        Method::Baseline(BaselineKind::Badge) => badge_select(pool, settings.budget, settings.seed),
    }
}

/// Runs the selection described by `manifest`.
pub fn tss_select(manifest: &RunManifest) -> Result<SelectionResult<f64>> {
    let target = if manifest.method.needs_target() { Some(load_target(manifest)?) } else { None };
    let probs = if manifest.method.needs_probs() {
        let path = manifest.probs.as_ref().ok_or_else(|| {
            Error::Configuration(format!("method {} requires a --probs file", manifest.method))
        })?;
        Some(load_probabilities::<f64>(path)?)
    } else {
        None
    };
    let pool: FeatureMatrix<f64> = load_features(&manifest.unlabeled)?;
    let bank = KernelBank::new(&pool, target.as_ref(), manifest.kernel_config());
    select_method(manifest.method, &bank, probs.as_ref(), &manifest.settings())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub selected: Vec<usize>,
    pub gains: Vec<f64>,
    pub total_value: f64,
    pub evaluations: u64,
    pub truncated: bool,
    pub wall_time_ms: f64,
}

impl RunReport {
    /// Pretty JSON with sorted keys.
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&value)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Runs `manifest` and times it.
pub fn run(manifest: &RunManifest) -> Result<RunReport> {
    let start = Instant::now();
    let result = tss_select(manifest)?;
    Ok(RunReport {
        manifest: manifest.clone(),
        selected: result.selected,
        gains: result.gains,
        total_value: result.total_value,
        evaluations: result.evaluations,
        truncated: result.truncated,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::all() {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<Method>(&json).unwrap(), m);
        }
        assert!("glister".parse::<Method>().is_err());
    }

    #[test]
    fn manifest_defaults_and_report_echo() {
        let m = RunManifest::from_json(r#"{"method":"fl2mi","budget":3,"unlabeled":"u.csv"}"#).unwrap();
        assert_eq!(m.eta, 1.0);
        assert_eq!(m.ridge, 1e-6);
        assert_eq!(m.transform, Transform::ShiftScale);
        let report = RunReport {
            manifest: m.clone(),
            selected: vec![1],
            gains: vec![0.5],
            total_value: 0.5,
            evaluations: 2,
            truncated: false,
            wall_time_ms: 0.1,
        };
        let json = report.to_json().unwrap();
        assert_eq!(RunManifest::from_json(&json).unwrap(), m);
        let keys: Vec<String> = match serde_json::from_str::<Value>(&json).unwrap() {
            Value::Object(map) => map.keys().cloned().collect(),
            _ => unreachable!(),
        };
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn missing_or_empty_target_is_configuration_error() {
        let dir = tempfile::tempdir().unwrap();
        let u = write(dir.path(), "u.csv", "1,0\n0,1\n");
        let t = write(dir.path(), "t.csv", "");
        let mut m = RunManifest::new(Method::Objective(ObjectiveKind::Fl2mi), 1, &u);
        assert!(matches!(tss_select(&m), Err(Error::Configuration(_))));
        m.target = Some(t);
        let err = tss_select(&m).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn random_zero_budget() {
        let dir = tempfile::tempdir().unwrap();
        let u = write(dir.path(), "u.csv", "1,0\n0,1\n");
        let r = tss_select(&RunManifest::new(Method::Baseline(BaselineKind::Random), 0, &u)).unwrap();
        assert!(r.selected.is_empty());
        assert_eq!(r.total_value, 0.0);
    }

    #[test]
    fn malformed_pool_is_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let u = write(dir.path(), "u.csv", "1,0\n0\n");
        let err = tss_select(&RunManifest::new(Method::Objective(ObjectiveKind::Fl), 1, &u)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn only_required_kernels_are_built() {
        let pool = FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let target = FeatureMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let cfg = KernelConfig::default();
        for kind in ObjectiveKind::ALL {
            let k = kernels_for(kind, &pool, Some(&target), &cfg).unwrap();
            assert_eq!(k.uu.is_some(), kind.needs_uu(), "{kind}");
            assert_eq!(k.ut.is_some(), kind.needs_ut(), "{kind}");
            assert_eq!(k.tt.is_some(), kind.needs_tt(), "{kind}");
        }
    }
}
