//! Experiment config files: TOML with one top-level `experiment` key and a
//! section per block. Errors carry the line of the offending key.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use saqite_core::backend::{NoiseModel, Shots};
use saqite_core::linsolve::SolverKind;
use saqite_core::mitigate::ZneConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Evolve,
    Optimize,
    SampleError,
    RegularizeCompare,
    Mitigate,
    Resources,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Evolve => "evolve",
            Experiment::Optimize => "optimize",
            Experiment::SampleError => "sample-error",
            Experiment::RegularizeCompare => "regularize-compare",
            Experiment::Mitigate => "mitigate",
            Experiment::Resources => "resources",
        }
    }
}

/// A shot count, or the string `"exact"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShotsSpec {
    Count(u64),
    Word(ExactWord),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExactWord {
    Exact,
}

impl ShotsSpec {
    pub fn shots(self) -> Shots {
        match self {
            ShotsSpec::Count(m) => Shots::Finite(m),
            ShotsSpec::Word(_) => Shots::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    /// `J sum ZZ + h sum X` on `edges`, a chain when omitted.
    Ising {
        n: usize,
        j: f64,
        h: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edges: Option<Vec<[usize; 2]>>,
    },
    MaxcutCircle {
        n: usize,
        w1: f64,
        w2: f64,
    },
}

impl ModelConfig {
    pub fn n(&self) -> usize {
        match self {
            ModelConfig::Ising { n, .. } | ModelConfig::MaxcutCircle { n, .. } => *n,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzConfig {
    /// HEA entangling layers; `ceil(ln n)` when omitted.
    pub layers: Option<usize>,
    /// QAOA repetitions.
    pub reps: Option<usize>,
    /// Initial parameters; zeros for the HEA, small angles for QAOA.
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub readout: f64,
    #[serde(default)]
    pub cx: f64,
}

impl NoiseConfig {
    pub fn model(&self, n: usize) -> saqite_core::Result<NoiseModel> {
        NoiseModel::uniform(n, self.readout, self.cx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolveMode {
    Varqite,
    Saqite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveBlock {
    pub mode: EvolveMode,
    #[serde(default = "default_dt")]
    pub delta_t: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_solver")]
    pub solver: SolverKind,
    pub delta: f64,
    pub shots: ShotsSpec,
    #[serde(default = "one")]
    pub n_samples: usize,
    /// Defaults to the sampler's choice for the shot mode.
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub tau1: f64,
    #[serde(default)]
    pub tau2: f64,
    #[serde(default = "default_reference_dt")]
    pub reference_dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Spsa,
    Qnspsa,
    Saqite,
}

/// Unset fields fall back to the MaxCut defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeBlock {
    pub method: OptimizerKind,
    pub eta: f64,
    pub epsilon: Option<f64>,
    pub shots: Option<ShotsSpec>,
    pub max_iters: Option<usize>,
    pub budget: Option<u64>,
    pub n0: Option<usize>,
    pub decay: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub delta: Option<f64>,
    pub solver: Option<SolverKind>,
    pub psd_projection: Option<bool>,
    pub stop_at_p_optimal: Option<f64>,
    /// `p_optimal` levels whose first-hit measurement counts are reported.
    #[serde(default = "default_milestones")]
    pub milestones: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleErrorBlock {
    /// Cumulative batch sizes, ascending.
    pub sizes: Vec<usize>,
    pub shots: ShotsSpec,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizeBlock {
    pub solvers: Vec<SolverKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MitigateState {
    /// `theta0` itself.
    Initial,
    /// End point of an exact VarQITE run from `theta0`.
    Evolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigateBlock {
    #[serde(default = "default_fold_levels")]
    pub fold_levels: Vec<usize>,
    #[serde(default = "default_twirls")]
    pub n_twirls: usize,
    #[serde(default = "default_mitigate_shots")]
    pub shots: u64,
    #[serde(default = "default_mitigate_state")]
    pub state: MitigateState,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_mitigate_delta")]
    pub delta: f64,
}

impl MitigateBlock {
    pub fn zne(&self) -> ZneConfig {
        ZneConfig {
            fold_levels: self.fold_levels.clone(),
            n_twirls: self.n_twirls,
            shots: self.shots,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceRow {
    pub n: usize,
    pub varqite_shots: u64,
    pub saqite_shots: u64,
    pub n_samples: usize,
    pub tau2: f64,
}

/// VarQITE against SA-QITE at each row's size, sharing the remaining settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourcesBlock {
    pub rows: Vec<ResourceRow>,
    pub delta: f64,
    pub tau1: f64,
    pub epsilon: Option<f64>,
    #[serde(default = "default_solver")]
    pub solver: SolverKind,
    #[serde(default = "default_dt")]
    pub delta_t: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_reference_dt")]
    pub reference_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub model: ModelConfig,
    #[serde(default)]
    pub ansatz: AnsatzConfig,
    pub noise: Option<NoiseConfig>,
    pub evolve: Option<EvolveBlock>,
    pub optimize: Option<OptimizeBlock>,
    pub sample_error: Option<SampleErrorBlock>,
    pub regularize_compare: Option<RegularizeBlock>,
    pub mitigate: Option<MitigateBlock>,
    pub resources: Option<ResourcesBlock>,
}

fn default_dt() -> f64 {
    0.01
}
fn default_t_final() -> f64 {
    1.5
}
fn default_reference_dt() -> f64 {
    1e-3
}
fn default_solver() -> SolverKind {
    SolverKind::StableSubspace
}
fn one() -> usize {
    1
}
fn default_milestones() -> Vec<f64> {
    vec![0.01]
}
fn default_fold_levels() -> Vec<usize> {
    ZneConfig::default().fold_levels
}
fn default_twirls() -> usize {
    ZneConfig::default().n_twirls
}
fn default_mitigate_shots() -> u64 {
    ZneConfig::default().shots
}
fn default_mitigate_state() -> MitigateState {
    MitigateState::Evolved
}
fn default_mitigate_delta() -> f64 {
    0.05
}

/// Config problem, with the 1-based line it refers to when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.path.display(), l, self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A parsed config plus its source, for locating keys in later errors.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub source: String,
    pub config: ExperimentConfig,
}

impl LoadedConfig {
    pub fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line: locate(&self.source, section, key),
            message: message.into(),
        }
    }
}

pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: None,
        message: format!("cannot read config: {e}"),
    })?;
    parse(path, source)
}

pub fn parse(path: &Path, source: String) -> Result<LoadedConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(&source).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: e.span().map(|s| line_at(&source, s.start)),
        message: e.message().trim().to_string(),
    })?;
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        source,
        config,
    })
}

fn line_at(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]` (`""` for the top level), or of
/// the section header when the key is absent.
pub fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

/// CLI overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub exact: bool,
}

impl LoadedConfig {
    pub fn apply(&mut self, o: &Overrides) {
        let c = &mut self.config;
        if !o.seeds.is_empty() {
            c.seeds = o.seeds.clone();
        }
        if o.out.is_some() {
            c.output_dir = o.out.clone();
        }
        if o.exact {
            let exact = ShotsSpec::Word(ExactWord::Exact);
            if let Some(b) = &mut c.evolve {
                b.shots = exact;
            }
            if let Some(b) = &mut c.optimize {
                b.shots = Some(exact);
            }
            if let Some(b) = &mut c.sample_error {
                b.shots = exact;
            }
        }
    }

    /// Checks everything the chosen experiment reads before any work starts.
    pub fn validate(&self, exact: bool) -> Result<(), ConfigError> {
        let c = &self.config;
        if c.seeds.is_empty() {
            return Err(self.error("", "seeds", "seeds list is empty"));
        }
        let mut sorted = c.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(self.error("", "seeds", "seeds list has duplicates"));
        }
        if c.output_dir.is_none() {
            return Err(self.error(
                "",
                "output_dir",
                "no output directory (set output_dir or pass --out)",
            ));
        }
        self.validate_model()?;
        if let Some(nc) = &c.noise {
            nc.model(c.model.n())
                .map_err(|e| self.error("noise", "readout", e.to_string()))?;
        }
        let need = |present: bool, section: &str| {
            if present {
                Ok(())
            } else {
                Err(self.error(
                    "",
                    "experiment",
                    format!("experiment `{}` needs a [{section}] section", c.experiment.name()),
                ))
            }
        };
        match c.experiment {
            Experiment::Evolve => {
                need(c.evolve.is_some(), "evolve")?;
                self.validate_evolve()?;
                self.require_ising()?;
            }
            Experiment::RegularizeCompare => {
                need(c.evolve.is_some(), "evolve")?;
                need(c.regularize_compare.is_some(), "regularize_compare")?;
                self.validate_evolve()?;
                self.require_ising()?;
                if c.regularize_compare
                    .as_ref()
                    .is_some_and(|r| r.solvers.is_empty())
                {
                    return Err(self.error("regularize_compare", "solvers", "solvers list is empty"));
                }
            }
            Experiment::Optimize => {
                need(c.optimize.is_some(), "optimize")?;
                if !matches!(c.model, ModelConfig::MaxcutCircle { .. }) {
                    return Err(self.error("model", "kind", "optimize needs a maxcut-circle model"));
                }
                let o = c.optimize.as_ref().expect("checked");
                let cfg = crate::experiments::optimizer_config(o, 0);
                cfg.validate()
                    .map_err(|e| self.error("optimize", "eta", e.to_string()))?;
                if o.milestones.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(self.error("optimize", "milestones", "milestones must lie in [0, 1]"));
                }
            }
            Experiment::SampleError => {
                need(c.sample_error.is_some(), "sample_error")?;
                self.require_ising()?;
                let s = c.sample_error.as_ref().expect("checked");
                if s.sizes.is_empty() || s.sizes[0] == 0 || s.sizes.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(self.error(
                        "sample_error",
                        "sizes",
                        "sizes must be positive and strictly ascending",
                    ));
                }
                if s.shots == ShotsSpec::Count(0) {
                    return Err(self.error("sample_error", "shots", "shot count must be at least 1"));
                }
                if s.epsilon.is_some_and(|e| !(e > 0.0)) {
                    return Err(self.error("sample_error", "epsilon", "epsilon must be positive"));
                }
            }
            Experiment::Mitigate => {
                need(c.mitigate.is_some(), "mitigate")?;
                need(c.noise.is_some(), "noise")?;
                self.require_ising()?;
                if exact {
                    return Err(self.error("", "experiment", "mitigate has no exact-probability mode"));
                }
                let m = c.mitigate.as_ref().expect("checked");
                m.zne()
                    .validate()
                    .map_err(|e| self.error("mitigate", "fold_levels", e.to_string()))?;
                if !(m.delta > 0.0) || !(m.t_final >= 0.0) {
                    return Err(self.error(
                        "mitigate",
                        "delta",
                        "delta must be positive and t_final non-negative",
                    ));
                }
            }
            Experiment::Resources => {
                need(c.resources.is_some(), "resources")?;
                self.require_ising()?;
                let r = c.resources.as_ref().expect("checked");
                if r.rows.is_empty() {
                    return Err(self.error("resources", "rows", "no rows"));
                }
                for row in &r.rows {
                    for cfg in crate::experiments::resource_configs(r, row, 0, exact) {
                        cfg.validate()
                            .map_err(|e| self.error("resources", "rows", e.to_string()))?;
                    }
                    if row.n == 0 || row.n > 16 {
                        return Err(self.error(
                            "resources",
                            "rows",
                            format!("row size {} outside 1..=16", row.n),
                        ));
                    }
                }
                check_grid(r.delta_t, r.reference_dt)
                    .map_err(|m| self.error("resources", "reference_dt", m))?;
            }
        }
        Ok(())
    }

    fn validate_model(&self) -> Result<(), ConfigError> {
        let n = self.config.model.n();
        if n == 0 || n > 20 {
            return Err(self.error("model", "n", format!("n = {n} outside 1..=20")));
        }
        crate::experiments::build_model(&self.config)
            .map(|_| ())
            .map_err(|e| self.error("model", "kind", e.to_string()))?;
        if let Some(t) = &self.config.ansatz.theta0 {
            let (c, _) = crate::experiments::build_model(&self.config).expect("checked");
            if t.len() != c.n_params() {
                return Err(self.error(
                    "ansatz",
                    "theta0",
                    format!(
                        "theta0 has {} entries, the ansatz has {} parameters",
                        t.len(),
                        c.n_params()
                    ),
                ));
            }
        }
        Ok(())
    }

    fn require_ising(&self) -> Result<(), ConfigError> {
        match self.config.model {
            ModelConfig::Ising { .. } => Ok(()),
            _ => Err(self.error(
                "model",
                "kind",
                format!("{} needs an ising model", self.config.experiment.name()),
            )),
        }
    }

    fn validate_evolve(&self) -> Result<(), ConfigError> {
        let b = self.config.evolve.as_ref().expect("checked by caller");
        let cfg = crate::experiments::evolution_config(b, None, 0);
        cfg.validate()
            .map_err(|e| self.error("evolve", "delta", e.to_string()))?;
        if b.mode == EvolveMode::Saqite && !(0.0..1.0).contains(&b.tau1) {
            return Err(self.error("evolve", "tau1", "tau1 must lie in [0, 1)"));
        }
        if b.mode == EvolveMode::Saqite && !(0.0..1.0).contains(&b.tau2) {
            return Err(self.error("evolve", "tau2", "tau2 must lie in [0, 1)"));
        }
        check_grid(b.delta_t, b.reference_dt).map_err(|m| self.error("evolve", "reference_dt", m))
    }
}

/// The driver grid must sit on the reference grid.
fn check_grid(dt: f64, reference_dt: f64) -> Result<(), String> {
    if !(reference_dt > 0.0) {
        return Err("reference_dt must be positive".into());
    }
    let ratio = dt / reference_dt;
    if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
        return Err(format!(
            "delta_t = {dt} is not a multiple of reference_dt = {reference_dt}"
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_finds_keys_per_section() {
        let src = "experiment = \"evolve\"\nseeds = []\n\n[evolve]\ndelta = 0.1\n\n[model]\nn = 4\n";
        assert_eq!(locate(src, "", "seeds"), Some(2));
        assert_eq!(locate(src, "evolve", "delta"), Some(5));
        assert_eq!(locate(src, "model", "n"), Some(8));
        assert_eq!(locate(src, "model", "j"), Some(7));
        assert_eq!(locate(src, "noise", "cx"), None);
    }

    #[test]
    fn shots_accept_count_or_exact() {
        #[derive(Deserialize)]
        struct S {
            shots: ShotsSpec,
        }
        let a: S = toml::from_str("shots = 128").unwrap();
        let b: S = toml::from_str("shots = \"exact\"").unwrap();
        assert_eq!(a.shots.shots(), Shots::Finite(128));
        assert_eq!(b.shots.shots(), Shots::Exact);
        assert!(toml::from_str::<S>("shots = \"many\"").is_err());
    }

    #[test]
    fn grid_check() {
        assert!(check_grid(0.01, 1e-3).is_ok());
        assert!(check_grid(0.015, 1e-2).is_err());
        assert!(check_grid(1e-4, 1e-3).is_err());
    }
}
