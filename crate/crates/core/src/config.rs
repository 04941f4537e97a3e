//! JSON experiment configuration.
//!
//! Every section is optional and falls back to defaults; unknown keys are
//! rejected with the offending key path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::InitialCondition;
use crate::error::{Error, Result};
use crate::fluct::SlowVariant;
use crate::model::{builtin, ProblemSpec};
use crate::schedules::SchedulePair;
use crate::verify::{EnsembleSetup, Tolerances, WindowSetup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseScale {
    /// Factor applied to the problem's fast martingale covariance.
    pub fast: f64,
    /// Factor applied to the slow martingale covariance.
    pub slow: f64,
}

impl Default for NoiseScale {
    fn default() -> Self {
        Self {
            fast: 1.0,
            slow: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub horizon: usize,
    pub tol: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            horizon: 1_000_000,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub n_start: usize,
    pub n_end: usize,
    pub seed: u64,
    pub trajectories: usize,
    pub record_noise: bool,
    /// Initial fast iterate; zeros when absent.
    pub x0: Option<Vec<f64>>,
    /// Initial slow iterate; zeros when absent.
    pub y0: Option<Vec<f64>>,
    pub state0: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_start: 0,
            n_end: 10_000,
            seed: 7,
            trajectories: 1,
            record_noise: false,
            x0: None,
            y0: None,
            state0: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluctConfig {
    pub anchors: Vec<usize>,
    /// Window length `T`.
    pub window: f64,
    pub substeps: usize,
    pub grid_points: usize,
    /// Clock of the slow fluctuation; chosen from the schedules when absent.
    pub slow_variant: Option<SlowVariant>,
    pub slow_paths: bool,
}

impl Default for FluctConfig {
    fn default() -> Self {
        let w = WindowSetup::default();
        Self {
            anchors: w.anchors,
            window: w.window,
            substeps: w.substeps,
            grid_points: w.grid_points,
            slow_variant: None,
            slow_paths: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitConfig {
    pub window: f64,
    pub steps: usize,
    /// Start of `y*(·)`; the engine's `y0` when absent.
    pub y_star: Option<Vec<f64>>,
    pub phi: f64,
    /// Freeze `y*` and use the fast-clock slow block.
    pub fast_clock: bool,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            window: 1.0,
            steps: crate::limit::DEFAULT_STEPS,
            y_star: None,
            phi: 0.0,
            fast_clock: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentChoice {
    /// Decide from the estimated `φ`.
    #[default]
    Auto,
    Coupled,
    FastClock,
    /// Only the CLT and moment sections.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltConfig {
    pub indices: Vec<usize>,
    /// Equilibrium `y*`; the engine's `y0` when absent.
    #[serde(default)]
    pub y_star: Option<Vec<f64>>,
    #[serde(default = "default_plateau")]
    pub plateau_window: f64,
}

fn default_plateau() -> f64 {
    8.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentConfig {
    pub checkpoints: Vec<usize>,
    #[serde(default)]
    pub trajectories: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub experiment: ExperimentChoice,
    pub tolerances: Tolerances,
    pub clt: Option<CltConfig>,
    pub moments: Option<MomentConfig>,
    pub plots: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentChoice::Auto,
            tolerances: Tolerances::default(),
            clt: None,
            moments: None,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in problem name.
    pub problem: String,
    pub noise: NoiseScale,
    pub schedules: SchedulePair,
    pub validation: ValidationConfig,
    pub engine: EngineConfig,
    pub fluct: FluctConfig,
    pub limit: LimitConfig,
    pub verify: VerifyConfig,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: "P1".into(),
            noise: NoiseScale::default(),
            schedules: SchedulePair::reference(),
            validation: ValidationConfig::default(),
            engine: EngineConfig::default(),
            fluct: FluctConfig::default(),
            limit: LimitConfig::default(),
            verify: VerifyConfig::default(),
            output: PathBuf::from("out"),
        }
    }
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.problem()?;
        self.schedules
            .fast
            .check()
            .map_err(|e| config_error("schedules.fast", e.to_string()))?;
        self.schedules
            .slow
            .check()
            .map_err(|e| config_error("schedules.slow", e.to_string()))?;
        if self.validation.horizon < 100 {
            return Err(config_error("validation.horizon", "must be at least 100"));
        }
        let e = &self.engine;
        if e.n_end <= e.n_start {
            return Err(config_error("engine.n_end", "must exceed engine.n_start"));
        }
        if e.trajectories == 0 {
            return Err(config_error("engine.trajectories", "must be positive"));
        }
        if e.x0.as_ref().is_some_and(|x| x.len() != spec.d1) {
            return Err(config_error(
                "engine.x0",
                format!("expected {} entries", spec.d1),
            ));
        }
        if e.y0.as_ref().is_some_and(|y| y.len() != spec.d2) {
            return Err(config_error(
                "engine.y0",
                format!("expected {} entries", spec.d2),
            ));
        }
        if e.state0 >= spec.states {
            return Err(config_error(
                "engine.state0",
                format!("problem has {} states", spec.states),
            ));
        }
        let f = &self.fluct;
        if !(f.window > 0.0) {
            return Err(config_error("fluct.window", "must be positive"));
        }
        if f.anchors.is_empty() {
            return Err(config_error("fluct.anchors", "must not be empty"));
        }
        if f.substeps == 0 || f.grid_points < 2 {
            return Err(config_error(
                "fluct",
                "substeps must be positive and grid_points at least 2",
            ));
        }
        if !(self.limit.window > 0.0) || self.limit.steps == 0 {
            return Err(config_error("limit", "window and steps must be positive"));
        }
        if self
            .limit
            .y_star
            .as_ref()
            .is_some_and(|y| y.len() != spec.d2)
        {
            return Err(config_error(
                "limit.y_star",
                format!("expected {} entries", spec.d2),
            ));
        }
        if let Some(clt) = &self.verify.clt {
            if clt.indices.is_empty() || clt.indices.windows(2).any(|w| w[1] <= w[0]) {
                return Err(config_error(
                    "verify.clt.indices",
                    "must be strictly increasing and non-empty",
                ));
            }
            if clt.y_star.as_ref().is_some_and(|y| y.len() != spec.d2) {
                return Err(config_error(
                    "verify.clt.y_star",
                    format!("expected {} entries", spec.d2),
                ));
            }
        }
        if let Some(m) = &self.verify.moments {
            if m.checkpoints.is_empty() || m.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
                return Err(config_error(
                    "verify.moments.checkpoints",
                    "must be strictly increasing and non-empty",
                ));
            }
        }
        let n = self.noise.fast.min(self.noise.slow);
        if !(n >= 0.0) {
            return Err(config_error("noise", "scales must be non-negative"));
        }
        Ok(())
    }

    /// The named problem with the configured noise scaling.
    pub fn problem(&self) -> Result<ProblemSpec> {
        let spec = builtin::by_name(&self.problem).ok_or_else(|| {
            config_error(
                "problem",
                format!(
                    "unknown problem '{}', expected one of {}",
                    self.problem,
                    builtin::NAMES.join(", ")
                ),
            )
        })?;
        if self.noise == NoiseScale::default() {
            return Ok(spec);
        }
        let qf = spec.qf.scaled(self.noise.fast)?;
        let qs = spec.qs.scaled(self.noise.slow)?;
        Ok(spec.with_noise(qf, qs))
    }

    pub fn initial_condition(&self, spec: &ProblemSpec) -> InitialCondition {
        let x = self.engine.x0.clone().unwrap_or_else(|| vec![0.0; spec.d1]);
        let y = self.engine.y0.clone().unwrap_or_else(|| vec![0.0; spec.d2]);
        InitialCondition::new(&x, &y, self.engine.state0)
    }

    pub fn ensemble(&self, spec: &ProblemSpec) -> EnsembleSetup {
        EnsembleSetup {
            init: self.initial_condition(spec),
            trajectories: self.engine.trajectories,
            seed: self.engine.seed,
        }
    }

    pub fn window_setup(&self) -> WindowSetup {
        WindowSetup {
            anchors: self.fluct.anchors.clone(),
            window: self.fluct.window,
            substeps: self.fluct.substeps,
            grid_points: self.fluct.grid_points,
            lyapunov_steps: self.limit.steps,
            slow_paths: self.fluct.slow_paths,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let cfg =
            ExperimentConfig::from_json(r#"{"problem": "OU", "limit": {"window": 1.0}}"#).unwrap();
        assert_eq!(cfg.problem, "OU");
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let err = ExperimentConfig::from_json(r#"{"engine": {"seeed": 3}}"#).unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert_eq!(path, "engine.seeed");
                assert!(message.contains("seeed"), "{message}");
            }
            other => panic!("{other}"),
        }
        let err = ExperimentConfig::from_json(r#"{"schedules": {"fast": {"kind": "power_law", "scale": 0.9, "exponent": 0.6, "x": 1}, "slow": {"kind": "power_law", "scale": 0.8, "exponent": 0.95}}}"#).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref path, .. } if path.starts_with("schedules.fast")),
            "{err}"
        );
    }

    #[test]
    fn semantic_errors() {
        assert!(ExperimentConfig::from_json(r#"{"problem": "P9"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"engine": {"n_start": 5, "n_end": 5}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"engine": {"x0": [1.0, 2.0]}}"#).is_err());
    }
}
