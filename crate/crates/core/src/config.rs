//! Run configuration: a TOML key-value file overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::CHART_GUARD;
use crate::lift::LiftOptions;
use crate::orbit::FinderConfig;
use crate::shape::METRIC_GUARD;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Integrator tolerance, shared by the planar and reduced flows.
    pub tol: f64,
    pub bisection_tol: f64,
    pub max_bisections: usize,
    /// Angular distance from a collision point at which lifts stop.
    pub lift_guard: f64,
    /// Step cap for the dense path a lift is built on.
    pub lift_step: f64,
    pub d0: f64,
    pub horizon: f64,
    pub horizon_depth: f64,
    pub grid: usize,
    pub eps: f64,
    /// Family members per sign of the perturbation.
    pub family: usize,
    pub eps_max: f64,
    pub curvature_theta: usize,
    pub curvature_phi: usize,
    pub curvature_exclusion: f64,
    pub out: PathBuf,
    pub workers: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let f = FinderConfig::default();
        let l = LiftOptions::default();
        RunConfig {
            tol: f.tol,
            bisection_tol: f.bisection_tol,
            max_bisections: f.max_bisections,
            lift_guard: l.guard,
            lift_step: l.max_step,
            d0: f.d0,
            horizon: f.horizon_length,
            horizon_depth: f.horizon_depth,
            grid: f.grid,
            eps: 1e-3,
            family: 3,
            eps_max: f.eps_max,
            curvature_theta: 100,
            curvature_phi: 100,
            curvature_exclusion: 0.05,
            out: PathBuf::from("out"),
            workers: 0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol", self.tol),
            ("bisection_tol", self.bisection_tol),
            ("lift_guard", self.lift_guard),
            ("lift_step", self.lift_step),
            ("d0", self.d0),
            ("horizon", self.horizon),
            ("horizon_depth", self.horizon_depth),
            ("eps_max", self.eps_max),
            ("curvature_exclusion", self.curvature_exclusion),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
        }
        if !(METRIC_GUARD <= self.lift_guard && self.lift_guard < CHART_GUARD) {
            return Err(Error::InvalidInput(format!(
                "guards must be ordered: metric {METRIC_GUARD} <= lift {} < chart {CHART_GUARD}",
                self.lift_guard
            )));
        }
        if !(0.0..=self.eps_max).contains(&self.eps) {
            return Err(Error::InvalidInput(format!("eps must lie in [0, {}], got {}", self.eps_max, self.eps)));
        }
        if self.family == 0 || self.curvature_theta == 0 || self.curvature_phi == 0 {
            return Err(Error::InvalidInput("family and curvature grid sizes must be positive".into()));
        }
        self.finder().validate()
    }

    pub fn finder(&self) -> FinderConfig {
        FinderConfig {
            d0: self.d0,
            grid: self.grid,
            horizon_length: self.horizon,
            horizon_depth: self.horizon_depth,
            tol: self.tol,
            bisection_tol: self.bisection_tol,
            max_bisections: self.max_bisections,
            eps_max: self.eps_max,
            workers: self.workers,
            ..FinderConfig::default()
        }
    }

    pub fn lift_options(&self) -> LiftOptions {
        LiftOptions { max_step: self.lift_step, tol: 0.1 * self.tol, guard: self.lift_guard }
    }
}
