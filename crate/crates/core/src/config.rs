//! Run configuration read from JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::MaterialParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Tolerance of the singular quadratures and of the potential.
    pub quad_tol: f64,
    pub ode_rtol: f64,
    pub ode_atol: f64,
    /// Absolute tolerance for polished roots in `β` and `λ`.
    pub root_tol: f64,
    /// Relative distance to a pole below which `D` is not evaluated.
    pub pole_guard: f64,
    /// Points of a reconstructed stationary profile (odd, so that x = 1/2 is a node).
    pub profile_points: usize,
    /// Points of the time-stepping grid (odd).
    pub evolution_points: usize,
    /// Number of intervals `(0, β₁), I₁, I₂, ...` in the working window.
    pub intervals: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            quad_tol: 1e-12,
            ode_rtol: 1e-12,
            ode_atol: 1e-14,
            root_tol: 1e-12,
            pole_guard: 1e-8,
            profile_points: 1025,
            evolution_points: 513,
            intervals: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Windows {
    /// Explicit `β` window; `None` means the configured number of intervals.
    pub beta: Option<(f64, f64)>,
    pub lambda: (f64, f64),
    pub ubar: (f64, f64),
}

impl Default for Windows {
    fn default() -> Self {
        Self { beta: None, lambda: (-50.0, 10.0), ubar: (0.0, 100.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputOptions {
    pub directory: String,
    pub formats: Vec<String>,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self { directory: "out".into(), formats: vec!["csv".into(), "json".into(), "svg".into()] }
    }
}

/// Everything a command needs: material block, solver tolerances, windows, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub material: MaterialParams,
    pub solver: SolverOptions,
    pub windows: Windows,
    pub output: OutputOptions,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks the plumbing invariants; the material itself is checked by
    /// [`MaterialParams::validate`].
    pub fn check(&self) -> Result<()> {
        let s = &self.solver;
        let tols = [
            ("quad_tol", s.quad_tol),
            ("ode_rtol", s.ode_rtol),
            ("ode_atol", s.ode_atol),
            ("root_tol", s.root_tol),
            ("pole_guard", s.pole_guard),
        ];
        for (name, v) in tols {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("solver.{name} must be positive, got {v}")));
            }
        }
        for (name, n) in [("profile_points", s.profile_points), ("evolution_points", s.evolution_points)] {
            if n < 65 || n % 2 == 0 {
                return Err(Error::InvalidArgument(format!("solver.{name} must be odd and >= 65, got {n}")));
            }
        }
        if s.intervals == 0 {
            return Err(Error::InvalidArgument("solver.intervals must be at least 1".into()));
        }
        let w = &self.windows;
        if let Some((lo, hi)) = w.beta {
            if !(lo < hi) || lo < 0.0 {
                return Err(Error::InvalidArgument(format!("windows.beta must satisfy 0 <= lo < hi, got ({lo}, {hi})")));
            }
        }
        if !(w.lambda.0 <= w.lambda.1) {
            return Err(Error::InvalidArgument("windows.lambda is not ordered".into()));
        }
        if !(w.ubar.0 < w.ubar.1) {
            return Err(Error::InvalidArgument("windows.ubar is not ordered".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn material_block_reads_named_keys() {
        let cfg = RunConfig::from_json(
            r#"{"material": {"alpha1": 1, "alpha2": -1, "alpha3": 0, "alpha4": 2,
                "alpha5": 0.5, "alpha6": -0.5, "K1": 1, "K3": 4, "theta0": 1.0}}"#,
        )
        .unwrap();
        assert_eq!(cfg.material.k3, 4.0);
        assert_eq!(cfg.material.gamma1(), 1.0);
        assert_eq!(cfg.solver, SolverOptions::default());
        cfg.check().unwrap();
    }

    #[test]
    fn even_grid_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.solver.profile_points = 1024;
        assert!(cfg.check().is_err());
    }

    #[test]
    fn malformed_json_is_an_error() {
        assert!(RunConfig::from_json("{ not json").is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }
}
