use crate::config::{RunConfig, SolverOptions};
use crate::error::{Error, Result};
use crate::material::{Material, MaterialParams, Pole};
use crate::ode::OdeOptions;
use crate::quadrature::QuadOptions;

/// A material with its cached potential and the solver settings every module reads.
#[derive(Debug, Clone)]
pub struct ShearModel {
    pub material: Material,
    pub solver: SolverOptions,
    poles: Vec<Pole>,
}

impl ShearModel {
    pub fn new(params: MaterialParams, solver: SolverOptions) -> Self {
        let material = Material::new(params);
        let poles = material.poles();
        Self { material, solver, poles }
    }

    pub fn from_config(cfg: &RunConfig) -> Self {
        Self::new(cfg.material, cfg.solver)
    }

    pub fn params(&self) -> &MaterialParams {
        self.material.params()
    }

    /// Poles `β₁ < β₂ < ...` of `D` over the working window (empty unless `γ₁ = |γ₂|`).
    pub fn poles(&self) -> &[Pole] {
        &self.poles
    }

    pub fn quad(&self) -> QuadOptions {
        QuadOptions::with_tol(self.solver.quad_tol)
    }

    pub fn ode(&self) -> OdeOptions {
        OdeOptions { rtol: self.solver.ode_rtol, atol: self.solver.ode_atol, ..OdeOptions::default() }
    }

    /// Rejects `β ≤ 0` and levels within the pole guard.
    pub fn check_level(&self, beta: f64) -> Result<()> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("level beta must be positive, got {beta}")));
        }
        for (i, p) in self.poles.iter().enumerate() {
            if (beta - p.beta).abs() <= self.solver.pole_guard * p.beta {
                return Err(Error::Pole { beta, pole: p.beta, index: i + 1 });
            }
        }
        Ok(())
    }

    /// The interval `(β_{n}, β_{n+1})` with `β₀ = 0`; `n = 0` is the first interval `(0, β₁)`.
    /// In the `γ₁ > |γ₂|` regime the ghost-equilibrium levels play the role of the poles.
    pub fn interval(&self, n: usize) -> Option<(f64, f64)> {
        let marks: Vec<f64> = if self.poles.is_empty() {
            self.material.interval_markers().iter().map(|p| p.beta).collect()
        } else {
            self.poles.iter().map(|p| p.beta).collect()
        };
        let lo = if n == 0 { 0.0 } else { *marks.get(n - 1)? };
        let hi = *marks.get(n)?;
        Some((lo, hi))
    }
}

impl Default for ShearModel {
    fn default() -> Self {
        Self::new(MaterialParams::default(), SolverOptions::default())
    }
}
