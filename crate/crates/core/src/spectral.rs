//! Linearization about a stationary profile, the Evans function and the zero-eigenvalue
//! bifurcation analysis.
//!
//! Perturbations `Z = (U, P, Θ, Q)` solve `Z′ = (A(x) + λB(x)) Z`. The background
//! `(θ, η)` is integrated together with `Z`, starting from its exact boundary values,
//! so the coefficients are never interpolated during shooting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::material::MaterialParams;
use crate::model::ShearModel;
use crate::ode::{DormandPrince, OdeOptions, OdeStats};
use crate::quadrature::gl20;
use crate::roots;
use crate::stationary::{self, LevelIntegrals, StationaryProfile};

pub type Mat4 = [[f64; 4]; 4];

/// Matching point of the Evans determinant.
pub const MATCH_POINT: f64 = 0.5;
/// Points at which the determinant is re-evaluated to measure its x-dependence.
pub const CHECK_POINTS: [f64; 3] = [0.25, 0.5, 0.75];
const RENORMALIZE_ABOVE: f64 = 1e100;

pub fn det4(m: &Mat4) -> f64 {
    // Laplace expansion along the first two rows
    let minor = |r: usize, a: usize, b: usize| m[r][a] * m[r + 1][b] - m[r][b] * m[r + 1][a];
    let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let mut det = 0.0;
    for &(a, b) in &pairs {
        let (c, d) = match (a, b) {
            (0, 1) => (2, 3),
            (0, 2) => (1, 3),
            (0, 3) => (1, 2),
            (1, 2) => (0, 3),
            (1, 3) => (0, 2),
            _ => (0, 1),
        };
        let sign = if (a + b + 1) % 2 == 0 { 1.0 } else { -1.0 };
        det += sign * minor(0, a, b) * minor(2, c, d);
    }
    det
}

fn mat_vec(m: &Mat4, v: &[f64]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2] + m[i][3] * v[3];
    }
    out
}

/// The eigenvalue ODE along one stationary profile.
#[derive(Debug, Clone)]
pub struct LinearizedSystem {
    params: MaterialParams,
    pub profile: StationaryProfile,
    pub level: LevelIntegrals,
    opts: OdeOptions,
}

impl LinearizedSystem {
    /// Attaches the eigenvalue ODE to a profile, rejecting profiles that break their
    /// boundary, turning-point or symmetry invariants.
    pub fn build(model: &ShearModel, profile: StationaryProfile) -> Result<Self> {
        let defect = profile.invariant_defect(model.material.theta0());
        if !(defect <= 1e-6) {
            return Err(Error::Profile(format!("invariant defect {defect:e} exceeds 1e-6")));
        }
        let level = stationary::level_integrals(model, profile.beta)?;
        Ok(Self { params: *model.params(), profile, level, opts: model.ode() })
    }

    /// Reconstructs the profile at level `β` and linearizes about it.
    pub fn at_level(model: &ShearModel, beta: f64) -> Result<Self> {
        let profile = stationary::reconstruct_profile(model, beta)?;
        Self::build(model, profile)
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    pub fn beta(&self) -> f64 {
        self.profile.beta
    }

    pub fn p0(&self) -> f64 {
        self.level.p0()
    }

    pub fn with_ode_options(mut self, opts: OdeOptions) -> Self {
        self.opts = opts;
        self
    }

    /// `η` at `x = 1`; the value at `x = 0` has the opposite sign.
    pub fn edge_eta(&self) -> f64 {
        self.params.c(self.params.theta0) * (2.0 * self.p0() * self.beta()).sqrt()
    }

    /// `A` and `B` at a background state `(θ, η)`.
    pub fn coefficients(&self, theta: f64, eta: f64) -> (Mat4, Mat4) {
        let p = &self.params;
        let p0 = self.p0();
        let (g, c, cp) = (p.g(theta), p.c(theta), p.c_prime(theta));
        let h = p.h(theta);
        let theta_x = eta / (c * c);
        let u_x = p0 / g;
        let mut a = [[0.0; 4]; 4];
        a[0][1] = 1.0 / g;
        a[0][2] = -p.g_prime(theta) * u_x / g;
        a[2][2] = -2.0 * cp * theta_x / c;
        a[2][3] = 1.0 / (c * c);
        a[3][1] = h / g;
        a[3][2] = p.h_over_g_prime(theta) * p0 + (c * p.c_second(theta) - 3.0 * cp * cp) * theta_x * theta_x;
        a[3][3] = 2.0 * cp * theta_x / c;
        let mut b = [[0.0; 4]; 4];
        b[0][2] = -h / g;
        b[1][0] = 1.0;
        b[3][2] = p.gamma1() - h * h / g;
        (a, b)
    }

    fn background_rhs(&self, theta: f64, eta: f64) -> (f64, f64) {
        let p = &self.params;
        let c = p.c(theta);
        (eta / (c * c), p.c_prime(theta) / (c * c * c) * eta * eta + p.h_over_g(theta) * self.p0())
    }

    /// Background `(θ, η)` at any `x` by cubic Hermite interpolation of the profile,
    /// using the exact slopes from the profile ODE.
    pub fn background_at(&self, x: f64) -> (f64, f64) {
        let prof = &self.profile;
        let n = prof.len();
        let dx = prof.x[1] - prof.x[0];
        let k = ((x / dx).floor().max(0.0) as usize).min(n - 2);
        let t = ((x - prof.x[k]) / dx).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = (
            2.0 * t * t * t - 3.0 * t * t + 1.0,
            t * t * t - 2.0 * t * t + t,
            -2.0 * t * t * t + 3.0 * t * t,
            t * t * t - t * t,
        );
        let (ta, ea) = (prof.theta[k], prof.eta[k]);
        let (tb, eb) = (prof.theta[k + 1], prof.eta[k + 1]);
        let (dta, dea) = self.background_rhs(ta, ea);
        let (dtb, deb) = self.background_rhs(tb, eb);
        (
            h00 * ta + h10 * dx * dta + h01 * tb + h11 * dx * dtb,
            h00 * ea + h10 * dx * dea + h01 * eb + h11 * dx * deb,
        )
    }

    pub fn a_at(&self, x: f64) -> Mat4 {
        let (th, eta) = self.background_at(x);
        self.coefficients(th, eta).0
    }

    pub fn b_at(&self, x: f64) -> Mat4 {
        let (th, eta) = self.background_at(x);
        self.coefficients(th, eta).1
    }

    fn start_state(&self, from_right: bool, columns: &[[f64; 4]]) -> Vec<f64> {
        let eta = if from_right { self.edge_eta() } else { -self.edge_eta() };
        let mut y = vec![self.params.theta0, eta];
        for col in columns {
            y.extend_from_slice(col);
        }
        y
    }

    /// Integrates background plus columns through `stops`; the visitor sees the state
    /// after optional renormalization and the accumulated log-scale of the columns.
    fn shoot<V>(
        &self,
        lambda: f64,
        from_right: bool,
        columns: &[[f64; 4]],
        stops: &[f64],
        renormalize: bool,
        mut visit: V,
    ) -> Result<OdeStats>
    where
        V: FnMut(usize, f64, &[f64], f64),
    {
        let k = columns.len();
        let mut y = self.start_state(from_right, columns);
        let mut rhs = |_x: f64, y: &[f64], d: &mut [f64]| {
            let (a, b) = self.coefficients(y[0], y[1]);
            let (dt, de) = self.background_rhs(y[0], y[1]);
            d[0] = dt;
            d[1] = de;
            let mut m = a;
            for i in 0..4 {
                for j in 0..4 {
                    m[i][j] += lambda * b[i][j];
                }
            }
            for c in 0..k {
                let z = &y[2 + 4 * c..6 + 4 * c];
                let dz = mat_vec(&m, z);
                d[2 + 4 * c..6 + 4 * c].copy_from_slice(&dz);
            }
        };
        let mut dp = DormandPrince::new(y.len(), self.opts);
        let x0 = if from_right { 1.0 } else { 0.0 };
        let mut log_scale = 0.0;
        dp.advance_through(&mut rhs, x0, &mut y, stops, |i, x, state| {
            if renormalize {
                let big = state[2..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if big > RENORMALIZE_ABOVE {
                    for v in state[2..].iter_mut() {
                        *v /= big;
                    }
                    log_scale += k as f64 * big.ln();
                }
            }
            visit(i, x, state, log_scale);
        })?;
        Ok(dp.stats)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingDiagnostics {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub max_local_error: f64,
}

impl ShootingDiagnostics {
    fn merge(a: OdeStats, b: OdeStats) -> Self {
        Self {
            accepted: a.accepted + b.accepted,
            rejected: a.rejected + b.rejected,
            rhs_evals: a.rhs_evals + b.rhs_evals,
            max_local_error: a.max_local_error.max(b.max_local_error),
        }
    }
}

/// One evaluation of the Evans determinant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvansEvaluation {
    pub lambda: f64,
    pub beta: f64,
    /// Determinant at the matching point.
    pub e: f64,
    /// `(x, E(x))` at the check points.
    pub checks: Vec<(f64, f64)>,
    /// `max |E(x_i) − E(x_m)|` over the check points.
    pub x_residual: f64,
    /// Product of the column norms at the matching point (Hadamard bound on `|E|`).
    pub scale: f64,
    pub diagnostics: ShootingDiagnostics,
}

const E2: [f64; 4] = [0.0, 1.0, 0.0, 0.0];
const E4: [f64; 4] = [0.0, 0.0, 0.0, 1.0];

/// Evaluates `E(λ, β)` for the system: `Z₁, Z₂` from `x = 0` with data `e₂, e₄`,
/// `Z₃, Z₄` from `x = 1` with the same data, determinant at the check points.
pub fn evans(sys: &LinearizedSystem, lambda: f64) -> Result<EvansEvaluation> {
    let stops_fwd: Vec<f64> = CHECK_POINTS.to_vec();
    let stops_bwd: Vec<f64> = CHECK_POINTS.iter().rev().copied().collect();
    let mut left = vec![[[0.0; 4]; 2]; CHECK_POINTS.len()];
    let mut left_log = vec![0.0; CHECK_POINTS.len()];
    let sf = sys.shoot(lambda, false, &[E2, E4], &stops_fwd, true, |i, _, y, ls| {
        left[i][0].copy_from_slice(&y[2..6]);
        left[i][1].copy_from_slice(&y[6..10]);
        left_log[i] = ls;
    })?;
    let mut right = vec![[[0.0; 4]; 2]; CHECK_POINTS.len()];
    let mut right_log = vec![0.0; CHECK_POINTS.len()];
    let sb = sys.shoot(lambda, true, &[E2, E4], &stops_bwd, true, |i, _, y, ls| {
        let j = CHECK_POINTS.len() - 1 - i;
        right[j][0].copy_from_slice(&y[2..6]);
        right[j][1].copy_from_slice(&y[6..10]);
        right_log[j] = ls;
    })?;
    let mut checks = Vec::with_capacity(CHECK_POINTS.len());
    let mut e_mid = f64::NAN;
    let mut scale = f64::NAN;
    for (i, &x) in CHECK_POINTS.iter().enumerate() {
        let cols = [left[i][0], left[i][1], right[i][0], right[i][1]];
        let mut m = [[0.0; 4]; 4];
        for (j, col) in cols.iter().enumerate() {
            for r in 0..4 {
                m[r][j] = col[r];
            }
        }
        let factor = (left_log[i] + right_log[i]).exp();
        let e = det4(&m) * factor;
        if x == MATCH_POINT {
            e_mid = e;
            scale = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).product::<f64>() * factor;
        }
        checks.push((x, e));
    }
    let x_residual = checks.iter().map(|&(_, e)| (e - e_mid).abs()).fold(0.0, f64::max);
    Ok(EvansEvaluation {
        lambda,
        beta: sys.beta(),
        e: e_mid,
        checks,
        x_residual,
        scale,
        diagnostics: ShootingDiagnostics::merge(sf, sb),
    })
}

/// The fundamental matrix of the `λ = 0` system with `Φ(0) = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monodromy {
    pub beta: f64,
    /// `Φ(1)`, row-major; `T_ij` is `phi[i-1][j-1]`.
    pub phi: Mat4,
    /// `(x, det Φ(x))` along the trajectory.
    pub det_along: Vec<(f64, f64)>,
}

impl Monodromy {
    /// Entry `T_ij(1)` with one-based indices.
    pub fn t(&self, i: usize, j: usize) -> f64 {
        self.phi[i - 1][j - 1]
    }

    /// `−T₁₂T₃₄ + T₁₄T₃₂`, the reduced form of `E(0, β)`.
    pub fn reduced_determinant(&self) -> f64 {
        -self.t(1, 2) * self.t(3, 4) + self.t(1, 4) * self.t(3, 2)
    }

    pub fn max_det_defect(&self) -> f64 {
        self.det_along.iter().map(|&(_, d)| (d - 1.0).abs()).fold(0.0, f64::max)
    }
}

fn identity_columns() -> [[f64; 4]; 4] {
    let mut c = [[0.0; 4]; 4];
    for (i, col) in c.iter_mut().enumerate() {
        col[i] = 1.0;
    }
    c
}

fn columns_to_matrix(y: &[f64]) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for j in 0..4 {
        for i in 0..4 {
            m[i][j] = y[2 + 4 * j + i];
        }
    }
    m
}

pub fn monodromy(sys: &LinearizedSystem) -> Result<Monodromy> {
    let stops: Vec<f64> = (1..=64).map(|k| k as f64 / 64.0).collect();
    let mut det_along = Vec::with_capacity(stops.len());
    let mut phi = [[0.0; 4]; 4];
    sys.shoot(0.0, false, &identity_columns(), &stops, false, |_, x, y, _| {
        let m = columns_to_matrix(y);
        det_along.push((x, det4(&m)));
        phi = m;
    })?;
    Ok(Monodromy { beta: sys.beta(), phi, det_along })
}

/// `T₁₂(1), T₁₄(1), T₃₂(1), T₃₄(1)` in closed form from the level quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormEntries {
    pub t12: f64,
    pub t14: f64,
    pub t32: f64,
    pub t34: f64,
}

pub fn closed_form_entries(params: &MaterialParams, lv: &LevelIntegrals) -> ClosedFormEntries {
    let th0 = params.theta0;
    let (c0, g0, h0) = (params.c(th0), params.g(th0), params.h(th0));
    let beta = lv.beta;
    let sb = beta.sqrt();
    let p0 = lv.p0();
    let r = (2.0 / p0).sqrt();
    let (mg, m1, s) = (lv.m_g, lv.m_1, lv.i_1);
    ClosedFormEntries {
        t12: 1.0 / (2.0 * g0) + s / (2.0 * p0).sqrt() + r * beta * m1 - r * beta * mg / g0,
        t14: 2.0 / c0 * sb * m1 - 2.0 * sb * mg / (c0 * g0),
        t32: sb / (c0 * (2.0 * p0).sqrt()) + 2.0 * g0 * beta / (h0 * p0) - 2.0 * beta * sb * mg / (c0 * p0),
        t34: 2.0 * r * g0 * sb / (c0 * h0) - 2.0 * r * beta * mg / (c0 * c0),
    }
}

/// Relative gap `|a − b| / max(|a|, |b|, tiny)`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// `E(0, β)` from shooting against `−2β/(p₀c²(θ₀)) D′(β)` from quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroIdentity {
    pub beta: f64,
    pub e0: f64,
    pub rhs: f64,
    pub d_prime: f64,
    pub gap: f64,
    pub scale: f64,
}

pub fn evans_zero_identity(sys: &LinearizedSystem) -> Result<ZeroIdentity> {
    let ev = evans(sys, 0.0)?;
    let p = sys.params();
    let c0 = p.c(p.theta0);
    let d_prime = sys.level.d_prime();
    let rhs = -2.0 * sys.beta() / (sys.p0() * c0 * c0) * d_prime;
    Ok(ZeroIdentity { beta: sys.beta(), e0: ev.e, rhs, d_prime, gap: relative_gap(ev.e, rhs), scale: ev.scale })
}

/// `∂E/∂λ` at `λ = 0` by two routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaDerivative {
    pub beta: f64,
    /// Centered difference with step `δ`.
    pub fd: f64,
    /// Centered difference with step `δ/2`.
    pub fd_half: f64,
    /// Richardson combination of the two differences.
    pub fd_extrapolated: f64,
    /// Variation-of-parameters quadrature along the monodromy.
    pub vp: f64,
    pub gap: f64,
    pub scale: f64,
}

/// Variation-of-parameters `E_λ(0, β)`: with `Z₁ = Φe₂`, `Z₂ = Φe₄` the λ-derivatives at
/// `x = 1` are `Φ(1) ∫_0^1 Φ⁻¹BΦ e_k`, and only the rows of `U` and `Θ` enter.
pub fn lambda_derivative_vp(sys: &LinearizedSystem, panels: usize) -> Result<(f64, Monodromy)> {
    let rule = gl20();
    let mut stops = Vec::with_capacity(panels * rule.len() + 1);
    let mut weights = Vec::with_capacity(panels * rule.len());
    for k in 0..panels {
        let (a, b) = (k as f64 / panels as f64, (k + 1) as f64 / panels as f64);
        for (x, w) in rule.mapped(a, b) {
            stops.push(x);
            weights.push(w);
        }
    }
    stops.push(1.0);
    let nodes = weights.len();
    let mut v = [[0.0f64; 4]; 2];
    let mut phi_end = [[0.0; 4]; 4];
    let mut det_along = Vec::new();
    sys.shoot(0.0, false, &identity_columns(), &stops, false, |i, x, y, _| {
        let phi = columns_to_matrix(y);
        if i == nodes {
            phi_end = phi;
            det_along.push((x, det4(&phi)));
            return;
        }
        if i % 20 == 0 {
            det_along.push((x, det4(&phi)));
        }
        let inv = inverse_unimodular(&phi);
        let (_, b) = sys.coefficients(y[0], y[1]);
        for (slot, col) in [1usize, 3].iter().enumerate() {
            let z = [phi[0][*col], phi[1][*col], phi[2][*col], phi[3][*col]];
            let bz = mat_vec(&b, &z);
            let k = mat_vec(&inv, &bz);
            for r in 0..4 {
                v[slot][r] += weights[i] * k[r];
            }
        }
    })?;
    let w1 = mat_vec(&phi_end, &v[0]);
    let w2 = mat_vec(&phi_end, &v[1]);
    let t = |i: usize, j: usize| phi_end[i - 1][j - 1];
    let e_lambda = -(w1[0] * t(3, 4) - w1[2] * t(1, 4)) - (t(1, 2) * w2[2] - t(3, 2) * w2[0]);
    Ok((e_lambda, Monodromy { beta: sys.beta(), phi: phi_end, det_along }))
}

/// `Φ⁻¹` for the `λ = 0` fundamental matrix in adjugate form. `Φ` has first column `e₁`,
/// second row `e₂ᵀ` and a unimodular lower-right 2×2 block.
pub fn inverse_unimodular(phi: &Mat4) -> Mat4 {
    let t = |i: usize, j: usize| phi[i - 1][j - 1];
    let r13 = t(1, 4) * t(4, 3) - t(1, 3) * t(4, 4);
    let r14 = t(1, 3) * t(3, 4) - t(1, 4) * t(3, 3);
    let minor = t(1, 2) + r13 * t(3, 2) + r14 * t(4, 2);
    [
        [1.0, -minor, r13, r14],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, t(3, 4) * t(4, 2) - t(3, 2) * t(4, 4), t(4, 4), -t(3, 4)],
        [0.0, t(3, 2) * t(4, 3) - t(3, 3) * t(4, 2), -t(4, 3), t(3, 3)],
    ]
}

pub fn evans_lambda_derivative(sys: &LinearizedSystem, delta: f64) -> Result<LambdaDerivative> {
    let diff = |d: f64| -> Result<f64> { Ok((evans(sys, d)?.e - evans(sys, -d)?.e) / (2.0 * d)) };
    let fd = diff(delta)?;
    let fd_half = diff(0.5 * delta)?;
    let fd_extrapolated = (4.0 * fd_half - fd) / 3.0;
    let (vp, _) = lambda_derivative_vp(sys, 32)?;
    let scale = evans(sys, 0.0)?.scale;
    if vp.abs() < 1e-10 * scale {
        return Err(Error::Degenerate { value: vp, scale });
    }
    Ok(LambdaDerivative {
        beta: sys.beta(),
        fd,
        fd_half,
        fd_extrapolated,
        vp,
        gap: relative_gap(fd_extrapolated, vp),
        scale,
    })
}

/// Real root of `E(·, β)` bracketed inside `[lo, hi]`.
pub fn evans_root(sys: &LinearizedSystem, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let f = |l: f64| evans(sys, l).map(|e| e.e).unwrap_or(f64::NAN);
    roots::brent_root(f, lo, hi, tol, 200)
}

/// The eigenvalue nearest zero, located by expanding a bracket around `guess`.
pub fn track_eigenvalue(sys: &LinearizedSystem, guess: f64, width: f64, tol: f64) -> Result<f64> {
    let f = |l: f64| evans(sys, l).map(|e| e.e).unwrap_or(f64::NAN);
    let mut w = width.max(1e-12);
    for _ in 0..40 {
        let (a, b) = (guess - w, guess + w);
        let (fa, fb) = (f(a), f(b));
        if fa.signum() != fb.signum() {
            return roots::brent_root_with(f, a, b, fa, fb, tol, 200);
        }
        w *= 2.0;
    }
    Err(Error::NoRoot(format!("no Evans root near lambda = {guess}")))
}

/// The zero-eigenvalue slope `λ′(β*)` and its tracked cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueSlope {
    pub beta_star: f64,
    pub d_second: f64,
    pub e_lambda: f64,
    /// `2β* D″(β*) / (p₀ c²(θ₀) E_λ(0, β*))`.
    pub formula: f64,
    pub lambda_at_star: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub delta_beta: f64,
    /// Centered slope of the tracked eigenvalue.
    pub tracked: f64,
    pub gap: f64,
}

pub fn eigenvalue_slope(model: &ShearModel, beta_star: f64, delta_beta: f64) -> Result<EigenvalueSlope> {
    let d_second = stationary::d_second(model, beta_star)?;
    let sys = LinearizedSystem::at_level(model, beta_star)?;
    let ld = evans_lambda_derivative(&sys, 1e-5)?;
    let e_lambda = ld.vp;
    let p = model.params();
    let c0 = p.c(p.theta0);
    let formula = 2.0 * beta_star * d_second / (sys.p0() * c0 * c0 * e_lambda);
    let width = (formula * delta_beta).abs().max(1e-9);
    let lambda_at_star = track_eigenvalue(&sys, 0.0, width, 1e-14)?;
    let minus = LinearizedSystem::at_level(model, beta_star - delta_beta)?;
    let plus = LinearizedSystem::at_level(model, beta_star + delta_beta)?;
    let lambda_minus = track_eigenvalue(&minus, -formula * delta_beta, 0.25 * width, 1e-15)?;
    let lambda_plus = track_eigenvalue(&plus, formula * delta_beta, 0.25 * width, 1e-15)?;
    let tracked = (lambda_plus - lambda_minus) / (2.0 * delta_beta);
    Ok(EigenvalueSlope {
        beta_star,
        d_second,
        e_lambda,
        formula,
        lambda_at_star,
        lambda_minus,
        lambda_plus,
        delta_beta,
        tracked,
        gap: relative_gap(formula, tracked),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub lambda: f64,
    pub residual: f64,
}

/// One grid sample of an Evans scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    pub lambda: f64,
    pub e: f64,
    pub x_residual: f64,
}

/// Samples `E(·, β)` on `points` equispaced values of the window (inclusive).
pub fn evans_scan(sys: &LinearizedSystem, window: (f64, f64), points: usize) -> Result<Vec<ScanSample>> {
    let (lo, hi) = window;
    if points == 0 || hi < lo {
        return Ok(Vec::new());
    }
    let n = points.max(2);
    let lambdas: Vec<f64> = if hi == lo { vec![lo] } else { (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect() };
    lambdas
        .into_iter()
        .map(|l| evans(sys, l).map(|ev| ScanSample { lambda: l, e: ev.e, x_residual: ev.x_residual }))
        .collect()
}

/// Real eigenvalues from the sign changes of a scan, polished to `tol`.
pub fn eigen_from_scan(sys: &LinearizedSystem, scan: &[ScanSample], tol: f64) -> Result<Vec<Eigenvalue>> {
    let mut out = Vec::new();
    for w in scan.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.e == 0.0 {
            out.push(Eigenvalue { lambda: a.lambda, residual: 0.0 });
            continue;
        }
        if a.e.signum() == b.e.signum() || b.e == 0.0 {
            continue;
        }
        let f = |l: f64| evans(sys, l).map(|e| e.e).unwrap_or(f64::NAN);
        let lambda = roots::brent_root_with(f, a.lambda, b.lambda, a.e, b.e, tol, 200)?;
        out.push(Eigenvalue { lambda, residual: f(lambda).abs() });
    }
    if let Some(last) = scan.last() {
        if last.e == 0.0 {
            out.push(Eigenvalue { lambda: last.lambda, residual: 0.0 });
        }
    }
    Ok(out)
}

pub fn eigen_scan(sys: &LinearizedSystem, window: (f64, f64), points: usize) -> Result<Vec<Eigenvalue>> {
    let scan = evans_scan(sys, window, points)?;
    eigen_from_scan(sys, &scan, 1e-10)
}

pub fn write_scan(path: impl AsRef<Path>, scan: &[ScanSample]) -> Result<()> {
    let rows: Vec<Vec<f64>> = scan.iter().map(|s| vec![s.lambda, s.e, s.x_residual]).collect();
    io::write_table_file(path, &["lambda", "E", "x_residual"], &rows)
}

/// Eigenvalue report `{beta, eigenvalues, E0, Dprime, identity_gap}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub beta: f64,
    pub eigenvalues: Vec<Eigenvalue>,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "Dprime")]
    pub d_prime: f64,
    pub identity_gap: f64,
}

pub fn eigen_report(sys: &LinearizedSystem, eigenvalues: Vec<Eigenvalue>) -> Result<EigenReport> {
    let id = evans_zero_identity(sys)?;
    Ok(EigenReport { beta: sys.beta(), eigenvalues, e0: id.e0, d_prime: id.d_prime, identity_gap: id.gap })
}

/// An eigenfunction `(U, Θ)` sampled on a uniform grid, scaled so that `max |Θ| = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenfunction {
    pub lambda: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Reconstructs the eigenfunction at an Evans root by combining the two left columns so
/// that `U(1) = 0`, sampled on `n` points.
pub fn eigenfunction(sys: &LinearizedSystem, lambda: f64, n: usize) -> Result<Eigenfunction> {
    if n < 3 {
        return Err(Error::InvalidArgument("eigenfunction grid needs at least 3 points".into()));
    }
    let mut end = [[0.0; 4]; 2];
    sys.shoot(lambda, false, &[E2, E4], &[1.0], false, |_, _, y, _| {
        end[0].copy_from_slice(&y[2..6]);
        end[1].copy_from_slice(&y[6..10]);
    })?;
    // pick the row with the larger entries to fix the combination
    let row = if end[0][0].abs() + end[1][0].abs() >= end[0][2].abs() + end[1][2].abs() { 0 } else { 2 };
    let (a, b) = (end[1][row], -end[0][row]);
    let start = [0.0, a, 0.0, b];
    let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let mut u = vec![0.0; n];
    let mut theta = vec![0.0; n];
    sys.shoot(lambda, false, &[start], &x[1..], false, |i, _, y, _| {
        u[i + 1] = y[2];
        theta[i + 1] = y[4];
    })?;
    u[n - 1] = 0.0;
    theta[n - 1] = 0.0;
    let norm = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if norm > 0.0 {
        for v in u.iter_mut().chain(theta.iter_mut()) {
            *v /= norm;
        }
    }
    Ok(Eigenfunction { lambda, x, u, theta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(beta: f64) -> LinearizedSystem {
        LinearizedSystem::at_level(&ShearModel::default(), beta).unwrap()
    }

    #[test]
    fn determinant_of_known_matrices() {
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            m[i][i] = (i + 1) as f64;
        }
        assert_eq!(det4(&m), 24.0);
        m.swap(0, 1);
        assert_eq!(det4(&m), -24.0);
        let full = [[2.0, 1.0, 0.0, 3.0], [1.0, -1.0, 4.0, 0.0], [0.5, 2.0, 1.0, 1.0], [0.0, 3.0, -2.0, 1.0]];
        assert!((det4(&full) - det_by_elimination(full)).abs() < 1e-12, "{}", det4(&full));
    }

    fn det_by_elimination(mut m: Mat4) -> f64 {
        let mut det = 1.0;
        for col in 0..4 {
            let piv = (col..4).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
            if piv != col {
                m.swap(piv, col);
                det = -det;
            }
            det *= m[col][col];
            for r in col + 1..4 {
                let f = m[r][col] / m[col][col];
                for c in col..4 {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
        det
    }

    #[test]
    fn trace_free_and_structure() {
        let sys = system(0.1);
        for x in [0.0, 0.2, 0.5, 0.9] {
            let a = sys.a_at(x);
            let b = sys.b_at(x);
            let (th, _) = sys.background_at(x);
            let c = sys.params().c(th);
            assert!((a[2][3] - 1.0 / (c * c)).abs() < 1e-14);
            for lambda in [-3.0, 0.0, 2.0] {
                let tr: f64 = (0..4).map(|i| a[i][i] + lambda * b[i][i]).sum();
                assert!(tr.abs() < 1e-14);
            }
            let nonzero = b.iter().flatten().filter(|v| **v != 0.0).count();
            assert_eq!(nonzero, 3);
            // unit splay-bend ratio makes c constant
            assert_eq!(a[2][2], 0.0);
            assert_eq!(a[3][3], 0.0);
        }
    }

    #[test]
    fn broken_profile_is_rejected() {
        let m = ShearModel::default();
        let mut prof = stationary::reconstruct_profile_on(&m, 0.1, 65).unwrap();
        prof.theta[0] += 1e-3;
        assert!(matches!(LinearizedSystem::build(&m, prof), Err(Error::Profile(_))));
    }

    #[test]
    fn evans_is_independent_of_matching_point() {
        let sys = system(0.1);
        for lambda in [-20.0, -1.0, 0.0, 3.0] {
            let ev = evans(&sys, lambda).unwrap();
            assert!(ev.x_residual < 1e-6 * ev.e.abs().max(1e-300) || ev.x_residual < 1e-10 * ev.scale, "{ev:?}");
        }
    }

    #[test]
    fn zero_identity_on_first_interval() {
        let m = ShearModel::default();
        let beta = 0.5 * m.poles()[0].beta;
        let id = evans_zero_identity(&LinearizedSystem::at_level(&m, beta).unwrap()).unwrap();
        assert!(id.gap < 1e-5, "{id:?}");
        assert!(id.e0 < 0.0 && id.d_prime > 0.0);
    }

    #[test]
    fn monodromy_structure_and_reduction() {
        let sys = system(0.1);
        let mono = monodromy(&sys).unwrap();
        assert!(mono.max_det_defect() < 1e-8);
        assert_eq!(mono.t(2, 2), 1.0);
        assert_eq!(mono.t(2, 1), 0.0);
        let ev = evans(&sys, 0.0).unwrap();
        assert!(relative_gap(ev.e, mono.reduced_determinant()) < 1e-6);
        let cf = closed_form_entries(sys.params(), &sys.level);
        for (shot, closed) in [
            (mono.t(1, 2), cf.t12),
            (mono.t(1, 4), cf.t14),
            (mono.t(3, 2), cf.t32),
            (mono.t(3, 4), cf.t34),
        ] {
            assert!(relative_gap(shot, closed) < 1e-5, "{shot} vs {closed}");
        }
    }

    #[test]
    fn adjugate_inverse_is_an_inverse() {
        let sys = system(0.15);
        let mono = monodromy(&sys).unwrap();
        let inv = inverse_unimodular(&mono.phi);
        for i in 0..4 {
            for j in 0..4 {
                let v: f64 = (0..4).map(|k| inv[i][k] * mono.phi[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9, "({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn vp_derivative_matches_difference_quotient() {
        let sys = system(0.1);
        let ld = evans_lambda_derivative(&sys, 1e-5).unwrap();
        assert!(ld.gap < 1e-4, "{ld:?}");
    }
}
