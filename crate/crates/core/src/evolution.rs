//! Time integration of the parabolic shear-flow system and its linearization, with the
//! weighted energy used to certify exponential decay.
//!
//! Both flows are advanced by a linearly implicit BDF2 scheme (backward Euler for the
//! first step). The time derivative of `θ` appearing in the `u`-flux is replaced by the
//! same BDF difference as the `θ`-equation, so each step is one 2×2 block-tridiagonal
//! solve in `(u_i, θ_i)` and the stiff coupling is treated implicitly.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::material::MaterialParams;
use crate::stationary::StationaryProfile;

type M2 = [[f64; 2]; 2];

/// Solves `L_k z_{k-1} + D_k z_k + U_k z_{k+1} = r_k` by block elimination.
fn solve_block_tridiagonal(lower: &[M2], diag: &[M2], upper: &[M2], rhs: &[[f64; 2]]) -> Option<Vec<[f64; 2]>> {
    let m = diag.len();
    let inv2 = |a: &M2| -> Option<M2> {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
    };
    let mul = |a: &M2, b: &M2| -> M2 {
        [
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ]
    };
    let mv = |a: &M2, v: &[f64; 2]| [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]];
    let mut c_prime: Vec<M2> = Vec::with_capacity(m);
    let mut d_prime: Vec<[f64; 2]> = Vec::with_capacity(m);
    for k in 0..m {
        let (piv, r) = if k == 0 {
            (diag[0], rhs[0])
        } else {
            let lc = mul(&lower[k], &c_prime[k - 1]);
            let ld = mv(&lower[k], &d_prime[k - 1]);
            (
                [[diag[k][0][0] - lc[0][0], diag[k][0][1] - lc[0][1]], [diag[k][1][0] - lc[1][0], diag[k][1][1] - lc[1][1]]],
                [rhs[k][0] - ld[0], rhs[k][1] - ld[1]],
            )
        };
        let inv = inv2(&piv)?;
        c_prime.push(mul(&inv, &upper[k]));
        d_prime.push(mv(&inv, &r));
    }
    let mut z = vec![[0.0; 2]; m];
    z[m - 1] = d_prime[m - 1];
    for k in (0..m - 1).rev() {
        let cz = mv(&c_prime[k], &z[k + 1]);
        z[k] = [d_prime[k][0] - cz[0], d_prime[k][1] - cz[1]];
    }
    z.iter().all(|v| v[0].is_finite() && v[1].is_finite()).then_some(z)
}

/// Time-stepped fields on a uniform grid. For the linearized flow `u` and `theta` hold
/// the perturbations `U` and `Θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub dt: f64,
    pub energy_trace: Vec<(f64, f64)>,
    #[serde(skip)]
    previous: Option<(Vec<f64>, Vec<f64>)>,
}

impl EvolutionState {
    pub fn new(u: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let n = u.len();
        if n < 3 || theta.len() != n {
            return Err(Error::InvalidArgument(format!("fields must share a grid of >= 3 points ({n}, {})", theta.len())));
        }
        let x = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Ok(Self { t: 0.0, x, u, theta, dt: 0.0, energy_trace: Vec::new(), previous: None })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.len() - 1) as f64
    }

    /// BDF weights `(a₀, a₁, a₂)` for `y_t ≈ (a₀y^{n+1} − a₁y^n + a₂y^{n−1})/dt`, and the
    /// history combination `a₁y^n − a₂y^{n−1}` for both fields.
    fn history(&self, dt: f64) -> (f64, Vec<f64>, Vec<f64>, bool) {
        match &self.previous {
            Some((u_old, th_old)) if self.dt == dt => {
                let hu = self.u.iter().zip(u_old).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
                let ht = self.theta.iter().zip(th_old).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
                (1.5, hu, ht, true)
            }
            _ => (1.0, self.u.clone(), self.theta.clone(), false),
        }
    }

    fn accept(&mut self, dt: f64, u: Vec<f64>, theta: Vec<f64>) {
        let old_u = std::mem::replace(&mut self.u, u);
        let old_t = std::mem::replace(&mut self.theta, theta);
        self.previous = Some((old_u, old_t));
        self.dt = dt;
        self.t += dt;
    }

    /// Drops the step history so that the next step starts with backward Euler.
    pub fn restart(&mut self) {
        self.previous = None;
    }

    pub fn write_trace(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<Vec<f64>> = self.energy_trace.iter().map(|&(t, e)| vec![t, e]).collect();
        io::write_table_file(path, &["t", "E_b"], &rows)
    }
}

const MAX_RETRIES: usize = 8;

/// The nonlinear flow with boundary data `u(0) = 0`, `u(1) = ū`, `θ = θ₀` at both ends.
#[derive(Debug, Clone)]
pub struct NonlinearFlow {
    pub params: MaterialParams,
    pub ubar: f64,
}

impl NonlinearFlow {
    pub fn new(params: MaterialParams, ubar: f64) -> Self {
        Self { params, ubar }
    }

    /// Advances by `dt`, halving the step on solver failure.
    pub fn step(&self, state: &mut EvolutionState, dt: f64) -> Result<()> {
        let mut h = dt;
        for _ in 0..=MAX_RETRIES {
            if let Some((u, th)) = self.try_step(state, h) {
                state.accept(h, u, th);
                return Ok(());
            }
            state.restart();
            h *= 0.5;
        }
        Err(Error::StepRejected { t: state.t, retries: MAX_RETRIES })
    }

    fn try_step(&self, s: &EvolutionState, dt: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let p = &self.params;
        let n = s.len();
        let dx = s.dx();
        let (a0, hu, ht, bdf2) = s.history(dt);
        // coefficients frozen at the extrapolated angle
        let star: Vec<f64> = match (&s.previous, bdf2) {
            (Some((_, old)), true) => s.theta.iter().zip(old).map(|(a, b)| 2.0 * a - b).collect(),
            _ => s.theta.clone(),
        };
        let mid = |i: usize| 0.5 * (star[i] + star[i + 1]);
        let gm: Vec<f64> = (0..n - 1).map(|i| p.g(mid(i))).collect();
        let hm: Vec<f64> = (0..n - 1).map(|i| p.h(mid(i))).collect();
        let cm: Vec<f64> = (0..n - 1).map(|i| p.c(mid(i))).collect();
        let gamma1 = p.gamma1();
        let th0 = p.theta0;
        let mut u_full = vec![0.0; n];
        let mut t_full = vec![th0; n];
        u_full[n - 1] = self.ubar;
        let m = n - 2;
        let mut lower = vec![[[0.0; 2]; 2]; m];
        let mut diag = vec![[[0.0; 2]; 2]; m];
        let mut upper = vec![[[0.0; 2]; 2]; m];
        let mut rhs = vec![[0.0; 2]; m];
        let dx2 = dx * dx;
        let k_t = a0 / (2.0 * dt * dx);
        for i in 1..n - 1 {
            let k = i - 1;
            let (gl, gr, hl, hr) = (gm[i - 1], gm[i], hm[i - 1], hm[i]);
            let (ci, cl, cr) = (p.c(star[i]), cm[i - 1], cm[i]);
            let hi = p.h(star[i]);
            // u-row: a₀u/dt − (F_{i+½} − F_{i−½})/dx = hist/dt
            diag[k][0][0] = a0 / dt + (gl + gr) / dx2;
            diag[k][0][1] = -(hr - hl) * k_t;
            upper[k][0][0] = -gr / dx2;
            upper[k][0][1] = -hr * k_t;
            lower[k][0][0] = -gl / dx2;
            lower[k][0][1] = hl * k_t;
            rhs[k][0] = hu[i] / dt - (hr * (ht[i] + ht[i + 1]) - hl * (ht[i - 1] + ht[i])) / (2.0 * dt * dx);
            // θ-row: γ₁(a₀θ − hist)/dt − c(cθ_x)_x + h u_x = 0
            diag[k][1][1] = gamma1 * a0 / dt + ci * (cl + cr) / dx2;
            upper[k][1][1] = -ci * cr / dx2;
            lower[k][1][1] = -ci * cl / dx2;
            upper[k][1][0] = hi / (2.0 * dx);
            lower[k][1][0] = -hi / (2.0 * dx);
            rhs[k][1] = gamma1 * ht[i] / dt;
        }
        // known boundary values; the boundary θ_t vanishes since a₀θ₀ equals its history
        let bl = [0.0, th0];
        let br = [self.ubar, th0];
        for r in 0..2 {
            rhs[0][r] -= lower[0][r][0] * bl[0] + lower[0][r][1] * bl[1];
            rhs[m - 1][r] -= upper[m - 1][r][0] * br[0] + upper[m - 1][r][1] * br[1];
        }
        let z = solve_block_tridiagonal(&lower, &diag, &upper, &rhs)?;
        for (k, v) in z.iter().enumerate() {
            u_full[k + 1] = v[0];
            t_full[k + 1] = v[1];
        }
        Some((u_full, t_full))
    }

    pub fn run(&self, state: &mut EvolutionState, dt: f64, t_end: f64) -> Result<()> {
        while state.t < t_end - 1e-12 * dt {
            let h = dt.min(t_end - state.t);
            if h != state.dt {
                state.restart();
            }
            self.step(state, h)?;
        }
        Ok(())
    }
}

/// Weight of `Θ_x²` in the energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientWeight {
    /// `c²(θ)`, the weight the decay estimate differentiates.
    #[default]
    CSquared,
    /// `c(θ)`.
    C,
}

/// The flow linearized about a stationary profile sampled on the evolution grid.
#[derive(Debug, Clone)]
pub struct LinearFlow {
    pub params: MaterialParams,
    pub profile: StationaryProfile,
    c: Vec<f64>,
    h: Vec<f64>,
    potential_term: Vec<f64>,
    g_mid: Vec<f64>,
    h_mid: Vec<f64>,
    drift_mid: Vec<f64>,
    c2_mid: Vec<f64>,
}

impl LinearFlow {
    pub fn new(params: MaterialParams, profile: StationaryProfile) -> Self {
        let p = params;
        let n = profile.len();
        let th = &profile.theta;
        let p0 = profile.p0;
        let c: Vec<f64> = th.iter().map(|&t| p.c(t)).collect();
        let h: Vec<f64> = th.iter().map(|&t| p.h(t)).collect();
        // c′(cθ_x)_x − h′u_x with (cθ_x)_x = h p₀/(g c) and u_x = p₀/g on the profile
        let potential_term = th
            .iter()
            .map(|&t| p.c_prime(t) * p.h(t) * p0 / (p.g(t) * p.c(t)) - p.h_prime(t) * p0 / p.g(t))
            .collect();
        let mids: Vec<f64> = (0..n - 1).map(|i| 0.5 * (th[i] + th[i + 1])).collect();
        let g_mid = mids.iter().map(|&t| p.g(t)).collect();
        let h_mid = mids.iter().map(|&t| p.h(t)).collect();
        let drift_mid = mids.iter().map(|&t| p.g_prime(t) * p0 / p.g(t)).collect();
        let c2_mid = mids.iter().map(|&t| p.c2(t)).collect();
        Self { params, profile, c, h, potential_term, g_mid, h_mid, drift_mid, c2_mid }
    }

    /// Switches the gradient weight used by [`LinearFlow::energy`].
    pub fn with_gradient_weight(mut self, weight: GradientWeight) -> Self {
        let th = &self.profile.theta;
        let p = self.params;
        self.c2_mid = th
            .windows(2)
            .map(|w| {
                let t = 0.5 * (w[0] + w[1]);
                match weight {
                    GradientWeight::CSquared => p.c2(t),
                    GradientWeight::C => p.c(t),
                }
            })
            .collect();
        self
    }

    pub fn len(&self) -> usize {
        self.profile.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profile.is_empty()
    }

    pub fn step(&self, state: &mut EvolutionState, dt: f64) -> Result<()> {
        let mut h = dt;
        for _ in 0..=MAX_RETRIES {
            if let Some((u, th)) = self.try_step(state, h) {
                state.accept(h, u, th);
                return Ok(());
            }
            state.restart();
            h *= 0.5;
        }
        Err(Error::StepRejected { t: state.t, retries: MAX_RETRIES })
    }

    fn try_step(&self, s: &EvolutionState, dt: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = s.len();
        if n != self.len() {
            return None;
        }
        let dx = s.dx();
        let dx2 = dx * dx;
        let gamma1 = self.params.gamma1();
        let (a0, hu, ht, _) = s.history(dt);
        let m = n - 2;
        let mut lower = vec![[[0.0; 2]; 2]; m];
        let mut diag = vec![[[0.0; 2]; 2]; m];
        let mut upper = vec![[[0.0; 2]; 2]; m];
        let mut rhs = vec![[0.0; 2]; m];
        let k_t = a0 / (2.0 * dt * dx);
        for i in 1..n - 1 {
            let k = i - 1;
            let (gl, gr, hl, hr) = (self.g_mid[i - 1], self.g_mid[i], self.h_mid[i - 1], self.h_mid[i]);
            let (dl, dr) = (self.drift_mid[i - 1], self.drift_mid[i]);
            // U-row: F_{i+½} = g U_x + (g′u_x) Θ̄ + h Θ̄_t
            diag[k][0][0] = a0 / dt + (gl + gr) / dx2;
            upper[k][0][0] = -gr / dx2;
            lower[k][0][0] = -gl / dx2;
            diag[k][0][1] = -(hr - hl) * k_t - (dr - dl) / (2.0 * dx);
            upper[k][0][1] = -hr * k_t - dr / (2.0 * dx);
            lower[k][0][1] = hl * k_t + dl / (2.0 * dx);
            rhs[k][0] = hu[i] / dt - (hr * (ht[i] + ht[i + 1]) - hl * (ht[i - 1] + ht[i])) / (2.0 * dt * dx);
            // Θ-row: γ₁Θ_t = c(cΘ)_xx + [c′(cθ_x)_x − h′u_x]Θ − hU_x
            let ci = self.c[i];
            diag[k][1][1] = gamma1 * a0 / dt + 2.0 * ci * ci / dx2 - self.potential_term[i];
            upper[k][1][1] = -ci * self.c[i + 1] / dx2;
            lower[k][1][1] = -ci * self.c[i - 1] / dx2;
            upper[k][1][0] = self.h[i] / (2.0 * dx);
            lower[k][1][0] = -self.h[i] / (2.0 * dx);
            rhs[k][1] = gamma1 * ht[i] / dt;
        }
        let z = solve_block_tridiagonal(&lower, &diag, &upper, &rhs)?;
        let mut u = vec![0.0; n];
        let mut th = vec![0.0; n];
        for (k, v) in z.iter().enumerate() {
            u[k + 1] = v[0];
            th[k + 1] = v[1];
        }
        Some((u, th))
    }

    /// `E_b = ∫ U² + bγ₁Θ² + c²(θ)Θ_x²`: trapezoid for the first two terms, cell
    /// differences for the gradient term.
    pub fn energy(&self, state: &EvolutionState, b: f64) -> f64 {
        energy_with(&self.c2_mid, self.params.gamma1(), state, b)
    }

    /// Steps to `t_end` with fixed `dt`, recording `E_b` after every step.
    pub fn run(&self, state: &mut EvolutionState, dt: f64, t_end: f64, b: f64) -> Result<()> {
        if state.energy_trace.is_empty() {
            let e = self.energy(state, b);
            state.energy_trace.push((state.t, e));
        }
        while state.t < t_end - 1e-12 * dt {
            self.step(state, dt.min(t_end - state.t))?;
            let e = self.energy(state, b);
            if !(e >= 0.0) || !e.is_finite() {
                return Err(Error::Energy { t: state.t, value: e });
            }
            state.energy_trace.push((state.t, e));
        }
        Ok(())
    }
}

fn energy_with(c2_mid: &[f64], gamma1: f64, s: &EvolutionState, b: f64) -> f64 {
    let n = s.len();
    let dx = s.dx();
    let mut e = 0.0;
    for i in 0..n {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        e += w * dx * (s.u[i] * s.u[i] + b * gamma1 * s.theta[i] * s.theta[i]);
    }
    for i in 0..n - 1 {
        let d = (s.theta[i + 1] - s.theta[i]) / dx;
        e += dx * c2_mid[i] * d * d;
    }
    e
}

/// `E_b` with an explicit background angle, for states not tied to a [`LinearFlow`].
pub fn energy(params: &MaterialParams, background_theta: &[f64], state: &EvolutionState, b: f64) -> f64 {
    let c2_mid: Vec<f64> = background_theta.windows(2).map(|w| params.c2(0.5 * (w[0] + w[1]))).collect();
    energy_with(&c2_mid, params.gamma1(), state, b)
}

/// Smooth random perturbation: sine series with coefficients decaying like `k⁻²`,
/// zero at both ends, scaled to the given sup-norm.
pub fn sine_perturbation(n: usize, modes: usize, amplitude: f64, rng: &mut impl Rng) -> Vec<f64> {
    let coef: Vec<f64> = (1..=modes).map(|k| rng.gen_range(-1.0..1.0) / (k * k) as f64).collect();
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 / (n - 1) as f64;
            coef.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * x).sin()).sum()
        })
        .collect();
    v[0] = 0.0;
    v[n - 1] = 0.0;
    let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if norm > 0.0 {
        for x in &mut v {
            *x *= amplitude / norm;
        }
    }
    v
}

/// A seeded `(U, Θ)` pair from [`sine_perturbation`].
pub fn random_perturbation(n: usize, seed: u64, amplitude: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = sine_perturbation(n, 16, amplitude, &mut rng);
    let th = sine_perturbation(n, 16, amplitude, &mut rng);
    (u, th)
}

/// Weight `b` admissible for the decay estimate and the rates `r₁, r₂, r₃` of its proof.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConstants {
    pub eps: f64,
    pub b: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

/// `b = 0.9 · ½ min (1 − σ)g` with `σ = (ε + h²/(γ₁ − ε))/g` and `ε = ū`.
pub fn decay_constants(params: &MaterialParams, profile: &StationaryProfile) -> Result<DecayConstants> {
    let eps = profile.ubar;
    let gamma1 = params.gamma1();
    if !(eps < gamma1) {
        return Err(Error::InvalidArgument(format!("shear speed {eps} is not small against gamma1 = {gamma1}")));
    }
    let floor = profile
        .theta
        .iter()
        .map(|&t| {
            let g = params.g(t);
            let h = params.h(t);
            let sigma = (eps + h * h / (gamma1 - eps)) / g;
            (1.0 - sigma) * g
        })
        .fold(f64::INFINITY, f64::min);
    if !(floor > 0.0) {
        return Err(Error::InvalidArgument(format!("no admissible weight: min (1 - sigma) g = {floor}")));
    }
    let b = 0.9 * 0.5 * floor;
    let (c_lo, c_hi) = params.c_bounds();
    Ok(DecayConstants {
        eps,
        b,
        r1: 0.5 * floor - b,
        r2: (-eps * b - 2.0 * eps + 0.125 * b * c_lo * c_lo) / (gamma1 * b),
        r3: 0.5 * b * c_lo * c_lo / c_hi,
    })
}

/// Least-squares slope of `ln E_b` against `t` over the second half of a trace, negated.
pub fn fit_rate(trace: &[(f64, f64)]) -> f64 {
    let tail = &trace[trace.len() / 2..];
    let n = tail.len() as f64;
    if tail.len() < 2 {
        return f64::NAN;
    }
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for &(t, e) in tail {
        let y = e.ln();
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    -(n * sty - st * sy) / (n * stt - st * st)
}

/// Run metadata `{ubar, beta, b, eps, L_fit, r1, r2, r3, passed, seed}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub ubar: f64,
    pub beta: f64,
    pub b: f64,
    #[serde(deserialize_with = "io::f64_or_nan")]
    pub eps: f64,
    #[serde(rename = "L_fit", deserialize_with = "io::f64_or_nan")]
    pub l_fit: f64,
    #[serde(deserialize_with = "io::f64_or_nan")]
    pub r1: f64,
    #[serde(deserialize_with = "io::f64_or_nan")]
    pub r2: f64,
    #[serde(deserialize_with = "io::f64_or_nan")]
    pub r3: f64,
    pub passed: bool,
    pub seed: u64,
    /// `E_b` strictly decreasing from the first step on.
    pub monotone: bool,
    pub t_end: f64,
    pub dt: f64,
}

/// Evolves the linearized flow from a seeded perturbation and fits the decay rate.
///
/// `b` defaults to the admissible weight when `None`; for profiles too far from rest
/// (no admissible weight) the proof's constants are reported as `NaN` and `b = 1`.
pub fn decay_report(
    params: &MaterialParams,
    profile: &StationaryProfile,
    b: Option<f64>,
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<(DecayReport, EvolutionState)> {
    let consts = decay_constants(params, profile).ok();
    let b = b.or(consts.map(|c| c.b)).unwrap_or(1.0);
    let flow = LinearFlow::new(*params, profile.clone());
    let (u, th) = random_perturbation(profile.len(), seed, 1.0);
    let mut state = EvolutionState::new(u, th)?;
    flow.run(&mut state, dt, t_end, b)?;
    let trace = &state.energy_trace;
    let monotone = trace[1..].windows(2).all(|w| w[1].1 < w[0].1);
    let l_fit = fit_rate(trace);
    let nan = f64::NAN;
    let report = DecayReport {
        ubar: profile.ubar,
        beta: profile.beta,
        b,
        eps: consts.map_or(nan, |c| c.eps),
        l_fit,
        r1: consts.map_or(nan, |c| c.r1),
        r2: consts.map_or(nan, |c| c.r2),
        r3: consts.map_or(nan, |c| c.r3),
        passed: monotone && l_fit > 0.0,
        seed,
        monotone,
        t_end,
        dt,
    };
    Ok((report, state))
}

/// Sup-norms of `u_x`, `θ_x`, `θ_xx` on a profile and their ratios to `ū`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallUbarBounds {
    pub ubar: f64,
    pub max_u_x: f64,
    pub max_theta_x: f64,
    pub max_theta_xx: f64,
    pub ratio_u_x: f64,
    pub ratio_theta_x: f64,
    pub ratio_theta_xx: f64,
    /// Grid position of the largest `|θ_x|`.
    pub argmax_theta_x: f64,
}

pub fn small_ubar_bounds(params: &MaterialParams, profile: &StationaryProfile) -> SmallUbarBounds {
    let p = params;
    let mut out = SmallUbarBounds {
        ubar: profile.ubar,
        max_u_x: 0.0,
        max_theta_x: 0.0,
        max_theta_xx: 0.0,
        ratio_u_x: 0.0,
        ratio_theta_x: 0.0,
        ratio_theta_xx: 0.0,
        argmax_theta_x: 0.0,
    };
    for i in 0..profile.len() {
        let th = profile.theta[i];
        let (c, cp) = (p.c(th), p.c_prime(th));
        let u_x = profile.p0 / p.g(th);
        let theta_x = profile.eta[i] / (c * c);
        // c(cθ_x)_x = h u_x expanded
        let theta_xx = (p.h(th) * u_x - c * cp * theta_x * theta_x) / (c * c);
        out.max_u_x = out.max_u_x.max(u_x.abs());
        if theta_x.abs() > out.max_theta_x {
            out.max_theta_x = theta_x.abs();
            out.argmax_theta_x = profile.x[i];
        }
        out.max_theta_xx = out.max_theta_xx.max(theta_xx.abs());
    }
    out.ratio_u_x = out.max_u_x / profile.ubar;
    out.ratio_theta_x = out.max_theta_x / profile.ubar;
    out.ratio_theta_xx = out.max_theta_xx / profile.ubar;
    out
}

/// Terminal fields in the profile CSV schema `x,u,theta,eta` with `η = c²θ_x` by
/// central differences.
pub fn write_fields(params: &MaterialParams, state: &EvolutionState, path: impl AsRef<Path>) -> Result<()> {
    let n = state.len();
    let dx = state.dx();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let theta_x = (state.theta[b] - state.theta[a]) / ((b - a) as f64 * dx);
            vec![state.x[i], state.u[i], state.theta[i], params.c2(state.theta[i]) * theta_x]
        })
        .collect();
    io::write_table_file(path, &["x", "u", "theta", "eta"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ShearModel;
    use crate::stationary;

    fn small_profile(n: usize) -> (ShearModel, StationaryProfile) {
        let m = ShearModel::default();
        let b1 = m.poles()[0].beta;
        let beta = stationary::solve_ubar(&m, 0.05, (0.0, b1)).unwrap()[0];
        let prof = stationary::reconstruct_profile_on(&m, beta, n).unwrap();
        (m, prof)
    }

    #[test]
    fn block_solver_matches_dense_solution() {
        let m = 4;
        let lower = vec![[[0.3, 0.1], [0.0, -0.2]]; m];
        let diag = vec![[[4.0, 0.5], [0.2, 3.0]]; m];
        let upper = vec![[[-0.4, 0.0], [0.1, 0.6]]; m];
        let z_true: Vec<[f64; 2]> = (0..m).map(|k| [k as f64 + 1.0, -(k as f64) * 0.5]).collect();
        let mut rhs = vec![[0.0; 2]; m];
        for k in 0..m {
            for r in 0..2 {
                let mut v = diag[k][r][0] * z_true[k][0] + diag[k][r][1] * z_true[k][1];
                if k > 0 {
                    v += lower[k][r][0] * z_true[k - 1][0] + lower[k][r][1] * z_true[k - 1][1];
                }
                if k + 1 < m {
                    v += upper[k][r][0] * z_true[k + 1][0] + upper[k][r][1] * z_true[k + 1][1];
                }
                rhs[k][r] = v;
            }
        }
        let z = solve_block_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for k in 0..m {
            assert!((z[k][0] - z_true[k][0]).abs() < 1e-13 && (z[k][1] - z_true[k][1]).abs() < 1e-13);
        }
    }

    #[test]
    fn energy_of_sine_mode() {
        let p = MaterialParams::default();
        let n = 1025;
        let th: Vec<f64> = (0..n).map(|i| (std::f64::consts::PI * i as f64 / (n - 1) as f64).sin()).collect();
        let state = EvolutionState::new(vec![0.0; n], th).unwrap();
        let background = vec![p.theta0; n];
        let e = energy(&p, &background, &state, 0.0);
        assert!((e - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-5, "{e}");
        let zero = EvolutionState::new(vec![0.0; n], vec![0.0; n]).unwrap();
        assert_eq!(energy(&p, &background, &zero, 1.0), 0.0);
        assert!(energy(&p, &background, &state, 0.2) > energy(&p, &background, &state, 0.1));
    }

    #[test]
    fn stationary_profile_is_a_fixed_point() {
        let (m, prof) = small_profile(129);
        let flow = NonlinearFlow::new(*m.params(), prof.ubar);
        let mut state = EvolutionState::new(prof.u.clone(), prof.theta.clone()).unwrap();
        flow.run(&mut state, 1.0 / 128.0, 1.0).unwrap();
        let drift = state
            .u
            .iter()
            .zip(&prof.u)
            .chain(state.theta.iter().zip(&prof.theta))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-6, "drift {drift}");
    }

    #[test]
    fn coupling_moves_a_uniform_angle() {
        let p = MaterialParams::default();
        let n = 65;
        let u: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let mut state = EvolutionState::new(u, vec![p.theta0; n]).unwrap();
        NonlinearFlow::new(p, 1.0).step(&mut state, 1e-3).unwrap();
        assert!(state.theta[n / 2] < p.theta0 - 1e-7);
    }

    #[test]
    fn linear_flow_keeps_zero_and_superposes() {
        let (m, prof) = small_profile(65);
        let flow = LinearFlow::new(*m.params(), prof);
        let n = flow.len();
        let mut zero = EvolutionState::new(vec![0.0; n], vec![0.0; n]).unwrap();
        flow.run(&mut zero, 1.0 / 64.0, 0.25, 1.0).unwrap();
        assert!(zero.u.iter().chain(&zero.theta).all(|v| *v == 0.0));

        let (u1, t1) = random_perturbation(n, 1, 1.0);
        let (u2, t2) = random_perturbation(n, 2, 1.0);
        let (a, b) = (0.7, -1.3);
        let combine = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect::<Vec<_>>();
        let run = |u: Vec<f64>, t: Vec<f64>| {
            let mut s = EvolutionState::new(u, t).unwrap();
            flow.run(&mut s, 1.0 / 64.0, 0.5, 1.0).unwrap();
            s
        };
        let s1 = run(u1.clone(), t1.clone());
        let s2 = run(u2.clone(), t2.clone());
        let s12 = run(combine(&u1, &u2), combine(&t1, &t2));
        for i in 0..n {
            assert!((s12.u[i] - (a * s1.u[i] + b * s2.u[i])).abs() < 1e-8);
            assert!((s12.theta[i] - (a * s1.theta[i] + b * s2.theta[i])).abs() < 1e-8);
        }
    }

    #[test]
    fn eigenfunction_energy_follows_twice_the_eigenvalue() {
        let (m, prof) = small_profile(257);
        let sys = crate::spectral::LinearizedSystem::build(&m, prof.clone()).unwrap();
        let lambda = crate::spectral::eigen_scan(&sys, (-20.0, 0.0), 101).unwrap()[0].lambda;
        let mode = crate::spectral::eigenfunction(&sys, lambda, 257).unwrap();
        let flow = LinearFlow::new(*m.params(), prof);
        let mut state = EvolutionState::new(mode.u, mode.theta).unwrap();
        flow.run(&mut state, 1.0 / 1024.0, 0.1, 1.0).unwrap();
        let (first, last) = (state.energy_trace[0], *state.energy_trace.last().unwrap());
        let slope = (last.1.ln() - first.1.ln()) / (last.0 - first.0);
        assert!((slope / (2.0 * lambda) - 1.0).abs() < 0.1, "slope {slope}, lambda {lambda}");
    }

    #[test]
    fn unit_conductivity_makes_weights_agree() {
        let (m, prof) = small_profile(65);
        let (u, th) = random_perturbation(65, 4, 1.0);
        let state = EvolutionState::new(u, th).unwrap();
        let a = LinearFlow::new(*m.params(), prof.clone()).energy(&state, 0.3);
        let b = LinearFlow::new(*m.params(), prof).with_gradient_weight(GradientWeight::C).energy(&state, 0.3);
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn perturbation_is_seeded_and_pinned() {
        let (a, _) = random_perturbation(101, 7, 0.5);
        let (b, _) = random_perturbation(101, 7, 0.5);
        assert_eq!(a, b);
        assert_eq!(a[0], 0.0);
        assert_eq!(a[100], 0.0);
        assert!((a.iter().fold(0.0f64, |m, v| m.max(v.abs())) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rate_fit_recovers_exponential() {
        let trace: Vec<(f64, f64)> = (0..100).map(|k| (k as f64 * 0.1, 3.0 * (-2.5 * k as f64 * 0.1).exp())).collect();
        assert!((fit_rate(&trace) - 2.5).abs() < 1e-10);
    }
}
