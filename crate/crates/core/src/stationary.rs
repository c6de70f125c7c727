//! Stationary shear profiles and the map `D(β)` whose level sets `2D(β) = ū` label them.
//!
//! All singular integrals over `[θ̃, θ₀]` are taken in the variable `τ = √(θ − θ̃)`,
//! which removes the inverse square-root endpoint singularity at the turning angle.
//! The potential difference `G(θ̃ + τ²) − G(θ̃)` is always formed directly, never by
//! subtracting two large values, so the reduced integrand stays accurate near `τ = 0`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::ShearModel;
use crate::quadrature::{self, gl20, gl64};
use crate::roots;

/// `I_g`, `I_1` and their `β`-derivatives at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelIntegrals {
    pub beta: f64,
    pub theta_tilde: f64,
    /// `∫ c / √(G − G̃)` over `[θ̃, θ₀]`, equal to `√(p₀/2)`.
    pub i_g: f64,
    /// `∫ c / (g √(G − G̃))` over `[θ̃, θ₀]`.
    pub i_1: f64,
    pub di_g: f64,
    pub di_1: f64,
    /// Finite part `(cg/h)(θ₀)/√β − I_g′`.
    pub m_g: f64,
    /// Finite part `(c/h)(θ₀)/√β − I_1′`.
    pub m_1: f64,
}

impl LevelIntegrals {
    pub fn d(&self) -> f64 {
        self.i_g * self.i_1
    }

    pub fn d_prime(&self) -> f64 {
        self.di_g * self.i_1 + self.i_g * self.di_1
    }

    pub fn p0(&self) -> f64 {
        2.0 * self.i_g * self.i_g
    }

    pub fn ubar(&self) -> f64 {
        2.0 * self.d()
    }
}

/// Geometry of one level: turning angle and the cusps the orbit crosses.
struct Level<'a> {
    model: &'a ShearModel,
    beta: f64,
    theta_tilde: f64,
    cusps: Vec<f64>,
}

impl<'a> Level<'a> {
    fn new(model: &'a ShearModel, beta: f64) -> Result<Self> {
        model.check_level(beta)?;
        let theta_tilde = model.material.inverse_potential(-beta)?;
        let th0 = model.material.theta0();
        let cusps: Vec<f64> = model
            .params()
            .equilibrium_angles(theta_tilde, th0)
            .into_iter()
            .filter(|&e| e > theta_tilde && e < th0)
            .collect();
        Ok(Self { model, beta, theta_tilde, cusps })
    }

    fn delta_g(&self, th: f64) -> f64 {
        self.model.material.potential_diff(self.theta_tilde, th)
    }

    /// `(G(θ̃ + τ²) − G(θ̃)) / τ²`, positive and smooth in `τ`.
    fn reduced(&self, tau: f64) -> f64 {
        reduced_potential(self.model, self.theta_tilde, tau)
    }

    fn tau_end(&self) -> f64 {
        (self.model.material.theta0() - self.theta_tilde).sqrt()
    }

    /// `∫_{θ̃}^{θ̃+T²} weight / √(G − G̃) dθ` as `∫_0^T 2 weight(θ̃+τ²) / √reduced(τ) dτ`.
    fn tau_quad(&self, tau_end: f64, weight: impl Fn(f64) -> f64) -> Result<f64> {
        let mut breaks = vec![0.0];
        for &e in &self.cusps {
            let t = (e - self.theta_tilde).sqrt();
            if t < tau_end {
                breaks.push(t);
            }
        }
        breaks.push(tau_end);
        quadrature::adaptive_with_breaks(gl20(), &breaks, self.model.quad(), &mut |tau| {
            2.0 * weight(self.theta_tilde + tau * tau) / self.reduced(tau).sqrt()
        })
    }

    /// `d/dβ ∫_0^β f(F(t − β)) / √t dt` where `weight = f h/g`.
    ///
    /// When the orbit crosses cusps the integral is split at a point `θ_m` below the
    /// first cusp: the upper part is differentiated under the integral sign, the lower
    /// part after integrating by parts in `t`. Without cusps `θ_m = θ₀`.
    fn derivative(
        &self,
        f: impl Fn(f64) -> f64,
        f_prime: impl Fn(f64) -> f64,
        weight: impl Fn(f64) -> f64,
    ) -> Result<f64> {
        let th0 = self.model.material.theta0();
        let Some(&first) = self.cusps.first() else {
            let tail = self.tau_quad(self.tau_end(), &f_prime)?;
            return Ok(f(th0) / self.beta.sqrt() - tail);
        };
        let cut = self.theta_tilde + 0.5 * (first - self.theta_tilde);
        let mut breaks = vec![cut];
        breaks.extend(self.cusps.iter().copied());
        breaks.push(th0);
        let upper = quadrature::adaptive_with_breaks(gl20(), &breaks, self.model.quad(), &mut |th| {
            weight(th) * self.delta_g(th).powf(-1.5)
        })?;
        let lower = self.tau_quad((cut - self.theta_tilde).sqrt(), &f_prime)?;
        Ok(-0.5 * upper + f(cut) / self.delta_g(cut).sqrt() - lower)
    }
}

/// `(G(θ̃ + τ²) − G(θ̃)) / τ²`. Short spans are written as the mean of `h/g` over
/// `[θ̃, θ̃ + τ²]`, which keeps full relative accuracy even when `θ̃ + τ²` rounds to `θ̃`.
pub fn reduced_potential(model: &ShearModel, theta_tilde: f64, tau: f64) -> f64 {
    let t2 = tau * tau;
    let p = model.params();
    if t2 <= std::f64::consts::PI / 16.0 {
        gl20().integrate(0.0, 1.0, |v| p.h_over_g(theta_tilde + t2 * v))
    } else {
        model.material.potential_diff(theta_tilde, theta_tilde + t2) / t2
    }
}

/// Turning angle `θ̃ = F(−β)` of the level `β`.
pub fn turning_angle(model: &ShearModel, beta: f64) -> Result<f64> {
    model.check_level(beta)?;
    model.material.inverse_potential(-beta)
}

/// `I_g` and `I_1` at level `β`, without derivatives.
pub fn level_values(model: &ShearModel, beta: f64) -> Result<(f64, f64)> {
    let lv = Level::new(model, beta)?;
    let p = model.params();
    let end = lv.tau_end();
    let i_g = lv.tau_quad(end, |th| p.c(th))?;
    let i_1 = lv.tau_quad(end, |th| p.c(th) / p.g(th))?;
    Ok((i_g, i_1))
}

/// All four singular quadratures and the derivatives entering `D′`.
pub fn level_integrals(model: &ShearModel, beta: f64) -> Result<LevelIntegrals> {
    let lv = Level::new(model, beta)?;
    let p = model.params();
    let end = lv.tau_end();
    let i_g = lv.tau_quad(end, |th| p.c(th))?;
    let i_1 = lv.tau_quad(end, |th| p.c(th) / p.g(th))?;
    let di_g = lv.derivative(|th| p.c(th) * p.g(th) / p.h(th), |th| p.cg_over_h_prime(th), |th| p.c(th))?;
    let di_1 = lv.derivative(|th| p.c(th) / p.h(th), |th| p.c_over_h_prime(th), |th| p.c(th) / p.g(th))?;
    let th0 = model.material.theta0();
    let sb = beta.sqrt();
    let m_g = p.c(th0) * p.g(th0) / p.h(th0) / sb - di_g;
    let m_1 = p.c(th0) / p.h(th0) / sb - di_1;
    Ok(LevelIntegrals { beta, theta_tilde: lv.theta_tilde, i_g, i_1, di_g, di_1, m_g, m_1 })
}

/// The bifurcation map `D(β) = I_g(β) I_1(β)`.
pub fn d_value(model: &ShearModel, beta: f64) -> Result<f64> {
    let (i_g, i_1) = level_values(model, beta)?;
    Ok(i_g * i_1)
}

pub fn d_prime(model: &ShearModel, beta: f64) -> Result<f64> {
    Ok(level_integrals(model, beta)?.d_prime())
}

/// Centered difference of the analytic `D′` with step `1e-4·max(1, β)`.
pub fn d_second(model: &ShearModel, beta: f64) -> Result<f64> {
    let step = 1e-4 * beta.max(1.0);
    Ok((d_prime(model, beta + step)? - d_prime(model, beta - step)?) / (2.0 * step))
}

/// Solves `∫_{e}^{e+δ} h/g = shift` for `δ`, resolving `δ` relative to its own size.
fn invert_near_cusp(model: &ShearModel, cusp: f64, shift: f64) -> f64 {
    if shift == 0.0 {
        return cusp;
    }
    let p = model.params();
    let mat = &model.material;
    // h/g ≈ κ (θ − e)² next to a cusp
    let kappa = (-p.gamma2() * (2.0 * cusp).cos() / p.g(cusp)).abs().max(1e-300);
    let guess = (3.0 * shift / kappa).cbrt();
    let (lo, hi) = if shift > 0.0 { (0.0, std::f64::consts::PI) } else { (-std::f64::consts::PI, 0.0) };
    roots::newton_bracketed(
        |d| (mat.potential_diff(cusp, cusp + d) - shift, p.h_over_g(cusp + d)),
        lo,
        hi,
        guess,
        1e-16 * guess.abs().max(1e-300),
        1e-300,
        300,
    )
    .map(|d| cusp + d)
    .unwrap_or(f64::NAN)
}

/// `∫_0^β f(F(t − β)) / √t dt` in the original `t` variable, with `t = τ²`.
///
/// Past a pole the integrand blows up like `|τ − τ_n|^{-2/3}` where `F` hits a cusp;
/// those points are split off and resolved with `τ = τ_n ± w³`.
fn t_form_integral(model: &ShearModel, beta: f64, f: &dyn Fn(f64) -> f64) -> Result<f64> {
    let lv = Level::new(model, beta)?;
    let root_beta = beta.sqrt();
    let mut knots: Vec<(f64, Option<f64>)> = vec![(0.0, None)];
    for &e in &lv.cusps {
        let level = -model.material.potential(e);
        knots.push(((beta - level).sqrt(), Some(e)));
    }
    knots.push((root_beta, None));
    let opts = model.quad();
    let rule = gl64();
    let mat = &model.material;
    let plain = |tau: f64| {
        let th = mat.inverse_potential(tau * tau - beta).unwrap_or(f64::NAN);
        2.0 * f(th)
    };
    // τ = anchor + side·w³, with θ from the local inverse around the cusp
    let near = |anchor: f64, cusp: f64, side: f64, w: f64| {
        let w3 = w * w * w;
        let shift = side * w3 * (2.0 * anchor + side * w3);
        let th = invert_near_cusp(model, cusp, shift);
        2.0 * f(th) * 3.0 * w * w
    };
    let mut total = 0.0;
    for pair in knots.windows(2) {
        let ((a, ca), (b, cb)) = (pair[0], pair[1]);
        match (ca, cb) {
            (None, None) => total += quadrature::adaptive(rule, a, b, opts, plain)?,
            (Some(e), None) => {
                total += quadrature::adaptive(rule, 0.0, (b - a).cbrt(), opts, |w| near(a, e, 1.0, w))?;
            }
            (None, Some(e)) => {
                total += quadrature::adaptive(rule, 0.0, (b - a).cbrt(), opts, |w| near(b, e, -1.0, w))?;
            }
            (Some(ea), Some(eb)) => {
                let half = (0.5 * (b - a)).cbrt();
                total += quadrature::adaptive(rule, 0.0, half, opts, |w| near(a, ea, 1.0, w))?;
                total += quadrature::adaptive(rule, 0.0, half, opts, |w| near(b, eb, -1.0, w))?;
            }
        }
    }
    Ok(total)
}

/// `D(β)` from the `t`-form integrals; an independent route to [`d_value`].
pub fn d_value_t_form(model: &ShearModel, beta: f64) -> Result<f64> {
    let p = *model.params();
    let i_g = t_form_integral(model, beta, &|th| p.c(th) * p.g(th) / p.h(th))?;
    let i_1 = t_form_integral(model, beta, &|th| p.c(th) / p.h(th))?;
    Ok(i_g * i_1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingResult {
    pub beta: f64,
    pub p0: f64,
    pub ubar: f64,
    pub theta_end: f64,
}

/// Brute-force `ū` at level `β`: integrate the profile ODE from the turning point at
/// `x = 1/2`, adjust the flux `p` until `θ(1) = θ₀`, then read `ū = p ∫_0^1 1/g`.
pub fn shoot_ubar(model: &ShearModel, beta: f64) -> Result<ShootingResult> {
    let theta_tilde = turning_angle(model, beta)?;
    let params = *model.params();
    let th0 = params.theta0;
    let opts = model.ode();
    let run = |p: f64| -> Result<[f64; 3]> {
        let mut y = [theta_tilde, 0.0, 0.0];
        let rhs = |_x: f64, y: &[f64], d: &mut [f64]| {
            let (th, eta) = (y[0], y[1]);
            let c = params.c(th);
            d[0] = eta / (c * c);
            d[1] = params.c_prime(th) / (c * c * c) * eta * eta + params.h_over_g(th) * p;
            d[2] = 1.0 / params.g(th);
        };
        crate::ode::integrate(rhs, 0.5, &mut y, 1.0, opts)?;
        Ok(y)
    };
    let miss = |p: f64| run(p).map(|y| y[0] - th0).unwrap_or(f64::NAN);
    let mut lo = 1e-8;
    let mut hi = 1.0;
    if miss(lo) >= 0.0 {
        return Err(Error::RootFinding(format!("shooting: theta(1) overshoots already at p = {lo}")));
    }
    let mut f_hi = miss(hi);
    let mut guard = 0;
    while !(f_hi > 0.0) {
        if f_hi.is_nan() || guard > 80 {
            return Err(Error::RootFinding(format!("shooting: no bracket for the flux at beta = {beta}")));
        }
        lo = hi;
        hi *= 2.0;
        f_hi = miss(hi);
        guard += 1;
    }
    let f_lo = miss(lo);
    let p = roots::brent_root_with(miss, lo, hi, f_lo, f_hi, 1e-15 * hi, 300)?;
    let y = run(p)?;
    Ok(ShootingResult { beta, p0: p, ubar: 2.0 * p * y[2], theta_end: y[0] })
}

/// A stationary solution sampled on a uniform grid of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryProfile {
    pub beta: f64,
    pub theta_tilde: f64,
    pub p0: f64,
    pub ubar: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
}

/// JSON sidecar written next to a profile CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub beta: f64,
    pub theta_tilde: f64,
    pub p0: f64,
    pub ubar: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl StationaryProfile {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn mid(&self) -> usize {
        self.x.len() / 2
    }

    pub fn meta(&self) -> ProfileMeta {
        ProfileMeta { beta: self.beta, theta_tilde: self.theta_tilde, p0: self.p0, ubar: self.ubar, n: self.len() }
    }

    /// Worst violation of the boundary, turning-point and symmetry invariants.
    pub fn invariant_defect(&self, theta0: f64) -> f64 {
        let n = self.len();
        let m = self.mid();
        let mut worst = [
            self.u[0].abs(),
            (self.u[n - 1] - self.ubar).abs() / self.ubar.max(1.0),
            (self.theta[0] - theta0).abs(),
            (self.theta[n - 1] - theta0).abs(),
            self.eta[m].abs(),
            (self.theta[m] - self.theta_tilde).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        for i in 0..n {
            worst = worst.max((self.theta[i] - self.theta[n - 1 - i]).abs());
            worst = worst.max((self.eta[i] + self.eta[n - 1 - i]).abs());
        }
        worst
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| vec![self.x[i], self.u[i], self.theta[i], self.eta[i]]).collect()
    }

    /// Writes `<stem>.csv` (`x,u,theta,eta`) and `<stem>.json` (sidecar).
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        io::write_table_file(dir.join(format!("{stem}.csv")), &["x", "u", "theta", "eta"], &self.rows())?;
        io::write_json_file(dir.join(format!("{stem}.json")), &self.meta())
    }

    pub fn read(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: ProfileMeta = io::read_json_file(dir.join(format!("{stem}.json")))?;
        let table = io::read_table_file(dir.join(format!("{stem}.csv")))?;
        let col = |name: &str| table.column(name).ok_or_else(|| Error::Profile(format!("missing column {name}")));
        let profile = Self {
            beta: meta.beta,
            theta_tilde: meta.theta_tilde,
            p0: meta.p0,
            ubar: meta.ubar,
            x: col("x")?,
            u: col("u")?,
            theta: col("theta")?,
            eta: col("eta")?,
        };
        if profile.len() != meta.n {
            return Err(Error::Profile(format!("sidecar says N = {}, table has {} rows", meta.n, profile.len())));
        }
        Ok(profile)
    }
}

/// Reconstructs the profile at level `β` on the configured grid.
pub fn reconstruct_profile(model: &ShearModel, beta: f64) -> Result<StationaryProfile> {
    reconstruct_profile_on(model, beta, model.solver.profile_points)
}

/// Reconstructs the profile at level `β` on `n` points (odd).
///
/// For `x ≤ 1/2` the angle solves `Ψ(τ) = (1/2 − x)√(2p₀)` with
/// `Ψ(τ) = ∫_0^τ 2c(θ̃+σ²)/√reduced(σ) dσ`, marching outward from the turning point so
/// that each Newton solve only integrates over one grid cell. The right half follows
/// by the reflection symmetry of the orbit.
pub fn reconstruct_profile_on(model: &ShearModel, beta: f64, n: usize) -> Result<StationaryProfile> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidArgument(format!("profile grid must be odd and >= 3, got {n}")));
    }
    let lv = Level::new(model, beta)?;
    let p = *model.params();
    let th0 = p.theta0;
    let tau_max = lv.tau_end();
    let i_g = lv.tau_quad(tau_max, |th| p.c(th))?;
    let i_1 = lv.tau_quad(tau_max, |th| p.c(th) / p.g(th))?;
    let p0 = 2.0 * i_g * i_g;
    let ubar = 2.0 * i_g * i_1;
    let scale = (2.0 * p0).sqrt();
    let half_flux = (0.5 * p0).sqrt();

    let dist = |tau: f64| 2.0 * p.c(lv.theta_tilde + tau * tau) / lv.reduced(tau).sqrt();
    let speed = |tau: f64| {
        let th = lv.theta_tilde + tau * tau;
        2.0 * p.c(th) / (p.g(th) * lv.reduced(tau).sqrt())
    };

    let m = n / 2;
    let dx = 1.0 / (n - 1) as f64;
    let mut x: Vec<f64> = (0..n).map(|i| i as f64 * dx).collect();
    x[m] = 0.5;
    x[n - 1] = 1.0;
    let mut u = vec![0.0; n];
    let mut theta = vec![0.0; n];
    let mut eta = vec![0.0; n];
    theta[m] = lv.theta_tilde;
    u[m] = half_flux * i_1;

    let (mut tau_prev, mut psi_prev, mut su_prev) = (0.0, 0.0, 0.0);
    for i in (1..m).rev() {
        let target = (0.5 - x[i]) * scale;
        let residual = |tau: f64| psi_prev + gl20().integrate(tau_prev, tau, dist) - target;
        let tau = if residual(tau_max) <= 0.0 {
            tau_max
        } else {
            let guess = tau_prev + (target - psi_prev) / dist(tau_prev);
            roots::newton_bracketed(|t| (residual(t), dist(t)), tau_prev, tau_max, guess, 1e-15, 1e-300, 200)
                .map_err(|e| Error::Profile(format!("angle inversion failed at x = {}: {e}", x[i])))?
        };
        let psi = target;
        let su = su_prev + gl20().integrate(tau_prev, tau, speed);
        let th = lv.theta_tilde + tau * tau;
        theta[i] = th;
        u[i] = half_flux * (i_1 - su);
        eta[i] = -p.c(th) * (2.0 * p0 * tau * tau * lv.reduced(tau)).sqrt();
        tau_prev = tau;
        psi_prev = psi;
        su_prev = su;
    }
    theta[0] = th0;
    u[0] = 0.0;
    eta[0] = -p.c(th0) * (2.0 * p0 * beta).sqrt();
    for i in m + 1..n {
        let j = n - 1 - i;
        theta[i] = theta[j];
        eta[i] = -eta[j];
        u[i] = ubar - u[j];
    }
    Ok(StationaryProfile { beta, theta_tilde: lv.theta_tilde, p0, ubar, x, u, theta, eta })
}

/// Maximum drift of the three first integrals along a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedDrift {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    /// `H₂` at `x = 0`, which equals `p₀β` on an exact orbit.
    pub h2_start: f64,
}

/// Evaluates `H₁ = p`, `H₂ = η²/(2c²) − pG(θ)` and the `u`-minus-quadrature integral `H₃`
/// at every grid point and returns their largest deviations from the `x = 0` values.
///
/// `p` is read from the grid as `g(θ) u_x` with an eighth-order difference.
pub fn conserved_drift(model: &ShearModel, profile: &StationaryProfile) -> Result<ConservedDrift> {
    let p = *model.params();
    let mat = &model.material;
    let n = profile.len();
    let dx = profile.x[1] - profile.x[0];
    let ux = grid_derivative(&profile.u, dx);
    let h1_start = profile.p0;
    let h2_of = |i: usize| {
        let c = p.c(profile.theta[i]);
        profile.eta[i] * profile.eta[i] / (2.0 * c * c) - profile.p0 * mat.potential(profile.theta[i])
    };
    let h2_start = h2_of(0);

    let th_t = profile.theta_tilde;
    let reduced = |tau: f64| reduced_potential(model, th_t, tau);
    let speed = |tau: f64| {
        let th = th_t + tau * tau;
        2.0 * p.c(th) / (p.g(th) * reduced(tau).sqrt())
    };
    let tau_of = |th: f64| (th - th_t).max(0.0).sqrt();
    let tau_max = tau_of(p.theta0);
    let opts = model.quad();
    let full = quadrature::adaptive(gl20(), 0.0, tau_max, opts, speed)?;
    let half_flux = (0.5 * profile.p0).sqrt();

    let (mut d1, mut d2, mut d3) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        let th = profile.theta[i];
        d1 = d1.max((p.g(th) * ux[i] - h1_start).abs());
        d2 = d2.max((h2_of(i) - h2_start).abs());
        let partial = quadrature::adaptive(gl20(), 0.0, tau_of(th), opts, speed)?;
        let s = if profile.x[i] <= 0.5 { full - partial } else { full + partial };
        d3 = d3.max((profile.u[i] - half_flux * s - profile.u[0]).abs());
    }
    Ok(ConservedDrift { h1: d1, h2: d2, h3: d3, h2_start })
}

/// First derivative on a uniform grid from nine-point Fornberg stencils
/// (centered in the interior, shifted at the ends).
fn grid_derivative(v: &[f64], dx: f64) -> Vec<f64> {
    const WIDTH: usize = 9;
    let n = v.len();
    if n < WIDTH {
        return (0..n)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                (v[b] - v[a]) / ((b - a) as f64 * dx)
            })
            .collect();
    }
    let mut cache: Vec<Option<[f64; WIDTH]>> = vec![None; WIDTH];
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(WIDTH / 2).min(n - WIDTH);
            let offset = i - start;
            let w = *cache[offset].get_or_insert_with(|| {
                let nodes: Vec<f64> = (0..WIDTH).map(|k| k as f64 - offset as f64).collect();
                let mut w = [0.0; WIDTH];
                w.copy_from_slice(&fornberg_first(&nodes));
                w
            });
            (0..WIDTH).map(|k| w[k] * v[start + k]).sum::<f64>() / dx
        })
        .collect()
}

/// Fornberg weights for the first derivative at 0 on the given nodes.
fn fornberg_first(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![[0.0f64; 2]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0];
    for i in 1..n {
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i];
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                c[i][1] = c1 * (c[i - 1][0] - c5 * c[i - 1][1]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            c[j][1] = (c4 * c[j][1] - c[j][0]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|r| r[1]).collect()
}

/// Largest interior residual of `(g u_x)_x = 0`, `c(cθ_x)_x − h u_x = 0` under
/// second-order central differences.
pub fn discrete_residual(model: &ShearModel, profile: &StationaryProfile) -> f64 {
    let p = model.params();
    let (u, th) = (&profile.u, &profile.theta);
    let n = profile.len();
    let dx = profile.x[1] - profile.x[0];
    let mut worst = 0.0f64;
    for i in 1..n - 1 {
        let (lm, rm) = (0.5 * (th[i - 1] + th[i]), 0.5 * (th[i] + th[i + 1]));
        let flux = (p.g(rm) * (u[i + 1] - u[i]) - p.g(lm) * (u[i] - u[i - 1])) / (dx * dx);
        let bend = p.c(th[i]) * (p.c(rm) * (th[i + 1] - th[i]) - p.c(lm) * (th[i] - th[i - 1])) / (dx * dx);
        let couple = p.h(th[i]) * (u[i + 1] - u[i - 1]) / (2.0 * dx);
        worst = worst.max(flux.abs()).max((bend - couple).abs());
    }
    worst
}

/// `D` sampled on a grid of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DScan {
    pub betas: Vec<f64>,
    pub values: Vec<f64>,
}

/// Levels inside `(lo, hi)`: uniform in the bulk and geometrically refined toward
/// both ends, where `D` either vanishes or diverges.
pub fn scan_levels(lo: f64, hi: f64, bulk: usize) -> Vec<f64> {
    let w = hi - lo;
    let mut s: Vec<f64> = (1..bulk).map(|k| k as f64 / bulk as f64).collect();
    let first = 1.0 / bulk as f64;
    for k in 1..=36 {
        let d = first * 10f64.powf(-(k as f64) / 4.0);
        s.push(d);
        s.push(1.0 - d);
    }
    s.sort_by(f64::total_cmp);
    s.dedup();
    s.into_iter().map(|t| lo + t * w).filter(|&b| b > lo && b < hi).collect()
}

fn check_interval(model: &ShearModel, interval: (f64, f64)) -> Result<()> {
    let (lo, hi) = interval;
    if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad level interval ({lo}, {hi})")));
    }
    for (i, pole) in model.poles().iter().enumerate() {
        let guard = model.solver.pole_guard * pole.beta;
        if pole.beta > lo + guard && pole.beta < hi - guard {
            return Err(Error::Pole { beta: pole.beta, pole: pole.beta, index: i + 1 });
        }
    }
    Ok(())
}

/// Samples `D` on the scan grid of an interval, skipping levels inside the pole guard.
pub fn scan_d(model: &ShearModel, interval: (f64, f64), bulk: usize) -> Result<DScan> {
    check_interval(model, interval)?;
    let mut betas = Vec::new();
    let mut values = Vec::new();
    for b in scan_levels(interval.0, interval.1, bulk) {
        match d_value(model, b) {
            Ok(v) => {
                betas.push(b);
                values.push(v);
            }
            Err(Error::Pole { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(DScan { betas, values })
}

/// Roots of `2D(β) = ū` bracketed by sign changes on a precomputed scan.
pub fn roots_on_scan(model: &ShearModel, scan: &DScan, ubar: f64) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let miss = |b: f64| d_value(model, b).map(|d| 2.0 * d - ubar).unwrap_or(f64::NAN);
    for k in 0..scan.betas.len().saturating_sub(1) {
        let (fa, fb) = (2.0 * scan.values[k] - ubar, 2.0 * scan.values[k + 1] - ubar);
        if fa == 0.0 {
            out.push(scan.betas[k]);
            continue;
        }
        if fa.signum() == fb.signum() {
            continue;
        }
        let (a, b) = (scan.betas[k], scan.betas[k + 1]);
        let root = roots::brent_root_with(miss, a, b, fa, fb, model.solver.root_tol * b.max(1e-3) * 1e-3, 300)?;
        out.push(root);
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// All levels `β` in the open interval with `2D(β) = ū`, ascending.
pub fn solve_ubar(model: &ShearModel, ubar: f64, interval: (f64, f64)) -> Result<Vec<f64>> {
    if !(ubar > 0.0) {
        return Err(Error::InvalidArgument(format!("shear speed must be positive, got {ubar}")));
    }
    let scan = scan_d(model, interval, 96)?;
    roots_on_scan(model, &scan, ubar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DSample {
    pub beta: f64,
    pub d: f64,
    pub d_prime: f64,
}

pub fn sweep(model: &ShearModel, betas: &[f64]) -> Result<Vec<DSample>> {
    betas
        .iter()
        .map(|&beta| {
            let lv = level_integrals(model, beta)?;
            Ok(DSample { beta, d: lv.d(), d_prime: lv.d_prime() })
        })
        .collect()
}

pub fn write_sweep(path: impl AsRef<Path>, samples: &[DSample]) -> Result<()> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| vec![s.beta, s.d, s.d_prime]).collect();
    io::write_table_file(path, &["beta", "D", "Dprime"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ShearModel {
        ShearModel::default()
    }

    #[test]
    fn first_pole_of_default_material() {
        let m = model();
        let b1 = m.poles()[0].beta;
        assert!((b1 - 0.218_212_8).abs() < 1e-6, "{b1}");
    }

    #[test]
    fn d_vanishes_at_zero_level() {
        let m = model();
        let (a, b) = (d_value(&m, 1e-4).unwrap(), d_value(&m, 1e-3).unwrap());
        assert!(0.0 < a && a < b && b < 0.1, "{a} {b}");
    }

    #[test]
    fn d_diverges_toward_first_pole() {
        let m = model();
        let b1 = m.poles()[0].beta;
        let vals: Vec<f64> = (2..=6).map(|k| d_value(&m, b1 * (1.0 - 10f64.powi(-k))).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]), "{vals:?}");
    }

    #[test]
    fn analytic_derivative_matches_difference_quotient() {
        let m = model();
        for beta in [0.5 * m.poles()[0].beta, 0.5, 0.9] {
            let h = 1e-5;
            let fd = (d_value(&m, beta + h).unwrap() - d_value(&m, beta - h).unwrap()) / (2.0 * h);
            let an = d_prime(&m, beta).unwrap();
            assert!((fd - an).abs() < 1e-5 * an.abs().max(1e-3), "beta {beta}: fd {fd} analytic {an}");
        }
    }

    #[test]
    fn pole_guard_faults() {
        let m = model();
        let b1 = m.poles()[0].beta;
        assert!(matches!(d_value(&m, b1 * (1.0 + 1e-10)), Err(Error::Pole { index: 1, .. })));
        assert!(matches!(d_value(&m, -0.1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn t_form_agrees_with_theta_form() {
        let m = model();
        for beta in [0.05, 0.15, 0.4, 0.8, 1.1] {
            let a = d_value(&m, beta).unwrap();
            let b = d_value_t_form(&m, beta).unwrap();
            assert!((a - b).abs() < 1e-8 * a, "beta {beta}: {a} vs {b}");
        }
    }

    #[test]
    fn shooting_reproduces_ubar() {
        let m = model();
        let beta = 0.5 * m.poles()[0].beta;
        let shot = shoot_ubar(&m, beta).unwrap();
        let lv = level_integrals(&m, beta).unwrap();
        assert!((shot.ubar - lv.ubar()).abs() < 1e-6 * lv.ubar(), "{} vs {}", shot.ubar, lv.ubar());
        assert!((shot.p0 - lv.p0()).abs() < 1e-6 * lv.p0());
    }

    #[test]
    fn profile_invariants_and_first_integrals() {
        let m = model();
        for beta in [0.1, 0.6] {
            let prof = reconstruct_profile(&m, beta).unwrap();
            assert!(prof.invariant_defect(m.material.theta0()) < 1e-9, "beta {beta}");
            let drift = conserved_drift(&m, &prof).unwrap();
            assert!(drift.h1 < 1e-7 && drift.h2 < 1e-7 && drift.h3 < 1e-7, "{drift:?}");
            assert!((drift.h2_start - prof.p0 * beta).abs() < 1e-9 * prof.p0.max(1.0));
        }
    }

    #[test]
    fn stencil_differentiates_polynomials_exactly() {
        let dx = 0.1;
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * dx).powi(8)).collect();
        let d = grid_derivative(&v, dx);
        for (i, di) in d.iter().enumerate() {
            let exact = 8.0 * (i as f64 * dx).powi(7);
            assert!((di - exact).abs() < 1e-7 * exact.max(1.0), "{i}: {di} vs {exact}");
        }
    }

    #[test]
    fn residual_is_second_order() {
        let m = model();
        let coarse = discrete_residual(&m, &reconstruct_profile_on(&m, 0.1, 129).unwrap());
        let fine = discrete_residual(&m, &reconstruct_profile_on(&m, 0.1, 257).unwrap());
        let ratio = coarse / fine;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn small_ubar_has_one_root_on_first_interval() {
        let m = model();
        let b1 = m.poles()[0].beta;
        let roots = solve_ubar(&m, 0.05, (0.0, b1)).unwrap();
        assert_eq!(roots.len(), 1);
        let d = d_value(&m, roots[0]).unwrap();
        assert!((2.0 * d - 0.05).abs() < 1e-10);
    }

    #[test]
    fn interval_across_pole_faults() {
        let m = model();
        assert!(matches!(solve_ubar(&m, 1.0, (0.1, 0.5)), Err(Error::Pole { .. })));
    }
}
