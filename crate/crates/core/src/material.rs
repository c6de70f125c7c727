//! Material parameters, pointwise coefficient functions and the potential `G`.
//!
//! For a director angle `θ` measured from the flow direction the shear-flow system
//! is driven by three coefficient functions
//!
//! ```text
//! g(θ)  = α₁ sin²θ cos²θ + (α₅ − α₂)/2 sin²θ + (α₃ + α₆)/2 cos²θ + α₄/2
//! h(θ)  = (γ₁ + γ₂ cos 2θ)/2
//! c²(θ) = K₁ cos²θ + K₃ sin²θ
//! ```
//!
//! and by the potential `G(θ) = ∫_{θ₀}^{θ} h/g`, which is monotone whenever
//! `γ₁ ≥ |γ₂|`. Its inverse is `F`. The zeros `e_n` of `h` (present only when
//! `γ₁ = |γ₂|`) are cusp equilibria of the stationary Hamiltonian system and their
//! levels `β_n = −G(e_n)` are the poles of the bifurcation map.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, gl20, QuadOptions};
use crate::roots;

/// Leslie viscosities, elastic constants and the boundary angle.
///
/// `γ₁ = α₃ − α₂` and `γ₂ = α₆ − α₅` are always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
    pub alpha6: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K3")]
    pub k3: f64,
    pub theta0: f64,
}

impl Default for MaterialParams {
    /// The canonical critical configuration with `γ₁ = 1 = −γ₂`.
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: -1.0,
            alpha3: 0.0,
            alpha4: 2.0,
            alpha5: 0.5,
            alpha6: -0.5,
            k1: 1.0,
            k3: 1.0,
            theta0: PI / 3.0,
        }
    }
}

/// Which of the supported `γ₁` versus `|γ₂|` regimes a parameter set falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `γ₁ = −γ₂`: equilibria at `nπ`.
    AntiAligned,
    /// `γ₁ = γ₂`: equilibria at `(2n+1)π/2`.
    Aligned,
    /// `γ₁ > |γ₂|`: no equilibria, `h > 0`.
    Dominant,
    /// `γ₁ < |γ₂|`: periodic and heteroclinic orbits; not supported.
    Unsupported,
}

impl Regime {
    pub fn is_critical(self) -> bool {
        matches!(self, Regime::AntiAligned | Regime::Aligned)
    }
}

const REGIME_TOL: f64 = 1e-12;

impl MaterialParams {
    pub fn gamma1(&self) -> f64 {
        self.alpha3 - self.alpha2
    }

    pub fn gamma2(&self) -> f64 {
        self.alpha6 - self.alpha5
    }

    pub fn regime(&self) -> Regime {
        let (g1, g2) = (self.gamma1(), self.gamma2());
        let tol = REGIME_TOL * g1.abs().max(1.0);
        if (g1 - g2.abs()).abs() <= tol {
            if g2 < 0.0 {
                Regime::AntiAligned
            } else {
                Regime::Aligned
            }
        } else if g1 > g2.abs() {
            Regime::Dominant
        } else {
            Regime::Unsupported
        }
    }

    pub fn g(&self, th: f64) -> f64 {
        let (s, c) = th.sin_cos();
        let (s2, c2) = (s * s, c * c);
        self.alpha1 * s2 * c2 + 0.5 * (self.alpha5 - self.alpha2) * s2 + 0.5 * (self.alpha3 + self.alpha6) * c2
            + 0.5 * self.alpha4
    }

    pub fn g_prime(&self, th: f64) -> f64 {
        let s2t = (2.0 * th).sin();
        let c2t = (2.0 * th).cos();
        let a = 0.5 * (self.alpha5 - self.alpha2);
        let b = 0.5 * (self.alpha3 + self.alpha6);
        self.alpha1 * s2t * c2t + (a - b) * s2t
    }

    pub fn h(&self, th: f64) -> f64 {
        0.5 * (self.gamma1() + self.gamma2() * (2.0 * th).cos())
    }

    pub fn h_prime(&self, th: f64) -> f64 {
        -self.gamma2() * (2.0 * th).sin()
    }

    pub fn c2(&self, th: f64) -> f64 {
        let (s, c) = th.sin_cos();
        self.k1 * c * c + self.k3 * s * s
    }

    pub fn c(&self, th: f64) -> f64 {
        self.c2(th).sqrt()
    }

    pub fn c_prime(&self, th: f64) -> f64 {
        0.5 * (self.k3 - self.k1) * (2.0 * th).sin() / self.c(th)
    }

    pub fn c_second(&self, th: f64) -> f64 {
        let cp = self.c_prime(th);
        ((self.k3 - self.k1) * (2.0 * th).cos() - cp * cp) / self.c(th)
    }

    /// `h/g`, the derivative of the potential.
    pub fn h_over_g(&self, th: f64) -> f64 {
        self.h(th) / self.g(th)
    }

    /// `(h/g)'`.
    pub fn h_over_g_prime(&self, th: f64) -> f64 {
        let g = self.g(th);
        (self.h_prime(th) * g - self.h(th) * self.g_prime(th)) / (g * g)
    }

    /// Effective damping `g − h²/γ₁`.
    pub fn damping(&self, th: f64) -> f64 {
        let h = self.h(th);
        self.g(th) - h * h / self.gamma1()
    }

    /// `(cg/h)'`.
    pub fn cg_over_h_prime(&self, th: f64) -> f64 {
        let (c, g, h) = (self.c(th), self.g(th), self.h(th));
        ((self.c_prime(th) * g + c * self.g_prime(th)) * h - c * g * self.h_prime(th)) / (h * h)
    }

    /// `(c/h)'`.
    pub fn c_over_h_prime(&self, th: f64) -> f64 {
        let (c, h) = (self.c(th), self.h(th));
        (self.c_prime(th) * h - c * self.h_prime(th)) / (h * h)
    }

    /// Zeros of `h` in `[lo, hi]`, ascending. Empty outside the critical regimes.
    pub fn equilibrium_angles(&self, lo: f64, hi: f64) -> Vec<f64> {
        let offset = match self.regime() {
            Regime::AntiAligned => 0.0,
            Regime::Aligned => FRAC_PI_2,
            _ => return Vec::new(),
        };
        periodic_points(offset, lo, hi)
    }

    /// Minimizers of `h` in `[lo, hi]`. They coincide with the equilibria in the critical
    /// regimes and mark the ghost equilibria (local maxima of `D`) when `γ₁ > |γ₂|`.
    pub fn h_minimizers(&self, lo: f64, hi: f64) -> Vec<f64> {
        let g2 = self.gamma2();
        if g2 == 0.0 {
            return Vec::new();
        }
        let offset = if g2 < 0.0 { 0.0 } else { FRAC_PI_2 };
        periodic_points(offset, lo, hi)
    }

    /// Lower and upper bounds of `c` over all angles.
    pub fn c_bounds(&self) -> (f64, f64) {
        let (a, b) = (self.k1.sqrt(), self.k3.sqrt());
        (a.min(b), a.max(b))
    }

    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        let mut push = |name: &str, margin: f64| {
            checks.push(Check { name: name.to_string(), passed: margin > 0.0, margin });
        };
        let fields = [
            self.alpha1, self.alpha2, self.alpha3, self.alpha4, self.alpha5, self.alpha6, self.k1, self.k3,
            self.theta0,
        ];
        let finite = fields.iter().all(|v| v.is_finite());
        push("all parameters finite", if finite { 1.0 } else { -1.0 });
        let (g1, g2) = (self.gamma1(), self.gamma2());
        let parodi = (self.alpha2 + self.alpha3) - (self.alpha6 - self.alpha5);
        push("alpha2 + alpha3 = alpha6 - alpha5", 1e-12 - parodi.abs());
        push("alpha4 > 0", self.alpha4);
        push(
            "2 alpha1 + 3 alpha4 + 2 alpha5 + 2 alpha6 > 0",
            2.0 * self.alpha1 + 3.0 * self.alpha4 + 2.0 * self.alpha5 + 2.0 * self.alpha6,
        );
        push("gamma1 > 0", g1);
        let s = 2.0 * self.alpha4 + self.alpha5 + self.alpha6;
        push("2 alpha4 + alpha5 + alpha6 > 0", s);
        let q = self.alpha2 + self.alpha3 + g2;
        push("4 gamma1 (2 alpha4 + alpha5 + alpha6) > (alpha2 + alpha3 + gamma2)^2", 4.0 * g1 * s - q * q);
        push("K1 > 0", self.k1);
        push("K3 > 0", self.k3);
        let c_bar = if finite && g1 > 0.0 { self.min_damping() } else { f64::NAN };
        push("min(g - h^2/gamma1) > 0", if c_bar.is_nan() { -1.0 } else { c_bar });
        push("gamma1 >= |gamma2|", g1 - g2.abs() + REGIME_TOL * g1.abs().max(1.0));
        let dist = self
            .equilibrium_angles(self.theta0 - PI, self.theta0 + PI)
            .iter()
            .map(|e| (e - self.theta0).abs())
            .fold(f64::INFINITY, f64::min);
        push("theta0 away from equilibria", if dist.is_finite() { dist - 1e-8 } else { 1.0 });
        let ok = checks.iter().all(|c| c.passed);
        ValidationReport { ok, checks, c_bar, gamma1: g1, gamma2: g2, regime: self.regime() }
    }

    /// `min_θ (g − h²/γ₁)` by a dense scan over one period and Brent refinement.
    pub fn min_damping(&self) -> f64 {
        let n = 4096;
        let mut best = (0.0, f64::INFINITY);
        for i in 0..=n {
            let th = PI * i as f64 / n as f64;
            let v = self.damping(th);
            if v < best.1 {
                best = (th, v);
            }
        }
        let step = PI / n as f64;
        let (_, v) = roots::brent_minimize(|t| self.damping(t), best.0 - step, best.0 + step, 1e-12, 200);
        v.min(best.1)
    }
}

fn periodic_points(offset: f64, lo: f64, hi: f64) -> Vec<f64> {
    let k0 = ((lo - offset) / PI).ceil() as i64;
    let k1 = ((hi - offset) / PI).floor() as i64;
    (k0..=k1).map(|k| offset + k as f64 * PI).collect()
}

/// One named inequality with its signed slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub checks: Vec<Check>,
    /// Lower bound of the effective damping.
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub c_bar: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub regime: Regime,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// A cusp equilibrium together with its Hamiltonian level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub angle: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub regime: Regime,
    /// All equilibrium angles `e_n` in the window, ascending.
    pub e_n: Vec<f64>,
    /// Equilibria with positive level `β_n = −G(e_n)`, ascending in `β`.
    pub beta_n: Vec<Pole>,
}

/// Material parameters bundled with a cached potential over a working window.
///
/// Immutable once built; a parameter change means building a new value.
#[derive(Debug, Clone)]
pub struct Material {
    params: MaterialParams,
    window: (f64, f64),
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
    quad: QuadOptions,
}

impl Material {
    /// Default working window: four half-turns on each side of `θ₀`.
    pub fn new(params: MaterialParams) -> Self {
        let w = 4.0 * PI;
        Self::with_window(params, (params.theta0 - w, params.theta0 + w), 1e-12)
    }

    pub fn with_window(params: MaterialParams, window: (f64, f64), tol: f64) -> Self {
        let (lo, hi) = (window.0.min(params.theta0), window.1.max(params.theta0));
        let width = PI / 16.0;
        let below = ((params.theta0 - lo) / width).ceil() as usize;
        let above = ((hi - params.theta0) / width).ceil() as usize;
        let nodes: Vec<f64> = (0..=below + above)
            .map(|i| params.theta0 + (i as f64 - below as f64) * width)
            .collect();
        let quad = QuadOptions::with_tol(tol);
        let mut cumulative = vec![0.0; nodes.len()];
        for i in (0..below).rev() {
            let piece = quadrature::adaptive(gl20(), nodes[i + 1], nodes[i], QuadOptions::with_tol(1e-15), |t| {
                params.h_over_g(t)
            })
            .unwrap_or_else(|_| gl20().integrate(nodes[i + 1], nodes[i], |t| params.h_over_g(t)));
            cumulative[i] = cumulative[i + 1] + piece;
        }
        for i in below..nodes.len() - 1 {
            let piece = quadrature::adaptive(gl20(), nodes[i], nodes[i + 1], QuadOptions::with_tol(1e-15), |t| {
                params.h_over_g(t)
            })
            .unwrap_or_else(|_| gl20().integrate(nodes[i], nodes[i + 1], |t| params.h_over_g(t)));
            cumulative[i + 1] = cumulative[i] + piece;
        }
        let window = (nodes[0], nodes[nodes.len() - 1]);
        Self { params, window, nodes, cumulative, quad }
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn theta0(&self) -> f64 {
        self.params.theta0
    }

    /// Range of `G` over the working window.
    pub fn potential_range(&self) -> (f64, f64) {
        (self.cumulative[0], self.cumulative[self.cumulative.len() - 1])
    }

    fn panel_of(&self, th: f64) -> usize {
        let width = self.nodes[1] - self.nodes[0];
        let k = ((th - self.nodes[0]) / width).floor();
        (k.max(0.0) as usize).min(self.nodes.len() - 2)
    }

    /// `G(θ) = ∫_{θ₀}^{θ} h/g`.
    pub fn potential(&self, th: f64) -> f64 {
        if th >= self.window.0 && th <= self.window.1 {
            let k = self.panel_of(th);
            self.cumulative[k] + gl20().integrate(self.nodes[k], th, |t| self.params.h_over_g(t))
        } else {
            self.potential_direct(th).unwrap_or(f64::NAN)
        }
    }

    /// `G(θ)` by adaptive quadrature from `θ₀`, bypassing the cache.
    pub fn potential_direct(&self, th: f64) -> Result<f64> {
        let th0 = self.params.theta0;
        let n = ((th - th0).abs() / (PI / 8.0)).ceil().max(1.0) as usize;
        let breaks: Vec<f64> = (0..=n).map(|i| th0 + (th - th0) * i as f64 / n as f64).collect();
        quadrature::adaptive_with_breaks(gl20(), &breaks, self.quad, &mut |t| self.params.h_over_g(t))
    }

    /// `G(b) − G(a)`, accurate in the relative sense when `a` and `b` are close.
    pub fn potential_diff(&self, a: f64, b: f64) -> f64 {
        let width = self.nodes[1] - self.nodes[0];
        if (b - a).abs() <= width {
            gl20().integrate(a, b, |t| self.params.h_over_g(t))
        } else {
            self.potential(b) - self.potential(a)
        }
    }

    /// `F(s)`, the inverse of the potential on the working window.
    pub fn inverse_potential(&self, s: f64) -> Result<f64> {
        let (lo, hi) = self.potential_range();
        if !(s >= lo && s <= hi) {
            return Err(Error::Range { value: s, lo, hi });
        }
        // cumulative is non-decreasing
        let k = match self.cumulative.partition_point(|&v| v <= s) {
            0 => 0,
            p => (p - 1).min(self.nodes.len() - 2),
        };
        let (a, b) = (self.nodes[k], self.nodes[k + 1]);
        let (ga, gb) = (self.cumulative[k], self.cumulative[k + 1]);
        if s == ga {
            return Ok(a);
        }
        if s == gb {
            return Ok(b);
        }
        let guess = a + (b - a) * (s - ga) / (gb - ga);
        roots::newton_bracketed(
            |t| (ga + gl20().integrate(a, t, |z| self.params.h_over_g(z)) - s, self.params.h_over_g(t)),
            a,
            b,
            guess,
            1e-15,
            1e-14,
            200,
        )
    }

    /// Equilibria `e_n` in the window and the positive pole levels `β_n = −G(e_n)`.
    pub fn equilibria(&self, lo: f64, hi: f64) -> EquilibriumSet {
        let e_n = self.params.equilibrium_angles(lo, hi);
        let mut beta_n: Vec<Pole> = e_n
            .iter()
            .map(|&e| Pole { angle: e, beta: -self.potential(e) })
            .filter(|p| p.beta > 0.0)
            .collect();
        beta_n.sort_by(|a, b| a.beta.total_cmp(&b.beta));
        EquilibriumSet { regime: self.params.regime(), e_n, beta_n }
    }

    /// Poles over the whole working window, ascending in `β`.
    pub fn poles(&self) -> Vec<Pole> {
        self.equilibria(self.window.0, self.window.1).beta_n
    }

    /// Levels where `D` is singular (critical regimes) or has its ghost maxima
    /// (`γ₁ > |γ₂|`), ascending in `β`.
    pub fn interval_markers(&self) -> Vec<Pole> {
        let mut m: Vec<Pole> = self
            .params
            .h_minimizers(self.window.0, self.window.1)
            .into_iter()
            .map(|e| Pole { angle: e, beta: -self.potential(e) })
            .filter(|p| p.beta > 0.0)
            .collect();
        m.sort_by(|a, b| a.beta.total_cmp(&b.beta));
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p0() -> MaterialParams {
        MaterialParams::default()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn canonical_parameters_validate() {
        let r = p0().validate();
        assert!(r.ok, "{:?}", r.failures().collect::<Vec<_>>());
        assert_eq!(r.gamma1, 1.0);
        assert_eq!(r.gamma2, -1.0);
        assert!((r.c_bar - 0.75).abs() < 1e-12, "{}", r.c_bar);
        assert_eq!(r.regime, Regime::AntiAligned);
    }

    #[test]
    fn negative_alpha4_fails_by_name() {
        let p = MaterialParams { alpha4: -1.0, ..p0() };
        let r = p.validate();
        assert!(!r.ok);
        assert!(r.failures().any(|c| c.name == "alpha4 > 0"));
    }

    #[test]
    fn theta0_on_equilibrium_is_rejected() {
        let p = MaterialParams { theta0: PI, ..p0() };
        let r = p.validate();
        assert!(r.failures().any(|c| c.name == "theta0 away from equilibria"));
    }

    #[test]
    fn coefficient_values() {
        let p = p0();
        assert!(close(p.g(0.0), 0.75, 1e-15));
        assert!(p.h(0.0).abs() < 1e-15);
        assert!(close(p.c(0.0), 1.0, 1e-15));
        assert!(close(p.g(FRAC_PI_2), 1.75, 1e-15));
        assert!(close(p.h(FRAC_PI_2), 1.0, 1e-15));
        let q = MaterialParams { k3: 4.0, ..p };
        assert!(close(q.c(FRAC_PI_2), 2.0, 1e-15));
        assert!(q.c_prime(FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn h_matches_leslie_form() {
        let p = p0();
        for i in 0..50 {
            let t = -3.0 + 0.13 * i as f64;
            let leslie = p.alpha3 * t.cos().powi(2) - p.alpha2 * t.sin().powi(2);
            assert!(close(p.h(t), leslie, 1e-14));
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = MaterialParams { k3: 4.0, ..p0() };
        let e = 1e-5;
        let fd = |f: &dyn Fn(f64) -> f64, t: f64| (f(t + e) - f(t - e)) / (2.0 * e);
        for i in 0..40 {
            let t = -2.0 + 0.11 * i as f64;
            let check = |a: f64, b: f64| {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "t={t}: {a} vs {b}");
            };
            check(p.g_prime(t), fd(&|x| p.g(x), t));
            check(p.h_prime(t), fd(&|x| p.h(x), t));
            check(p.c_prime(t), fd(&|x| p.c(x), t));
            check(p.c_second(t), fd(&|x| p.c_prime(x), t));
            check(p.h_over_g_prime(t), fd(&|x| p.h_over_g(x), t));
        }
    }

    #[test]
    fn damping_bounded_below_by_c_bar() {
        for p in [p0(), MaterialParams { k3: 4.0, ..p0() }] {
            let cb = p.min_damping();
            for i in 0..2000 {
                let t = -5.0 + 0.005 * i as f64;
                let h = p.h(t);
                assert!(p.g(t) >= p.damping(t));
                assert!(p.damping(t) >= cb - 1e-12);
                assert!(h >= 0.0);
                let _ = h;
            }
        }
    }

    #[test]
    fn potential_basics() {
        let m = Material::new(p0());
        assert_eq!(m.potential(p0().theta0), 0.0);
        assert!(m.potential(0.0) < 0.0);
        // monotone
        let mut prev = f64::NEG_INFINITY;
        for i in 0..400 {
            let t = -6.0 + 0.03 * i as f64;
            let v = m.potential(t);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn potential_matches_direct_quadrature() {
        let m = Material::new(p0());
        for t in [-7.0, -3.3, -0.2, 0.5, 2.0, 5.5] {
            let a = m.potential(t);
            let b = m.potential_direct(t).unwrap();
            assert!((a - b).abs() < 1e-12, "{t}: {a} vs {b}");
        }
    }

    #[test]
    fn inverse_round_trip_and_range_fault() {
        let m = Material::new(p0());
        assert!((m.inverse_potential(0.0).unwrap() - p0().theta0).abs() < 1e-14);
        for i in 0..60 {
            let t = -8.0 + 0.27 * i as f64;
            let s = m.potential(t);
            let back = m.inverse_potential(s).unwrap();
            // flat cusps make the inverse ill conditioned in theta, not in G
            assert!((m.potential(back) - s).abs() < 1e-12);
            if p0().h(t).abs() > 1e-3 {
                assert!((back - t).abs() < 1e-8, "{t} -> {back}");
            }
        }
        let (_, hi) = m.potential_range();
        assert!(matches!(m.inverse_potential(hi + 1.0), Err(Error::Range { .. })));
    }

    #[test]
    fn equilibria_by_regime() {
        let m = Material::new(p0());
        let set = m.equilibria(-PI, 4.0 * PI);
        let expect: Vec<f64> = (-1..=4).map(|k| k as f64 * PI).collect();
        assert_eq!(set.e_n.len(), expect.len());
        for (a, b) in set.e_n.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        for p in &set.beta_n {
            assert!(p0().h(p.angle).abs() < 1e-15);
            assert!(p.beta > 0.0);
        }
        assert!(set.beta_n.windows(2).all(|w| w[0].beta < w[1].beta));

        let aligned = MaterialParams { alpha2: 0.0, alpha3: 1.0, alpha5: -0.5, alpha6: 0.5, ..p0() };
        assert_eq!(aligned.regime(), Regime::Aligned);
        assert!(aligned.validate().ok);
        let e = Material::new(aligned).equilibria(0.0, 2.0 * PI).e_n;
        assert_eq!(e.len(), 2);
        assert!((e[0] - FRAC_PI_2).abs() < 1e-15 && (e[1] - 1.5 * PI).abs() < 1e-14);

        let dominant = MaterialParams { alpha2: -1.0, alpha3: 0.2, alpha5: 0.4, alpha6: -0.4, ..p0() };
        assert_eq!(dominant.regime(), Regime::Dominant);
        assert!(Material::new(dominant).equilibria(-10.0, 10.0).e_n.is_empty());
    }

    #[test]
    fn inverse_near_pole_image_lands_on_cusp() {
        let m = Material::new(p0());
        let pole = m.poles()[0];
        let s = -pole.beta - 1e-9;
        let th = m.inverse_potential(s).unwrap();
        assert!(p0().h(th) < 1e-4, "h = {}", p0().h(th));
        // bisection oracle on G
        let oracle = roots::brent_root(|t| m.potential(t) - s, pole.angle - 1.0, pole.angle + 0.5, 1e-15, 400).unwrap();
        assert!((th - oracle).abs() < 1e-6);
    }
}
