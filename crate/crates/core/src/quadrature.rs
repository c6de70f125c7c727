//! Gauss–Legendre rules and an adaptive composite integrator.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Gauss–Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 20-point rule.
pub fn gl20() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(20))
}

/// Shared 64-point rule.
pub fn gl64() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

/// Tolerances for [`adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-12, rel_tol: 1e-12, max_depth: 40 }
    }
}

impl QuadOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { abs_tol: tol, rel_tol: tol, ..Self::default() }
    }
}

/// Adaptive composite Gauss–Legendre integration of `f` over [a, b].
///
/// Each panel is accepted when the single-panel estimate agrees with the sum over
/// its two halves; the tolerance is distributed over panels in proportion to length.
pub fn adaptive<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    opts: QuadOptions,
    mut f: F,
) -> Result<f64> {
    adaptive_with_breaks(rule, &[a, b], opts, &mut f)
}

/// As [`adaptive`], with the interval pre-split at the given ordered break points.
pub fn adaptive_with_breaks<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    breaks: &[f64],
    opts: QuadOptions,
    f: &mut F,
) -> Result<f64> {
    if breaks.len() < 2 {
        return Ok(0.0);
    }
    let total = (breaks[breaks.len() - 1] - breaks[0]).abs();
    if total == 0.0 {
        return Ok(0.0);
    }
    // rough magnitude for the relative criterion
    let mut coarse = 0.0;
    let mut stack: Vec<(f64, f64, f64, usize)> = Vec::new();
    for w in breaks.windows(2) {
        let est = rule.integrate(w[0], w[1], &mut *f);
        coarse += est;
        stack.push((w[0], w[1], est, 0));
    }
    let tol = opts.abs_tol.max(opts.rel_tol * coarse.abs());
    let mut sum = 0.0;
    let mut worst = 0.0f64;
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(lo, mid, &mut *f);
        let right = rule.integrate(mid, hi, &mut *f);
        let err = (left + right - whole).abs();
        let local_tol = tol * ((hi - lo).abs() / total).max(1e-3);
        if err <= local_tol {
            sum += left + right;
            continue;
        }
        if depth >= opts.max_depth {
            if !err.is_finite() || err > 1e3 * local_tol {
                return Err(Error::Quadrature { a: lo, b: hi, estimate: left + right, error: err });
            }
            worst = worst.max(err);
            sum += left + right;
            continue;
        }
        stack.push((lo, mid, left, depth + 1));
        stack.push((mid, hi, right, depth + 1));
    }
    if !sum.is_finite() {
        return Err(Error::Quadrature { a: breaks[0], b: breaks[breaks.len() - 1], estimate: sum, error: worst });
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 20, 64] {
            let rule = GaussLegendre::new(n);
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n = {n}: {s}");
        }
    }

    #[test]
    fn exact_for_high_degree_polynomials() {
        let rule = GaussLegendre::new(20);
        // degree 39 is integrated exactly
        let v = rule.integrate(0.0, 1.0, |x| x.powi(39));
        assert!((v - 1.0 / 40.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_sharp_peak() {
        let v = adaptive(gl20(), -1.0, 1.0, QuadOptions::with_tol(1e-13), |x| 1.0 / (1e-4 + x * x)).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn reversed_interval_changes_sign() {
        let a = adaptive(gl20(), 0.0, 2.0, QuadOptions::default(), |x| x.sin()).unwrap();
        let b = adaptive(gl20(), 2.0, 0.0, QuadOptions::default(), |x| x.sin()).unwrap();
        assert!((a + b).abs() < 1e-14);
    }
}
