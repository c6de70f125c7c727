//! Adaptive Dormand–Prince 5(4) integrator with exact landing on requested stops.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step as a fraction of the interval; 0 means unbounded.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, max_step: 0.0, max_steps: 2_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Largest accepted scaled local error estimate (<= 1 by construction).
    pub max_local_error: f64,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Stateful stepper; remembers the last accepted step size between calls.
#[derive(Debug, Clone)]
pub struct DormandPrince {
    pub opts: OdeOptions,
    pub stats: OdeStats,
    h: Option<f64>,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    ynew: Vec<f64>,
}

impl DormandPrince {
    pub fn new(dim: usize, opts: OdeOptions) -> Self {
        let z = || vec![0.0; dim];
        Self {
            opts,
            stats: OdeStats::default(),
            h: None,
            k: [z(), z(), z(), z(), z(), z(), z()],
            tmp: z(),
            ynew: z(),
        }
    }

    /// Advances `y` from `x` to `x_end` (either direction), landing exactly on `x_end`.
    pub fn advance<F>(&mut self, f: &mut F, x: f64, y: &mut [f64], x_end: f64) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let span = x_end - x;
        if span == 0.0 {
            return Ok(());
        }
        let dir = span.signum();
        let n = y.len();
        let mut x = x;
        let hmax = if self.opts.max_step > 0.0 { self.opts.max_step * span.abs() } else { span.abs() };
        let mut h = match self.h {
            Some(h) => h.abs().min(hmax),
            None => self.initial_step(f, x, y, dir, hmax),
        };
        f(x, y, &mut self.k[0]);
        self.stats.rhs_evals += 1;
        let mut steps = 0usize;
        loop {
            let remaining = (x_end - x) * dir;
            if remaining <= 0.0 {
                break;
            }
            let mut last = false;
            let proposal = h;
            if h >= remaining * (1.0 - 1e-12) {
                h = remaining;
                last = true;
            }
            let hs = h * dir;
            self.stage(f, x, y, hs);
            let mut err = 0.0;
            for i in 0..n {
                let e = hs
                    * (E1 * self.k[0][i]
                        + E3 * self.k[2][i]
                        + E4 * self.k[3][i]
                        + E5 * self.k[4][i]
                        + E6 * self.k[5][i]
                        + E7 * self.k[6][i]);
                let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(self.ynew[i].abs());
                err += (e / sc) * (e / sc);
            }
            err = (err / n as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Integration { x, reason: "non-finite state".into() });
            }
            if err <= 1.0 {
                x = if last { x_end } else { x + hs };
                y.copy_from_slice(&self.ynew);
                self.k.swap(0, 6);
                self.stats.accepted += 1;
                self.stats.max_local_error = self.stats.max_local_error.max(err);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if last {
                    self.h = Some(proposal.max(h * fac).min(hmax));
                    break;
                }
                h = (h * fac).min(hmax);
                self.h = Some(h);
            } else {
                self.stats.rejected += 1;
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h < 1e-15 * span.abs().max(x.abs()) {
                    return Err(Error::Integration { x, reason: "step size underflow".into() });
                }
            }
            steps += 1;
            if steps > self.opts.max_steps {
                return Err(Error::Integration { x, reason: "maximum number of steps exceeded".into() });
            }
        }
        Ok(())
    }

    /// Integrates through the ordered `stops`, calling `visit` at each one.
    /// The visitor may modify the state (for instance to renormalize it).
    pub fn advance_through<F, V>(
        &mut self,
        f: &mut F,
        x0: f64,
        y: &mut [f64],
        stops: &[f64],
        mut visit: V,
    ) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        V: FnMut(usize, f64, &mut [f64]),
    {
        let mut x = x0;
        for (i, &s) in stops.iter().enumerate() {
            self.advance(f, x, y, s)?;
            x = s;
            visit(i, s, y);
        }
        Ok(())
    }

    fn stage<F>(&mut self, f: &mut F, x: f64, y: &[f64], h: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        f(x + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(x + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(x + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(x + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(x + h, tmp, k6);
        for i in 0..n {
            self.ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(x + h, &self.ynew, k7);
        self.stats.rhs_evals += 6;
    }

    fn initial_step<F>(&mut self, f: &mut F, x: f64, y: &[f64], dir: f64, hmax: f64) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        f(x, y, &mut self.k[0]);
        self.stats.rhs_evals += 1;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..n {
            let sc = self.opts.atol + self.opts.rtol * y[i].abs();
            d0 += (y[i] / sc).powi(2);
            d1 += (self.k[0][i] / sc).powi(2);
        }
        d0 = (d0 / n as f64).sqrt();
        d1 = (d1 / n as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(hmax);
        for i in 0..n {
            self.tmp[i] = y[i] + dir * h0 * self.k[0][i];
        }
        f(x + dir * h0, &self.tmp, &mut self.k[1]);
        self.stats.rhs_evals += 1;
        let mut d2 = 0.0;
        for i in 0..n {
            let sc = self.opts.atol + self.opts.rtol * y[i].abs();
            d2 += ((self.k[1][i] - self.k[0][i]) / sc).powi(2);
        }
        d2 = (d2 / n as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(hmax)
    }
}

/// Convenience wrapper: integrate `y` from `x0` to `x1` with fresh state.
pub fn integrate<F>(mut f: F, x0: f64, y: &mut [f64], x1: f64, opts: OdeOptions) -> Result<OdeStats>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut dp = DormandPrince::new(y.len(), opts);
    dp.advance(&mut f, x0, y, x1)?;
    Ok(dp.stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_one_period() {
        let mut y = [1.0, 0.0];
        let tau = 2.0 * std::f64::consts::PI;
        integrate(|_, y, d| {
            d[0] = y[1];
            d[1] = -y[0];
        }, 0.0, &mut y, tau, OdeOptions::default())
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10 && y[1].abs() < 1e-10, "{y:?}");
    }

    #[test]
    fn backward_integration_inverts_forward() {
        let rhs = |x: f64, y: &[f64], d: &mut [f64]| d[0] = (x * y[0]).cos();
        let mut y = [0.3];
        integrate(rhs, 0.0, &mut y, 2.0, OdeOptions::default()).unwrap();
        integrate(rhs, 2.0, &mut y, 0.0, OdeOptions::default()).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-11);
    }

    #[test]
    fn stops_are_hit_exactly() {
        let mut dp = DormandPrince::new(1, OdeOptions::default());
        let mut y = [1.0];
        let mut seen = vec![];
        let mut f = |_: f64, y: &[f64], d: &mut [f64]| d[0] = -y[0];
        dp.advance_through(&mut f, 0.0, &mut y, &[0.25, 0.5, 1.0], |_, x, y| seen.push((x, y[0])))
            .unwrap();
        for (x, v) in seen {
            assert!((v - (-x).exp()).abs() < 1e-12);
        }
    }
}
