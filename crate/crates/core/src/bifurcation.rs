//! Minima of `D` between poles, critical shear speeds and the `(ū, β)` branch diagram.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::ShearModel;
use crate::roots;
use crate::stationary::{self, DScan};
use crate::svg::{LinePlot, Series};

/// A local minimum of `D` on the interval `I_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub interval: usize,
    pub beta: f64,
    /// Critical shear speed `ū_n = 2D(β*)`.
    pub ubar: f64,
    pub d_prime: f64,
    pub d_second: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `β < β*` on an interval with a minimum.
    Lower,
    /// `β > β*`.
    Upper,
    /// An interval on which `D` is monotone.
    Single,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
            Side::Single => "single",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Side::Lower),
            "upper" => Ok(Side::Upper),
            "single" => Ok(Side::Single),
            other => Err(Error::InvalidArgument(format!("unknown branch side {other:?}"))),
        }
    }
}

/// One solution `2D(β) = ū` with the sign of `D′` as a provisional stability tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchSample {
    pub ubar: f64,
    pub beta: f64,
    pub interval: usize,
    pub side: Side,
    pub sign_d_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub n: usize,
    pub side: Side,
    /// `[ū, β]` pairs in increasing `ū`.
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub poles: Vec<f64>,
    pub minima: Vec<Minimum>,
    pub branches: Vec<Branch>,
    #[serde(skip)]
    pub samples: Vec<BranchSample>,
}

fn interval_of(model: &ShearModel, n: usize) -> Result<(f64, f64)> {
    model
        .interval(n)
        .ok_or_else(|| Error::InvalidArgument(format!("interval {n} lies outside the working window")))
}

/// Locates the interior minimum of `D` on `I_n`, or `None` when `D` is monotone there.
///
/// A scan brackets the smallest sample; the minimum is then polished as the zero of
/// the analytic `D′`, which pins `β*` far more tightly than minimizing `D` itself.
pub fn find_minimum(model: &ShearModel, n: usize) -> Result<Option<Minimum>> {
    if n == 0 {
        return Err(Error::InvalidArgument("minima are sought on I_n with n >= 1".into()));
    }
    let interval = interval_of(model, n)?;
    let scan = stationary::scan_d(model, interval, 400)?;
    minimum_from_scan(model, n, &scan)
}

fn minimum_from_scan(model: &ShearModel, n: usize, scan: &DScan) -> Result<Option<Minimum>> {
    let k = match scan.values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) {
        Some((k, _)) => k,
        None => return Ok(None),
    };
    if k == 0 || k + 1 == scan.betas.len() {
        return Ok(None);
    }
    let (a, b) = (scan.betas[k - 1], scan.betas[k + 1]);
    let slope = |beta: f64| stationary::d_prime(model, beta).unwrap_or(f64::NAN);
    let (fa, fb) = (slope(a), slope(b));
    let beta = if fa < 0.0 && fb > 0.0 {
        roots::brent_root_with(slope, a, b, fa, fb, 1e-15, 300)?
    } else {
        let (x, _) = roots::brent_minimize(|x| stationary::d_value(model, x).unwrap_or(f64::INFINITY), a, b, 1e-10, 500);
        x
    };
    let lv = stationary::level_integrals(model, beta)?;
    let d_second = stationary::d_second(model, beta)?;
    Ok(Some(Minimum { interval: n, beta, ubar: lv.ubar(), d_prime: lv.d_prime(), d_second }))
}

/// The minima on `I_1 .. I_{count}` that exist.
pub fn find_minima(model: &ShearModel, count: usize) -> Result<Vec<Minimum>> {
    let mut out = Vec::new();
    for n in 1..=count {
        if model.interval(n).is_none() {
            break;
        }
        if let Some(m) = find_minimum(model, n)? {
            out.push(m);
        }
    }
    Ok(out)
}

/// The two solutions `β₋ < β* < β₊` of `2D(β) = ū` just above the fold.
pub fn two_roots_near(model: &ShearModel, minimum: &Minimum, ubar: f64) -> Result<(f64, f64)> {
    if !(ubar > minimum.ubar) {
        return Err(Error::NoRoot(format!(
            "shear speed {ubar} does not exceed the critical value {} on I_{}",
            minimum.ubar, minimum.interval
        )));
    }
    let (lo, hi) = interval_of(model, minimum.interval)?;
    let miss = |b: f64| stationary::d_value(model, b).map(|d| 2.0 * d - ubar).unwrap_or(f64::NAN);
    // 2D ≈ ū_n + D″ (β − β*)² gives the first probe distance
    let guess = ((ubar - minimum.ubar) / minimum.d_second.abs().max(1e-12)).sqrt();
    let find = |dir: f64, limit: f64| -> Result<f64> {
        let mut step = guess.max(1e-12);
        let f_star = 2.0 * stationary::d_value(model, minimum.beta)? - ubar;
        loop {
            let probe = minimum.beta + dir * step;
            let beyond = (probe - limit) * dir >= 0.0;
            let probe = if beyond { minimum.beta + 0.999_999 * (limit - minimum.beta) } else { probe };
            let f = miss(probe);
            if f > 0.0 {
                let (a, b) = if dir > 0.0 { (minimum.beta, probe) } else { (probe, minimum.beta) };
                let (fa, fb) = if dir > 0.0 { (f_star, f) } else { (f, f_star) };
                return roots::brent_root_with(miss, a, b, fa, fb, 1e-15, 300);
            }
            if beyond || !f.is_finite() {
                return Err(Error::NoRoot(format!("no crossing of 2D = {ubar} toward {limit}")));
            }
            step *= 2.0;
        }
    };
    Ok((find(-1.0, lo)?, find(1.0, hi)?))
}

/// Shear speeds swept by the diagram: uniform, plus geometric refinement above each `ū_n`.
pub fn diagram_speeds(ubar_max: f64, samples: usize, minima: &[Minimum]) -> Vec<f64> {
    let step = ubar_max / samples.max(1) as f64;
    let mut v: Vec<f64> = (1..=samples.max(1)).map(|k| k as f64 * step).collect();
    for m in minima {
        if m.ubar < ubar_max {
            for level in 0..8 {
                let u = m.ubar + step * 0.5f64.powi(level + 1);
                if u <= ubar_max {
                    v.push(u);
                }
            }
        }
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Sweeps `ū ∈ (0, ū_max]` and collects every solution in the configured intervals.
pub fn branch_diagram(model: &ShearModel, ubar_max: f64, samples: usize) -> Result<BifurcationDiagram> {
    if !(ubar_max > 0.0) {
        return Err(Error::InvalidArgument(format!("ubar_max must be positive, got {ubar_max}")));
    }
    let intervals: Vec<usize> = (0..model.solver.intervals).take_while(|&n| model.interval(n).is_some()).collect();
    let scans = intervals.iter().map(|&n| interval_scan(model, n)).collect::<Result<Vec<_>>>()?;
    let minima = scans.iter().filter_map(|s| s.2).collect();
    diagram_from_scans(model, ubar_max, samples, &scans, minima)
}

/// Scan of `D` on interval `n` with its minimum (if any) inserted as a node.
pub fn interval_scan(model: &ShearModel, n: usize) -> Result<(usize, DScan, Option<Minimum>)> {
    let mut scan = stationary::scan_d(model, interval_of(model, n)?, 200)?;
    let min = if n == 0 { None } else { minimum_from_scan(model, n, &scan)? };
    if let Some(m) = min {
        let at = scan.betas.partition_point(|&b| b < m.beta);
        scan.betas.insert(at, m.beta);
        scan.values.insert(at, 0.5 * m.ubar);
    }
    Ok((n, scan, min))
}

/// As [`branch_diagram`] with per-interval scans already computed (lets callers
/// build the scans concurrently).
pub fn diagram_from_scans(
    model: &ShearModel,
    ubar_max: f64,
    samples: usize,
    scans: &[(usize, DScan, Option<Minimum>)],
    minima: Vec<Minimum>,
) -> Result<BifurcationDiagram> {
    let speeds = diagram_speeds(ubar_max, samples, &minima);
    let mut all = Vec::new();
    let mut branches = Vec::new();
    for (n, scan, min) in scans {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for &u in &speeds {
            for beta in stationary::roots_on_scan(model, scan, u)? {
                let side = match min {
                    None => Side::Single,
                    Some(m) if beta < m.beta => Side::Lower,
                    Some(_) => Side::Upper,
                };
                let dp = stationary::d_prime(model, beta)?;
                all.push(BranchSample { ubar: u, beta, interval: *n, side, sign_d_prime: dp.signum() });
                if side == Side::Upper { upper.push([u, beta]) } else { lower.push([u, beta]) }
            }
        }
        if min.is_some() {
            branches.push(Branch { n: *n, side: Side::Lower, points: lower });
            branches.push(Branch { n: *n, side: Side::Upper, points: upper });
        } else {
            branches.push(Branch { n: *n, side: Side::Single, points: lower });
        }
    }
    let poles = model.poles().iter().map(|p| p.beta).collect();
    Ok(BifurcationDiagram { poles, minima, branches, samples: all })
}

impl BifurcationDiagram {
    /// Number of solutions found at a given swept speed.
    pub fn count_at(&self, ubar: f64) -> usize {
        self.samples.iter().filter(|s| s.ubar == ubar).count()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_json_file(path, self)
    }

    /// CSV `ubar,beta,interval,side,sign_Dprime`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["ubar", "beta", "interval", "side", "sign_Dprime"])?;
        for s in &self.samples {
            w.write_record([
                io::fmt_f64(s.ubar),
                io::fmt_f64(s.beta),
                s.interval.to_string(),
                s.side.as_str().to_string(),
                format!("{}", s.sign_d_prime as i32),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn read_branch_csv(path: impl AsRef<Path>) -> Result<Vec<BranchSample>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::InvalidArgument("short branch row".into()))?
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(e.to_string()))
        };
        out.push(BranchSample {
            ubar: num(0)?,
            beta: num(1)?,
            interval: num(2)? as usize,
            side: Side::parse(rec.get(3).unwrap_or(""))?,
            sign_d_prime: num(4)?,
        });
    }
    Ok(out)
}

/// SVG of the `(β, D)` curve with dashed asymptotes at the poles and dotted levels at
/// the critical values `ū_n / 2`.
pub fn plot_d_curve(model: &ShearModel, minima: &[Minimum], scans: &[(usize, DScan)]) -> String {
    let mut points = Vec::new();
    for (_, scan) in scans {
        points.extend(scan.betas.iter().zip(&scan.values).map(|(&b, &d)| (b, d)));
        points.push((f64::NAN, f64::NAN));
    }
    let beta_max = scans.iter().filter_map(|(_, s)| s.betas.last().copied()).fold(0.0, f64::max);
    let d_top = minima.iter().map(|m| m.ubar).fold(0.0, f64::max).max(1.0) * 1.5;
    LinePlot {
        title: "D(beta)".into(),
        x_label: "beta".into(),
        y_label: "D".into(),
        series: vec![Series { label: "D".into(), color: "#1f5fa8".into(), points }],
        verticals: model
            .poles()
            .iter()
            .enumerate()
            .map(|(i, p)| (p.beta, format!("beta_{}", i + 1)))
            .collect(),
        horizontals: minima.iter().map(|m| (0.5 * m.ubar, format!("ubar_{}/2", m.interval))).collect(),
        x_range: Some((0.0, beta_max)),
        y_range: Some((0.0, d_top)),
    }
    .render()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_minimum_of_default_material() {
        let m = ShearModel::default();
        let min = find_minimum(&m, 1).unwrap().expect("minimum on I_1");
        let (b1, b2) = m.interval(1).unwrap();
        assert!(b1 < min.beta && min.beta < b2);
        assert!(min.d_prime.abs() < 1e-8, "{}", min.d_prime);
        assert!(min.d_second > 0.0);
        let d_star = 0.5 * min.ubar;
        for delta in [-1e-3, 1e-3] {
            assert!(stationary::d_value(&m, min.beta + delta).unwrap() > d_star);
        }
    }

    #[test]
    fn fold_opens_above_critical_speed() {
        let m = ShearModel::default();
        let min = find_minimum(&m, 1).unwrap().unwrap();
        assert!(matches!(two_roots_near(&m, &min, 0.99 * min.ubar), Err(Error::NoRoot(_))));
        let (lo, hi) = two_roots_near(&m, &min, 1.01 * min.ubar).unwrap();
        assert!(lo < min.beta && min.beta < hi);
        for b in [lo, hi] {
            let d = stationary::d_value(&m, b).unwrap();
            assert!((2.0 * d - 1.01 * min.ubar).abs() < 1e-8);
        }
    }

    #[test]
    fn side_round_trips_through_text() {
        for s in [Side::Lower, Side::Upper, Side::Single] {
            assert_eq!(Side::parse(s.as_str()).unwrap(), s);
        }
        assert!(Side::parse("sideways").is_err());
    }
}
