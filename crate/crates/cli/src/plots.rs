use shearlab::bifurcation::{BranchSample, Minimum, Side};
use shearlab::svg::{LinePlot, Series};

const PALETTE: [&str; 6] = ["#1f5fa8", "#c0392b", "#27864a", "#8e44ad", "#d68910", "#555555"];

pub fn branches(samples: &[BranchSample], minima: &[Minimum]) -> String {
    let mut keys: Vec<(usize, Side)> = Vec::new();
    for s in samples {
        if !keys.contains(&(s.interval, s.side)) {
            keys.push((s.interval, s.side));
        }
    }
    let series = keys
        .iter()
        .enumerate()
        .map(|(k, &(n, side))| {
            let mut points: Vec<(f64, f64)> =
                samples.iter().filter(|s| s.interval == n && s.side == side).map(|s| (s.ubar, s.beta)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label: format!("I{n} {}", side.as_str()), color: PALETTE[k % PALETTE.len()].into(), points }
        })
        .collect();
    LinePlot {
        title: "stationary solutions".into(),
        x_label: "ubar".into(),
        y_label: "beta".into(),
        series,
        verticals: minima.iter().map(|m| (m.ubar, format!("ubar_{}", m.interval))).collect(),
        ..Default::default()
    }
    .render()
}

pub fn d_curve(beta: &[f64], d: &[f64]) -> String {
    let finite: Vec<f64> = d.iter().copied().filter(|v| v.is_finite()).collect();
    let mut sorted = finite.clone();
    sorted.sort_by(f64::total_cmp);
    // clip the pole blow-up at the 90th percentile
    let top = sorted.get(sorted.len() * 9 / 10).copied().unwrap_or(1.0);
    LinePlot {
        title: "D(beta)".into(),
        x_label: "beta".into(),
        y_label: "D".into(),
        series: vec![Series { label: "D".into(), color: PALETTE[0].into(), points: beta.iter().copied().zip(d.iter().copied()).collect() }],
        y_range: Some((0.0, top * 1.2)),
        ..Default::default()
    }
    .render()
}

pub fn profile(x: &[f64], u: &[f64], theta: &[f64], ubar: f64) -> String {
    let scale = if ubar != 0.0 { ubar } else { 1.0 };
    LinePlot {
        title: "stationary profile".into(),
        x_label: "x".into(),
        y_label: "theta, u/ubar".into(),
        series: vec![
            Series { label: "theta".into(), color: PALETTE[0].into(), points: x.iter().copied().zip(theta.iter().copied()).collect() },
            Series {
                label: "u/ubar".into(),
                color: PALETTE[1].into(),
                points: x.iter().zip(u).map(|(&x, &u)| (x, u / scale)).collect(),
            },
        ],
        ..Default::default()
    }
    .render()
}

/// `E(λ)` normalized by its largest magnitude, so sign changes stay visible.
pub fn evans(points: &[(f64, f64)]) -> String {
    let peak = points.iter().map(|p| p.1.abs()).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let peak = if peak > 0.0 { peak } else { 1.0 };
    LinePlot {
        title: "Evans function".into(),
        x_label: "lambda".into(),
        y_label: "E / max|E|".into(),
        series: vec![Series {
            label: "E".into(),
            color: PALETTE[0].into(),
            points: points.iter().map(|&(l, e)| (l, e / peak)).collect(),
        }],
        horizontals: vec![(0.0, String::new())],
        ..Default::default()
    }
    .render()
}

pub fn energy(trace: &[(f64, f64)]) -> String {
    LinePlot {
        title: "weighted energy".into(),
        x_label: "t".into(),
        y_label: "ln E_b".into(),
        series: vec![Series {
            label: "ln E_b".into(),
            color: PALETTE[2].into(),
            points: trace.iter().map(|&(t, e)| (t, e.ln())).collect(),
        }],
        ..Default::default()
    }
    .render()
}
