use approx::assert_relative_eq;
use shearlab::bifurcation;
use shearlab::evolution;
use shearlab::io;
use shearlab::stationary::{self, StationaryProfile};
use shearlab::{MaterialParams, ShearModel};

/// Classical RK4 on the profile ODE `θ' = η/c²`, `η' = c′η²/c³ + (h/g)p` from `x = 0`.
fn rk4_half(p: &MaterialParams, beta: f64, pressure: f64, steps: usize) -> (f64, f64) {
    let rhs = |th: f64, eta: f64| {
        let c = p.c(th);
        (eta / (c * c), p.c_prime(th) * eta * eta / (c * c * c) + p.h(th) / p.g(th) * pressure)
    };
    let h = 0.5 / steps as f64;
    let mut th = p.theta0;
    let mut eta = -p.c(p.theta0) * (2.0 * pressure * beta).sqrt();
    // ∫₀^½ 1/g by Simpson on the same nodes
    let mut inv_g = 1.0 / p.g(th);
    for k in 0..steps {
        let (a1, b1) = rhs(th, eta);
        let (a2, b2) = rhs(th + 0.5 * h * a1, eta + 0.5 * h * b1);
        let (a3, b3) = rhs(th + 0.5 * h * a2, eta + 0.5 * h * b2);
        let (a4, b4) = rhs(th + h * a3, eta + h * b3);
        th += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        eta += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        let w = if k + 1 == steps { 1.0 } else if k % 2 == 0 { 4.0 } else { 2.0 };
        inv_g += w / p.g(th);
    }
    (eta, inv_g * h / 3.0)
}

/// Independent `ū(β)`: bisect the pressure so that `η(½) = 0`, then `ū = 2p∫₀^½ 1/g`.
fn shooting_speed(p: &MaterialParams, beta: f64) -> f64 {
    let steps = 4000;
    let (mut lo, mut hi) = (1e-6, 1.0);
    while rk4_half(p, beta, hi, steps).0 < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rk4_half(p, beta, mid, steps).0 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    let pressure = 0.5 * (lo + hi);
    2.0 * pressure * rk4_half(p, beta, pressure, steps).1
}

#[test]
fn quadrature_d_matches_rk4_shooting() {
    let m = ShearModel::default();
    let b1 = m.poles()[0].beta;
    for f in [0.1, 0.4, 0.8] {
        let beta = f * b1;
        let d = stationary::d_value(&m, beta).unwrap();
        assert_relative_eq!(2.0 * d, shooting_speed(m.params(), beta), max_relative = 1e-8);
    }
}

#[test]
fn profile_round_trips_through_csv_and_json() {
    let m = ShearModel::default();
    let prof = stationary::reconstruct_profile_on(&m, 0.1, 65).unwrap();
    let dir = tempfile::tempdir().unwrap();
    prof.write(dir.path(), "profile").unwrap();
    let back = StationaryProfile::read(dir.path(), "profile").unwrap();
    assert_eq!(back, prof);
}

#[test]
fn diagram_csv_round_trips_and_shows_the_fold() {
    let m = ShearModel::default();
    let min = bifurcation::find_minimum(&m, 1).unwrap().unwrap();
    let diagram = bifurcation::branch_diagram(&m, 2.0 * min.ubar, 40).unwrap();
    assert!(!diagram.poles.is_empty() && !diagram.minima.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("diagram.csv");
    diagram.write_csv(&path).unwrap();
    let back = bifurcation::read_branch_csv(&path).unwrap();
    assert_eq!(back.len(), diagram.samples.len());
    for (a, b) in back.iter().zip(&diagram.samples) {
        assert_eq!(a.ubar, b.ubar);
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.side, b.side);
    }
    // below the first critical speed only the first interval carries a solution
    let below = diagram.samples.iter().filter(|s| s.ubar < min.ubar).all(|s| s.interval == 0);
    assert!(below);
    assert_eq!(diagram.samples.iter().filter(|s| s.interval == 1 && s.ubar == 2.0 * min.ubar).count(), 2);
}

#[test]
fn energy_trace_written_as_t_e_b() {
    let m = ShearModel::default();
    let b1 = m.poles()[0].beta;
    let beta = stationary::solve_ubar(&m, 0.05, (0.0, b1)).unwrap()[0];
    let prof = stationary::reconstruct_profile_on(&m, beta, 129).unwrap();
    let (rep, state) = evolution::decay_report(m.params(), &prof, None, 1.0, 1.0 / 128.0, 5).unwrap();
    assert!(rep.passed);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    state.write_trace(&path).unwrap();
    let t = io::read_table_file(&path).unwrap();
    assert_eq!(t.header, vec!["t", "E_b"]);
    assert_eq!(t.rows.len(), state.energy_trace.len());
    let json = serde_json::to_string(&rep).unwrap();
    for key in ["ubar", "beta", "\"b\"", "eps", "L_fit", "r1", "r2", "r3", "passed", "seed"] {
        assert!(json.contains(key), "missing {key}");
    }
}

#[test]
fn nonlinear_scheme_contracts_at_second_order() {
    let m = ShearModel::default();
    let s: Vec<_> = [65, 129, 257].iter().map(|&n| shearlab::suite::nonlinear_run(&m, n, 1.0, 0.5).unwrap()).collect();
    let ratio = shearlab::suite::coarse_fine_gap(&s[0], &s[1]) / shearlab::suite::coarse_fine_gap(&s[1], &s[2]);
    assert!(ratio > 3.4 && ratio < 4.6, "ratio {ratio}");
}
