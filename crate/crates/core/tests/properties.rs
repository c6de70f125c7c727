use proptest::prelude::*;
use shearlab::evolution::{self, EvolutionState};
use shearlab::io;
use shearlab::quadrature::gl20;
use shearlab::spectral::{self, relative_gap, LinearizedSystem};
use shearlab::{stationary, MaterialParams, RunConfig, ShearModel};

fn first_pole() -> f64 {
    ShearModel::default().poles()[0].beta
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips_through_json(k3 in 0.1f64..10.0, theta0 in 0.1f64..1.5, tol in 1e-14f64..1e-6) {
        let mut cfg = RunConfig::default();
        cfg.material.k3 = k3;
        cfg.material.theta0 = theta0;
        cfg.solver.quad_tol = tol;
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn tables_round_trip_bit_for_bit(rows in prop::collection::vec(prop::collection::vec(-1e300f64..1e300, 3), 1..20)) {
        let mut buf = Vec::new();
        io::write_table(&mut buf, &["a", "b", "c"], &rows).unwrap();
        let t = io::read_table(buf.as_slice()).unwrap();
        prop_assert_eq!(t.rows, rows);
    }

    #[test]
    fn relative_gap_is_symmetric_and_vanishes_on_equal(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        prop_assert_eq!(relative_gap(a, b), relative_gap(b, a));
        prop_assert_eq!(relative_gap(a, a), 0.0);
        prop_assert!(relative_gap(a, b) >= 0.0);
    }

    #[test]
    fn gauss_legendre_is_exact_to_degree_39(coef in prop::collection::vec(-1.0f64..1.0, 40)) {
        let exact: f64 = coef.iter().enumerate().map(|(k, c)| c / (k + 1) as f64).sum();
        let approx = gl20().integrate(0.0, 1.0, |x| coef.iter().rev().fold(0.0, |acc, c| acc * x + c));
        prop_assert!((approx - exact).abs() < 1e-13);
    }

    #[test]
    fn energy_is_nonnegative_and_quadratic(
        seed in 0u64..1000,
        scale in 0.01f64..100.0,
        b in 0.0f64..5.0,
    ) {
        let p = MaterialParams::default();
        let n = 65;
        let (u, th) = evolution::random_perturbation(n, seed, 1.0);
        let background = vec![p.theta0; n];
        let s1 = EvolutionState::new(u.clone(), th.clone()).unwrap();
        let s2 = EvolutionState::new(u.iter().map(|v| v * scale).collect(), th.iter().map(|v| v * scale).collect()).unwrap();
        let e1 = evolution::energy(&p, &background, &s1, b);
        let e2 = evolution::energy(&p, &background, &s2, b);
        prop_assert!(e1 > 0.0);
        prop_assert!((e2 / (scale * scale) - e1).abs() <= 1e-12 * e1);
    }

    #[test]
    fn perturbations_vanish_at_walls(seed in any::<u64>(), n in 3usize..300, amp in 0.001f64..10.0) {
        let (u, th) = evolution::random_perturbation(n, seed, amp);
        for v in [&u, &th] {
            prop_assert_eq!(v[0], 0.0);
            prop_assert_eq!(v[n - 1], 0.0);
            prop_assert!(v.iter().all(|x| x.abs() <= amp * (1.0 + 1e-12)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn d_increases_on_the_first_interval(f in 0.02f64..0.95) {
        let m = ShearModel::default();
        let beta = f * first_pole();
        prop_assert!(stationary::d_prime(&m, beta).unwrap() > 0.0);
        prop_assert!(stationary::d_value(&m, beta).unwrap() > 0.0);
    }

    #[test]
    fn profiles_are_mirror_symmetric(f in 0.05f64..0.95) {
        let m = ShearModel::default();
        let prof = stationary::reconstruct_profile_on(&m, f * first_pole(), 129).unwrap();
        let n = prof.len();
        for i in 0..n {
            prop_assert!((prof.theta[i] - prof.theta[n - 1 - i]).abs() < 1e-10);
            prop_assert!((prof.u[i] + prof.u[n - 1 - i] - prof.ubar).abs() < 1e-10 * prof.ubar.max(1.0));
        }
    }

    #[test]
    fn evans_determinant_is_independent_of_x(f in 0.05f64..0.95, lambda in -50.0f64..10.0) {
        let m = ShearModel::default();
        let sys = LinearizedSystem::at_level(&m, f * first_pole()).unwrap();
        let e = spectral::evans(&sys, lambda).unwrap();
        prop_assert!(e.x_residual < 1e-6, "residual {}", e.x_residual);
    }
}
