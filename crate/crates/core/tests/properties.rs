use proptest::prelude::*;

use singular_bsde::bsde::{implicit_step, solve_pure_ode};
use singular_bsde::closedform::{
    f_transform, f_transform_inverse, f_transform_quadrature, general_flow, keller_osserman_constant, majorant_value,
    ode_flow_alpha, GeneratorSpec, KellerOssermanSetting, MajorantSpec,
};
use singular_bsde::diffusion::{simulate_to_exit, CoefficientField, McEstimate, StepConfig, StreamId};
use singular_bsde::geometry::{BlowupSet, BoundaryData, Domain, FiniteData, Location};
use singular_bsde::pde::{solve_truncated, EllipticProblem, Grid};

fn interval_problem(cells: usize, q: f64, g: BoundaryData, n: f64) -> EllipticProblem {
    let d = Domain::interval(0.0, 1.0).unwrap();
    EllipticProblem::new(
        Grid::new(&d, &[cells]).unwrap(),
        CoefficientField::brownian(1),
        GeneratorSpec::power(q, 1.0).unwrap(),
        g,
        n,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn implicit_step_solves_and_is_monotone(q in 0.3f64..3.0, kappa in 0.1f64..4.0, dt in 1e-4f64..0.5, t in 1e-3f64..1e3, s in 1.0f64..2.0) {
        let gen = GeneratorSpec::power(q, kappa).unwrap();
        let y = implicit_step(&gen, dt, t);
        prop_assert!((0.0..=t).contains(&y));
        prop_assert!((y - dt * gen.eval(y) - t).abs() <= 1e-10 * t.max(1.0));
        prop_assert!(implicit_step(&gen, dt, s * t) >= y);
    }

    #[test]
    fn pure_ode_tracks_flow(q in 0.5f64..2.5, xi in 0.1f64..50.0, steps in 50usize..400) {
        let gen = GeneratorSpec::power(q, 1.0).unwrap();
        let dt = 1.0 / steps as f64;
        let y = solve_pure_ode(&gen, xi, 1.0, dt).unwrap();
        let exact = ode_flow_alpha(q, xi, 1.0, 0.0);
        // implicit Euler lags the flow by O(dt) and stays above it
        prop_assert!(y >= exact - 1e-12);
        prop_assert!(y - exact <= 2.0 * dt * exact.max(1.0) * (1.0 + xi));
    }

    #[test]
    fn transform_closed_form_quadrature_and_inverse(q in 0.5f64..3.0, kappa in 0.2f64..5.0, ly in -2.0f64..2.0) {
        let gen = GeneratorSpec::power(q, kappa).unwrap();
        let y = 10f64.powf(ly);
        let fy = f_transform(&gen, y).unwrap();
        prop_assert!((fy - y.powf(-q) / (kappa * q)).abs() <= 1e-12 * fy.max(1.0));
        let quad = f_transform_quadrature(&gen, y).unwrap();
        prop_assert!((quad - fy).abs() <= 1e-8 * fy.max(1.0));
        let back = f_transform_inverse(&gen, fy).unwrap();
        prop_assert!((back - y).abs() <= 1e-9 * y);
    }

    #[test]
    fn general_flow_is_semigroup(q in 0.5f64..3.0, kappa in 0.2f64..5.0, xi in 0.1f64..20.0, s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let gen = GeneratorSpec::power(q, kappa).unwrap();
        let once = general_flow(&gen, xi, s + t).unwrap();
        let twice = general_flow(&gen, general_flow(&gen, xi, s).unwrap(), t).unwrap();
        prop_assert!((once - twice).abs() <= 1e-10 * once.max(1.0));
        prop_assert!(once <= xi + 1e-12);
        let later = general_flow(&gen, xi, s + t + 1e-3).unwrap();
        let inf = general_flow(&gen, f64::INFINITY, s + t + 1e-3).unwrap();
        prop_assert!(inf.is_finite() && inf >= later);
    }

    #[test]
    fn ko_constant_dominates_ball_bracket(q in 0.5f64..3.0, d in 1usize..4, radius in 0.2f64..5.0, u in 0.0f64..1.0, e in 0.0f64..1.0) {
        let c = keller_osserman_constant(q, d, KellerOssermanSetting::BrownianBall).unwrap();
        // the trace term is covered while theta <= 2R, i.e. eps <= R
        let b = singular_bsde::closedform::brownian_ball_bracket(c, q, d, radius, u * radius, e * radius);
        prop_assert!(b >= -1e-9 * c.powf(q));
        let m = MajorantSpec::new(c, q);
        prop_assert!(majorant_value(&m, u * radius + 1e-3) >= majorant_value(&m, u * radius + 1e-2));
    }

    #[test]
    fn box_distance_and_projection(lo in prop::collection::vec(-2.0f64..0.0, 2), w in prop::collection::vec(0.1f64..3.0, 2), t in prop::collection::vec(0.01f64..0.99, 2)) {
        let hi: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
        let d = Domain::cuboid(lo.clone(), hi.clone()).unwrap();
        let x: Vec<f64> = (0..2).map(|k| lo[k] + t[k] * w[k]).collect();
        prop_assert_eq!(d.contains(&x).unwrap(), Location::Interior);
        let rho = d.distance_to_boundary(&x).unwrap();
        let expect = (0..2).map(|k| (x[k] - lo[k]).min(hi[k] - x[k])).fold(f64::INFINITY, f64::min);
        prop_assert!((rho - expect).abs() < 1e-12);
        let p = d.project_to_boundary(&x).unwrap();
        prop_assert!(d.distance_to_boundary(&p).unwrap().abs() < 1e-12);
        let moved: f64 = p.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!((moved - rho).abs() < 1e-12);
    }

    #[test]
    fn exit_time_and_point(x in 0.05f64..0.95, seed in 0u64..1000, index in 0u64..1000) {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let field = CoefficientField::brownian(1);
        let p = simulate_to_exit(&field, &d, &[x], StepConfig::new(1e-3, 20.0), StreamId { seed, index }).unwrap();
        prop_assert!(p.exited);
        let k = p.interior_steps as f64;
        prop_assert!(p.tau_hat > (k - 1.0) * p.dt - 1e-12 && p.tau_hat <= k * p.dt + 1e-12);
        let e = p.exit_point.clone().unwrap();
        prop_assert!(e[0] == 0.0 || e[0] == 1.0);
        let again = simulate_to_exit(&field, &d, &[x], StepConfig::new(1e-3, 20.0), StreamId { seed, index }).unwrap();
        prop_assert_eq!(p, again);
    }

    #[test]
    fn mc_stderr_nonnegative(xs in prop::collection::vec(-1e3f64..1e3, 1..50)) {
        let m = McEstimate::from_samples(xs.iter().copied(), 0);
        prop_assert!(m.standard_error >= 0.0);
        prop_assert_eq!(m.sample_count, xs.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pde_comparison_positivity_and_majorant(q in prop::sample::select(vec![1.0, 2.0]), a in 0.0f64..5.0, slope in -2.0f64..2.0, shift in 0.0f64..3.0, n in 1.0f64..200.0) {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let offset = a + slope.abs();
        let g1 = BoundaryData::new(&d, FiniteData::Affine { offset, gradient: vec![slope] }, BlowupSet::empty()).unwrap();
        let g2 = g1.shifted(&d, shift).unwrap();
        let u1 = solve_truncated(&interval_problem(64, q, g1.clone(), n)).unwrap();
        let u2 = solve_truncated(&interval_problem(64, q, g2, n)).unwrap();
        let c = keller_osserman_constant(q, 1, KellerOssermanSetting::BrownianBall).unwrap();
        for i in 0..u1.values.len() {
            prop_assert!(u1.values[i] >= 0.0);
            prop_assert!(u1.values[i] <= u2.values[i] + 1e-9);
            let x = u1.grid.node(i);
            let rho = d.distance_to_boundary(&x).unwrap();
            if rho > 0.0 {
                prop_assert!(u1.values[i] <= majorant_value(&MajorantSpec::new(c, q), rho));
            }
        }
        prop_assert_eq!(u1.values[0], g1.truncated(&[0.0], n));
        prop_assert_eq!(u1.values[64], g1.truncated(&[1.0], n));
    }

    #[test]
    fn pde_monotone_in_truncation(q in prop::sample::select(vec![1.0, 2.0]), n in 1.0f64..100.0, r in 1.0f64..4.0) {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let g = BoundaryData::infinite(&d).unwrap();
        let lo = solve_truncated(&interval_problem(64, q, g.clone(), n)).unwrap();
        let hi = solve_truncated(&interval_problem(64, q, g, n * r)).unwrap();
        for (a, b) in lo.values.iter().zip(&hi.values) {
            prop_assert!(*a <= b + 1e-9);
        }
    }
}
