use singular_bsde::closedform::{halfline_blowup_coefficient, GeneratorSpec};
use singular_bsde::diffusion::CoefficientField;
use singular_bsde::geometry::{BlowupSet, BoundaryData, BoundaryRegion, Domain, FiniteData};
use singular_bsde::pde::{
    boundary_layer_profile, ladder_level_cap, ladder_minimal, power_of_two_levels_to, solve_truncated, EllipticProblem,
    Grid, SolutionField,
};

fn solve(cells: usize, field: &CoefficientField, g: &BoundaryData) -> SolutionField {
    let d = Domain::interval(0.0, 1.0).unwrap();
    let p = EllipticProblem::new(
        Grid::new(&d, &[cells]).unwrap(),
        field.clone(),
        GeneratorSpec::power(1.0, 1.0).unwrap(),
        g.clone(),
        100.0,
    )
    .unwrap();
    solve_truncated(&p).unwrap()
}

/// Sup error at the coarse nodes against a 4x finer solution.
fn error_vs_fine(cells: usize, field: &CoefficientField, g: &BoundaryData) -> f64 {
    let coarse = solve(cells, field, g);
    let fine = solve(4 * cells, field, g);
    (0..=cells).map(|i| (coarse.values[i] - fine.values[4 * i]).abs()).fold(0.0, f64::max)
}

fn ratios(field: &CoefficientField, g: &BoundaryData) -> Vec<f64> {
    let errs: Vec<f64> = [16, 32, 64, 128].iter().map(|&c| error_vs_fine(c, field, g)).collect();
    errs.windows(2).map(|w| w[0] / w[1]).collect()
}

#[test]
fn second_order_without_drift() {
    let d = Domain::interval(0.0, 1.0).unwrap();
    let g = BoundaryData::new(&d, FiniteData::Affine { offset: 1.0, gradient: vec![2.0] }, BlowupSet::empty()).unwrap();
    for r in ratios(&CoefficientField::brownian(1), &g) {
        assert!((3.2..=4.8).contains(&r), "ratio {r}");
    }
}

#[test]
fn upwind_drift_between_first_and_second_order() {
    let d = Domain::interval(0.0, 1.0).unwrap();
    let g = BoundaryData::constant(&d, 2.0).unwrap();
    for r in ratios(&CoefficientField::constant_drift(vec![1.0], 1.0), &g) {
        assert!((1.7..=4.8).contains(&r), "ratio {r}");
    }
}

#[test]
fn halfline_profile_near_blowup_end() {
    let q = 2.0;
    let a = halfline_blowup_coefficient(q, 1.0);
    assert!((a - 1.0).abs() < 1e-12);
    let d = Domain::interval(0.0, 1.0).unwrap();
    let g = BoundaryData::new(
        &d,
        FiniteData::Constant { value: 1.0 },
        BlowupSet::new(vec![BoundaryRegion::Point { at: vec![0.0] }]),
    )
    .unwrap();
    let h = 1.0 / 2048.0;
    let p = EllipticProblem::new(
        Grid::with_spacing(&d, h).unwrap(),
        CoefficientField::brownian(1),
        GeneratorSpec::power(q, 1.0).unwrap(),
        g,
        1.0,
    )
    .unwrap();
    let levels = power_of_two_levels_to(ladder_level_cap(q, 1.0, 1.0, h));
    let (u, _) = ladder_minimal(&p, &levels, None, 1e-6).unwrap();
    let profile = boundary_layer_profile(&u, &[0.0], &[1.0]).unwrap();
    // rho is distance to either end; keep the half next to x = 0
    let half = profile.windows(2).take_while(|w| w[1].0 > w[0].0).count() + 1;
    let near: Vec<f64> = profile[..half].iter().filter(|(r, _)| (0.01..=0.03).contains(r)).map(|&(_, v)| v).collect();
    assert!(!near.is_empty());
    for v in near {
        assert!((v - a).abs() <= 0.1 * a, "profile {v}");
    }
}
