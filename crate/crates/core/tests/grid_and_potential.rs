use proptest::prelude::*;
use subheat_core::grid::*;
use subheat_core::potential::*;

fn line(m: usize) -> Grid {
    Grid::new(1, 16.0, m, BoundaryCondition::Dirichlet).unwrap()
}

#[test]
fn build_grid_examples() {
    assert_eq!(line(256).spacing(), 0.125);
    let g = Grid::new(2, 8.0, 48, BoundaryCondition::Periodic).unwrap();
    assert_eq!(g.len(), 2304);
    assert!((g.weight() - 1.0 / 9.0).abs() < 1e-15);
    assert!(Grid::new(1, 16.0, 7, BoundaryCondition::Dirichlet).is_err());
    let total: f64 = g.weight() * g.len() as f64;
    assert!((total - 256.0).abs() < 1e-12 * 256.0);
}

#[test]
fn gaussian_integral_converges_at_second_order() {
    let errs: Vec<f64> = [64, 128, 256, 512]
        .iter()
        .map(|&m| {
            let g = line(m);
            let f = g.from_fn(|p| (-p[0] * p[0]).exp());
            (grid_integrate(&f).unwrap() - std::f64::consts::PI.sqrt()).abs()
        })
        .collect();
    assert!(errs[3] < 1e-8);
    // midpoint rule on an analytic, rapidly decaying integrand converges faster than h²
    for w in errs.windows(2) {
        assert!(w[1] <= w[0] / 4.0 || w[1] < 1e-14, "{errs:?}");
    }
}

#[test]
fn ball_containment_flags() {
    let g = line(256);
    let b = ball_points(&g, &[15.9, 0.0, 0.0], 1.0).unwrap();
    assert!(!b.contained);
    assert!(matches!(ball_points(&g, &[0.0; 3], 0.01), Err(subheat_core::Error::EmptyBall { .. })));
}

#[test]
fn rho_examples_three_dimensions() {
    let g = Grid::new(3, 4.0, 8, BoundaryCondition::Dirichlet).unwrap();
    let one = PotentialSpec::constant(1.0).unwrap();
    let r = compute_rho(&one, &g, &[0.0; 3], 1e-10).unwrap().rho;
    assert!((r - (3.0 / (4.0 * std::f64::consts::PI)).sqrt()).abs() < 1e-8);
    let quad = PotentialSpec::power(1.0, 2.0).unwrap();
    let r = compute_rho(&quad, &g, &[0.0; 3], 1e-10).unwrap().rho;
    assert!((r - (5.0 / (4.0 * std::f64::consts::PI)).powf(0.25)).abs() < 1e-6, "{r}");
}

#[test]
fn constraint_equals_one_at_rho() {
    let g = line(256);
    let v = PotentialSpec::power(1.0, 2.0).unwrap();
    for x in [0.0, 0.7, 3.0] {
        let p = [x, 0.0, 0.0];
        let r = compute_rho(&v, &g, &p, 1e-10).unwrap();
        assert_eq!(r.flag, RhoFlag::Interior);
        assert!((rho_functional(&v, 1, &p, r.rho) - 1.0).abs() < 1e-8);
    }
}

#[test]
fn reverse_holder_constant_potential_is_one() {
    let g = line(256);
    let balls: Vec<Ball> = [2.0, 4.0].iter().map(|&r| ball_points(&g, &[1.0, 0.0, 0.0], r).unwrap()).collect();
    let rep = reverse_holder_constant(&PotentialSpec::constant(1.0).unwrap(), 1, 3.0, &balls).unwrap();
    assert!((rep.c_best - 1.0).abs() < 1e-10);
    assert!(rep.holds);
}

#[test]
fn reverse_holder_power_potential_is_scale_invariant() {
    let g = Grid::new(3, 4.0, 16, BoundaryCondition::Dirichlet).unwrap();
    let v = PotentialSpec::power(1.0, 2.0).unwrap();
    let q = 3.0;
    let cs: Vec<f64> = [1.5, 2.0, 3.0]
        .iter()
        .map(|&r| {
            let b = ball_points(&g, &[0.0; 3], r).unwrap();
            reverse_holder_constant(&v, 3, q, &[b]).unwrap().c_best
        })
        .collect();
    // (avg |y|^{2q})^{1/q} / avg |y|² = (3/(2q+3))^{1/q} · 5/3 on centred balls
    let exact = (3.0 / (2.0 * q + 3.0)).powf(1.0 / q) * 5.0 / 3.0;
    for c in cs {
        assert!((c - exact).abs() < 1e-6 * exact, "{c} vs {exact}");
    }
}

#[test]
fn aux_lemmas_report() {
    let g = line(256);
    let pts: Vec<Point> = [-2.0, 0.0, 1.5].iter().map(|&x| [x, 0.0, 0.0]).collect();
    let scales = [0.25, 0.5, 1.0, 2.0];
    let z = check_aux_lemmas(&PotentialSpec::Zero, &g, &pts, &scales, 2.0).unwrap();
    assert_eq!(z.skipped.as_deref(), Some("ρ undefined"));
    let c = check_aux_lemmas(&PotentialSpec::constant(1.0).unwrap(), &g, &pts, &scales, 2.0).unwrap();
    assert!((c.doubling - 2.0).abs() < 1e-12);
    let p = check_aux_lemmas(&PotentialSpec::power(1.0, 2.0).unwrap(), &g, &pts, &scales, 2.0).unwrap();
    assert!(p.comparability.is_finite() && p.comparability >= 1.0);
}

#[test]
fn aux_function_of_zero_potential_is_infinite() {
    let g = line(64);
    assert!(AuxFunction::new(&PotentialSpec::Zero, &g, 1e-10).unwrap().is_infinite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flat_index_round_trips(n in 1usize..=3, m in (4usize..=12).prop_map(|k| 2 * k), seed in 0usize..10_000) {
        let g = Grid::new(n, 2.0, m, BoundaryCondition::Periodic).unwrap();
        let flat = seed % g.len();
        let idx = g.multi_index(flat);
        prop_assert_eq!(g.flat_index(&idx[..n]), flat);
        let p = g.point(flat);
        for c in &p[..n] {
            prop_assert!(*c >= -2.0 && *c < 2.0);
        }
    }

    #[test]
    fn affine_functions_integrate_exactly(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = Grid::new(2, 3.0, 16, BoundaryCondition::Dirichlet).unwrap();
        let f = g.from_fn(|p| a * p[0] + b * p[1] + 1.0);
        let v = grid_integrate(&f).unwrap();
        prop_assert!((v - 36.0).abs() < 1e-10 * 36.0);
    }

    #[test]
    fn balls_are_monotone(r1 in 0.2f64..3.0, dr in 0.0f64..3.0, x in -4.0f64..4.0) {
        let g = line(128);
        let c = [x, 0.0, 0.0];
        let small = ball_points(&g, &c, r1).unwrap();
        let big = ball_points(&g, &c, r1 + dr).unwrap();
        prop_assert!(small.members.iter().all(|i| big.members.contains(i)));
    }

    #[test]
    fn rho_decreases_when_the_potential_grows(c in 1.0f64..20.0, x in -3.0f64..3.0) {
        let g = line(128);
        let p = [x, 0.0, 0.0];
        let v = PotentialSpec::power(1.0, 2.0).unwrap();
        let r1 = compute_rho(&v, &g, &p, 1e-10).unwrap().rho;
        let r2 = compute_rho(&v.scaled(c), &g, &p, 1e-10).unwrap().rho;
        prop_assert!(r2 <= r1 * (1.0 + 1e-12));
    }
}
