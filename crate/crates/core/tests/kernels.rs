use proptest::prelude::*;
use subheat_core::continuum::{gaussian, FreeSpace};
use subheat_core::grid::*;
use subheat_core::potential::PotentialSpec;
use subheat_core::spectral::*;
use subheat_core::subordinator::*;

fn decomposition(m: usize, bc: BoundaryCondition, v: &PotentialSpec, scheme: LaplacianScheme) -> SpectralDecomposition {
    let g = Grid::new(1, 16.0, m, bc).unwrap();
    eigendecompose(&assemble_with(&g, v, scheme)).unwrap()
}

#[test]
fn periodic_heat_diagonal_matches_wrapped_gaussian() {
    // image sum Σ_k g(32k) differs from g(0) by < 1e-100; the stencil's h²/16 bias needs M = 512
    let exact = (4.0 * std::f64::consts::PI).powf(-0.5);
    for (m, scheme, tol) in [
        (512, LaplacianScheme::FiniteDifference, 1e-4),
        (256, LaplacianScheme::FiniteDifference, 3e-4),
        (256, LaplacianScheme::Spectral, 1e-12),
    ] {
        let sd = decomposition(m, BoundaryCondition::Periodic, &PotentialSpec::Zero, scheme);
        let k = multiplier_kernel(&sd, &Multiplier::Heat { t: 1.0 }).unwrap();
        assert!((k.get(m / 3, m / 3) - exact).abs() < tol, "{scheme:?} M={m}");
    }
}

#[test]
fn dirichlet_ground_state_fd() {
    let sd = decomposition(256, BoundaryCondition::Dirichlet, &PotentialSpec::Zero, LaplacianScheme::FiniteDifference);
    let exact = (std::f64::consts::PI / 32.0).powi(2);
    assert!((sd.eigenvalues[0] - exact).abs() < 0.02 * exact);
}

#[test]
fn constant_potential_shifts_spectrum() {
    for scheme in [LaplacianScheme::FiniteDifference, LaplacianScheme::Spectral] {
        let a = decomposition(64, BoundaryCondition::Dirichlet, &PotentialSpec::Zero, scheme);
        let b = decomposition(64, BoundaryCondition::Dirichlet, &PotentialSpec::constant(2.5).unwrap(), scheme);
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((y - x - 2.5).abs() < 1e-9 * (1.0 + x));
        }
    }
}

#[test]
fn eigenrelation_and_conservation() {
    let sd = decomposition(128, BoundaryCondition::Periodic, &PotentialSpec::Zero, LaplacianScheme::FiniteDifference);
    assert!(sd.has_zero_mode);
    let k = multiplier_kernel(&sd, &Multiplier::Heat { t: 0.7 }).unwrap();
    let phi = sd.eigenfunction(9);
    let out = apply_kernel(&k, &phi).unwrap();
    let decay = (-0.7 * sd.eigenvalues[9]).exp();
    for (a, b) in out.values().iter().zip(phi.values()) {
        assert!((a - decay * b).abs() < 1e-8);
    }
    let ones = sd.grid.from_fn(|_| 1.0);
    let out = apply_kernel(&k, &ones).unwrap();
    assert!(out.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
    let id = multiplier_kernel(&sd, &Multiplier::Identity).unwrap();
    let f = sd.grid.from_fn(|p| p[0].sin());
    let back = apply_kernel(&id, &f).unwrap();
    assert!(back.values().iter().zip(f.values()).all(|(a, b)| (a - b).abs() < 1e-8));
}

#[test]
fn poisson_is_half_order_fractional_heat() {
    let sd = decomposition(64, BoundaryCondition::Dirichlet, &PotentialSpec::constant(1.0).unwrap(), LaplacianScheme::Spectral);
    let a = multiplier_kernel(&sd, &Multiplier::Poisson { t: 0.8 }).unwrap();
    let b = multiplier_kernel(&sd, &Multiplier::FracHeat { alpha: 0.5, t: 0.8 }).unwrap();
    assert_eq!(a.max_abs_diff(&b), 0.0);
}

#[test]
fn heat_kernel_axioms() {
    for scheme in [LaplacianScheme::FiniteDifference, LaplacianScheme::Spectral] {
        for v in [PotentialSpec::Zero, PotentialSpec::constant(1.0).unwrap(), PotentialSpec::power(1.0, 2.0).unwrap()] {
            let sd = decomposition(128, BoundaryCondition::Dirichlet, &v, scheme);
            let heat = |t: f64| multiplier_kernel(&sd, &Multiplier::Heat { t }).unwrap();
            for t in [0.25, 1.0, 4.0] {
                let k = heat(t);
                assert!(k.values.min() >= -1e-10, "{scheme:?} {v:?} t={t}: min {}", k.values.min());
                assert!(k.symmetry_defect() <= 1e-8);
                assert!(k.row_integrals().iter().all(|&r| r <= 1.0 + 1e-8));
            }
            for s in [0.25, 0.5, 1.0] {
                for t in [0.25, 0.5, 1.0] {
                    let lhs = heat(s + t);
                    let rhs = heat(s).compose(&heat(t));
                    assert!(lhs.max_abs_diff(&rhs) <= 1e-6);
                }
            }
        }
    }
}

#[test]
fn fractional_semigroup_property() {
    let sd = decomposition(128, BoundaryCondition::Dirichlet, &PotentialSpec::power(1.0, 2.0).unwrap(), LaplacianScheme::Spectral);
    for alpha in [0.3, 0.8] {
        let k = |t: f64| multiplier_kernel(&sd, &Multiplier::FracHeat { alpha, t }).unwrap();
        assert!(k(1.5).max_abs_diff(&k(0.5).compose(&k(1.0))) <= 1e-8);
    }
}

#[test]
fn spectral_scheme_is_dominated_by_the_gaussian() {
    for v in [PotentialSpec::Zero, PotentialSpec::constant(1.0).unwrap(), PotentialSpec::power(1.0, 2.0).unwrap()] {
        let sd = decomposition(256, BoundaryCondition::Dirichlet, &v, LaplacianScheme::Spectral);
        let g = &sd.grid;
        for t in [0.25, 1.0, 4.0] {
            let k = multiplier_kernel(&sd, &Multiplier::Heat { t }).unwrap();
            for i in 0..g.len() {
                for j in 0..g.len() {
                    let d = g.point_distance(i, j);
                    assert!(k.get(i, j) <= gaussian(1, t, d) + 1e-8);
                }
            }
        }
    }
}

#[test]
fn subordinated_poisson_on_the_diagonal() {
    let sd = decomposition(256, BoundaryCondition::Dirichlet, &PotentialSpec::Zero, LaplacianScheme::Spectral);
    let dens = SubordinatorDensity::new(0.5).unwrap();
    let quad = SubordinationQuad::for_time(&dens, 1.0, 40.0 / sd.lambda_min_positive());
    let k = subordinate_kernel(&sd, &dens, 1.0, &quad).unwrap();
    assert_eq!(k.route, Route::Subordinated);
    let c = sd.grid.points_per_axis() / 2;
    // cell centres sit at ±h/2, so the diagonal entry is exactly the d = 0 value of the box kernel
    assert!((k.get(c, c) - 1.0 / std::f64::consts::PI).abs() < 1e-3, "{}", k.get(c, c));
}

#[test]
fn free_space_subordination_matches_poisson() {
    let g = Grid::new(1, 16.0, 128, BoundaryCondition::Dirichlet).unwrap();
    let fs = FreeSpace::new(&g);
    let dens = SubordinatorDensity::new(0.5).unwrap();
    let inner = g.inner_half_indices();
    for t in [0.25, 1.0, 4.0] {
        let mut quad = SubordinationQuad::for_time(&dens, t, 1e8 * (t * t + 256.0));
        quad.panels = 32;
        let sub = subordinate_kernel(&fs, &dens, t, &quad).unwrap();
        let exact = fs.poisson(t).unwrap();
        for &i in &inner {
            for &j in &inner {
                let e = exact.get(i, j);
                assert!((sub.get(i, j) - e).abs() <= 1e-3 * e);
            }
        }
    }
}

#[test]
fn two_route_fractional_kernel_small_grid() {
    let sd = decomposition(96, BoundaryCondition::Dirichlet, &PotentialSpec::constant(1.0).unwrap(), LaplacianScheme::Spectral);
    for alpha in [0.3, 0.8] {
        let dens = SubordinatorDensity::new(alpha).unwrap();
        for t in [0.25, 4.0] {
            let spectral = multiplier_kernel(&sd, &Multiplier::FracHeat { alpha, t }).unwrap();
            let quad = SubordinationQuad::for_time(&dens, t, 40.0 / sd.lambda_min_positive());
            let sub = subordinate_kernel(&sd, &dens, t, &quad).unwrap();
            assert!(spectral.max_abs_diff(&sub) <= 1e-5 * spectral.max_abs());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn heat_kernel_entries_bounded_and_symmetric(t in 0.05f64..5.0, c in 0.0f64..3.0) {
        let sd = decomposition(32, BoundaryCondition::Dirichlet, &PotentialSpec::constant(c).unwrap_or(PotentialSpec::Zero), LaplacianScheme::Spectral);
        let k = multiplier_kernel(&sd, &Multiplier::Heat { t }).unwrap();
        prop_assert!(k.symmetry_defect() <= 1e-10);
        prop_assert!(k.row_integrals().iter().all(|&r| r <= 1.0 + 1e-8));
    }

    #[test]
    fn multiplier_kernels_commute(s in 0.1f64..2.0, t in 0.1f64..2.0, alpha in 0.2f64..0.95) {
        let sd = decomposition(32, BoundaryCondition::Dirichlet, &PotentialSpec::power(1.0, 2.0).unwrap(), LaplacianScheme::FiniteDifference);
        let a = multiplier_kernel(&sd, &Multiplier::FracHeat { alpha, t: s }).unwrap();
        let b = multiplier_kernel(&sd, &Multiplier::Heat { t }).unwrap();
        prop_assert!(a.compose(&b).max_abs_diff(&b.compose(&a)) <= 1e-9 * (1.0 + a.max_abs() * b.max_abs()));
    }
}

#[test]
fn tensor_eigenpairs_match_the_dense_solver() {
    let potentials = [
        PotentialSpec::Zero,
        PotentialSpec::constant(1.0).unwrap(),
        PotentialSpec::power(0.5, 2.0).unwrap(),
        PotentialSpec::sum(vec![PotentialSpec::constant(0.3).unwrap(), PotentialSpec::power(1.0, 2.0).unwrap()]).unwrap(),
        PotentialSpec::well([-1.0, -1.0, 0.0], [1.0, 0.5, 0.0], 2.0).unwrap(),
    ];
    for scheme in [LaplacianScheme::FiniteDifference, LaplacianScheme::Spectral] {
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Periodic] {
            for v in &potentials {
                let g = Grid::new(2, 3.0, 12, bc).unwrap();
                let op = assemble_with(&g, v, scheme);
                let sd = eigendecompose(&op).unwrap();
                let dense = nalgebra::SymmetricEigen::new(op.matrix.clone());
                let mut lams: Vec<f64> = dense.eigenvalues.iter().copied().collect();
                lams.sort_by(f64::total_cmp);
                for (a, b) in sd.eigenvalues.iter().zip(&lams) {
                    assert!((a - b.max(0.0)).abs() <= 1e-9 * (1.0 + b.abs()), "{scheme:?} {bc:?} {v:?}");
                }
                let t = 0.3;
                let k = multiplier_kernel(&sd, &Multiplier::Heat { t }).unwrap();
                let mut w = dense.eigenvalues.clone();
                w.iter_mut().for_each(|l| *l = (-t * *l).exp());
                let reference = &dense.eigenvectors * nalgebra::DMatrix::from_diagonal(&w) * dense.eigenvectors.transpose() / g.weight();
                assert!((&k.values - reference).abs().max() <= 1e-10, "{scheme:?} {bc:?} {v:?}");
            }
        }
    }
}
