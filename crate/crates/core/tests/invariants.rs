use aphe::assembly::{
    assemble_mass, assemble_par, assemble_perp, assemble_stiffness, integral, l2_norm_error,
    Coefficients, ErrorMode,
};
use aphe::field::{Anisotropy, MagneticField};
use aphe::grid::Grid;
use aphe::mms::{ManufacturedSolution, MmsParams};
use aphe::schemes::{run, NoSources, RunOptions, SchemeConfig, SchemeKind};
use aphe::sparse::{backward_error, lu_solve, DirectSolver, SparseMatrix, Triplets};
use proptest::prelude::*;

fn random_sparse(n: usize, entries: &[(usize, usize, f64)]) -> SparseMatrix {
    let mut t = Triplets::new(n);
    for i in 0..n {
        t.push(i, i, 4.0 + i as f64 % 3.0);
    }
    for &(i, j, v) in entries {
        t.push(i % n, j % n, v);
    }
    t.finalize().unwrap()
}

fn sum_rows(a: &SparseMatrix) -> f64 {
    a.mul_vec(&vec![1.0; a.dim()]).iter().map(|v| v.abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn direct_solver_matches_gilbert_peierls(
        n in 1usize..80,
        entries in prop::collection::vec((0usize..80, 0usize..80, -3.0f64..3.0), 0..400),
        seed in prop::collection::vec(-1.0f64..1.0, 80),
    ) {
        let a = random_sparse(n, &entries);
        let b = &seed[..n];
        let x = DirectSolver::new().solve(&a, b).unwrap();
        let y = lu_solve(&a, b).unwrap();
        prop_assert!(backward_error(&a, &x, b) < 1e-13);
        let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for (xi, yi) in x.iter().zip(&y) {
            prop_assert!((xi - yi).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn direct_solver_reuses_pattern_across_values(
        entries in prop::collection::vec((0usize..40, 0usize..40, -2.0f64..2.0), 1..200),
        factor in 0.5f64..5.0,
    ) {
        let a = random_sparse(40, &entries);
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let mut solver = DirectSolver::new();
        let x1 = solver.solve(&a, &b).unwrap();
        let x2 = solver.solve(&a.scaled(factor), &b).unwrap();
        for (u, v) in x1.iter().zip(&x2) {
            prop_assert!((u - factor * v).abs() < 1e-10 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn quadratics_are_reproduced(
        half in 1usize..6,
        c in prop::array::uniform6(-2.0f64..2.0),
    ) {
        let grid = Grid::from_lattice(2 * half, 2 * half + 2).unwrap();
        let q = |x: [f64; 2]| {
            c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[0] + c[4] * x[0] * x[1] + c[5] * x[1] * x[1]
        };
        let uh = grid.interpolate(q);
        let err = l2_norm_error(&grid, &uh, |_, x| q(x), 0.0, ErrorMode::Absolute).unwrap();
        prop_assert!(err < 1e-13);
    }

    #[test]
    fn mass_integrates_area_and_stiffness_kills_constants(lx in 1usize..6, ly in 1usize..6) {
        let grid = Grid::from_lattice(2 * lx, 2 * ly).unwrap();
        let m = assemble_mass(&grid);
        let ones = vec![1.0; grid.num_nodes()];
        prop_assert!((m.bilinear(&ones, &ones) - 1.0).abs() < 1e-13);
        prop_assert!(m.is_symmetric(1e-14));
        prop_assert!(sum_rows(&assemble_stiffness(&grid)) < 1e-12);
    }

    #[test]
    fn anisotropic_split_sums_to_laplacian(alpha in 0.0f64..3.0, half in 1usize..4) {
        let field = MagneticField::new(alpha);
        let grid = Grid::from_lattice(2 * half, 2 * half).unwrap();
        let unit = Coefficients::unit();
        let par = assemble_par(&grid, &field, &unit).unwrap();
        let perp = assemble_perp(&grid, &field, &unit).unwrap();
        let diff = par.add_scaled(1.0, &perp, 1.0).unwrap()
            .add_scaled(1.0, &assemble_stiffness(&grid), -1.0).unwrap();
        prop_assert!(diff.max_abs() < 1e-12);
        prop_assert!(sum_rows(&par) < 1e-12);
    }

    #[test]
    fn parallel_direction_is_unit(alpha in 0.0f64..5.0, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let b = MagneticField::new(alpha).direction([x, y]);
        prop_assert!((b.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn limit_profile_is_constant_along_field_lines(alpha in 0.0f64..3.0, t in 0.0f64..1.0) {
        let sol = ManufacturedSolution::new(MmsParams { alpha, eps: 1e-6, ..Default::default() }).unwrap();
        let points: Vec<[f64; 2]> = (0..25).map(|k| [0.04 * k as f64 + 0.02, 0.5]).collect();
        prop_assert!(sol.limit_constancy_check(t, &points) < 1e-10);
    }
}

#[test]
fn constants_survive_every_scheme() {
    let field = MagneticField::new(2.0);
    let grid = Grid::from_lattice(8, 8).unwrap().classify_boundary(&field).unwrap();
    for kind in [SchemeKind::P, SchemeKind::EAp, SchemeKind::CnAp, SchemeKind::RkAp] {
        for eps in [1.0, 1e-4] {
            let config = SchemeConfig::new(kind, eps, 0.05).with_gamma(0.0);
            let d = run(vec![3.0; grid.num_nodes()], config, &grid, &field, &NoSources, 0.2, RunOptions::default())
                .unwrap();
            let u = &d.final_state.u;
            let dev = u.iter().map(|v| (v - 3.0).abs()).fold(0.0, f64::max);
            // P's single-field matrix has condition ~ 1/eps
            let tol = if kind == SchemeKind::P { 1e-13 / eps } else { 1e-11 };
            assert!(dev < tol, "{kind} eps={eps}: deviation {dev:e}");
            let drift = (integral(&grid, u) - 3.0).abs();
            assert!(drift < tol, "{kind} eps={eps}: mass drift {drift:e}");
        }
    }
}
