use spiralwave::complex_branch::{
    omega_b_derivative, omega_eta_derivative, solve_perturbed, sweep_parameters,
};
use spiralwave::discretization::RadialProblem;
use spiralwave::eigensolver::eigenfunction;
use spiralwave::geometry::{make_disk, make_sphere, BoundaryCondition};
use spiralwave::kinetics::make_cubic;
use spiralwave::real_branch::{continue_branch, BranchPoint, ContinuationOptions};

fn base(problem: &RadialProblem, lambda: f64) -> BranchPoint {
    let e = eigenfunction(&problem.surface, problem.m, 0, problem.bc, &problem.grid).unwrap();
    let b = continue_branch(problem, &e, lambda, ContinuationOptions::new(0.5)).unwrap();
    assert!(b.completed());
    b.points.last().unwrap().clone()
}

fn cases() -> Vec<(RadialProblem, BranchPoint)> {
    let sphere = RadialProblem::new(
        make_sphere(),
        BoundaryCondition::NoBoundary,
        make_cubic(0.0),
        1,
    )
    .unwrap();
    let disk = RadialProblem::new(
        make_disk(),
        BoundaryCondition::neumann(),
        make_cubic(0.0),
        1,
    )
    .unwrap();
    let bs = base(&sphere, 3.0);
    let bd = base(&disk, 5.0);
    vec![(sphere, bs), (disk, bd)]
}

#[test]
fn eta_derivative_matches_quadrature_and_lies_in_unit_interval() {
    for (p, b) in cases() {
        let h = 1e-4;
        let plus = solve_perturbed(&p, &b, h, &[0.0]).unwrap();
        let minus = solve_perturbed(&p, &b, -h, &[0.0]).unwrap();
        let fd = (plus.omega - minus.omega) / (2.0 * h);
        let quad = omega_eta_derivative(&p, &b);
        assert!(fd > 0.0 && fd < 1.0, "{fd}");
        assert!((fd - quad).abs() <= 1e-4, "{fd} vs {quad}");
    }
}

#[test]
fn beta_derivative_matches_quadrature() {
    for (p, b) in cases() {
        let h = 1e-4;
        let plus = solve_perturbed(&p, &b, 0.0, &[h]).unwrap();
        let minus = solve_perturbed(&p, &b, 0.0, &[-h]).unwrap();
        let fd = (plus.omega - minus.omega) / (2.0 * h);
        let quad = omega_b_derivative(&p, &b)[0];
        assert!((fd - quad).abs() <= 1e-4, "{fd} vs {quad}");
    }
}

#[test]
fn sweep_converges_smoothly() {
    let grid: Vec<f64> = (0..11).map(|k| -0.1 + 0.02 * k as f64).collect();
    let b_grid: Vec<Vec<f64>> = grid.iter().map(|&x| vec![x]).collect();
    for (p, b) in cases() {
        let sheet = sweep_parameters(&p, &b, &grid, &b_grid);
        assert!(sheet.failures.is_empty(), "{:?}", sheet.failures);
        assert!(sheet.max_neighbor_jump() <= 0.05);
        for pt in sheet.converged() {
            assert!(pt.residual_norm <= 1e-10);
            assert!(pt.gauge_residual.abs() <= 1e-12);
            assert!(pt.freq_relation_residual.abs() <= 1e-8);
            assert!(!pt.possible_secondary_bifurcation);
        }
    }
}

#[test]
fn beta_line_rotates() {
    let (p, b) = cases().remove(0);
    for beta in [-0.08, -0.03, 0.03, 0.08] {
        let pt = solve_perturbed(&p, &b, 0.0, &[beta]).unwrap();
        assert!(pt.omega.abs() > 1e-4, "{beta}: {}", pt.omega);
    }
}

#[test]
fn decoupling_along_lambda() {
    let p = RadialProblem::new(
        make_sphere(),
        BoundaryCondition::NoBoundary,
        make_cubic(0.0),
        1,
    )
    .unwrap();
    let e = eigenfunction(&p.surface, 1, 0, p.bc, &p.grid).unwrap();
    let branch = continue_branch(&p, &e, 6.0, ContinuationOptions::new(1.0)).unwrap();
    for bp in &branch.points {
        let pt = solve_perturbed(&p, bp, 0.0, &[0.0]).unwrap();
        assert!(pt.omega.abs() <= 1e-10 && pt.max_imag() <= 1e-10);
    }
}
