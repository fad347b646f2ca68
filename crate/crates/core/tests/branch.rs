use spiralwave::discretization::RadialProblem;
use spiralwave::eigensolver::{eigenfunction, nodal_count};
use spiralwave::geometry::{make_disk, make_sphere, BoundaryCondition};
use spiralwave::kinetics::make_cubic;
use spiralwave::real_branch::{
    continue_branch, fit_pitchfork_curvature, verify_branch, ContinuationOptions,
};

fn sphere(m: usize) -> RadialProblem {
    RadialProblem::new(
        make_sphere(),
        BoundaryCondition::NoBoundary,
        make_cubic(0.0),
        m,
    )
    .unwrap()
}

#[test]
fn disk_neumann_principal_branch_reaches_twenty() {
    let p = RadialProblem::new(
        make_disk(),
        BoundaryCondition::neumann(),
        make_cubic(0.0),
        1,
    )
    .unwrap();
    let e = eigenfunction(&p.surface, 1, 0, p.bc, &p.grid).unwrap();
    let b = continue_branch(&p, &e, 20.0, ContinuationOptions::new(0.5)).unwrap();
    assert!(b.completed(), "{:?}", b.termination);
    assert_eq!(b.points.last().unwrap().lambda, 20.0);
    let report = verify_branch(&p, &b);
    assert!(report.passed(), "{:?}", report.failures);
    assert!(report.amplitude_nondecreasing);
    for pt in &report.points {
        assert!(pt.residual_norm <= 1e-10);
        assert!(pt.sup_excess <= 1e-8);
        assert!(pt.principal_eigenvalue < 0.0);
    }
}

#[test]
fn sphere_branch_keeps_no_nodes_and_fits_twelve_fifths() {
    let p = sphere(1);
    let e = eigenfunction(&p.surface, 1, 0, p.bc, &p.grid).unwrap();
    let b = continue_branch(&p, &e, 10.0, ContinuationOptions::new(0.25)).unwrap();
    assert!(b.completed(), "{:?}", b.termination);
    assert!(b
        .points
        .iter()
        .all(|q| q.nodal_index == 0 && nodal_count(&q.u) == 0));
    assert!(verify_branch(&p, &b).passed());
    // The quartic term spoils wide windows; fit close to onset.
    let near = continue_branch(&p, &e, e.lambda + 0.2, ContinuationOptions::new(0.01)).unwrap();
    let d2 = fit_pitchfork_curvature(&near, 0.1).unwrap();
    assert!((d2 - 2.4).abs() <= 0.02 * 2.4, "{d2}");
}

#[test]
fn negative_leg_is_the_negation() {
    let p = sphere(1);
    let e = eigenfunction(&p.surface, 1, 0, p.bc, &p.grid).unwrap();
    let plus = continue_branch(&p, &e, 4.0, ContinuationOptions::new(0.25)).unwrap();
    let minus =
        continue_branch(&p, &e, 4.0, ContinuationOptions::new(0.25).with_sign(-1.0)).unwrap();
    assert_eq!(plus.points.len(), minus.points.len());
    for (a, b) in plus.points.iter().zip(&minus.points) {
        assert_eq!(a.lambda, b.lambda);
        let d =
            a.u.iter()
                .zip(&b.u)
                .map(|(x, y)| (x + y).abs())
                .fold(0.0, f64::max);
        assert!(d <= 1e-8, "{d}");
    }
    assert!(verify_branch(&p, &minus).passed());
}

#[test]
fn sphere_reflection_parity() {
    for n in 0..3 {
        let p = sphere(1);
        let e = eigenfunction(&p.surface, 1, n, p.bc, &p.grid).unwrap();
        let b = continue_branch(&p, &e, e.lambda + 2.0, ContinuationOptions::new(0.25)).unwrap();
        assert!(!b.points.is_empty());
        let report = verify_branch(&p, &b);
        for pt in &report.points {
            let r = pt.reflection_residual.unwrap();
            assert!(r <= 1e-8, "n = {n}: {r}");
        }
        assert!(report.passed(), "n = {n}: {:?}", report.failures);
    }
}
