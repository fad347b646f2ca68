mod oracle;

use spiralwave::eigensolver::{
    eigenfunction, eigenvalue, nodal_count, prufer_flow, spectrum, weighted_inner,
};
use spiralwave::geometry::{make_disk, make_sphere, BoundaryCondition, RadialGrid};

#[test]
fn bessel_oracle_reproduces_tabulated_zeros() {
    // j_{1,1}, j'_{1,1}, j_{0,1}
    let d = oracle::positive_roots(|x| oracle::bessel_j(1, x).0, 1, 1e-2)[0];
    assert!((d - 3.831_705_970_207_512).abs() < 1e-12);
    let n = oracle::positive_roots(|x| oracle::bessel_j(1, x).1, 1, 1e-2)[0];
    assert!((n - 1.841_183_781_340_659).abs() < 1e-12);
    let z = oracle::positive_roots(|x| oracle::bessel_j(0, x).0, 1, 1e-2)[0];
    assert!((z - 2.404_825_557_695_773).abs() < 1e-12);
}

#[test]
fn sphere_spectrum_table() {
    let s = make_sphere();
    for m in 1..=3 {
        for n in 0..=5 {
            let lam = eigenvalue(&s, m, n, BoundaryCondition::NoBoundary).unwrap();
            let exact = oracle::sphere_eigenvalue(m, n);
            assert!(
                (lam - exact).abs() / exact <= 1e-8,
                "m={m} n={n}: {lam} vs {exact}"
            );
        }
    }
}

#[test]
fn disk_spectrum_matches_bessel_roots() {
    let d = make_disk();
    for (a1, a2) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        let bc = BoundaryCondition::robin(a1, a2).unwrap();
        for m in 1..=2 {
            let expect = oracle::disk_eigenvalues(m, a1, a2, 4);
            for (n, &exact) in expect.iter().enumerate() {
                let lam = eigenvalue(&d, m, n, bc).unwrap();
                assert!(
                    (lam - exact).abs() / exact <= 1e-8,
                    "bc=({a1},{a2}) m={m} n={n}: {lam} vs {exact}"
                );
            }
        }
    }
}

#[test]
fn neumann_ground_state_value() {
    let lam = eigenvalue(&make_disk(), 1, 0, BoundaryCondition::neumann()).unwrap();
    assert!((lam - 3.389_957_3).abs() < 1e-6, "{lam}");
}

#[test]
fn eigenfunctions_are_nodal_and_orthogonal() {
    let cases = [
        (make_sphere(), BoundaryCondition::NoBoundary),
        (make_disk(), BoundaryCondition::dirichlet()),
        (make_disk(), BoundaryCondition::robin(1.0, 1.0).unwrap()),
    ];
    for (surface, bc) in cases {
        let grid = RadialGrid::new(&surface);
        for m in 1..=2 {
            let pairs = spectrum(&surface, m, bc, 4, &grid).unwrap();
            for (k, p) in pairs.iter().enumerate() {
                assert_eq!(p.n, k);
                assert_eq!(nodal_count(&p.radial), k);
                assert!(p.radial[1] > 0.0);
                assert!(p.lambda > 0.0);
                let norm = weighted_inner(&surface, &grid, &p.radial, &p.radial);
                assert!((norm - 1.0).abs() < 1e-12);
                if k > 0 {
                    assert!(p.lambda - pairs[k - 1].lambda > 1e-8);
                }
                for q in &pairs[..k] {
                    let ip = weighted_inner(&surface, &grid, &p.radial, &q.radial);
                    assert!(
                        ip.abs() <= 1e-6,
                        "{} m={m} <{},{}> = {ip}",
                        surface.name(),
                        p.n,
                        q.n
                    );
                }
            }
        }
    }
}

#[test]
fn dirichlet_eigenfunction_is_bessel_profile() {
    let d = make_disk();
    let grid = RadialGrid::new(&d);
    let e = eigenfunction(&d, 2, 0, BoundaryCondition::dirichlet(), &grid).unwrap();
    let j = e.lambda.sqrt();
    let exact: Vec<f64> = e.s.iter().map(|&s| oracle::bessel_j(2, j * s).0).collect();
    let scale = weighted_inner(&d, &grid, &exact, &exact).sqrt();
    for (v, x) in e.radial.iter().zip(&exact) {
        assert!((v - x / scale).abs() < 1e-7);
    }
    assert!(e.radial.last().unwrap().abs() < 1e-9);
}

#[test]
fn sphere_nodal_index_four() {
    let s = make_sphere();
    let grid = RadialGrid::new(&s);
    let e = eigenfunction(&s, 1, 4, BoundaryCondition::NoBoundary, &grid).unwrap();
    assert_eq!(nodal_count(&e.radial), 4);
    let top = e.radial.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // v vanishes like s^m at both poles; the end nodes sit at distance ε.
    let eps = grid.tip_offset();
    assert!(e.radial[0].abs() < 10.0 * eps * top);
    assert!(e.radial.last().unwrap().abs() < 10.0 * eps * top);
}

#[test]
fn terminal_angle_is_monotone_in_lambda() {
    let d = make_disk();
    let grid = RadialGrid::new(&d);
    let bc = BoundaryCondition::robin(1.0, 1.0).unwrap();
    let mut prev = f64::INFINITY;
    for k in 0..60 {
        let lam = 0.5 * k as f64;
        let th = prufer_flow(&d, 2, lam, bc, &grid).unwrap().theta;
        assert!(th < prev, "lambda = {lam}");
        prev = th;
    }
}
