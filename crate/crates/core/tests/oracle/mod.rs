//! Independent reference values: Bessel functions from the ascending series
//! and their roots by scan-and-bisect.

#![allow(dead_code)]

/// `J_m(x)` and `J_m'(x)` from the ascending series.
pub fn bessel_j(m: usize, x: f64) -> (f64, f64) {
    let half = 0.5 * x;
    let mut term = half.powi(m as i32) / (1..=m).map(|k| k as f64).product::<f64>();
    let mut value = 0.0;
    let mut deriv = 0.0;
    for k in 0..200 {
        value += term;
        // d/dx of (x/2)^{2k+m} is (2k+m)/x times the term.
        if x != 0.0 {
            deriv += (2 * k + m) as f64 / x * term;
        }
        term *= -half * half / ((k + 1) as f64 * (k + 1 + m) as f64);
        if term.abs() < 1e-18 * value.abs().max(1e-300) && k > m {
            break;
        }
    }
    if x == 0.0 && m == 1 {
        deriv = 0.5;
    }
    (value, deriv)
}

/// Disk boundary condition `α₁ J_m(x) + α₂ x J_m'(x)` at the rim.
pub fn disk_condition(m: usize, alpha1: f64, alpha2: f64, x: f64) -> f64 {
    let (j, dj) = bessel_j(m, x);
    alpha1 * j + alpha2 * x * dj
}

/// First `count` positive roots of `g`, found by scanning with step `dx`
/// and bisecting each sign change to full precision.
pub fn positive_roots(g: impl Fn(f64) -> f64, count: usize, dx: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut x0 = 1e-3;
    let mut g0 = g(x0);
    while roots.len() < count {
        let x1 = x0 + dx;
        let g1 = g(x1);
        if g0 == 0.0 {
            roots.push(x0);
        } else if g0.signum() != g1.signum() {
            let (mut lo, mut hi) = (x0, x1);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid).signum() == g0.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 4.0 * f64::EPSILON * hi {
                    break;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        g0 = g1;
    }
    roots
}

/// `λ_n^m` on the unit disk for `n = 0..count`.
pub fn disk_eigenvalues(m: usize, alpha1: f64, alpha2: f64, count: usize) -> Vec<f64> {
    positive_roots(|x| disk_condition(m, alpha1, alpha2, x), count, 1e-2)
        .into_iter()
        .map(|x| x * x)
        .collect()
}

/// `λ_n^m = (m+n)(m+n+1)` on the unit sphere.
pub fn sphere_eigenvalue(m: usize, n: usize) -> f64 {
    let l = (m + n) as f64;
    l * (l + 1.0)
}
