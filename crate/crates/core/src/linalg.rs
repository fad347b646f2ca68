//! Banded LU factorization and symmetric tridiagonal inertia counts.

use crate::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` superdiagonals.
///
/// Storage is row-major with `kl` extra superdiagonals reserved for the
/// fill-in that partial pivoting produces.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` to entry `(i, j)`, which must lie inside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let k = self.slot(i, j);
        self.data[k] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let k = self.slot(i, j);
        self.data[k] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            *yi = (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum();
        }
        y
    }

    /// Column `j` as a dense vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// LU factorization with partial pivoting. Fails on an exactly zero or
    /// non-finite pivot; tiny pivots are reported through [`BandLu::pivot_range`].
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular {
                    column: k,
                    pivot: best,
                });
            }
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for i in k + 1..=last_row {
                let s = self.slot(i, k);
                let l = self.data[s] / pivot;
                self.data[s] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=last_col {
                    let ukj = self.data[self.slot(k, j)];
                    let t = self.slot(i, j);
                    self.data[t] -= l * ukj;
                }
            }
        }
        Ok(BandLu { lu: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    lu: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let a = &self.lu;
        let n = a.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + a.kl).min(n - 1) {
                    x[i] -= a.data[a.slot(i, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let hi = (k + a.kl + a.ku).min(n - 1);
            let mut acc = x[k];
            for j in k + 1..=hi {
                acc -= a.data[a.slot(k, j)] * x[j];
            }
            x[k] = acc / a.data[a.slot(k, k)];
        }
        x
    }

    /// Smallest and largest |U_kk|; their ratio is a cheap condition indicator.
    pub fn pivot_range(&self) -> (f64, f64) {
        let a = &self.lu;
        (0..a.n)
            .map(|k| a.data[a.slot(k, k)].abs())
            .fold((f64::INFINITY, 0.0), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

/// Number of eigenvalues below `mu` of the pencil `T - μ W` where `T` is the
/// symmetric tridiagonal matrix (`diag`, `off`) and `W = diag(weights) > 0`.
/// Counts negative pivots of the LDLᵀ factorization (Sylvester inertia).
pub fn count_below(diag: &[f64], off: &[f64], weights: &[f64], mu: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let coupling = if i == 0 {
            0.0
        } else {
            off[i - 1] * off[i - 1] / q
        };
        q = diag[i] - mu * weights[i] - coupling;
        if q == 0.0 {
            q = -f64::EPSILON * (diag[i].abs() + mu.abs() * weights[i]).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest eigenvalue of `T x = μ W x` by inertia bisection to absolute
/// tolerance `tol`.
pub fn largest_generalized_eigenvalue(diag: &[f64], off: &[f64], weights: &[f64], tol: f64) -> f64 {
    let n = diag.len();
    // Gershgorin disc of W^{-1/2} T W^{-1/2}.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += off[i - 1].abs() / (weights[i] * weights[i - 1]).sqrt();
        }
        if i + 1 < n {
            r += off[i].abs() / (weights[i] * weights[i + 1]).sqrt();
        }
        let c = diag[i] / weights[i];
        lo = lo.min(c - r);
        hi = hi.max(c + r);
    }
    while hi - lo > tol.max(1e-15 * hi.abs().max(lo.abs())) {
        let mid = 0.5 * (lo + hi);
        if count_below(diag, off, weights, mid) == n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_band(n: usize, kl: usize, ku: usize, seed: &[f64]) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, kl, ku);
        let mut t = 0;
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = seed[t % seed.len()] + if i == j { 0.1 } else { 0.0 };
                a.set(i, j, v);
                t += 1;
            }
        }
        a
    }

    proptest! {
        #[test]
        fn band_solve_matches_dense(
            n in 1usize..24,
            kl in 0usize..4,
            ku in 0usize..4,
            seed in prop::collection::vec(-1.0f64..1.0, 7..40),
        ) {
            let a = random_band(n, kl, ku, &seed);
            let dense = a.to_dense();
            prop_assume!(dense.clone().lu().determinant().abs() > 1e-6);
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 0.5).collect();
            let x = a.clone().factor().unwrap().solve(&b);
            let r = a.matvec(&x);
            let scale = dense.abs().max() * x.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
            for i in 0..n {
                prop_assert!((r[i] - b[i]).abs() <= 1e-9 * scale, "row {i}: {} vs {}", r[i], b[i]);
            }
        }

        #[test]
        fn inertia_matches_dense_eigenvalues(
            diag in prop::collection::vec(-5.0f64..5.0, 2..12),
            off_seed in prop::collection::vec(-2.0f64..2.0, 11),
            w_seed in prop::collection::vec(0.2f64..3.0, 12),
            mu in -6.0f64..6.0,
        ) {
            let n = diag.len();
            let off = &off_seed[..n - 1];
            let w = &w_seed[..n];
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| {
                let t = if i == j { diag[i] } else if i + 1 == j { off[i] } else if j + 1 == i { off[j] } else { 0.0 };
                t / (w[i] * w[j]).sqrt()
            });
            let eig = m.symmetric_eigenvalues();
            prop_assume!(eig.iter().all(|e| (e - mu).abs() > 1e-9));
            let expect = eig.iter().filter(|&&e| e < mu).count();
            prop_assert_eq!(count_below(&diag, off, w, mu), expect);
            let top = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let got = largest_generalized_eigenvalue(&diag, off, w, 1e-12);
            prop_assert!((got - top).abs() < 1e-9 * (1.0 + top.abs()));
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = BandMatrix::zeros(3, 1, 1);
        a.set(0, 0, 1.0);
        a.set(1, 1, 0.0);
        a.set(2, 2, 1.0);
        assert!(matches!(a.factor(), Err(Error::Singular { column: 1, .. })));
    }
}
