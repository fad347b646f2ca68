//! Rotating-frame solutions of the full equation
//! `(1 + iη) Δ_m u + iλΩ u + λ f(|u|², b) u = 0`
//! near a real branch point.
//!
//! The equation is invariant under `u ↦ e^{iθ} u`, so at the real base the
//! linearization has the kernel `i u₀`. One scalar unknown `Ω` and one scalar
//! gauge equation `⟨Im u, u₀⟩_w = 0` make the system square and, near the
//! base, uniquely solvable.
//!
//! Real unknowns are interleaved as `(Re u_k, Im u_k)` so the Jacobian is a
//! band matrix of half-width 3 bordered by the `Ω` column and the gauge row.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::RadialProblem;
use crate::linalg::{BandLu, BandMatrix};
use crate::real_branch::BranchPoint;
use crate::{Error, Result};

pub const NEWTON_TOL: f64 = 1e-11;
pub const GAUGE_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 30;
/// Consecutive growing Newton steps treated as divergence.
pub const DIVERGENCE_RUN: usize = 3;
/// Condition estimate above which a point is flagged as a possible
/// secondary bifurcation.
pub const SINGULAR_CONDITION: f64 = 1e12;
const ROUNDING_STEP: f64 = 64.0 * f64::EPSILON;
const ROUNDING_SLACK: f64 = 10.0;

#[derive(Debug, Clone, Serialize)]
pub struct SolutionPoint {
    pub lambda: f64,
    pub eta: f64,
    pub b: Vec<f64>,
    pub omega: f64,
    /// Complex profile on the full grid.
    pub u: Vec<Complex64>,
    pub residual_norm: f64,
    pub gauge_residual: f64,
    pub freq_relation_residual: f64,
    pub iterations: usize,
    pub condition_estimate: f64,
    pub possible_secondary_bifurcation: bool,
}

impl SolutionPoint {
    pub fn max_abs(&self) -> f64 {
        self.u.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_imag(&self) -> f64 {
        self.u.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }

    /// Same point with the profile multiplied by `e^{iθ}`.
    pub fn rotated(&self, theta: f64) -> SolutionPoint {
        let phase = Complex64::from_polar(1.0, theta);
        SolutionPoint {
            u: self.u.iter().map(|v| v * phase).collect(),
            ..self.clone()
        }
    }
}

/// Strong residual of the full equation on the full grid; eliminated nodes
/// carry zero.
pub fn residual_full(
    problem: &RadialProblem,
    lambda: f64,
    omega: f64,
    u: &[Complex64],
    eta: f64,
    b: &[f64],
) -> Vec<Complex64> {
    let op = &problem.op;
    let active = op.restrict(u);
    let weak = weak_residual(problem, lambda, omega, &active, eta, b);
    let mut full = vec![Complex64::default(); u.len()];
    for (slot, (r, w)) in full[op.active()]
        .iter_mut()
        .zip(weak.iter().zip(op.weights()))
    {
        *slot = r / w;
    }
    full
}

/// `sqrt(Σ w |r|²)` of the strong residual.
pub fn residual_norm_full(
    problem: &RadialProblem,
    lambda: f64,
    omega: f64,
    u: &[Complex64],
    eta: f64,
    b: &[f64],
) -> f64 {
    let active = problem.op.restrict(u);
    weak_norm(
        problem,
        &weak_residual(problem, lambda, omega, &active, eta, b),
    )
}

fn weak_norm(problem: &RadialProblem, weak: &[Complex64]) -> f64 {
    weak.iter()
        .zip(problem.op.weights())
        .map(|(r, w)| r.norm_sqr() / w)
        .sum::<f64>()
        .sqrt()
}

fn weak_residual(
    problem: &RadialProblem,
    lambda: f64,
    omega: f64,
    u: &[Complex64],
    eta: f64,
    b: &[f64],
) -> Vec<Complex64> {
    let k = &problem.kinetics;
    let one_i_eta = Complex64::new(1.0, eta);
    problem
        .op
        .apply(u)
        .iter()
        .zip(u)
        .zip(problem.op.weights())
        .map(|((ku, &ui), &w)| {
            let y = ui.norm_sqr();
            let f = Complex64::new(k.f_r(y, b), omega + k.f_i(y, b));
            one_i_eta * ku + ui * f * (lambda * w)
        })
        .collect()
}

/// `⟨Im u, u_ref⟩_w / ⟨u_ref, u_ref⟩_w` over active nodes; both profiles on
/// the full grid. Zero pins the phase.
pub fn gauge_residual(problem: &RadialProblem, u: &[Complex64], u_ref: &[f64]) -> f64 {
    let op = &problem.op;
    let range = op.active();
    let (num, den) = u[range.clone()]
        .iter()
        .zip(&u_ref[range])
        .zip(op.weights())
        .fold((0.0, 0.0), |(n, d), ((v, r), w)| {
            (n + w * r * v.im, d + w * r * r)
        });
    num / den
}

/// `Σ w (Ω − η f_R + f_I)|u|² / Σ w |u|²` over active nodes. Summing the
/// residual against `ū` shows this vanishes for every discrete solution.
pub fn frequency_relation_residual(problem: &RadialProblem, pt: &SolutionPoint) -> f64 {
    let k = &problem.kinetics;
    let range = problem.op.active();
    let (num, den) =
        pt.u[range]
            .iter()
            .zip(problem.op.weights())
            .fold((0.0, 0.0), |(n, d), (v, w)| {
                let y = v.norm_sqr();
                let g = pt.omega - pt.eta * k.f_r(y, &pt.b) + k.f_i(y, &pt.b);
                (n + w * g * y, d + w * y)
            });
    num / den
}

/// `∂_η Ω` at `(0, 0)`: `Σ w f_R(u₀²) u₀² / Σ w u₀²`.
pub fn omega_eta_derivative(problem: &RadialProblem, base: &BranchPoint) -> f64 {
    let k = &problem.kinetics;
    let zero = k.zero_b();
    let range = problem.op.active();
    let (num, den) =
        base.u[range]
            .iter()
            .zip(problem.op.weights())
            .fold((0.0, 0.0), |(n, d), (v, w)| {
                let y = v * v;
                (n + w * k.f_r(y, &zero) * y, d + w * y)
            });
    num / den
}

/// `∂_b Ω` at `(0, 0)`: `−Σ w ∂_b f_I(u₀²) u₀² / Σ w u₀²`, one entry per
/// parameter.
pub fn omega_b_derivative(problem: &RadialProblem, base: &BranchPoint) -> Vec<f64> {
    let k = &problem.kinetics;
    let zero = k.zero_b();
    let range = problem.op.active();
    let mut num = vec![0.0; k.param_dim()];
    let mut den = 0.0;
    for (v, w) in base.u[range].iter().zip(problem.op.weights()) {
        let y = v * v;
        for (acc, d) in num.iter_mut().zip(k.db_f_i(y, &zero)) {
            *acc -= w * d * y;
        }
        den += w * y;
    }
    num.iter().map(|n| n / den).collect()
}

/// The bordered Newton matrix `[[A, c], [r, 0]]` and its factorization.
///
/// `A` is singular at the real base (kernel `i u₀`), so the band factor is
/// taken of `B`, which is `A` with the column of `Im u` at the largest base
/// node replaced by a unit vector. The exact matrix is recovered by a rank-3
/// Woodbury update.
struct Bordered {
    a: BandMatrix,
    c: Vec<f64>,
    r: Vec<f64>,
    solver: BorderedSolver,
    condition: f64,
}

enum BorderedSolver {
    Woodbury {
        lu: BandLu,
        j: usize,
        z: [Vec<f64>; 3],
        capacitance: nalgebra::LU<f64, nalgebra::U3, nalgebra::U3>,
    },
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Bordered {
    fn new(a: BandMatrix, c: Vec<f64>, r: Vec<f64>, j: usize) -> Result<Self> {
        match Self::woodbury(&a, &c, &r, j) {
            Some((solver, condition)) => Ok(Self {
                a,
                c,
                r,
                solver,
                condition,
            }),
            None => {
                let dense = Self::dense(&a, &c, &r);
                let sv = dense.singular_values();
                let smax = sv.max();
                let smin = sv.min();
                let lu = dense.lu();
                if !(smin > 0.0) {
                    return Err(Error::Singular {
                        column: j,
                        pivot: smin,
                    });
                }
                Ok(Self {
                    a,
                    c,
                    r,
                    solver: BorderedSolver::Dense(lu),
                    condition: smax / smin,
                })
            }
        }
    }

    fn woodbury(a: &BandMatrix, c: &[f64], r: &[f64], j: usize) -> Option<(BorderedSolver, f64)> {
        let n = a.dim();
        let mut b = a.clone();
        let aj = a.column(j);
        for i in 0..n {
            if b.get(i, j) != 0.0 {
                b.set(i, j, 0.0);
            }
        }
        b.set(j, j, 1.0);
        let lu = b.factor().ok()?;
        let (pmin, pmax) = lu.pivot_range();
        if !(pmin > 0.0) {
            return None;
        }
        let mut u1 = aj;
        u1[j] -= 1.0;
        let mut z1 = lu.solve(&u1);
        z1.push(0.0);
        let mut z2 = lu.solve(c);
        z2.push(0.0);
        let mut z3 = vec![0.0; n];
        z3.push(1.0);
        let z = [z1, z2, z3];
        let vdot = |which: usize, x: &[f64]| -> f64 {
            match which {
                0 => x[j],
                1 => x[n],
                _ => r.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - x[n],
            }
        };
        let cap = Matrix3::from_fn(|p, q| (p == q) as u8 as f64 + vdot(p, &z[q]));
        let cap_cond = {
            let sv = cap.singular_values();
            sv.max() / sv.min()
        };
        if !cap_cond.is_finite() || cap_cond > 1e14 {
            return None;
        }
        let condition = (pmax / pmin) * cap_cond;
        Some((
            BorderedSolver::Woodbury {
                lu,
                j,
                z,
                capacitance: cap.lu(),
            },
            condition,
        ))
    }

    fn dense(a: &BandMatrix, c: &[f64], r: &[f64]) -> DMatrix<f64> {
        let n = a.dim();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&a.to_dense());
        for i in 0..n {
            m[(i, n)] = c[i];
            m[(n, i)] = r[i];
        }
        m
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.a.dim();
        let mut y = self.a.matvec(&x[..n]);
        y.iter_mut()
            .zip(&self.c)
            .for_each(|(yi, ci)| *yi += ci * x[n]);
        y.push(self.r.iter().zip(x).map(|(p, q)| p * q).sum());
        y
    }

    fn raw_solve(&self, y: &[f64]) -> Vec<f64> {
        match &self.solver {
            BorderedSolver::Dense(lu) => lu
                .solve(&DVector::from_column_slice(y))
                .map(|v| v.as_slice().to_vec())
                .unwrap_or_else(|| vec![f64::NAN; y.len()]),
            BorderedSolver::Woodbury {
                lu,
                j,
                z,
                capacitance,
            } => {
                let n = self.a.dim();
                let mut x = lu.solve(&y[..n]);
                x.push(y[n]);
                let rhs = Vector3::new(
                    x[*j],
                    x[n],
                    self.r.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() - x[n],
                );
                let t = capacitance
                    .solve(&rhs)
                    .unwrap_or_else(|| Vector3::repeat(f64::NAN));
                for (k, zk) in z.iter().enumerate() {
                    x.iter_mut().zip(zk).for_each(|(xi, zi)| *xi -= t[k] * zi);
                }
                x
            }
        }
    }

    /// Solve with one step of iterative refinement.
    fn solve(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.raw_solve(y);
        let r: Vec<f64> = y.iter().zip(self.apply(&x)).map(|(a, b)| a - b).collect();
        let dx = self.raw_solve(&r);
        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        x
    }
}

struct Assembly<'a> {
    problem: &'a RadialProblem,
    lambda: f64,
    eta: f64,
    b: &'a [f64],
    /// Base profile on active nodes, scaled so that the gauge row is
    /// `Σ w u_ref Im u / Σ w u_ref²`.
    gauge_row: Vec<f64>,
    pin: usize,
}

impl<'a> Assembly<'a> {
    fn new(problem: &'a RadialProblem, base: &BranchPoint, eta: f64, b: &'a [f64]) -> Self {
        let op = &problem.op;
        let uref = op.restrict(&base.u);
        let den: f64 = uref.iter().zip(op.weights()).map(|(r, w)| w * r * r).sum();
        let mut gauge_row = vec![0.0; 2 * uref.len()];
        for (k, (r, w)) in uref.iter().zip(op.weights()).enumerate() {
            gauge_row[2 * k + 1] = w * r / den;
        }
        let pin = (0..uref.len())
            .max_by(|&p, &q| uref[p].abs().total_cmp(&uref[q].abs()))
            .unwrap_or(0);
        Self {
            problem,
            lambda: base.lambda,
            eta,
            b,
            gauge_row,
            pin: 2 * pin + 1,
        }
    }

    fn equations(&self, u: &[Complex64], omega: f64) -> (Vec<f64>, f64, f64) {
        let weak = weak_residual(self.problem, self.lambda, omega, u, self.eta, self.b);
        let norm = weak_norm(self.problem, &weak);
        let mut f = Vec::with_capacity(2 * u.len() + 1);
        for r in &weak {
            f.push(r.re);
            f.push(r.im);
        }
        let gauge: f64 = u
            .iter()
            .enumerate()
            .map(|(k, v)| self.gauge_row[2 * k + 1] * v.im)
            .sum();
        f.push(gauge);
        (f, norm, gauge)
    }

    fn jacobian(&self, u: &[Complex64], omega: f64) -> Result<Bordered> {
        let op = &self.problem.op;
        let k = &self.problem.kinetics;
        let n = u.len();
        let mut a = BandMatrix::zeros(2 * n, 3, 3);
        let (diag, off) = (op.diag(), op.off());
        let mut stamp = |p: usize, q: usize, kv: f64| {
            a.add(2 * p, 2 * q, kv);
            a.add(2 * p, 2 * q + 1, -self.eta * kv);
            a.add(2 * p + 1, 2 * q, self.eta * kv);
            a.add(2 * p + 1, 2 * q + 1, kv);
        };
        for p in 0..n {
            stamp(p, p, diag[p]);
            if p + 1 < n {
                stamp(p, p + 1, off[p]);
                stamp(p + 1, p, off[p]);
            }
        }
        let mut c = vec![0.0; 2 * n];
        for (p, (v, &w)) in u.iter().zip(op.weights()).enumerate() {
            let (ur, ui) = (v.re, v.im);
            let y = v.norm_sqr();
            let (fr, fi) = (k.f_r(y, self.b), k.f_i(y, self.b));
            let (fry, fiy) = (k.dy_f_r(y, self.b), k.dy_f_i(y, self.b));
            let lw = self.lambda * w;
            let g1 = fry * ur - fiy * ui;
            let g2 = fiy * ur + fry * ui;
            a.add(2 * p, 2 * p, lw * (fr + 2.0 * ur * g1));
            a.add(2 * p, 2 * p + 1, lw * (-omega - fi + 2.0 * ui * g1));
            a.add(2 * p + 1, 2 * p, lw * (omega + fi + 2.0 * ur * g2));
            a.add(2 * p + 1, 2 * p + 1, lw * (fr + 2.0 * ui * g2));
            c[2 * p] = -lw * ui;
            c[2 * p + 1] = lw * ur;
        }
        Bordered::new(a, c, self.gauge_row.clone(), self.pin)
    }
}

/// Bordered Newton for `(u, Ω)` at `(η, b)` from the real base point.
pub fn solve_perturbed(
    problem: &RadialProblem,
    base: &BranchPoint,
    eta: f64,
    b: &[f64],
) -> Result<SolutionPoint> {
    let omega = omega_eta_derivative(problem, base) * eta
        + omega_b_derivative(problem, base)
            .iter()
            .zip(b)
            .map(|(d, x)| d * x)
            .sum::<f64>();
    let u: Vec<Complex64> = base.u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    solve_perturbed_from(problem, base, eta, b, &u, omega)
}

/// As [`solve_perturbed`], starting from the given profile and frequency.
/// The guess is first rotated so that its weighted projection on the base
/// is real and positive.
pub fn solve_perturbed_from(
    problem: &RadialProblem,
    base: &BranchPoint,
    eta: f64,
    b: &[f64],
    guess: &[Complex64],
    omega_guess: f64,
) -> Result<SolutionPoint> {
    if b.len() != problem.kinetics.param_dim() {
        return Err(Error::InvalidArgument(format!(
            "parameter vector has length {}, kinetics expects {}",
            b.len(),
            problem.kinetics.param_dim()
        )));
    }
    if !(eta.is_finite() && b.iter().all(|x| x.is_finite())) {
        return Err(Error::InvalidArgument("non-finite parameters".into()));
    }
    let op = &problem.op;
    let asm = Assembly::new(problem, base, eta, b);
    // Rotate the guess onto the gauge slice with a positive projection on
    // the base, so the result does not depend on the guess's phase.
    let uref = op.restrict(&base.u);
    let projection: Complex64 = op
        .restrict(guess)
        .iter()
        .zip(&uref)
        .zip(op.weights())
        .map(|((v, r), w)| v * (w * r))
        .sum();
    let align = if projection.norm() > 0.0 {
        projection.conj() / projection.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let mut u: Vec<Complex64> = op.restrict(guess).iter().map(|v| v * align).collect();
    let mut omega = omega_guess;
    let mut last_step = f64::INFINITY;
    let mut growth = 0usize;
    let mut condition = f64::NAN;

    for iter in 0..=NEWTON_MAX_ITER {
        let (f, norm, gauge) = asm.equations(&u, omega);
        if !norm.is_finite() {
            return Err(Error::NoConvergence(format!(
                "non-finite residual at η = {eta}, b = {b:?}"
            )));
        }
        if norm <= NEWTON_TOL && gauge.abs() <= GAUGE_TOL {
            if !condition.is_finite() {
                condition = asm.jacobian(&u, omega)?.condition;
            }
            return Ok(finish(problem, base, eta, b, &u, omega, iter, condition));
        }
        if iter == NEWTON_MAX_ITER {
            break;
        }
        let jac = asm.jacobian(&u, omega)?;
        condition = jac.condition;
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = jac.solve(&rhs);
        let step = dx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !step.is_finite() {
            return Err(Error::NoConvergence(format!(
                "singular bordered system at η = {eta}, b = {b:?}"
            )));
        }
        for (k, v) in u.iter_mut().enumerate() {
            *v += Complex64::new(dx[2 * k], dx[2 * k + 1]);
        }
        omega += dx[2 * u.len()];
        let top = u.iter().fold(omega.abs(), |m, v| m.max(v.norm()));
        if step <= ROUNDING_STEP * top && norm <= ROUNDING_SLACK * NEWTON_TOL {
            let (_, norm, gauge) = asm.equations(&u, omega);
            if norm <= ROUNDING_SLACK * NEWTON_TOL && gauge.abs() <= GAUGE_TOL {
                return Ok(finish(
                    problem,
                    base,
                    eta,
                    b,
                    &u,
                    omega,
                    iter + 1,
                    condition,
                ));
            }
        }
        growth = if step > last_step { growth + 1 } else { 0 };
        if growth >= DIVERGENCE_RUN {
            return Err(Error::NoConvergence(format!(
                "Newton steps grew {DIVERGENCE_RUN} times in a row at η = {eta}, b = {b:?}"
            )));
        }
        last_step = step;
    }
    Err(Error::NoConvergence(format!(
        "bordered Newton exceeded {NEWTON_MAX_ITER} iterations at η = {eta}, b = {b:?}"
    )))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &RadialProblem,
    base: &BranchPoint,
    eta: f64,
    b: &[f64],
    u: &[Complex64],
    omega: f64,
    iterations: usize,
    condition: f64,
) -> SolutionPoint {
    let full = problem.op.extend(u);
    let mut pt = SolutionPoint {
        lambda: base.lambda,
        eta,
        b: b.to_vec(),
        omega,
        residual_norm: residual_norm_full(problem, base.lambda, omega, &full, eta, b),
        gauge_residual: gauge_residual(problem, &full, &base.u),
        freq_relation_residual: 0.0,
        iterations,
        condition_estimate: condition,
        possible_secondary_bifurcation: condition > SINGULAR_CONDITION,
        u: full,
    };
    pt.freq_relation_residual = frequency_relation_residual(problem, &pt);
    pt
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepFailure {
    pub eta_index: usize,
    pub b_index: usize,
    pub eta: f64,
    pub b: Vec<f64>,
    pub reason: String,
}

/// Solutions over a rectangular `(η, b)` grid around one base point.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionSheet {
    pub base: BranchPoint,
    pub eta_grid: Vec<f64>,
    pub b_grid: Vec<Vec<f64>>,
    /// Row-major in `(eta_index, b_index)`.
    pub points: Vec<Option<SolutionPoint>>,
    pub failures: Vec<SweepFailure>,
}

impl SolutionSheet {
    pub fn get(&self, i: usize, j: usize) -> Option<&SolutionPoint> {
        self.points[i * self.b_grid.len() + j].as_ref()
    }

    pub fn converged(&self) -> impl Iterator<Item = &SolutionPoint> {
        self.points.iter().flatten()
    }

    /// Largest `|ΔΩ|` between converged grid neighbors.
    pub fn max_neighbor_jump(&self) -> f64 {
        let (ne, nb) = (self.eta_grid.len(), self.b_grid.len());
        let mut jump = 0.0f64;
        for i in 0..ne {
            for j in 0..nb {
                let Some(p) = self.get(i, j) else { continue };
                for (di, dj) in [(1, 0), (0, 1)] {
                    if i + di < ne && j + dj < nb {
                        if let Some(q) = self.get(i + di, j + dj) {
                            jump = jump.max((p.omega - q.omega).abs());
                        }
                    }
                }
            }
        }
        jump
    }
}

fn nearest_origin(values: impl Iterator<Item = f64>) -> usize {
    values
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn between(range: &Range<usize>, i: isize) -> Option<usize> {
    (i >= range.start as isize && i < range.end as isize).then_some(i as usize)
}

/// Warm-started solves spreading outward from the cell nearest `(0, 0)` in
/// Manhattan wavefronts. Cells of one wavefront run in parallel; each starts
/// from a converged neighbor one step closer, preferring the `η` direction.
pub fn sweep_parameters(
    problem: &RadialProblem,
    base: &BranchPoint,
    eta_grid: &[f64],
    b_grid: &[Vec<f64>],
) -> SolutionSheet {
    let (ne, nb) = (eta_grid.len(), b_grid.len());
    let mut sheet = SolutionSheet {
        base: base.clone(),
        eta_grid: eta_grid.to_vec(),
        b_grid: b_grid.to_vec(),
        points: vec![None; ne * nb],
        failures: Vec::new(),
    };
    if ne == 0 || nb == 0 {
        return sheet;
    }
    let i0 = nearest_origin(eta_grid.iter().map(|e| e.abs()));
    let j0 = nearest_origin(b_grid.iter().map(|b| b.iter().map(|x| x.abs()).sum()));
    let dist = |i: usize, j: usize| i.abs_diff(i0) + j.abs_diff(j0);
    let max_d = dist(
        if i0 < ne / 2 { ne - 1 } else { 0 },
        if j0 < nb / 2 { nb - 1 } else { 0 },
    )
    .max(dist(ne - 1, nb - 1))
    .max(dist(0, 0));
    let (ir, jr) = (0..ne, 0..nb);
    for d in 0..=max_d {
        let cells: Vec<(usize, usize)> = (0..ne)
            .flat_map(|i| (0..nb).map(move |j| (i, j)))
            .filter(|&(i, j)| dist(i, j) == d)
            .collect();
        let results: Vec<((usize, usize), Result<SolutionPoint>)> = cells
            .par_iter()
            .map(|&(i, j)| {
                let toward = |x: usize, x0: usize| x as isize - (x as isize - x0 as isize).signum();
                let candidates = [
                    (between(&ir, toward(i, i0)), Some(j)),
                    (Some(i), between(&jr, toward(j, j0))),
                ];
                let warm = candidates
                    .iter()
                    .filter(|(p, q)| {
                        p.is_some() && q.is_some() && (p.unwrap(), q.unwrap()) != (i, j)
                    })
                    .find_map(|&(p, q)| sheet.get(p.unwrap(), q.unwrap()));
                let res = match warm {
                    Some(w) => {
                        solve_perturbed_from(problem, base, eta_grid[i], &b_grid[j], &w.u, w.omega)
                            .or_else(|_| solve_perturbed(problem, base, eta_grid[i], &b_grid[j]))
                    }
                    None => solve_perturbed(problem, base, eta_grid[i], &b_grid[j]),
                };
                ((i, j), res)
            })
            .collect();
        for ((i, j), res) in results {
            match res {
                Ok(pt) => sheet.points[i * nb + j] = Some(pt),
                Err(e) => sheet.failures.push(SweepFailure {
                    eta_index: i,
                    b_index: j,
                    eta: eta_grid[i],
                    b: b_grid[j].clone(),
                    reason: e.to_string(),
                }),
            }
        }
    }
    sheet
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolver::eigenfunction;
    use crate::geometry::{make_disk, make_sphere, BoundaryCondition};
    use crate::kinetics::make_cubic;
    use crate::real_branch::{continue_branch, ContinuationOptions};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn sphere_base() -> &'static (RadialProblem, BranchPoint) {
        static BASE: OnceLock<(RadialProblem, BranchPoint)> = OnceLock::new();
        BASE.get_or_init(|| {
            let p = RadialProblem::new(
                make_sphere(),
                BoundaryCondition::NoBoundary,
                make_cubic(0.0),
                1,
            )
            .unwrap();
            let e = eigenfunction(&p.surface, 1, 0, p.bc, &p.grid).unwrap();
            let b = continue_branch(&p, &e, 3.0, ContinuationOptions::new(0.25)).unwrap();
            let pt = b.points.last().unwrap().clone();
            (p, pt)
        })
    }

    #[test]
    fn real_point_embeds() {
        let (p, base) = sphere_base();
        let u: Vec<Complex64> = base.u.iter().map(|&v| v.into()).collect();
        assert!(residual_norm_full(p, base.lambda, 0.0, &u, 0.0, &[0.0]) <= 1e-10);
        let zero = vec![Complex64::default(); u.len()];
        assert!(residual_full(p, 3.0, 0.7, &zero, 0.3, &[0.2])
            .iter()
            .all(|r| r.norm() == 0.0));
    }

    #[test]
    fn gauge_residual_examples() {
        let (p, base) = sphere_base();
        let real: Vec<Complex64> = base.u.iter().map(|&v| v.into()).collect();
        assert_eq!(gauge_residual(p, &real, &base.u), 0.0);
        let imag: Vec<Complex64> = base.u.iter().map(|&v| Complex64::new(0.0, v)).collect();
        assert!((gauge_residual(p, &imag, &base.u) - 1.0).abs() < 1e-14);
        let theta = 1e-4;
        let rot: Vec<Complex64> = base
            .u
            .iter()
            .map(|&v| Complex64::from_polar(v, theta))
            .collect();
        assert!((gauge_residual(p, &rot, &base.u) - theta).abs() < 1e-11);
    }

    #[test]
    fn decoupling_at_origin() {
        let (p, base) = sphere_base();
        let pt = solve_perturbed(p, base, 0.0, &[0.0]).unwrap();
        assert!(pt.omega.abs() <= 1e-10);
        assert!(pt.max_imag() <= 1e-10);
        assert!(pt.freq_relation_residual.abs() <= 1e-12);
    }

    #[test]
    fn rotating_vortex_line() {
        let (p, base) = sphere_base();
        for eta in [0.05, -0.02] {
            let pt = solve_perturbed(p, base, eta, &[eta]).unwrap();
            assert!((pt.omega - eta).abs() <= 1e-8, "{}", pt.omega);
            assert!(pt.freq_relation_residual.abs() <= 1e-8);
        }
    }

    #[test]
    fn offset_frequency_shifts_relation() {
        let (p, base) = sphere_base();
        let pt = solve_perturbed(p, base, 0.03, &[-0.02]).unwrap();
        let mut shifted = pt.clone();
        shifted.omega += 0.01;
        let r = frequency_relation_residual(p, &shifted) - frequency_relation_residual(p, &pt);
        assert!((r - 0.01).abs() < 1e-14);
    }

    #[test]
    fn gauge_re_solve_returns_same_representative() {
        let (p, base) = sphere_base();
        let pt = solve_perturbed(p, base, 0.04, &[0.01]).unwrap();
        let turned = pt.rotated(0.3);
        let again = solve_perturbed_from(p, base, 0.04, &[0.01], &turned.u, pt.omega).unwrap();
        let d =
            pt.u.iter()
                .zip(&again.u)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
        assert!(d <= 1e-8, "{d}");
        assert!(again.gauge_residual.abs() <= 1e-12);
    }

    #[test]
    fn single_cell_sweep_is_the_base() {
        let (p, base) = sphere_base();
        let sheet = sweep_parameters(p, base, &[0.0], &[vec![0.0]]);
        let pt = sheet.get(0, 0).unwrap();
        let d =
            pt.u.iter()
                .zip(&base.u)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
        assert!(d <= 1e-10);
        assert!(sheet.failures.is_empty());
    }

    #[test]
    fn disk_decoupling() {
        let p = RadialProblem::new(
            make_disk(),
            BoundaryCondition::neumann(),
            make_cubic(0.0),
            1,
        )
        .unwrap();
        let e = eigenfunction(&p.surface, 1, 0, p.bc, &p.grid).unwrap();
        let b = continue_branch(&p, &e, 5.0, ContinuationOptions::new(0.5)).unwrap();
        let pt = solve_perturbed(&p, b.points.last().unwrap(), 0.0, &[0.0]).unwrap();
        assert!(pt.omega.abs() <= 1e-10 && pt.max_imag() <= 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn residual_is_phase_equivariant(theta in -3.2f64..3.2, eta in -0.2f64..0.2, beta in -0.2f64..0.2, omega in -0.5f64..0.5) {
            let (p, base) = sphere_base();
            let u: Vec<Complex64> = base.u.iter().zip(p.nodes()).map(|(&v, s)| Complex64::new(v, 0.3 * v * s.cos())).collect();
            let phase = Complex64::from_polar(1.0, theta);
            let turned: Vec<Complex64> = u.iter().map(|v| v * phase).collect();
            // Compare cell-weighted residuals: the strong form divides
            // rounding by the tiny tip cells.
            let weigh = |r: Vec<Complex64>| -> Vec<Complex64> {
                p.op.restrict(&r).iter().zip(p.op.weights()).map(|(v, w)| v * *w).collect()
            };
            let r0 = weigh(residual_full(p, base.lambda, omega, &u, eta, &[beta]));
            let r1 = weigh(residual_full(p, base.lambda, omega, &turned, eta, &[beta]));
            // Rounding is relative to the individual operator terms.
            let active = p.op.restrict(&u);
            let scale = active.iter().zip(p.op.diag()).fold(0.0f64, |m, (v, d)| m.max(v.norm() * d.abs()));
            let worst = r0.iter().zip(&r1).map(|(a, b)| (a * phase - b).norm()).fold(0.0, f64::max);
            prop_assert!(worst <= 1e-12 * scale, "{} {}", worst, scale);
        }
    }
}
