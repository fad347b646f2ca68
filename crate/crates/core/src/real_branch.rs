//! The real equation `Δ_m u + λ f_R(u², 0) u = 0` and its pitchfork branches.
//!
//! Each simple eigenvalue `λ_n` of `-Δ_m` is a supercritical pitchfork point
//! with `λ(σ) = λ_n + σ²/2 · D²λ + O(σ⁴)` where
//! `D²λ = -2 λ_n ∂_y f_R(0,0) ∫ e⁴ a ds` for the normalized eigenfunction `e`.
//! Branches are continued in the natural parameter `λ`; a branch with `n`
//! nodes keeps them, stays below `√C` and, for `n = 0`, has a strictly
//! negative principal linearized eigenvalue.

use serde::Serialize;

use crate::discretization::RadialProblem;
use crate::eigensolver::{nodal_count, weighted_inner, EigenPair};
use crate::linalg::{largest_generalized_eigenvalue, BandMatrix};
use crate::{Error, Result};

pub const NEWTON_TOL: f64 = 1e-11;
pub const NEWTON_MAX_ITER: usize = 25;
/// Relative Newton correction regarded as rounding noise.
const ROUNDING_STEP: f64 = 64.0 * f64::EPSILON;
/// Residual accepted at the rounding floor, as a multiple of the tolerance.
const ROUNDING_SLACK: f64 = 10.0;

#[derive(Debug, Clone, Serialize)]
pub struct BranchPoint {
    pub lambda: f64,
    /// Profile on the full grid.
    pub u: Vec<f64>,
    /// `+1` or `-1`: which leg of the pitchfork.
    pub sigma_sign: f64,
    pub residual_norm: f64,
    pub nodal_index: usize,
    pub max_u: f64,
    /// `⟨u, e_n⟩` in the discrete weighted inner product.
    pub sigma_proj: f64,
    /// Largest eigenvalue of the linearization.
    pub principal_eigenvalue: f64,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub enum Termination {
    ReachedLambdaMax,
    /// Continuation stalled below the minimum step.
    Stalled {
        lambda: f64,
        reason: String,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct Branch {
    pub m: usize,
    pub n: usize,
    pub sigma_sign: f64,
    pub bifurcation_lambda: f64,
    /// Predicted `D²_σ λ` at the bifurcation point.
    pub curvature: f64,
    pub points: Vec<BranchPoint>,
    pub termination: Termination,
}

impl Branch {
    pub fn completed(&self) -> bool {
        matches!(self.termination, Termination::ReachedLambdaMax)
    }
}

/// Strong-form residual `Δ_m u + λ f_R(u², 0) u` on the full grid (zero at
/// eliminated nodes). `u` is read on active nodes only.
pub fn residual_real(problem: &RadialProblem, lambda: f64, u: &[f64]) -> Vec<f64> {
    let op = &problem.op;
    let active = op.restrict(u);
    let strong = strong_residual(problem, lambda, &active);
    let mut full = vec![0.0; u.len()];
    full[op.active()].copy_from_slice(&strong);
    full
}

pub fn residual_norm_real(problem: &RadialProblem, lambda: f64, u: &[f64]) -> f64 {
    let active = problem.op.restrict(u);
    problem.op.norm(&strong_residual(problem, lambda, &active))
}

fn strong_residual(problem: &RadialProblem, lambda: f64, u: &[f64]) -> Vec<f64> {
    let op = &problem.op;
    let k = &problem.kinetics;
    let zero = k.zero_b();
    op.apply(u)
        .iter()
        .zip(u)
        .zip(op.weights())
        .map(|((ku, &ui), w)| ku / w + lambda * k.f_r(ui * ui, &zero) * ui)
        .collect()
}

/// Weak residual `K u + λ W f_R(u², 0) u` on active nodes.
fn weak_residual(problem: &RadialProblem, lambda: f64, u: &[f64]) -> Vec<f64> {
    let op = &problem.op;
    let k = &problem.kinetics;
    let zero = k.zero_b();
    op.apply(u)
        .iter()
        .zip(u)
        .zip(op.weights())
        .map(|((ku, &ui), w)| ku + lambda * w * k.f_r(ui * ui, &zero) * ui)
        .collect()
}

/// Linearization `Δ_m + λ f_R(u²,0) + 2λ ∂_y f_R(u²,0) u²` as the symmetric
/// tridiagonal matrix `J = K + λ W diag(g)` with weights `W`; the strong
/// operator is `W⁻¹ J`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Linearization {
    /// Strong action `W⁻¹ J v` on active values.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let k = v.len();
        (0..k)
            .map(|i| {
                let mut acc = self.diag[i] * v[i];
                if i > 0 {
                    acc += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < k {
                    acc += self.off[i] * v[i + 1];
                }
                acc / self.weights[i]
            })
            .collect()
    }

    /// Largest eigenvalue of `W⁻¹ J` (the principal eigenvalue).
    pub fn principal_eigenvalue(&self) -> f64 {
        largest_generalized_eigenvalue(&self.diag, &self.off, &self.weights, 1e-10)
    }

    /// `|⟨L v, z⟩_w − ⟨v, L z⟩_w|`.
    pub fn asymmetry(&self, v: &[f64], z: &[f64]) -> f64 {
        let lv = self.apply(v);
        let lz = self.apply(z);
        let ip = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .zip(&self.weights)
                .map(|((x, y), w)| x * y * w)
                .sum()
        };
        (ip(&lv, z) - ip(v, &lz)).abs()
    }

    fn band(&self) -> BandMatrix {
        let n = self.diag.len();
        let mut a = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            a.set(i, i, self.diag[i]);
            if i + 1 < n {
                a.set(i, i + 1, self.off[i]);
                a.set(i + 1, i, self.off[i]);
            }
        }
        a
    }
}

pub fn linearization_real(problem: &RadialProblem, lambda: f64, u: &[f64]) -> Linearization {
    let op = &problem.op;
    let k = &problem.kinetics;
    let zero = k.zero_b();
    let active = op.restrict(u);
    let diag = op
        .diag()
        .iter()
        .zip(&active)
        .zip(op.weights())
        .map(|((d, &ui), w)| {
            let y = ui * ui;
            d + lambda * w * (k.f_r(y, &zero) + 2.0 * k.dy_f_r(y, &zero) * y)
        })
        .collect();
    Linearization {
        diag,
        off: op.off().to_vec(),
        weights: op.weights().to_vec(),
    }
}

/// Newton solution of the real equation at fixed `λ` from `guess` (full grid).
/// Returns the converged full-grid profile, residual norm and iteration count.
pub fn solve_at(
    problem: &RadialProblem,
    lambda: f64,
    guess: &[f64],
) -> Result<(Vec<f64>, f64, usize)> {
    let op = &problem.op;
    let mut u = op.restrict(guess);
    for iter in 0..=NEWTON_MAX_ITER {
        let strong = strong_residual(problem, lambda, &u);
        let norm = op.norm(&strong);
        if !norm.is_finite() {
            return Err(Error::NoConvergence(format!(
                "non-finite residual at λ = {lambda}"
            )));
        }
        if norm <= NEWTON_TOL {
            return Ok((op.extend(&u), norm, iter));
        }
        if iter == NEWTON_MAX_ITER {
            break;
        }
        let full = op.extend(&u);
        let lin = linearization_real(problem, lambda, &full);
        let rhs: Vec<f64> = weak_residual(problem, lambda, &u)
            .iter()
            .map(|r| -r)
            .collect();
        let du = lin.band().factor()?.solve(&rhs);
        let top = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let step = du.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        u.iter_mut().zip(&du).for_each(|(a, d)| *a += d);
        // The strong residual carries rounding of order ε|u|/h²; once the
        // correction is itself at rounding level the iterate cannot improve.
        if step <= ROUNDING_STEP * top && norm <= ROUNDING_SLACK * NEWTON_TOL {
            let norm = op.norm(&strong_residual(problem, lambda, &u));
            return Ok((op.extend(&u), norm, iter + 1));
        }
    }
    Err(Error::NoConvergence(format!(
        "real Newton exceeded {NEWTON_MAX_ITER} iterations at λ = {lambda}"
    )))
}

/// `D²_σ λ` at `λ_n` from the eigenfunction.
pub fn pitchfork_curvature(problem: &RadialProblem, eig: &EigenPair) -> f64 {
    let e2: Vec<f64> = eig.radial.iter().map(|v| v * v).collect();
    let quartic = weighted_inner(&problem.surface, &problem.grid, &e2, &e2);
    let dy = problem.kinetics.dy_f_r(0.0, &problem.kinetics.zero_b());
    -2.0 * eig.lambda * dy * quartic
}

/// Local pitchfork predictor `(λ_n + σ²/2 · D²λ, σ e_n)`.
pub fn bifurcation_predictor(
    problem: &RadialProblem,
    eig: &EigenPair,
    sigma: f64,
) -> (f64, Vec<f64>) {
    let d2 = pitchfork_curvature(problem, eig);
    let lambda = eig.lambda + 0.5 * sigma * sigma * d2;
    (lambda, eig.radial.iter().map(|v| sigma * v).collect())
}

/// Weighted projection `⟨u, e⟩` in the discrete inner product.
pub fn sigma_projection(problem: &RadialProblem, u: &[f64], e: &[f64]) -> f64 {
    let op = &problem.op;
    op.inner(&op.restrict(u), &op.restrict(e))
}

#[derive(Debug, Clone, Copy)]
pub struct ContinuationOptions {
    pub step: f64,
    pub step_min: f64,
    pub sigma_sign: f64,
}

impl ContinuationOptions {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            step_min: step * 1e-4,
            sigma_sign: 1.0,
        }
    }

    pub fn with_sign(mut self, sign: f64) -> Self {
        self.sigma_sign = sign.signum();
        self
    }
}

fn make_point(
    problem: &RadialProblem,
    eig: &EigenPair,
    lambda: f64,
    u: Vec<f64>,
    residual_norm: f64,
    newton_iterations: usize,
    sigma_sign: f64,
) -> BranchPoint {
    let lin = linearization_real(problem, lambda, &u);
    BranchPoint {
        lambda,
        sigma_sign,
        residual_norm,
        nodal_index: nodal_count(&u),
        max_u: u.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        sigma_proj: sigma_projection(problem, &u, &eig.radial),
        principal_eigenvalue: lin.principal_eigenvalue(),
        newton_iterations,
        u,
    }
}

/// Natural-parameter continuation of the branch bifurcating at `eig.lambda`
/// up to `lambda_max`.
///
/// The first point sits `step/8` past the bifurcation (moved further if the
/// corrector falls back to the trivial state); steps then double up to
/// `step` and are halved on failure down to `step_min`. A point is accepted
/// only if it converges, is nontrivial and keeps the nodal count `n`.
pub fn continue_branch(
    problem: &RadialProblem,
    eig: &EigenPair,
    lambda_max: f64,
    opts: ContinuationOptions,
) -> Result<Branch> {
    if !(lambda_max > eig.lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda_max = {lambda_max} must exceed the bifurcation value {}",
            eig.lambda
        )));
    }
    if eig.m != problem.m {
        return Err(Error::InvalidArgument("eigenpair has a different m".into()));
    }
    let sign = if opts.sigma_sign < 0.0 { -1.0 } else { 1.0 };
    let d2 = pitchfork_curvature(problem, eig);
    let e_max = eig.radial.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let root_c = problem.kinetics.c().sqrt();
    let mut branch = Branch {
        m: eig.m,
        n: eig.n,
        sigma_sign: sign,
        bifurcation_lambda: eig.lambda,
        curvature: d2,
        points: Vec::new(),
        termination: Termination::ReachedLambdaMax,
    };

    let acceptable = |u: &[f64], floor: f64| {
        let top = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        top > floor && nodal_count(u) == eig.n && top <= root_c * (1.0 + 1e-6)
    };

    // First point from the pitchfork predictor.
    let mut offset = (opts.step / 8.0).min(lambda_max - eig.lambda);
    loop {
        let lambda = eig.lambda + offset;
        let sigma = sign * (2.0 * offset / d2.abs().max(f64::MIN_POSITIVE)).sqrt();
        let guess: Vec<f64> = eig.radial.iter().map(|v| sigma * v).collect();
        let last_err = match solve_at(problem, lambda, &guess) {
            Ok((u, res, it)) if acceptable(&u, 0.25 * sigma.abs() * e_max) => {
                branch
                    .points
                    .push(make_point(problem, eig, lambda, u, res, it, sign));
                break;
            }
            Ok(_) => format!("collapsed to the trivial state at λ = {lambda}"),
            Err(e) => e.to_string(),
        };
        offset *= 2.0;
        if eig.lambda + offset > lambda_max || offset > 64.0 * opts.step {
            branch.termination = Termination::Stalled {
                lambda: eig.lambda,
                reason: format!("no nontrivial solution near onset: {last_err}"),
            };
            return Ok(branch);
        }
    }

    let mut h = offset.min(opts.step);
    let mut prev_h = offset;
    while let Some(cur) = branch.points.last() {
        let remaining = lambda_max - cur.lambda;
        if remaining <= 1e-12 * lambda_max {
            break;
        }
        let dl = h.min(remaining);
        let lambda = if dl == remaining {
            lambda_max
        } else {
            cur.lambda + dl
        };
        let guess: Vec<f64> = match branch.points.len() {
            1 => cur.u.clone(),
            k => {
                let before = &branch.points[k - 2];
                let r = dl / prev_h;
                cur.u
                    .iter()
                    .zip(&before.u)
                    .map(|(a, b)| a + r * (a - b))
                    .collect()
            }
        };
        match solve_at(problem, lambda, &guess) {
            Ok((u, res, it)) if acceptable(&u, 0.5 * cur.max_u) => {
                branch
                    .points
                    .push(make_point(problem, eig, lambda, u, res, it, sign));
                prev_h = dl;
                h = (2.0 * dl).min(opts.step);
            }
            outcome => {
                let reason = match outcome {
                    Ok((u, ..)) => format!(
                        "rejected point (max|u| = {:.3e}, nodes = {})",
                        u.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                        nodal_count(&u)
                    ),
                    Err(e) => e.to_string(),
                };
                h = 0.5 * dl;
                if h < opts.step_min {
                    branch.termination = Termination::Stalled {
                        lambda: cur.lambda,
                        reason,
                    };
                    break;
                }
            }
        }
    }
    Ok(branch)
}

/// Least-squares fit `λ = c₀ + c₁σ² + c₂σ⁴` over the points with
/// `λ - λ_n ≤ window`; returns `D²_σ λ ≈ 2c₁`.
pub fn fit_pitchfork_curvature(branch: &Branch, window: f64) -> Option<f64> {
    let pts: Vec<&BranchPoint> = branch
        .points
        .iter()
        .filter(|p| p.lambda - branch.bifurcation_lambda <= window)
        .collect();
    if pts.len() < 4 {
        return None;
    }
    let a = nalgebra::DMatrix::from_fn(pts.len(), 3, |i, j| pts[i].sigma_proj.powi(2 * j as i32));
    let b = nalgebra::DVector::from_iterator(pts.len(), pts.iter().map(|p| p.lambda));
    let sol = a.svd(true, true).solve(&b, 1e-14).ok()?;
    Some(2.0 * sol[1])
}

#[derive(Debug, Clone, Serialize)]
pub struct PointCheck {
    pub lambda: f64,
    pub residual_norm: f64,
    pub residual_ok: bool,
    pub nodal_ok: bool,
    /// `max|u| - √C`.
    pub sup_excess: f64,
    pub sup_ok: bool,
    /// `min σ u` over interior nodes (`n = 0` only).
    pub sign_margin: Option<f64>,
    /// `max|u(s) - (-1)^n u(s_* - s)|` on mirrored node pairs.
    pub reflection_residual: Option<f64>,
    pub principal_eigenvalue: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub points: Vec<PointCheck>,
    pub monotone_in_lambda: bool,
    pub amplitude_nondecreasing: bool,
    pub failures: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Per-point checks of residual, nodal count, the `√C` bound, sign
/// definiteness (`n = 0`), reflection parity and the principal eigenvalue.
pub fn verify_branch(problem: &RadialProblem, branch: &Branch) -> VerificationReport {
    let root_c = problem.kinetics.c().sqrt();
    let mirrored = problem.surface.reflection_symmetric() && problem.grid.far_pole();
    let parity = if branch.n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    };
    let mut failures = Vec::new();
    let mut points = Vec::new();
    for p in &branch.points {
        let residual_norm = residual_norm_real(problem, p.lambda, &p.u);
        let sup_excess = p.max_u - root_c;
        let interior = &p.u[1..p.u.len() - 1];
        let sign_margin = (branch.n == 0).then(|| {
            interior
                .iter()
                .map(|v| branch.sigma_sign * v)
                .fold(f64::INFINITY, f64::min)
        });
        let reflection_residual = mirrored.then(|| {
            let n = p.u.len();
            (0..n)
                .map(|i| (p.u[i] - parity * p.u[n - 1 - i]).abs())
                .fold(0.0, f64::max)
        });
        let check = PointCheck {
            lambda: p.lambda,
            residual_norm,
            residual_ok: residual_norm <= 1e-10,
            nodal_ok: nodal_count(&p.u) == branch.n,
            sup_excess,
            sup_ok: sup_excess <= 1e-8,
            sign_margin,
            reflection_residual,
            principal_eigenvalue: p.principal_eigenvalue,
        };
        let tag = format!("λ = {}", p.lambda);
        if !check.residual_ok {
            failures.push(format!("{tag}: residual {residual_norm:e}"));
        }
        if !check.nodal_ok {
            failures.push(format!("{tag}: nodal count changed"));
        }
        if !check.sup_ok {
            failures.push(format!("{tag}: sup|u| exceeds √C by {sup_excess:e}"));
        }
        if matches!(sign_margin, Some(v) if !(v > 0.0)) {
            failures.push(format!("{tag}: profile is not sign definite"));
        }
        if matches!(reflection_residual, Some(r) if r > 1e-6) {
            failures.push(format!("{tag}: reflection parity violated"));
        }
        if branch.n == 0 && !(p.principal_eigenvalue < 0.0) {
            failures.push(format!(
                "{tag}: principal eigenvalue {} is not negative",
                p.principal_eigenvalue
            ));
        }
        points.push(check);
    }
    let monotone_in_lambda = branch.points.windows(2).all(|w| w[1].lambda > w[0].lambda);
    let amplitude_nondecreasing = branch
        .points
        .windows(2)
        .all(|w| w[1].max_u >= w[0].max_u - 1e-10);
    if !monotone_in_lambda {
        failures.push("λ is not strictly increasing along the branch".into());
    }
    if branch
        .points
        .iter()
        .any(|p| !(p.lambda > branch.bifurcation_lambda))
    {
        failures.push("branch point at or below the bifurcation value".into());
    }
    VerificationReport {
        points,
        monotone_in_lambda,
        amplitude_nondecreasing,
        failures,
    }
}
