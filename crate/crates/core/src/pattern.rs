//! Amplitude and phase of rotating-frame solutions, their classification and
//! the spiral curves they draw on the surface.
//!
//! Writing `u = A e^{ip}`, the phase derivative has two discrete expressions
//! that agree on every solution:
//!
//! * the polar form, built from the face phase slopes `arg(ū_k u_{k+1})/h`;
//! * the integral form, which takes the face currents `a Im(ū_k u_{k+1})/h`
//!   from the cumulative sums `∓λ/(1+η²) Σ w |u|² (Ω − η f_R + f_I)` that the
//!   discrete equation forces on them.
//!
//! Face slopes are interpolated linearly to the nodes in both cases.
//!
//! Both vanish wherever `u` does: at the tips, at a far pole and below the
//! amplitude floor.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::complex_branch::{
    omega_b_derivative, omega_eta_derivative, solve_perturbed, solve_perturbed_from, SolutionPoint,
};
use crate::discretization::RadialProblem;
use crate::real_branch::BranchPoint;
use crate::Result;

pub const OMEGA_TOL: f64 = 1e-8;
/// Bound on `sup|p'| · s_*` for a vortex.
pub const P_TOL: f64 = 1e-6;
/// Amplitudes below this fraction of `max A` count as zeros.
pub const AMP_FLOOR_REL: f64 = 1e-8;
pub const LOCUS_TOL: f64 = 1e-10;
pub const LOCUS_MAX_ITER: usize = 40;

#[derive(Debug, Clone, Serialize)]
pub struct PolarProfile {
    pub s: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub p_prime: Vec<f64>,
    /// Trapezoidal integral of `p_prime` from the first node.
    pub p: Vec<f64>,
    pub amp_floor: f64,
}

impl PolarProfile {
    pub fn sup_p_prime(&self) -> f64 {
        self.p_prime.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Linear interpolation of `p` at `s` (clamped to the grid).
    pub fn phase_at(&self, s: f64) -> f64 {
        let k = self.s.partition_point(|&x| x <= s);
        if k == 0 {
            return self.p[0];
        }
        if k == self.s.len() {
            return self.p[k - 1];
        }
        let t = (s - self.s[k - 1]) / (self.s[k] - self.s[k - 1]);
        self.p[k - 1] + t * (self.p[k] - self.p[k - 1])
    }
}

fn amp_floor(u: &[Complex64]) -> f64 {
    AMP_FLOOR_REL * u.iter().fold(0.0f64, |m, v| m.max(v.norm()))
}

/// Node values from face phase slopes by linear interpolation to the node.
/// End nodes keep `p' = 0`: tips and a far pole by the closure, a Robin end
/// because `u'` is a real multiple of `u` there.
fn blend_faces(x: &[f64], u: &[Complex64], floor: f64, slope: impl Fn(usize) -> f64) -> Vec<f64> {
    let n = x.len() - 1;
    let mut pp = vec![0.0; n + 1];
    for i in 1..n {
        if u[i].norm() <= floor {
            continue;
        }
        let (hm, hp) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        pp[i] = (hp * slope(i - 1) + hm * slope(i)) / (hm + hp);
    }
    pp
}

/// Face phase slope `arg(ū_k u_{k+1}) / h`; exact for linear phases.
fn polar_p_prime(problem: &RadialProblem, u: &[Complex64], floor: f64) -> Vec<f64> {
    let x = problem.nodes();
    blend_faces(x, u, floor, |f| {
        if u[f].norm() <= floor || u[f + 1].norm() <= floor {
            return 0.0;
        }
        (u[f].conj() * u[f + 1]).arg() / (x[f + 1] - x[f])
    })
}

pub fn polar_decompose(problem: &RadialProblem, pt: &SolutionPoint) -> PolarProfile {
    let floor = amp_floor(&pt.u);
    let p_prime = polar_p_prime(problem, &pt.u, floor);
    let s = problem.nodes().to_vec();
    let mut p = vec![0.0; s.len()];
    for k in 1..s.len() {
        p[k] = p[k - 1] + 0.5 * (s[k] - s[k - 1]) * (p_prime[k] + p_prime[k - 1]);
    }
    PolarProfile {
        amplitude: pt.u.iter().map(|v| v.norm()).collect(),
        s,
        p_prime,
        p,
        amp_floor: floor,
    }
}

/// Phase derivative from the integral identity.
///
/// The face current `Q = a A_k A_{k+1} sin(Δp)/h` is taken from cumulative
/// sums of the source rather than from the phase differences. Sums run from
/// the tip up to the face where `a |u|²` peaks and from the far end beyond
/// it, so no current comes from cancelling two large sums where `a A²` is
/// small.
pub fn phase_derivative_integral(problem: &RadialProblem, pt: &SolutionPoint) -> Vec<f64> {
    let op = &problem.op;
    let k = &problem.kinetics;
    let x = problem.nodes();
    let n = x.len() - 1;
    let u = &pt.u;
    let scale = -pt.lambda / (1.0 + pt.eta * pt.eta);
    let mut src = vec![0.0; n + 1];
    for (i, w) in op.active().zip(op.weights()) {
        let y = u[i].norm_sqr();
        src[i] = w * y * (pt.omega - pt.eta * k.f_r(y, &pt.b) + k.f_i(y, &pt.b));
    }
    let a_faces = op.a_faces();
    let weight = |f: usize| a_faces[f] * (u[f].norm_sqr() + u[f + 1].norm_sqr());
    let split = (0..n)
        .max_by(|&p, &q| weight(p).total_cmp(&weight(q)))
        .unwrap_or(0);
    let mut current = vec![0.0; n];
    let mut acc = 0.0;
    for f in 0..=split {
        acc += src[f];
        current[f] = scale * acc;
    }
    acc = 0.0;
    for f in (split + 1..n).rev() {
        acc += src[f + 1];
        current[f] = -scale * acc;
    }
    let floor = amp_floor(u);
    blend_faces(x, u, floor, |f| {
        let (l, r) = (u[f].norm(), u[f + 1].norm());
        if l <= floor || r <= floor {
            return 0.0;
        }
        let h = x[f + 1] - x[f];
        (current[f] * h / (a_faces[f] * l * r))
            .clamp(-1.0, 1.0)
            .asin()
            / h
    })
}

/// `sup |p'_polar − p'_integral|` over nodes above the amplitude floor.
pub fn phase_derivative_agreement(problem: &RadialProblem, pt: &SolutionPoint) -> f64 {
    let polar = polar_decompose(problem, pt);
    let integral = phase_derivative_integral(problem, pt);
    polar
        .p_prime
        .iter()
        .zip(&integral)
        .zip(&polar.amplitude)
        .filter(|(_, &a)| a > polar.amp_floor)
        .map(|((p, q), _)| (p - q).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rotation {
    Rotating,
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Spiral,
    Vortex,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassDiagnostics {
    pub omega: f64,
    pub sup_p_prime: f64,
    /// `sup|p'| · s_*`, compared with `p_tol`.
    pub scaled_sup_p_prime: f64,
    pub omega_tol: f64,
    pub p_tol: f64,
    /// `Ω − η f_R(0, b) + f_I(0, b)`; nonzero forces a spiral.
    pub criterion: f64,
    /// False when the label is vortex although the criterion is nonzero.
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PatternClass {
    pub rotation: Rotation,
    pub shape: Shape,
    pub diagnostics: ClassDiagnostics,
}

impl PatternClass {
    pub fn label(&self) -> &'static str {
        match (self.rotation, self.shape) {
            (Rotation::Rotating, Shape::Spiral) => "rotating spiral",
            (Rotation::Rotating, Shape::Vortex) => "rotating vortex",
            (Rotation::Frozen, Shape::Spiral) => "frozen spiral",
            (Rotation::Frozen, Shape::Vortex) => "frozen vortex",
        }
    }
}

/// Thresholded labels; the algebraic criterion is reported but never
/// overrides them.
pub fn classify(
    problem: &RadialProblem,
    pt: &SolutionPoint,
    omega_tol: f64,
    p_tol: f64,
) -> PatternClass {
    let k = &problem.kinetics;
    let polar = polar_decompose(problem, pt);
    let sup = polar.sup_p_prime();
    let scaled = sup * problem.surface.s_star();
    let rotation = if pt.omega.abs() <= omega_tol {
        Rotation::Frozen
    } else {
        Rotation::Rotating
    };
    let shape = if scaled <= p_tol {
        Shape::Vortex
    } else {
        Shape::Spiral
    };
    let criterion = pt.omega - pt.eta * k.f_r(0.0, &pt.b) + k.f_i(0.0, &pt.b);
    PatternClass {
        rotation,
        shape,
        diagnostics: ClassDiagnostics {
            omega: pt.omega,
            sup_p_prime: sup,
            scaled_sup_p_prime: scaled,
            omega_tol,
            p_tol,
            criterion,
            consistent: !(shape == Shape::Vortex && criterion.abs() > omega_tol),
        },
    }
}

pub fn classify_default(problem: &RadialProblem, pt: &SolutionPoint) -> PatternClass {
    classify(problem, pt, OMEGA_TOL, P_TOL)
}

#[derive(Debug, Clone, Serialize)]
pub struct LocusPoint {
    pub beta: f64,
    pub eta_tilde: f64,
    pub omega_residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub solution: SolutionPoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocusFailure {
    pub beta: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrozenLocus {
    /// Sorted by `beta`.
    pub points: Vec<LocusPoint>,
    pub failures: Vec<LocusFailure>,
}

impl FrozenLocus {
    pub fn strictly_decreasing(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].eta_tilde < w[0].eta_tilde)
    }
}

fn parameter_vector(problem: &RadialProblem, beta: f64) -> Vec<f64> {
    let mut b = problem.kinetics.zero_b();
    if let Some(first) = b.first_mut() {
        *first = beta;
    }
    b
}

/// Secant iteration on `η ↦ Ω(η, β)` from the first-order estimate
/// `η ≈ −β ∂_βΩ/∂_ηΩ`, warm-starting each solve from the previous one.
pub fn frozen_eta(problem: &RadialProblem, base: &BranchPoint, beta: f64) -> Result<LocusPoint> {
    let b = parameter_vector(problem, beta);
    let d_eta = omega_eta_derivative(problem, base);
    let d_beta = omega_b_derivative(problem, base)
        .first()
        .copied()
        .unwrap_or(0.0);
    let mut eta0 = -beta * d_beta / d_eta;
    let mut pt0 = solve_perturbed(problem, base, eta0, &b)?;
    if pt0.omega.abs() <= LOCUS_TOL {
        return Ok(LocusPoint {
            beta,
            eta_tilde: eta0,
            omega_residual: pt0.omega,
            iterations: 0,
            solution: pt0,
        });
    }
    let mut eta1 = eta0 - pt0.omega / d_eta;
    let mut pt1 = solve_perturbed_from(problem, base, eta1, &b, &pt0.u, pt0.omega)?;
    for iter in 1..=LOCUS_MAX_ITER {
        if pt1.omega.abs() <= LOCUS_TOL {
            return Ok(LocusPoint {
                beta,
                eta_tilde: eta1,
                omega_residual: pt1.omega,
                iterations: iter,
                solution: pt1,
            });
        }
        let slope = (pt1.omega - pt0.omega) / (eta1 - eta0);
        if !(slope.is_finite() && slope != 0.0) {
            break;
        }
        let next = eta1 - pt1.omega / slope;
        let pt = solve_perturbed_from(problem, base, next, &b, &pt1.u, pt1.omega)?;
        (eta0, pt0) = (eta1, pt1);
        (eta1, pt1) = (next, pt);
    }
    Err(crate::Error::NoConvergence(format!(
        "frozen-locus secant did not reach |Ω| ≤ {LOCUS_TOL} at β = {beta}"
    )))
}

/// `η̃(β)` at each sample, in parallel; failed samples are recorded.
pub fn frozen_locus(
    problem: &RadialProblem,
    base: &BranchPoint,
    beta_samples: &[f64],
) -> FrozenLocus {
    let results: Vec<(f64, Result<LocusPoint>)> = beta_samples
        .par_iter()
        .map(|&beta| (beta, frozen_eta(problem, base, beta)))
        .collect();
    let mut locus = FrozenLocus {
        points: Vec::new(),
        failures: Vec::new(),
    };
    for (beta, res) in results {
        match res {
            Ok(p) => locus.points.push(p),
            Err(e) => locus.failures.push(LocusFailure {
                beta,
                reason: e.to_string(),
            }),
        }
    }
    locus.points.sort_by(|p, q| p.beta.total_cmp(&q.beta));
    locus
}

#[derive(Debug, Clone, Serialize)]
pub struct SpiralCurves {
    pub t: f64,
    pub m: usize,
    pub omega: f64,
    /// `2m` polylines `(x, y, z)`, arm `k` at `φ_k = (Ωt − p(s) + kπ)/m`.
    pub arms: Vec<Vec<[f64; 3]>>,
    /// Arc length of each sample, shared by all arms.
    pub s: Vec<f64>,
}

/// Samples the level curves `φ_k(t, s)` uniformly in `s` between the first
/// and last grid nodes.
pub fn render_pattern(
    problem: &RadialProblem,
    pt: &SolutionPoint,
    t: f64,
    points_per_arm: usize,
) -> SpiralCurves {
    let polar = polar_decompose(problem, pt);
    render_polar(problem, &polar, pt.omega, t, points_per_arm)
}

pub fn render_polar(
    problem: &RadialProblem,
    polar: &PolarProfile,
    omega: f64,
    t: f64,
    points_per_arm: usize,
) -> SpiralCurves {
    let m = problem.m;
    let nodes = problem.nodes();
    let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
    let count = points_per_arm.max(2);
    let s: Vec<f64> = (0..count)
        .map(|j| lo + (hi - lo) * j as f64 / (count - 1) as f64)
        .collect();
    let mf = m as f64;
    let arms = (0..2 * m)
        .map(|k| {
            s.iter()
                .map(|&sj| {
                    let phi =
                        (omega * t - polar.phase_at(sj) + k as f64 * std::f64::consts::PI) / mf;
                    problem.surface.embed(sj, phi)
                })
                .collect()
        })
        .collect();
    SpiralCurves {
        t,
        m,
        omega,
        arms,
        s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex_branch::frequency_relation_residual;
    use crate::eigensolver::eigenfunction;
    use crate::geometry::{make_disk, make_sphere, BoundaryCondition};
    use crate::kinetics::make_cubic;
    use crate::real_branch::{continue_branch, ContinuationOptions};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn setup(disk: bool, m: usize) -> (RadialProblem, BranchPoint) {
        let (surface, bc, lambda) = if disk {
            (
                make_disk(),
                BoundaryCondition::neumann(),
                4.0 + 4.0 * m as f64,
            )
        } else {
            (
                make_sphere(),
                BoundaryCondition::NoBoundary,
                3.0 * m as f64 * m as f64,
            )
        };
        let p = RadialProblem::new(surface, bc, make_cubic(0.0), m).unwrap();
        let e = eigenfunction(&p.surface, m, 0, p.bc, &p.grid).unwrap();
        let b = continue_branch(&p, &e, lambda, ContinuationOptions::new(0.5)).unwrap();
        let pt = b.points.last().unwrap().clone();
        (p, pt)
    }

    fn sphere() -> &'static (RadialProblem, BranchPoint) {
        static S: OnceLock<(RadialProblem, BranchPoint)> = OnceLock::new();
        S.get_or_init(|| setup(false, 1))
    }

    fn disk() -> &'static (RadialProblem, BranchPoint) {
        static D: OnceLock<(RadialProblem, BranchPoint)> = OnceLock::new();
        D.get_or_init(|| setup(true, 1))
    }

    #[test]
    fn real_point_has_flat_phase() {
        let (p, base) = sphere();
        let pt = solve_perturbed(p, base, 0.0, &[0.0]).unwrap();
        let polar = polar_decompose(p, &pt);
        assert!(polar.p_prime.iter().all(|&v| v == 0.0));
        assert!(polar.p.iter().all(|&v| v == 0.0));
        assert!(phase_derivative_integral(p, &pt)
            .iter()
            .all(|v| v.abs() <= 1e-12));
        assert_eq!(classify_default(p, &pt).label(), "frozen vortex");
    }

    #[test]
    fn constructed_linear_phase() {
        let (p, base) = sphere();
        let mut pt = solve_perturbed(p, base, 0.0, &[0.0]).unwrap();
        let c = 0.7;
        pt.u =
            pt.u.iter()
                .zip(p.nodes())
                .map(|(v, &s)| Complex64::from_polar(v.re.abs() + 0.1, c * s))
                .collect();
        let polar = polar_decompose(p, &pt);
        let n = polar.p_prime.len();
        for i in 1..n - 1 {
            assert!((polar.p_prime[i] - c).abs() <= 1e-8, "{}", polar.p_prime[i]);
        }
        let last = *polar.s.last().unwrap();
        assert!((polar.p[n - 1] - c * (last - polar.s[0])).abs() <= 1e-2);
    }

    #[test]
    fn two_formulas_agree_on_solutions() {
        for (p, base) in [sphere(), disk()] {
            for (eta, beta) in [(0.05, 0.0), (0.0, 0.05), (-0.08, 0.03), (0.1, -0.1)] {
                let pt = solve_perturbed(p, base, eta, &[beta]).unwrap();
                let gap = phase_derivative_agreement(p, &pt);
                assert!(gap <= 1e-5, "{eta} {beta}: {gap}");
                let polar = polar_decompose(p, &pt);
                assert!(polar.p_prime[0].abs() <= 1e-6);
                if p.grid.far_pole() {
                    assert!(polar.p_prime.last().unwrap().abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn omega_offset_gives_opposite_sign() {
        let (p, base) = disk();
        let mut pt = solve_perturbed(p, base, 0.0, &[0.0]).unwrap();
        let delta = 0.01;
        pt.omega += delta;
        assert!((frequency_relation_residual(p, &pt) - delta).abs() < 1e-12);
        let pp = phase_derivative_integral(p, &pt);
        let inner = &pp[1..pp.len() - 1];
        assert!(inner.iter().all(|v| v * delta < 0.0));
    }

    #[test]
    fn classification_examples() {
        let (p, base) = sphere();
        let vortex = solve_perturbed(p, base, 0.05, &[0.05]).unwrap();
        let c = classify_default(p, &vortex);
        assert_eq!(c.label(), "rotating vortex");
        assert!(c.diagnostics.consistent);
        let spiral = solve_perturbed(p, base, 0.0, &[0.05]).unwrap();
        let c = classify_default(p, &spiral);
        assert_eq!(c.label(), "rotating spiral");
        assert!(c.diagnostics.criterion.abs() > 1e-4);
    }

    #[test]
    fn frozen_locus_anchor_and_order() {
        let (p, base) = sphere();
        let locus = frozen_locus(p, base, &[-0.05, 0.0, 0.05]);
        assert!(locus.failures.is_empty(), "{:?}", locus.failures);
        assert_eq!(locus.points[1].eta_tilde, 0.0);
        assert!(locus.strictly_decreasing());
        let d = -omega_b_derivative(p, base)[0] / omega_eta_derivative(p, base);
        let fit = (locus.points[2].eta_tilde - locus.points[0].eta_tilde) / 0.1;
        assert!((fit - d).abs() < 0.02 * d.abs().max(1.0), "{fit} vs {d}");
        for lp in &locus.points[..] {
            let c = classify_default(p, &lp.solution);
            assert_eq!(c.rotation, Rotation::Frozen);
            if lp.beta != 0.0 {
                assert_eq!(c.shape, Shape::Spiral);
            }
        }
    }

    #[test]
    fn disk_vortex_rays() {
        let (p, base) = setup(true, 2);
        let pt = solve_perturbed(&p, &base, 0.0, &[0.0]).unwrap();
        let curves = render_pattern(&p, &pt, 1.7, 16);
        assert_eq!(curves.arms.len(), 4);
        for (k, arm) in curves.arms.iter().enumerate() {
            let phi = k as f64 * std::f64::consts::FRAC_PI_2;
            for q in arm {
                let r = q[0].hypot(q[1]);
                assert!(
                    (q[0] - r * phi.cos()).abs() < 1e-14 && (q[1] - r * phi.sin()).abs() < 1e-14
                );
                assert_eq!(q[2], 0.0);
            }
        }
    }

    #[test]
    fn sphere_spiral_joins_poles() {
        let (p, base) = sphere();
        let pt = solve_perturbed(p, base, 0.0, &[0.06]).unwrap();
        let curves = render_pattern(p, &pt, 0.0, 64);
        assert_eq!(curves.arms.len(), 2);
        for arm in &curves.arms {
            let first = arm.first().unwrap();
            let last = arm.last().unwrap();
            assert!(first[0].hypot(first[1]) < 1e-5 && (first[2] - 1.0).abs() < 1e-10);
            assert!(last[0].hypot(last[1]) < 1e-5 && (last[2] + 1.0).abs() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn rendered_points_lie_on_surface_and_rotate_rigidly(t in 0.0f64..50.0, beta in -0.08f64..0.08) {
            let (p, base) = sphere();
            let pt = solve_perturbed(p, base, 0.02, &[beta]).unwrap();
            let now = render_pattern(p, &pt, t, 32);
            let start = render_pattern(p, &pt, 0.0, 32);
            let rot = pt.omega * t / p.m as f64;
            for (arm_t, arm_0) in now.arms.iter().zip(&start.arms) {
                for ((q, q0), &s) in arm_t.iter().zip(arm_0).zip(&now.s) {
                    let a = p.surface.a(s);
                    prop_assert!((q[0] * q[0] + q[1] * q[1] - a * a).abs() <= 1e-12);
                    prop_assert!((q[2] - p.surface.atilde(s)).abs() <= 1e-12);
                    let (c, sn) = (rot.cos(), rot.sin());
                    let x = c * q0[0] - sn * q0[1];
                    let y = sn * q0[0] + c * q0[1];
                    prop_assert!((x - q[0]).abs().max((y - q[1]).abs()) <= 1e-10);
                }
            }
        }

        #[test]
        fn classification_is_gauge_invariant(theta in -3.2f64..3.2, eta in -0.08f64..0.08, beta in -0.08f64..0.08) {
            let (p, base) = sphere();
            let pt = solve_perturbed(p, base, eta, &[beta]).unwrap();
            let a = classify_default(p, &pt);
            let b = classify_default(p, &pt.rotated(theta));
            prop_assert_eq!(a.label(), b.label());
            prop_assert!((a.diagnostics.sup_p_prime - b.diagnostics.sup_p_prime).abs() <= 1e-8);
        }
    }
}
