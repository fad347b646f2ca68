//! Eigenvalues and nodal eigenfunctions of `-Δ_m` by Prüfer-angle shooting.
//!
//! In the Euler time `τ` (`ds/dτ = a(s)`) the radial eigenproblem becomes
//! `v̈ = (m² - λa²) v`, regular on the whole line. Writing
//! `(v, v̇) = R (cos θ, sin θ)` gives
//!
//! ```text
//! θ̇   = -sin²θ + (m² - λa²) cos²θ
//! (ln R)˙ = sin θ cos θ (1 + m² - λa²)
//! ```
//!
//! Near a pole `a ≈ s`, so admissible solutions leave `s = 0` along the
//! direction `tan θ = m` and, on a closed surface, enter the far pole along
//! `tan θ = -m`. Zeros of `v` are the passes of `θ` through odd multiples of
//! `π/2`, which happen only downward (`θ̇ = -1` there). The terminal angle is
//! strictly decreasing in `λ`, so the `n`-th eigenvalue is the unique root of
//! `θ_end(λ) = target - nπ`.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::{BoundaryCondition, RadialGrid, SurfaceOfRevolution};
use crate::ode::{Integrator, OdeSystem, Tolerances};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruferState {
    pub theta: f64,
    pub s: f64,
    /// Downward passes through odd multiples of `π/2` so far.
    pub crossings: usize,
    /// `ln R`, defined up to the additive constant fixed at the start.
    pub ln_r: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
    /// Grid nodes.
    pub s: Vec<f64>,
    /// `v_n^m` at the nodes, `∫ v² a ds = 1`, positive next to `s = 0`.
    pub radial: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    pub tip_offset_rel: f64,
    pub lambda_cap: f64,
    /// Relative bisection tolerance on `λ`.
    pub rel_tol: f64,
    pub ode: Tolerances,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            tip_offset_rel: 1e-6,
            lambda_cap: 1e6,
            rel_tol: 1e-10,
            ode: Tolerances::default(),
        }
    }
}

struct PruferSystem<'a> {
    surface: &'a SurfaceOfRevolution,
    m2: f64,
    lambda: f64,
}

// State layout: [θ, ln R, s].
impl OdeSystem<3> for PruferSystem<'_> {
    fn rhs(&self, y: &[f64; 3]) -> [f64; 3] {
        let a = self.surface.a(y[2]);
        let q = self.m2 - self.lambda * a * a;
        let (sn, cs) = y[0].sin_cos();
        [-sn * sn + q * cs * cs, sn * cs * (1.0 + q), a]
    }
}

fn wrap_index(theta: f64) -> f64 {
    ((theta - FRAC_PI_2) / PI).floor()
}

/// Integration interval and terminal data for one `(surface, m, bc)`.
struct Shooting<'a> {
    surface: &'a SurfaceOfRevolution,
    m: usize,
    bc: BoundaryCondition,
    start: f64,
    end: f64,
    ode: Tolerances,
}

impl<'a> Shooting<'a> {
    fn new(
        surface: &'a SurfaceOfRevolution,
        m: usize,
        bc: BoundaryCondition,
        tip_offset: f64,
        end: f64,
        ode: Tolerances,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument(
                "winding number m must be at least 1".into(),
            ));
        }
        bc.check(surface)?;
        Ok(Self {
            surface,
            m,
            bc,
            start: tip_offset,
            end,
            ode,
        })
    }

    fn from_options(
        surface: &'a SurfaceOfRevolution,
        m: usize,
        bc: BoundaryCondition,
        opts: &ShootingOptions,
    ) -> Result<Self> {
        let eps = opts.tip_offset_rel * surface.s_star();
        let end = if surface.has_boundary() {
            surface.s_star()
        } else {
            surface.s_star() - eps
        };
        Self::new(surface, m, bc, eps, end, opts.ode)
    }

    fn from_grid(
        surface: &'a SurfaceOfRevolution,
        m: usize,
        bc: BoundaryCondition,
        grid: &RadialGrid,
    ) -> Result<Self> {
        let end = *grid.nodes().last().expect("nonempty grid");
        Self::new(
            surface,
            m,
            bc,
            grid.tip_offset(),
            end,
            Tolerances::default(),
        )
    }

    fn mf(&self) -> f64 {
        self.m as f64
    }

    /// Angle of the admissible direction at the far end, in `(-π, 0]`.
    fn end_angle(&self) -> f64 {
        match self.bc {
            BoundaryCondition::NoBoundary => -self.mf().atan(),
            BoundaryCondition::Robin { alpha1, alpha2 } => {
                -(alpha1 * self.surface.a(self.surface.s_star())).atan2(alpha2)
            }
        }
    }

    fn system(&self, lambda: f64) -> PruferSystem<'a> {
        PruferSystem {
            surface: self.surface,
            m2: self.mf() * self.mf(),
            lambda,
        }
    }

    fn initial_state(&self) -> [f64; 3] {
        [self.mf().atan(), self.mf() * self.start.ln(), self.start]
    }

    /// Forward flow from the tip, sampled at `stops` (increasing, within range).
    fn forward(&self, lambda: f64, stops: &[f64]) -> Result<Vec<PruferState>> {
        let sys = self.system(lambda);
        let mut it = Integrator::new(&sys, self.initial_state(), self.ode);
        let mut crossings = 0usize;
        let mut out = Vec::with_capacity(stops.len());
        for &stop in stops {
            it.advance_until(2, stop, |before, after| {
                let passed = wrap_index(before[0]) - wrap_index(after[0]);
                if passed > 0.0 {
                    crossings += passed as usize;
                }
            })?;
            let y = it.state();
            out.push(PruferState {
                theta: y[0],
                s: y[2],
                crossings,
                ln_r: y[1],
            });
        }
        Ok(out)
    }

    fn terminal(&self, lambda: f64) -> Result<PruferState> {
        Ok(self.forward(lambda, &[self.end])?[0])
    }

    /// `θ_end(λ) - (end_angle - nπ)`; strictly decreasing in `λ`.
    fn mismatch(&self, lambda: f64, n: usize) -> Result<f64> {
        Ok(self.terminal(lambda)?.theta - (self.end_angle() - n as f64 * PI))
    }

    fn eigenvalue(&self, n: usize, opts: &ShootingOptions) -> Result<f64> {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.mismatch(hi, n)? >= 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > opts.lambda_cap {
                return Err(Error::BracketNotFound {
                    n,
                    cap: opts.lambda_cap,
                });
            }
        }
        while hi - lo > opts.rel_tol * hi {
            let mid = 0.5 * (lo + hi);
            if self.mismatch(mid, n)? >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Backward flow from the far end along the admissible direction,
    /// sampled at `stops` (decreasing).
    fn backward(&self, lambda: f64, stops: &[f64]) -> Result<Vec<[f64; 3]>> {
        let sys = self.system(lambda);
        let y0 = [self.end_angle(), 0.0, self.end];
        let mut it = Integrator::new(&sys, y0, self.ode);
        let mut out = Vec::with_capacity(stops.len());
        for &stop in stops {
            it.advance_until(2, stop, |_, _| {})?;
            out.push(*it.state());
        }
        Ok(out)
    }
}

/// Terminal Prüfer state of the solution leaving `s = tip_offset` along
/// `tan θ = m`, integrated to the last grid node.
pub fn prufer_flow(
    surface: &SurfaceOfRevolution,
    m: usize,
    lambda: f64,
    bc: BoundaryCondition,
    grid: &RadialGrid,
) -> Result<PruferState> {
    Shooting::from_grid(surface, m, bc, grid)?.terminal(lambda)
}

/// The same flow sampled at every grid node after the first.
pub fn prufer_trajectory(
    surface: &SurfaceOfRevolution,
    m: usize,
    lambda: f64,
    bc: BoundaryCondition,
    grid: &RadialGrid,
) -> Result<Vec<PruferState>> {
    let shoot = Shooting::from_grid(surface, m, bc, grid)?;
    shoot.forward(lambda, &grid.nodes()[1..])
}

pub fn eigenvalue(
    surface: &SurfaceOfRevolution,
    m: usize,
    n: usize,
    bc: BoundaryCondition,
) -> Result<f64> {
    eigenvalue_with(surface, m, n, bc, &ShootingOptions::default())
}

pub fn eigenvalue_with(
    surface: &SurfaceOfRevolution,
    m: usize,
    n: usize,
    bc: BoundaryCondition,
    opts: &ShootingOptions,
) -> Result<f64> {
    Shooting::from_options(surface, m, bc, opts)?.eigenvalue(n, opts)
}

/// Normalized eigenfunction on `grid`.
///
/// Two legs are integrated toward a matching node near `s_*/2`: one from the
/// pole and one backward from the far end, each along its admissible
/// direction, so that neither leg runs into a repelling direction. The legs
/// are joined by matching the full vector `(v, v̇)`.
pub fn eigenfunction(
    surface: &SurfaceOfRevolution,
    m: usize,
    n: usize,
    bc: BoundaryCondition,
    grid: &RadialGrid,
) -> Result<EigenPair> {
    let opts = ShootingOptions {
        tip_offset_rel: grid.tip_offset() / surface.s_star(),
        ..ShootingOptions::default()
    };
    let lambda = eigenvalue_with(surface, m, n, bc, &opts)?;
    eigenfunction_at(surface, m, n, bc, grid, lambda)
}

fn eigenfunction_at(
    surface: &SurfaceOfRevolution,
    m: usize,
    n: usize,
    bc: BoundaryCondition,
    grid: &RadialGrid,
    lambda: f64,
) -> Result<EigenPair> {
    let shoot = Shooting::from_grid(surface, m, bc, grid)?;
    let x = grid.nodes();
    let last = x.len() - 1;
    let mid = grid.nearest(0.5 * surface.s_star()).clamp(1, last - 1);

    let left = shoot.forward(lambda, &x[1..=mid])?;
    let right_stops: Vec<f64> = x[mid..last].iter().rev().copied().collect();
    let right = shoot.backward(lambda, &right_stops)?;

    // log|v| and sign at every node.
    let mut log_abs = vec![0.0; x.len()];
    let mut sign = vec![0.0; x.len()];
    let init = shoot.initial_state();
    log_abs[0] = init[1] + init[0].cos().abs().ln();
    sign[0] = init[0].cos().signum();
    for (k, st) in left.iter().enumerate() {
        let c = st.theta.cos();
        log_abs[k + 1] = st.ln_r + c.abs().ln();
        sign[k + 1] = c.signum();
    }
    let l_mid = left[mid - 1];
    let r_mid = right.last().expect("matching node");
    let shift = l_mid.ln_r - r_mid[1];
    let flip = (l_mid.theta - r_mid[0]).cos().signum();
    let mut put_right = |k: usize, theta: f64, ln_r: f64| {
        let c = theta.cos();
        log_abs[k] = ln_r + shift + c.abs().ln();
        sign[k] = flip * c.signum();
    };
    let end_theta = shoot.end_angle();
    put_right(last, end_theta, 0.0);
    for (idx, st) in right.iter().enumerate() {
        let k = last - 1 - idx;
        if k == mid {
            break;
        }
        put_right(k, st[0], st[1]);
    }

    let top = log_abs
        .iter()
        .cloned()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut radial: Vec<f64> = log_abs
        .iter()
        .zip(&sign)
        .map(|(&l, &sg)| {
            if l.is_finite() {
                sg * (l - top).exp()
            } else {
                0.0
            }
        })
        .collect();

    let w = grid.simpson_weights();
    let norm2: f64 = radial
        .iter()
        .zip(x)
        .zip(&w)
        .map(|((v, &s), wi)| wi * v * v * surface.a(s))
        .sum();
    let scale = norm2.sqrt().recip() * radial[0].signum();
    radial.iter_mut().for_each(|v| *v *= scale);

    let found = nodal_count(&radial);
    if found != n {
        return Err(Error::NodalMismatch { expected: n, found });
    }
    Ok(EigenPair {
        m,
        n,
        lambda,
        s: x.to_vec(),
        radial,
    })
}

/// Eigenpairs `n = 0..=n_max`, computed in parallel.
pub fn spectrum(
    surface: &SurfaceOfRevolution,
    m: usize,
    bc: BoundaryCondition,
    n_max: usize,
    grid: &RadialGrid,
) -> Result<Vec<EigenPair>> {
    (0..=n_max)
        .into_par_iter()
        .map(|n| eigenfunction(surface, m, n, bc, grid))
        .collect()
}

/// Eigenvalues only, `n = 0..=n_max`.
pub fn spectrum_values(
    surface: &SurfaceOfRevolution,
    m: usize,
    bc: BoundaryCondition,
    n_max: usize,
) -> Result<Vec<f64>> {
    (0..=n_max)
        .into_par_iter()
        .map(|n| eigenvalue(surface, m, n, bc))
        .collect()
}

/// Strict sign changes between nodes, ignoring values inside a dead band of
/// `1e-12 · max|v|`.
pub fn nodal_count(profile: &[f64]) -> usize {
    let band = 1e-12 * profile.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut last = 0.0;
    let mut count = 0;
    for &v in profile {
        if v.abs() <= band {
            continue;
        }
        if last != 0.0 && v.signum() != last {
            count += 1;
        }
        last = v.signum();
    }
    count
}

/// `∫ v w a ds` with Simpson weights on the pair's grid.
pub fn weighted_inner(
    surface: &SurfaceOfRevolution,
    grid: &RadialGrid,
    v: &[f64],
    w: &[f64],
) -> f64 {
    grid.simpson_weights()
        .iter()
        .zip(grid.nodes())
        .zip(v.iter().zip(w))
        .map(|((q, &s), (a, b))| q * a * b * surface.a(s))
        .sum()
}
