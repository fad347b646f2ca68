//! Conservative finite-volume form of `Δ_m` on a [`RadialGrid`].
//!
//! For an active node `i` with spacings `h₋`, `h₊` and face values
//! `a₋ = a(s_{i-½})`, `a₊ = a(s_{i+½})`:
//!
//! ```text
//! (K u)_i = a₊ (u_{i+1} - u_i)/h₊ - a₋ (u_i - u_{i-1})/h₋ - m² (h₋+h₊)/(2 a_i) u_i
//! w_i     = a_i (h₋+h₊)/2
//! ```
//!
//! so that `Δ_m u ≈ (K u)_i / w_i`. `K` is a symmetric tridiagonal matrix and
//! `W = diag(w)` is positive, so `W⁻¹K` is self-adjoint in the discrete
//! `a`-weighted inner product; summation by parts therefore holds exactly.
//!
//! Poles are eliminated through `u_0 = (s_0/s_1)^m u_1` (and its mirror image
//! at a far pole), which only changes a diagonal entry. A Dirichlet end is
//! eliminated; a Robin end keeps its node with a half cell and the boundary
//! flux `-a(s_*) (α₁/α₂) u`.

use std::ops::{Add, Mul, Range, Sub};

use crate::geometry::{BoundaryCondition, GridOptions, RadialGrid, SurfaceOfRevolution};
use crate::kinetics::KineticsSpec;
use crate::Result;

/// Closure applied at the last node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FarEnd {
    /// `u_N = ratio · u_{N-1}`.
    Pole { ratio: f64 },
    /// `u_N = 0`.
    Dirichlet,
    /// Active node; `u' = -(α₁/α₂) u`.
    Robin { slope: f64 },
}

/// Values on the grid that the closures can rescale.
pub trait Field:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
}
impl<T> Field for T where
    T: Copy + Default + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>
{
}

#[derive(Debug, Clone)]
pub struct RadialOperator {
    m: usize,
    nodes: Vec<f64>,
    active: Range<usize>,
    left_ratio: f64,
    far: FarEnd,
    /// `a` at nodes (full grid).
    a_nodes: Vec<f64>,
    /// `a` at the midpoint between nodes `k` and `k+1` (full grid).
    a_faces: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    weights: Vec<f64>,
    /// `a/h` at each face (full grid).
    conductance: Vec<f64>,
    /// `m² × cell length / a` on active nodes.
    mass: Vec<f64>,
}

impl RadialOperator {
    pub fn new(
        surface: &SurfaceOfRevolution,
        bc: BoundaryCondition,
        grid: &RadialGrid,
        m: usize,
    ) -> Result<Self> {
        bc.check(surface)?;
        if m == 0 {
            return Err(crate::Error::InvalidArgument("m must be at least 1".into()));
        }
        let x = grid.nodes().to_vec();
        let n = x.len() - 1;
        let mf = m as f64;
        let s_star = surface.s_star();
        let a_nodes: Vec<f64> = x.iter().map(|&s| surface.a(s)).collect();
        let a_faces: Vec<f64> = x
            .windows(2)
            .map(|w| surface.a(0.5 * (w[0] + w[1])))
            .collect();
        let left_ratio = (x[0] / x[1]).powf(mf);
        let far = match bc {
            BoundaryCondition::NoBoundary => FarEnd::Pole {
                ratio: ((s_star - x[n]) / (s_star - x[n - 1])).powf(mf),
            },
            BoundaryCondition::Robin { alpha2, .. } if alpha2 == 0.0 => FarEnd::Dirichlet,
            BoundaryCondition::Robin { alpha1, alpha2 } => FarEnd::Robin {
                slope: -alpha1 / alpha2,
            },
        };
        let last = match far {
            FarEnd::Robin { .. } => n,
            _ => n - 1,
        };
        let active = 1..last + 1;

        let mut diag = Vec::with_capacity(active.len());
        let mut off = Vec::with_capacity(active.len().saturating_sub(1));
        let mut weights = Vec::with_capacity(active.len());
        let mut mass = Vec::with_capacity(active.len());
        let conductance: Vec<f64> = (0..n).map(|k| a_faces[k] / (x[k + 1] - x[k])).collect();
        for i in active.clone() {
            let hm = x[i] - x[i - 1];
            let cm = a_faces[i - 1] / hm;
            if i == n {
                // Robin node: half cell plus boundary flux.
                let FarEnd::Robin { slope } = far else {
                    unreachable!()
                };
                mass.push(mf * mf * hm / (2.0 * a_nodes[n]));
                diag.push(-cm + a_nodes[n] * slope - mass[mass.len() - 1]);
                weights.push(a_nodes[n] * hm / 2.0);
                continue;
            }
            let hp = x[i + 1] - x[i];
            let cp = a_faces[i] / hp;
            mass.push(mf * mf * (hm + hp) / (2.0 * a_nodes[i]));
            let mut d = -cm - cp - mass[mass.len() - 1];
            if i == 1 {
                d += cm * left_ratio;
            }
            if i == n - 1 {
                match far {
                    FarEnd::Pole { ratio } => d += cp * ratio,
                    FarEnd::Dirichlet | FarEnd::Robin { .. } => {}
                }
            }
            diag.push(d);
            weights.push(a_nodes[i] * (hm + hp) / 2.0);
            if i < last {
                off.push(cp);
            }
        }
        Ok(Self {
            m,
            nodes: x,
            active,
            left_ratio,
            far,
            a_nodes,
            a_faces,
            diag,
            off,
            weights,
            conductance,
            mass,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    /// Range of active node indices in the full grid.
    pub fn active(&self) -> Range<usize> {
        self.active.clone()
    }
    pub fn active_len(&self) -> usize {
        self.active.len()
    }
    pub fn far_end(&self) -> FarEnd {
        self.far
    }
    pub fn left_ratio(&self) -> f64 {
        self.left_ratio
    }
    /// Diagonal of `K` on active nodes.
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }
    /// Off-diagonal of `K` on active nodes.
    pub fn off(&self) -> &[f64] {
        &self.off
    }
    /// Control-volume weights on active nodes.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn a_nodes(&self) -> &[f64] {
        &self.a_nodes
    }
    /// `a` at the face between nodes `k` and `k+1`.
    pub fn a_faces(&self) -> &[f64] {
        &self.a_faces
    }

    pub fn restrict<T: Copy>(&self, full: &[T]) -> Vec<T> {
        full[self.active.clone()].to_vec()
    }

    /// Full-grid profile from active values, filling eliminated nodes.
    pub fn extend<T: Field>(&self, active: &[T]) -> Vec<T> {
        let n = self.nodes.len() - 1;
        let mut full = vec![T::default(); n + 1];
        full[self.active.clone()].copy_from_slice(active);
        full[0] = full[1] * self.left_ratio;
        match self.far {
            FarEnd::Pole { ratio } => full[n] = full[n - 1] * ratio,
            FarEnd::Dirichlet => full[n] = T::default(),
            FarEnd::Robin { .. } => {}
        }
        full
    }

    /// Re-applies the closures to a full-grid profile in place.
    pub fn close<T: Field>(&self, full: &mut [T]) {
        let active = self.restrict(full);
        full.copy_from_slice(&self.extend(&active));
    }

    /// `K u` on active nodes, evaluated in flux form so that the result is
    /// accurate to rounding in the fluxes rather than in `diag · u`.
    pub fn apply<T: Field>(&self, u: &[T]) -> Vec<T> {
        let full = self.extend(u);
        let n = full.len() - 1;
        self.active
            .clone()
            .zip(&self.mass)
            .map(|(i, &mass)| {
                let left = (full[i - 1] - full[i]) * self.conductance[i - 1];
                let right = match self.far {
                    FarEnd::Robin { slope } if i == n => full[n] * (self.a_nodes[n] * slope),
                    _ => (full[i + 1] - full[i]) * self.conductance[i],
                };
                left + right - full[i] * mass
            })
            .collect()
    }

    /// `sqrt(Σ w_i |r_i|²)` for a strong-form residual on active nodes.
    pub fn norm(&self, strong: &[f64]) -> f64 {
        strong
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| w * r * r)
            .sum::<f64>()
            .sqrt()
    }

    /// `Σ w_i u_i v_i` on active nodes.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }
}

/// A surface, boundary condition, grid, kinetics and winding number,
/// together with the discrete operator they define.
#[derive(Debug, Clone)]
pub struct RadialProblem {
    pub surface: SurfaceOfRevolution,
    pub bc: BoundaryCondition,
    pub grid: RadialGrid,
    pub kinetics: KineticsSpec,
    pub m: usize,
    pub op: RadialOperator,
}

impl RadialProblem {
    pub fn new(
        surface: SurfaceOfRevolution,
        bc: BoundaryCondition,
        kinetics: KineticsSpec,
        m: usize,
    ) -> Result<Self> {
        let grid = RadialGrid::new(&surface);
        Self::with_grid(surface, bc, grid, kinetics, m)
    }

    pub fn with_options(
        surface: SurfaceOfRevolution,
        bc: BoundaryCondition,
        kinetics: KineticsSpec,
        m: usize,
        opts: GridOptions,
    ) -> Result<Self> {
        let grid = RadialGrid::with_options(&surface, opts);
        Self::with_grid(surface, bc, grid, kinetics, m)
    }

    pub fn with_grid(
        surface: SurfaceOfRevolution,
        bc: BoundaryCondition,
        grid: RadialGrid,
        kinetics: KineticsSpec,
        m: usize,
    ) -> Result<Self> {
        let op = RadialOperator::new(&surface, bc, &grid, m)?;
        Ok(Self {
            surface,
            bc,
            grid,
            kinetics,
            m,
            op,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }
}
