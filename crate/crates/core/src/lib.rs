//! Vortex and spiral-wave equilibria of the complex Ginzburg-Landau equation
//! on compact surfaces of revolution.
//!
//! The m-armed rotating-frame Ansatz `Ψ = e^{-iΩt} u(s) e^{imφ}` reduces the
//! PDE to a singular radial boundary-value problem in the arc length `s`.
//! This crate computes the spectrum of the restricted Laplace-Beltrami
//! operator by Prüfer-angle shooting, continues the real pitchfork branches
//! that bifurcate from the trivial state, perturbs them into complex
//! rotating-frame solutions with a gauge-fixed bordered Newton method, and
//! classifies the resulting patterns (rotating or frozen, spiral or vortex).
//!
//! Module map:
//!
//! * [`geometry`]: surfaces of revolution, boundary conditions, radial grids.
//! * [`kinetics`]: the reaction term `f = f_R + i f_I` and its assumption checks.
//! * [`eigensolver`]: eigenvalues and nodal eigenfunctions of `-Δ_m`.
//! * [`discretization`]: the conservative radial operator shared by the solvers.
//! * [`real_branch`]: the real equation and natural-parameter branch continuation.
//! * [`complex_branch`]: perturbed complex solutions and parameter sweeps.
//! * [`pattern`]: polar decomposition, classification, frozen locus, rendering.

pub mod complex_branch;
pub mod discretization;
pub mod eigensolver;
mod error;
pub mod geometry;
pub mod kinetics;
pub mod linalg;
pub mod ode;
pub mod pattern;
pub mod real_branch;

pub use error::{Error, Result};

pub use complex_branch::{SolutionPoint, SolutionSheet};
pub use eigensolver::EigenPair;
pub use geometry::{BoundaryCondition, RadialGrid, SurfaceOfRevolution};
pub use kinetics::KineticsSpec;
pub use pattern::{PatternClass, PolarProfile, SpiralCurves};
pub use real_branch::{Branch, BranchPoint};
