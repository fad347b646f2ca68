//! Compact surfaces of revolution in arc-length parametrization.
//!
//! A surface is the image of `(s, φ) ↦ (a(s) cos φ, a(s) sin φ, ã(s))` for
//! `s ∈ [0, s_*]`, with `a(0) = 0`, `a > 0` inside, and `(a')² + (ã')² = 1`.
//! It has a boundary circle iff `a(s_*) > 0`; otherwise `s_*` is a second
//! pole.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg::BandMatrix;
use crate::{Error, Result};

/// Arc-length tolerance for closed-form profiles.
pub const CLOSED_FORM_TOL: f64 = 1e-8;
/// Arc-length tolerance for interpolated profiles.
pub const INTERPOLATED_TOL: f64 = 1e-6;
/// Node pairs closer than this are reflection symmetric.
pub const REFLECTION_TOL: f64 = 1e-10;

const VALIDATION_SAMPLES: usize = 2048;

/// Not-a-knot cubic spline through `(x_i, y_i)`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn not_a_knot(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::InvalidArgument(
                "spline x and y lengths differ".into(),
            ));
        }
        if n < 4 {
            return Err(Error::InvalidArgument(
                "not-a-knot spline needs at least 4 samples".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "spline abscissae must be strictly increasing".into(),
            ));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut a = BandMatrix::zeros(n, 2, 2);
        let mut rhs = vec![0.0; n];
        a.set(0, 0, -h[1]);
        a.set(0, 1, h[0] + h[1]);
        a.set(0, 2, -h[0]);
        for i in 1..n - 1 {
            a.set(i, i - 1, h[i - 1]);
            a.set(i, i, 2.0 * (h[i - 1] + h[i]));
            a.set(i, i + 1, h[i]);
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        a.set(n - 1, n - 3, -h[n - 2]);
        a.set(n - 1, n - 2, h[n - 2] + h[n - 3]);
        a.set(n - 1, n - 1, -h[n - 3]);
        let m = a.factor()?.solve(&rhs);
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (l, r) = (x1 - t, t - x0);
        self.m[i] * l.powi(3) / (6.0 * h)
            + self.m[i + 1] * r.powi(3) / (6.0 * h)
            + (self.y[i] / h - self.m[i] * h / 6.0) * l
            + (self.y[i + 1] / h - self.m[i + 1] * h / 6.0) * r
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (l, r) = (x1 - t, t - x0);
        -self.m[i] * l * l / (2.0 * h)
            + self.m[i + 1] * r * r / (2.0 * h)
            + (self.y[i + 1] - self.y[i]) / h
            - (self.m[i + 1] - self.m[i]) * h / 6.0
    }
}

#[derive(Debug, Clone)]
enum Profile {
    Disk,
    Sphere,
    Interpolated {
        a: Arc<CubicSpline>,
        atilde: Arc<CubicSpline>,
    },
}

/// One sample row of a custom profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub s: f64,
    pub a: f64,
    pub atilde: f64,
}

#[derive(Debug, Clone)]
pub struct SurfaceOfRevolution {
    name: String,
    s_star: f64,
    profile: Profile,
    has_boundary: bool,
    reflection_symmetric: bool,
}

impl SurfaceOfRevolution {
    /// The unit disk, `a(s) = s`, `ã(s) = 0` on `[0, 1]`.
    pub fn disk() -> Self {
        Self {
            name: "disk".into(),
            s_star: 1.0,
            profile: Profile::Disk,
            has_boundary: true,
            reflection_symmetric: false,
        }
    }

    /// The unit sphere, `a(s) = sin s`, `ã(s) = cos s` on `[0, π]`.
    pub fn sphere() -> Self {
        Self {
            name: "sphere".into(),
            s_star: std::f64::consts::PI,
            profile: Profile::Sphere,
            has_boundary: false,
            reflection_symmetric: true,
        }
    }

    /// Interpolates samples without checking the surface hypotheses.
    /// Use [`make_custom`] for a validated surface.
    pub fn interpolated_unchecked(samples: &[ProfileSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidSurface("no samples".into()));
        }
        let s: Vec<f64> = samples.iter().map(|p| p.s).collect();
        if s[0] != 0.0 {
            return Err(Error::InvalidSurface(format!(
                "profile must start at s = 0, got {}",
                s[0]
            )));
        }
        let a: Vec<f64> = samples.iter().map(|p| p.a).collect();
        let at: Vec<f64> = samples.iter().map(|p| p.atilde).collect();
        let a_spline = CubicSpline::not_a_knot(&s, &a)
            .map_err(|e| Error::InvalidSurface(format!("profile a: {e}")))?;
        let at_spline = CubicSpline::not_a_knot(&s, &at)
            .map_err(|e| Error::InvalidSurface(format!("profile atilde: {e}")))?;
        let s_star = *s.last().unwrap();
        let a_end = *a.last().unwrap();
        let mut surface = Self {
            name: "custom".into(),
            s_star,
            profile: Profile::Interpolated {
                a: Arc::new(a_spline),
                atilde: Arc::new(at_spline),
            },
            has_boundary: a_end > 0.0,
            reflection_symmetric: false,
        };
        surface.reflection_symmetric = surface.reflection_residual() <= REFLECTION_TOL;
        Ok(surface)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn s_star(&self) -> f64 {
        self.s_star
    }

    pub fn has_boundary(&self) -> bool {
        self.has_boundary
    }

    pub fn reflection_symmetric(&self) -> bool {
        self.reflection_symmetric
    }

    pub fn is_interpolated(&self) -> bool {
        matches!(self.profile, Profile::Interpolated { .. })
    }

    /// Arc-length tolerance appropriate to the profile representation.
    pub fn tolerance(&self) -> f64 {
        if self.is_interpolated() {
            INTERPOLATED_TOL
        } else {
            CLOSED_FORM_TOL
        }
    }

    pub fn a(&self, s: f64) -> f64 {
        match &self.profile {
            Profile::Disk => s,
            Profile::Sphere => s.sin(),
            Profile::Interpolated { a, .. } => a.value(s),
        }
    }

    pub fn a_prime(&self, s: f64) -> f64 {
        match &self.profile {
            Profile::Disk => 1.0,
            Profile::Sphere => s.cos(),
            Profile::Interpolated { a, .. } => a.derivative(s),
        }
    }

    pub fn atilde(&self, s: f64) -> f64 {
        match &self.profile {
            Profile::Disk => 0.0,
            Profile::Sphere => s.cos(),
            Profile::Interpolated { atilde, .. } => atilde.value(s),
        }
    }

    pub fn atilde_prime(&self, s: f64) -> f64 {
        match &self.profile {
            Profile::Disk => 0.0,
            Profile::Sphere => -s.sin(),
            Profile::Interpolated { atilde, .. } => atilde.derivative(s),
        }
    }

    /// Point on the surface at arc length `s` and azimuth `phi`.
    pub fn embed(&self, s: f64, phi: f64) -> [f64; 3] {
        let a = self.a(s);
        [a * phi.cos(), a * phi.sin(), self.atilde(s)]
    }

    fn validation_samples(&self) -> impl Iterator<Item = f64> + '_ {
        let n = VALIDATION_SAMPLES;
        (0..=n).map(move |k| self.s_star * k as f64 / n as f64)
    }

    fn reflection_residual(&self) -> f64 {
        self.validation_samples()
            .map(|s| (self.a(s) - self.a(self.s_star - s)).abs())
            .fold(0.0, f64::max)
    }
}

pub fn make_disk() -> SurfaceOfRevolution {
    SurfaceOfRevolution::disk()
}

pub fn make_sphere() -> SurfaceOfRevolution {
    SurfaceOfRevolution::sphere()
}

/// Interpolated surface that passes [`validate_surface`].
pub fn make_custom(samples: &[ProfileSample]) -> Result<SurfaceOfRevolution> {
    let surface = SurfaceOfRevolution::interpolated_unchecked(samples)?;
    for w in samples.windows(2) {
        if !(w[1].s > w[0].s) {
            return Err(Error::InvalidSurface(
                "samples must be increasing in s".into(),
            ));
        }
    }
    let report = validate_surface(&surface);
    if report.passed() {
        Ok(surface)
    } else {
        Err(Error::InvalidSurface(report.failures.join("; ")))
    }
}

/// Reads samples from a CSV file with header `s,a,atilde`.
pub fn read_profile_csv(path: &Path) -> Result<Vec<ProfileSample>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["s", "a", "atilde"] {
        return Err(Error::InvalidSurface(format!(
            "{}: expected header `s,a,atilde`, found `{}`",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(csv_err))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub tolerance: f64,
    pub a_at_origin: f64,
    pub min_interior_a: f64,
    pub arc_length_residual: f64,
    pub origin_slope_residual: f64,
    /// `|a'(s_*) + 1|`, present for boundaryless surfaces.
    pub far_slope_residual: Option<f64>,
    pub has_boundary: bool,
    pub reflection_residual: f64,
    pub reflection_symmetric: bool,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn validate_surface(surface: &SurfaceOfRevolution) -> ValidationReport {
    let tol = surface.tolerance();
    let s_star = surface.s_star();
    let samples: Vec<f64> = surface.validation_samples().collect();

    let a_at_origin = surface.a(0.0).abs();
    let min_interior_a = samples[1..samples.len() - 1]
        .iter()
        .map(|&s| surface.a(s))
        .fold(f64::INFINITY, f64::min);
    let arc_length_residual = samples
        .iter()
        .map(|&s| (surface.a_prime(s).powi(2) + surface.atilde_prime(s).powi(2) - 1.0).abs())
        .fold(0.0, f64::max);
    let origin_slope_residual = (surface.a_prime(0.0) - 1.0).abs();
    let far_slope_residual =
        (!surface.has_boundary()).then(|| (surface.a_prime(s_star) + 1.0).abs());
    let reflection_residual = surface.reflection_residual();

    let mut failures = Vec::new();
    if a_at_origin > tol {
        failures.push(format!("a(0) = {a_at_origin:e}, expected 0"));
    }
    if !(min_interior_a > 0.0) {
        failures.push(format!("a is not positive inside (min {min_interior_a:e})"));
    }
    if !(arc_length_residual <= tol) {
        failures.push(format!(
            "arc-length residual {arc_length_residual:e} exceeds {tol:e}"
        ));
    }
    if !(origin_slope_residual <= tol) {
        failures.push(format!("a'(0) differs from 1 by {origin_slope_residual:e}"));
    }
    if let Some(r) = far_slope_residual {
        if !(r <= tol) {
            failures.push(format!("a'(s_*) differs from -1 by {r:e}"));
        }
    }
    ValidationReport {
        tolerance: tol,
        a_at_origin,
        min_interior_a,
        arc_length_residual,
        origin_slope_residual,
        far_slope_residual,
        has_boundary: surface.has_boundary(),
        reflection_residual,
        reflection_symmetric: reflection_residual <= REFLECTION_TOL,
        failures,
    }
}

/// Boundary condition at `s_*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Far pole of a closed surface.
    NoBoundary,
    /// `α₁ u + α₂ u' = 0`.
    Robin { alpha1: f64, alpha2: f64 },
}

impl BoundaryCondition {
    pub fn robin(alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha1 >= 0.0 && alpha2 >= 0.0) || !alpha1.is_finite() || !alpha2.is_finite() {
            return Err(Error::InvalidBoundary(format!(
                "Robin coefficients must be finite and nonnegative, got ({alpha1}, {alpha2})"
            )));
        }
        if alpha1 == 0.0 && alpha2 == 0.0 {
            return Err(Error::InvalidBoundary(
                "Robin coefficients must not both vanish".into(),
            ));
        }
        Ok(Self::Robin { alpha1, alpha2 })
    }

    pub fn dirichlet() -> Self {
        Self::Robin {
            alpha1: 1.0,
            alpha2: 0.0,
        }
    }

    pub fn neumann() -> Self {
        Self::Robin {
            alpha1: 0.0,
            alpha2: 1.0,
        }
    }

    pub fn is_dirichlet(&self) -> bool {
        matches!(self, Self::Robin { alpha2, .. } if *alpha2 == 0.0)
    }

    /// Checks the condition against the surface type.
    pub fn check(&self, surface: &SurfaceOfRevolution) -> Result<()> {
        match (self, surface.has_boundary()) {
            (Self::NoBoundary, false) => Ok(()),
            (Self::NoBoundary, true) => Err(Error::InvalidBoundary(format!(
                "{} has a boundary circle; a Robin condition is required",
                surface.name()
            ))),
            (Self::Robin { .. }, false) => Err(Error::InvalidBoundary(format!(
                "{} has no boundary; use NoBoundary",
                surface.name()
            ))),
            (Self::Robin { alpha1, alpha2 }, true) => Self::robin(*alpha1, *alpha2).map(|_| ()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GridOptions {
    /// Uniform spacing is `s_* / n_mid`.
    pub n_mid: usize,
    /// First node, relative to `s_*`.
    pub tip_offset_rel: f64,
    /// Ratio of consecutive spacings in the graded zone, approaching the tip.
    pub ratio: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            n_mid: 400,
            tip_offset_rel: 1e-6,
            ratio: 0.85,
        }
    }
}

/// Radial nodes, geometrically graded toward every pole.
///
/// The first node sits at `tip_offset`; a boundaryless grid ends at
/// `s_* - tip_offset` and is mirror symmetric with a node at `s_*/2`.
/// The number of intervals is always even.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    tip_offset: f64,
    far_pole: bool,
}

impl RadialGrid {
    pub fn new(surface: &SurfaceOfRevolution) -> Self {
        Self::with_options(surface, GridOptions::default())
    }

    pub fn with_options(surface: &SurfaceOfRevolution, opts: GridOptions) -> Self {
        assert!(opts.n_mid >= 4, "n_mid too small");
        assert!(
            opts.ratio > 0.0 && opts.ratio < 1.0,
            "ratio must lie in (0, 1)"
        );
        let s_star = surface.s_star();
        let eps = opts.tip_offset_rel * s_star;
        let h = s_star / opts.n_mid as f64;
        let far_pole = !surface.has_boundary();
        let end = if far_pole { 0.5 * s_star } else { s_star };

        let mut left = vec![eps];
        loop {
            let x = *left.last().unwrap();
            let next = x / opts.ratio;
            if next - x >= h || next >= end - h {
                break;
            }
            left.push(next);
        }
        let start = *left.last().unwrap();
        let mut intervals = ((end - start) / h).ceil().max(1.0) as usize;
        if !far_pole && (left.len() - 1 + intervals) % 2 == 1 {
            intervals += 1;
        }
        let dx = (end - start) / intervals as f64;
        for k in 1..intervals {
            left.push(start + dx * k as f64);
        }
        left.push(end);

        let nodes = if far_pole {
            let mut all = left.clone();
            all.extend(left.iter().rev().skip(1).map(|&x| s_star - x));
            all
        } else {
            left
        };
        Self {
            nodes,
            tip_offset: eps,
            far_pole,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tip_offset(&self) -> f64 {
        self.tip_offset
    }

    /// True when the last node approaches a pole rather than a boundary circle.
    pub fn far_pole(&self) -> bool {
        self.far_pole
    }

    /// Index of the node closest to `s`.
    pub fn nearest(&self, s: f64) -> usize {
        let k = self.nodes.partition_point(|&x| x < s);
        if k == 0 {
            0
        } else if k == self.nodes.len() {
            k - 1
        } else if (self.nodes[k] - s) < (s - self.nodes[k - 1]) {
            k
        } else {
            k - 1
        }
    }

    /// Composite Simpson weights on pairs of (possibly unequal) intervals,
    /// so that `Σ wᵢ g(sᵢ)` approximates `∫ g ds` over the node range.
    pub fn simpson_weights(&self) -> Vec<f64> {
        let x = &self.nodes;
        let mut w = vec![0.0; x.len()];
        debug_assert!((x.len() - 1).is_multiple_of(2));
        for k in (0..x.len() - 2).step_by(2) {
            let h0 = x[k + 1] - x[k];
            let h1 = x[k + 2] - x[k + 1];
            let sum = h0 + h1;
            w[k] += sum * (2.0 * h0 - h1) / (6.0 * h0);
            w[k + 1] += sum.powi(3) / (6.0 * h0 * h1);
            w[k + 2] += sum * (2.0 * h1 - h0) / (6.0 * h1);
        }
        w
    }
}
