//! Reaction terms `f(y, b) = f_R(y, b) + i f_I(y, b)` with `y = |u|²`.
//!
//! Built-in terms are polynomials in `y` whose coefficients are affine in
//! the parameter vector `b`. Anything implementing [`ReactionTerm`] can be
//! wrapped in a [`KineticsSpec`], which locates the saturation level `C`
//! (the positive zero of `f_R(·, 0)`).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Pure, thread-safe reaction term.
pub trait ReactionTerm: Send + Sync {
    fn f_r(&self, y: f64, b: &[f64]) -> f64;
    fn f_i(&self, y: f64, b: &[f64]) -> f64;
    fn dy_f_r(&self, y: f64, b: &[f64]) -> f64;
    fn dy_f_i(&self, y: f64, b: &[f64]) -> f64;
    /// Gradient of `f_I` in `b`.
    fn db_f_i(&self, y: f64, b: &[f64]) -> Vec<f64>;
    fn param_dim(&self) -> usize;
}

/// Polynomial in `y`; coefficient `k` is `c[k][0] + Σ_j c[k][j+1] b_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePoly {
    pub coeffs: Vec<Vec<f64>>,
}

impl AffinePoly {
    pub fn new(coeffs: Vec<Vec<f64>>) -> Self {
        Self { coeffs }
    }

    /// Coefficients independent of `b`.
    pub fn constant(c: &[f64]) -> Self {
        Self::new(c.iter().map(|&v| vec![v]).collect())
    }

    fn coefficient(&self, k: usize, b: &[f64]) -> f64 {
        let row = &self.coeffs[k];
        row[0] + row[1..].iter().zip(b).map(|(c, bj)| c * bj).sum::<f64>()
    }

    pub fn param_dim(&self) -> usize {
        self.coeffs
            .iter()
            .map(|r| r.len().saturating_sub(1))
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, y: f64, b: &[f64]) -> f64 {
        (0..self.coeffs.len())
            .rev()
            .fold(0.0, |acc, k| acc * y + self.coefficient(k, b))
    }

    pub fn dy(&self, y: f64, b: &[f64]) -> f64 {
        (1..self.coeffs.len())
            .rev()
            .fold(0.0, |acc, k| acc * y + k as f64 * self.coefficient(k, b))
    }

    pub fn db(&self, y: f64, d: usize) -> Vec<f64> {
        (0..d)
            .map(|j| {
                self.coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, row)| row.get(j + 1).copied().unwrap_or(0.0) * y.powi(k as i32))
                    .sum()
            })
            .collect()
    }
}

/// Reaction term with polynomial real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialTerm {
    pub real: AffinePoly,
    pub imag: AffinePoly,
}

impl ReactionTerm for PolynomialTerm {
    fn f_r(&self, y: f64, b: &[f64]) -> f64 {
        self.real.eval(y, b)
    }
    fn f_i(&self, y: f64, b: &[f64]) -> f64 {
        self.imag.eval(y, b)
    }
    fn dy_f_r(&self, y: f64, b: &[f64]) -> f64 {
        self.real.dy(y, b)
    }
    fn dy_f_i(&self, y: f64, b: &[f64]) -> f64 {
        self.imag.dy(y, b)
    }
    fn db_f_i(&self, y: f64, _b: &[f64]) -> Vec<f64> {
        self.imag.db(y, self.param_dim())
    }
    fn param_dim(&self) -> usize {
        self.real.param_dim().max(self.imag.param_dim())
    }
}

#[derive(Clone)]
pub struct KineticsSpec {
    name: String,
    term: Arc<dyn ReactionTerm>,
    c: f64,
    /// Parameter vector selected at construction (e.g. the β of `cubic:β`).
    default_b: Vec<f64>,
}

impl fmt::Debug for KineticsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KineticsSpec")
            .field("name", &self.name)
            .field("c", &self.c)
            .field("param_dim", &self.param_dim())
            .field("default_b", &self.default_b)
            .finish()
    }
}

impl KineticsSpec {
    pub fn name(&self) -> &str {
        &self.name
    }
    /// Positive zero of `f_R(·, 0)`; `√C` bounds every real solution.
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn param_dim(&self) -> usize {
        self.term.param_dim()
    }
    pub fn default_b(&self) -> &[f64] {
        &self.default_b
    }
    pub fn with_default_b(mut self, b: Vec<f64>) -> Result<Self> {
        if b.len() != self.param_dim() {
            return Err(Error::InvalidKinetics(format!(
                "parameter vector has length {}, expected {}",
                b.len(),
                self.param_dim()
            )));
        }
        self.default_b = b;
        Ok(self)
    }
    /// Zero parameter vector of the right dimension.
    pub fn zero_b(&self) -> Vec<f64> {
        vec![0.0; self.param_dim()]
    }
    pub fn term(&self) -> &dyn ReactionTerm {
        self.term.as_ref()
    }
    pub fn f_r(&self, y: f64, b: &[f64]) -> f64 {
        self.term.f_r(y, b)
    }
    pub fn f_i(&self, y: f64, b: &[f64]) -> f64 {
        self.term.f_i(y, b)
    }
    pub fn dy_f_r(&self, y: f64, b: &[f64]) -> f64 {
        self.term.dy_f_r(y, b)
    }
    pub fn dy_f_i(&self, y: f64, b: &[f64]) -> f64 {
        self.term.dy_f_i(y, b)
    }
    pub fn db_f_i(&self, y: f64, b: &[f64]) -> Vec<f64> {
        self.term.db_f_i(y, b)
    }
}

/// `f = 1 - y - iβy`, with `b = (β)`.
pub fn make_cubic(beta: f64) -> KineticsSpec {
    let term = PolynomialTerm {
        real: AffinePoly::constant(&[1.0, -1.0]),
        imag: AffinePoly::new(vec![vec![0.0, 0.0], vec![0.0, -1.0]]),
    };
    KineticsSpec {
        name: "cubic".into(),
        term: Arc::new(term),
        c: 1.0,
        default_b: vec![beta],
    }
}

/// `f_R = 1 - y`, `f_I = β y (1 - y)`.
pub fn make_cubic_omega(beta: f64) -> KineticsSpec {
    let term = PolynomialTerm {
        real: AffinePoly::constant(&[1.0, -1.0]),
        imag: AffinePoly::new(vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]),
    };
    KineticsSpec {
        name: "cubic-omega".into(),
        term: Arc::new(term),
        c: 1.0,
        default_b: vec![beta],
    }
}

/// Built-in kinetics by name: `cubic` or `cubic-omega`.
pub fn builtin(name: &str, beta: f64) -> Result<KineticsSpec> {
    match name {
        "cubic" => Ok(make_cubic(beta)),
        "cubic-omega" => Ok(make_cubic_omega(beta)),
        other => Err(Error::InvalidKinetics(format!(
            "unknown kinetics `{other}`"
        ))),
    }
}

const C_PROBE_MAX: f64 = 1e6;

/// Bracket the first sign change of `f_R(·, 0)` by doubling from `y = 1`,
/// then bisect to relative width 1e-12.
pub fn locate_c(term: &dyn ReactionTerm) -> Option<f64> {
    let zero = vec![0.0; term.param_dim()];
    let g = |y: f64| term.f_r(y, &zero);
    if !(g(0.0) > 0.0) {
        return None;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > C_PROBE_MAX {
            return None;
        }
    }
    // Refine the doubling bracket so the first sign change is the one kept.
    let probe = 64;
    let start = lo;
    for k in 1..=probe {
        let y = start + (hi - start) * k as f64 / probe as f64;
        if g(y) <= 0.0 {
            hi = y;
            break;
        }
        lo = y;
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Wraps a custom term after checking the saturation assumption: `f_R(0, 0) = 1` and a sign change
/// of `f_R(·, 0)` on the probe interval.
pub fn make_custom_kinetics(
    name: &str,
    term: Arc<dyn ReactionTerm>,
    default_b: Vec<f64>,
) -> Result<KineticsSpec> {
    let report = check_term_assumptions(term.as_ref());
    if !report.saturation.passed {
        return Err(Error::InvalidKinetics(format!(
            "saturation assumption fails: {}",
            report.saturation.detail
        )));
    }
    let c = report.c.expect("a passed saturation check provides C");
    let spec = KineticsSpec {
        name: name.into(),
        term,
        c,
        default_b: vec![0.0; 0],
    };
    let d = spec.param_dim();
    let b = if default_b.is_empty() {
        vec![0.0; d]
    } else {
        default_b
    };
    spec.with_default_b(b)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub passed: bool,
    /// Worst sampled value of the quantity being checked.
    pub margin: f64,
    /// Sample location realizing `margin`.
    pub witness: f64,
    pub detail: String,
}

impl Check {
    fn new(passed: bool, margin: f64, witness: f64, detail: impl Into<String>) -> Self {
        Self {
            passed,
            margin,
            witness,
            detail: detail.into(),
        }
    }

    fn not_applicable(detail: &str) -> Self {
        Self::new(false, f64::NAN, f64::NAN, detail)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub c: Option<f64>,
    /// `f_R(0,0) = 1`, a zero `C`, and `f_R(y,0) < 0` beyond it.
    pub saturation: Check,
    /// `∂_y f_R(0,0) < 0` and `∂_y f_R(y,0) ≤ 0` on `(0, C)`.
    pub monotone: Check,
    /// `f_I(y, 0) = 0` for `y ≥ 0`.
    pub imaginary_vanishes: Check,
    /// `∂_β f_I(y, 0) ≠ 0` on `(0, C)` (one-parameter kinetics only).
    pub frequency_sensitivity: Check,
    /// `f_I(0, β) = 0` (one-parameter kinetics only).
    pub imaginary_zero_at_origin: Check,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        [
            &self.saturation,
            &self.monotone,
            &self.imaginary_vanishes,
            &self.frequency_sensitivity,
            &self.imaginary_zero_at_origin,
        ]
        .iter()
        .all(|c| c.passed)
    }
}

pub const ASSUMPTION_SAMPLES: usize = 256;
const VALUE_TOL: f64 = 1e-12;

/// Sampled checks of the standing hypotheses on a raw term.
pub fn check_term_assumptions(term: &dyn ReactionTerm) -> AssumptionReport {
    let n = ASSUMPTION_SAMPLES;
    let d = term.param_dim();
    let zero = vec![0.0; d];
    let c = locate_c(term);
    let f0 = term.f_r(0.0, &zero);

    let saturation = match c {
        _ if (f0 - 1.0).abs() > VALUE_TOL => {
            Check::new(false, f0, 0.0, format!("f_R(0,0) = {f0}, expected 1"))
        }
        None => Check::new(
            false,
            f0,
            0.0,
            "f_R(.,0) has no sign change on the probe interval",
        ),
        Some(c) => {
            // f_R must stay negative on (C, 4C].
            let (worst, at) = (1..=n)
                .map(|k| {
                    let y = c + 3.0 * c * k as f64 / n as f64;
                    (term.f_r(y, &zero), y)
                })
                .fold((f64::NEG_INFINITY, f64::NAN), |acc, v| {
                    if v.0 > acc.0 {
                        v
                    } else {
                        acc
                    }
                });
            let passed = worst < 0.0;
            Check::new(
                passed,
                worst,
                at,
                if passed {
                    format!("C = {c}")
                } else {
                    format!("f_R({at}, 0) = {worst} is not negative beyond C = {c}")
                },
            )
        }
    };

    let monotone = {
        let slope0 = term.dy_f_r(0.0, &zero);
        let upper = c.unwrap_or(1.0);
        let (worst, at) = (1..n)
            .map(|k| {
                let y = upper * k as f64 / n as f64;
                (term.dy_f_r(y, &zero), y)
            })
            .fold((slope0, 0.0), |acc, v| if v.0 > acc.0 { v } else { acc });
        let passed = slope0 < 0.0 && worst <= 0.0;
        Check::new(passed, worst, at, format!("d_y f_R(0,0) = {slope0}"))
    };

    let y_max = 4.0 * c.unwrap_or(1.0);
    let imaginary_vanishes = {
        let (worst, at) = (0..=n)
            .map(|k| {
                let y = y_max * k as f64 / n as f64;
                (term.f_i(y, &zero).abs(), y)
            })
            .fold((0.0, 0.0), |acc, v| if v.0 > acc.0 { v } else { acc });
        Check::new(worst <= VALUE_TOL, worst, at, "max |f_I(y, 0)|")
    };

    let (frequency_sensitivity, imaginary_zero_at_origin) = if d != 1 {
        (
            Check::not_applicable("requires a one-dimensional parameter"),
            Check::not_applicable("requires a one-dimensional parameter"),
        )
    } else {
        let upper = c.unwrap_or(1.0);
        let (smallest, at) = (1..n)
            .map(|k| {
                let y = upper * k as f64 / n as f64;
                (term.db_f_i(y, &zero)[0], y)
            })
            .fold((f64::INFINITY, f64::NAN), |acc, v| {
                if v.0.abs() < acc.0.abs() {
                    v
                } else {
                    acc
                }
            });
        let signs_agree = (1..n).all(|k| {
            let y = upper * k as f64 / n as f64;
            term.db_f_i(y, &zero)[0].signum() == smallest.signum()
        });
        let frequency_sensitivity = Check::new(
            smallest.abs() > VALUE_TOL && signs_agree,
            smallest,
            at,
            "min |d_b f_I(y, 0)| on (0, C)",
        );
        let (worst, at) = (0..=n)
            .map(|k| {
                let beta = -1.0 + 2.0 * k as f64 / n as f64;
                (term.f_i(0.0, &[beta]).abs(), beta)
            })
            .fold((0.0, 0.0), |acc, v| if v.0 > acc.0 { v } else { acc });
        let imaginary_zero_at_origin = Check::new(
            worst <= VALUE_TOL,
            worst,
            at,
            "max |f_I(0, b)| for b in [-1, 1]",
        );
        (frequency_sensitivity, imaginary_zero_at_origin)
    };

    AssumptionReport {
        c,
        saturation,
        monotone,
        imaginary_vanishes,
        frequency_sensitivity,
        imaginary_zero_at_origin,
    }
}

pub fn check_assumptions(k: &KineticsSpec) -> AssumptionReport {
    check_term_assumptions(k.term())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn custom(real: &[f64], imag: Vec<Vec<f64>>) -> PolynomialTerm {
        PolynomialTerm {
            real: AffinePoly::constant(real),
            imag: AffinePoly::new(imag),
        }
    }

    #[test]
    fn cubic_values() {
        let k = make_cubic(0.3);
        assert!((k.f_i(2.0, &[0.3]) + 0.6).abs() < 1e-15);
        assert_eq!(k.c(), 1.0);
        assert_eq!(k.param_dim(), 1);
        let k0 = make_cubic(0.0);
        for y in [0.0, 0.5, 3.0] {
            assert_eq!(k0.f_i(y, &[0.0]), 0.0);
        }
        assert_eq!(k.f_r(0.25, &[0.3]), 0.75);
    }

    #[test]
    fn cubic_passes_all_assumptions() {
        for k in -10..=10 {
            let r = check_assumptions(&make_cubic(k as f64));
            assert!(r.all_passed(), "{r:?}");
        }
    }

    #[test]
    fn cube_root_saturation_level() {
        let term = custom(&[1.0, 0.0, 0.0, -1.0], vec![vec![0.0]]);
        let k = make_custom_kinetics("cube", Arc::new(term), vec![]).unwrap();
        assert!((k.c() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonunit_origin_is_rejected() {
        let term = custom(&[0.5, -1.0], vec![vec![0.0]]);
        assert!(matches!(
            make_custom_kinetics("half", Arc::new(term), vec![]),
            Err(Error::InvalidKinetics(_))
        ));
    }

    #[test]
    fn omega_kinetics_satisfy_auxiliary_hypotheses() {
        let r = check_assumptions(&make_cubic_omega(0.2));
        assert!(r.all_passed(), "{r:?}");
    }

    #[test]
    fn constant_imaginary_part_fails_origin_check() {
        let term = custom(&[1.0, -1.0], vec![vec![0.0, 1.0]]);
        let k = make_custom_kinetics("shift", Arc::new(term), vec![]).unwrap();
        let r = check_assumptions(&k);
        assert!(r.saturation.passed && r.monotone.passed);
        assert!(!r.imaginary_zero_at_origin.passed);
        assert_eq!(r.imaginary_zero_at_origin.margin, 1.0);
    }

    #[test]
    fn growing_real_part_fails_saturation() {
        let term = custom(&[1.0, 1.0], vec![vec![0.0]]);
        let r = check_term_assumptions(&term);
        assert!(!r.saturation.passed);
        assert!(r.c.is_none());
        assert!(make_custom_kinetics("grow", Arc::new(term), vec![]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn derivatives_match_central_differences(
            y in 0.01f64..0.99,
            beta in -10.0f64..10.0,
            which in 0usize..2,
        ) {
            let k = if which == 0 { make_cubic(beta) } else { make_cubic_omega(beta) };
            let b = [beta];
            let h = 1e-6;
            let rel = |exact: f64, approx: f64| (exact - approx).abs() / exact.abs().max(1e-3);
            let fd_r = (k.f_r(y + h, &b) - k.f_r(y - h, &b)) / (2.0 * h);
            let fd_i = (k.f_i(y + h, &b) - k.f_i(y - h, &b)) / (2.0 * h);
            let fd_b = (k.f_i(y, &[beta + h]) - k.f_i(y, &[beta - h])) / (2.0 * h);
            prop_assert!(rel(k.dy_f_r(y, &b), fd_r) <= 1e-6);
            prop_assert!(rel(k.dy_f_i(y, &b), fd_i) <= 1e-6);
            prop_assert!(rel(k.db_f_i(y, &b)[0], fd_b) <= 1e-6);
        }
    }
}
