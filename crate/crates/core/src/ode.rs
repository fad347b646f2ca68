//! Adaptive Dormand-Prince 5(4) integration of autonomous systems.
//!
//! The shooting code integrates in the Euler time `τ` with `ds/dτ = a(s)`
//! carried as one state component, so the natural stopping rule is "advance
//! until component `k` reaches a value" rather than "advance until time t".
//! [`Integrator::advance_until`] lands on the target exactly by shortening
//! the final step with a Newton iteration on the step length.

use crate::{Error, Result};

/// Autonomous right-hand side `dy/dτ = f(y)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, y: &[f64; N]) -> [f64; N];
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
    /// First trial step (absolute value).
    pub initial_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            atol: 1e-12,
            rtol: 1e-12,
            initial_step: 1e-3,
            max_step: 0.25,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

// Dormand & Prince (1980) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Stage nodes; the scheme is autonomous so they only enter the row-sum test.
#[cfg(test)]
const NODES: [f64; 5] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];

pub struct Integrator<'a, S, const N: usize> {
    system: &'a S,
    y: [f64; N],
    f: [f64; N],
    tau: f64,
    step: f64,
    tol: Tolerances,
    stats: Stats,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

impl<'a, S: OdeSystem<N>, const N: usize> Integrator<'a, S, N> {
    pub fn new(system: &'a S, y0: [f64; N], tol: Tolerances) -> Self {
        let f = system.rhs(&y0);
        Self {
            system,
            y: y0,
            f,
            tau: 0.0,
            step: tol.initial_step,
            tol,
            stats: Stats {
                rhs_evals: 1,
                ..Stats::default()
            },
        }
    }

    pub fn state(&self) -> &[f64; N] {
        &self.y
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    /// One explicit step of length `h`; returns (new state, new slope, error estimate).
    fn trial(&mut self, h: f64) -> ([f64; N], [f64; N], [f64; N]) {
        let y = &self.y;
        let k1 = self.f;
        let k2 = self.system.rhs(&axpy(y, h, &[(A21, &k1)]));
        let k3 = self.system.rhs(&axpy(y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = self
            .system
            .rhs(&axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = self.system.rhs(&axpy(
            y,
            h,
            &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
        ));
        let k6 = self.system.rhs(&axpy(
            y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ));
        let y_new = axpy(
            y,
            h,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = self.system.rhs(&y_new);
        self.stats.rhs_evals += 6;
        let mut err = [0.0; N];
        for i in 0..N {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        (y_new, k7, err)
    }

    fn error_norm(&self, y_new: &[f64; N], err: &[f64; N]) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sc = self.tol.atol + self.tol.rtol * self.y[i].abs().max(y_new[i].abs());
            acc += (err[i] / sc).powi(2);
        }
        (acc / N as f64).sqrt()
    }

    fn fail(&self, reason: &str) -> Error {
        Error::Integration {
            s: self.y[N - 1],
            step: self.step,
            reason: reason.to_string(),
        }
    }

    /// Advances until `y[component] == target`, calling `on_step(before, after)`
    /// for every accepted step. The component must be strictly monotone along
    /// the flow; the time direction is chosen so that it moves toward `target`.
    pub fn advance_until<F>(&mut self, component: usize, target: f64, mut on_step: F) -> Result<()>
    where
        F: FnMut(&[f64; N], &[f64; N]),
    {
        let gap = target - self.y[component];
        if gap == 0.0 {
            return Ok(());
        }
        let slope = self.f[component];
        if slope == 0.0 || !slope.is_finite() {
            return Err(self.fail("monitored component is stationary"));
        }
        let dir = gap.signum() * slope.signum();
        let ahead = |v: f64| (target - v) * gap.signum() < 0.0;
        let scale = target.abs().max(1.0);

        let mut h = dir * self.step.abs().min(self.tol.max_step);
        loop {
            if self.stats.accepted + self.stats.rejected > self.tol.max_steps {
                return Err(self.fail("step budget exhausted"));
            }
            if h.abs() < 1e-15 * (1.0 + self.tau.abs()) {
                return Err(self.fail("step size underflow"));
            }
            let (y_new, f_new, err) = self.trial(h);
            let e = self.error_norm(&y_new, &err);
            if !e.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                self.stats.rejected += 1;
                h *= 0.25;
                continue;
            }
            if e > 1.0 {
                self.stats.rejected += 1;
                h *= (0.9 * e.powf(-0.2)).max(0.2);
                continue;
            }
            self.stats.accepted += 1;
            let grow = if e == 0.0 {
                5.0
            } else {
                (0.9 * e.powf(-0.2)).clamp(0.2, 5.0)
            };

            if ahead(y_new[component]) || y_new[component] == target {
                return self.land(component, target, h, y_new, scale, &mut on_step);
            }
            on_step(&self.y, &y_new);
            self.y = y_new;
            self.f = f_new;
            self.tau += h;
            self.step = (h * grow).abs().min(self.tol.max_step);
            h = dir * self.step;
        }
    }

    /// Shortened final step that lands on the target value of `component`.
    fn land<F>(
        &mut self,
        component: usize,
        target: f64,
        h_over: f64,
        y_over: [f64; N],
        scale: f64,
        on_step: &mut F,
    ) -> Result<()>
    where
        F: FnMut(&[f64; N], &[f64; N]),
    {
        let y0 = self.y[component];
        let mut h = h_over * (target - y0) / (y_over[component] - y0);
        let mut best = None;
        for _ in 0..12 {
            let (y_new, f_new, _) = self.trial(h);
            let miss = target - y_new[component];
            best = Some((h, y_new, f_new));
            if miss.abs() <= 4.0 * f64::EPSILON * scale {
                break;
            }
            let d = f_new[component];
            if d == 0.0 {
                break;
            }
            h += miss / d;
        }
        let (h, mut y_new, f_new) = best.expect("at least one landing iteration");
        y_new[component] = target;
        on_step(&self.y, &y_new);
        self.y = y_new;
        self.f = f_new;
        self.tau += h;
        if h.abs() > 0.0 {
            self.step = self.step.max(h.abs());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Growth;
    impl OdeSystem<2> for Growth {
        // y0 = e^τ, y1 = τ
        fn rhs(&self, y: &[f64; 2]) -> [f64; 2] {
            [y[0], 1.0]
        }
    }

    struct Oscillator;
    impl OdeSystem<3> for Oscillator {
        // (cos τ, -sin τ, τ)
        fn rhs(&self, y: &[f64; 3]) -> [f64; 3] {
            [y[1], -y[0], 1.0]
        }
    }

    #[test]
    fn tableau_is_consistent() {
        let rows: [&[f64]; 5] = [
            &[A21],
            &[A31, A32],
            &[A41, A42, A43],
            &[A51, A52, A53, A54],
            &[A61, A62, A63, A64, A65],
        ];
        for (row, c) in rows.iter().zip(NODES) {
            assert!((row.iter().sum::<f64>() - c).abs() < 1e-14);
        }
        assert!((B1 + B3 + B4 + B5 + B6 - 1.0).abs() < 1e-14);
        assert!((E1 + E3 + E4 + E5 + E6 + E7).abs() < 1e-14);
    }

    #[test]
    fn exponential_lands_on_target() {
        let mut it = Integrator::new(&Growth, [1.0, 0.0], Tolerances::default());
        it.advance_until(0, 10.0, |_, _| {}).unwrap();
        let y = it.state();
        assert_eq!(y[0], 10.0);
        assert!((y[1] - 10f64.ln()).abs() < 1e-10, "{}", y[1]);
    }

    #[test]
    fn backward_direction_is_chosen_from_slope() {
        let mut it = Integrator::new(&Growth, [1.0, 0.0], Tolerances::default());
        it.advance_until(0, 0.5, |_, _| {}).unwrap();
        assert!((it.state()[1] - 0.5f64.ln()).abs() < 1e-10);
        assert!(it.tau() < 0.0);
    }

    #[test]
    fn oscillator_phase_is_accurate() {
        let mut it = Integrator::new(&Oscillator, [1.0, 0.0, 0.0], Tolerances::default());
        let mut steps = 0;
        it.advance_until(2, 20.0, |_, _| steps += 1).unwrap();
        let y = it.state();
        assert!((y[0] - 20f64.cos()).abs() < 1e-9);
        assert!((y[1] + 20f64.sin()).abs() < 1e-9);
        assert_eq!(steps, it.stats().accepted);
    }
}
