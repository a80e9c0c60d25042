//! ODE integration, trajectories, scenarios and derived channels.

mod dopri;
mod rosenbrock;
mod scenario;
mod trajectory;

pub use scenario::{run_scenario, Action, Event, RunOptions, Scenario, ScenarioRun};
pub use trajectory::{frequency_estimate, phasor_frequency, Trajectory};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An autonomous or time-dependent vector field `dx/dt = f(t, x)`.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]);
    /// Analytic Jacobian `∂f/∂x`, if available. Implicit methods fall back to
    /// forward differences otherwise.
    fn jacobian(&self, _t: f64, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

/// Wraps a closure as a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64]) + Sync> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64]) + Sync> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        (self.f)(t, x, dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Explicit Dormand–Prince 5(4).
    #[default]
    DormandPrince,
    /// Linearly implicit, L-stable Rosenbrock 2(3) for stiff problems.
    Rosenbrock,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
    pub max_step: f64,
    pub initial_step: Option<f64>,
    pub method: Method,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            abs: 1e-9,
            rel: 1e-7,
            max_step: f64::INFINITY,
            initial_step: None,
            method: Method::DormandPrince,
            max_steps: 20_000_000,
        }
    }
}

impl Tolerances {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

/// Smallest step size accepted before the integrator gives up.
pub const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Accepted steps of one integration, with derivatives for Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub dx: Vec<Vec<f64>>,
    pub stats: Stats,
}

impl Solution {
    fn start(t: f64, x: Vec<f64>, dx: Vec<f64>) -> Self {
        Solution { t: vec![t], x: vec![x], dx: vec![dx], stats: Stats::default() }
    }

    fn push(&mut self, t: f64, x: Vec<f64>, dx: Vec<f64>) {
        self.t.push(t);
        self.x.push(x);
        self.dx.push(dx);
    }

    pub fn last(&self) -> &[f64] {
        self.x.last().expect("solution holds at least the initial point")
    }

    pub fn end_time(&self) -> f64 {
        *self.t.last().expect("solution holds at least the initial point")
    }

    /// Cubic Hermite interpolation between accepted steps; clamps outside the range.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let n = self.t.len();
        if t <= self.t[0] || n == 1 {
            return self.x[0].clone();
        }
        if t >= self.t[n - 1] {
            return self.x[n - 1].clone();
        }
        let i = self.t.partition_point(|&s| s <= t) - 1;
        let h = self.t[i + 1] - self.t[i];
        let th = (t - self.t[i]) / h;
        let th2 = th * th;
        let th3 = th2 * th;
        let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
        let h10 = th3 - 2.0 * th2 + th;
        let h01 = -2.0 * th3 + 3.0 * th2;
        let h11 = th3 - th2;
        (0..self.x[i].len())
            .map(|k| {
                h00 * self.x[i][k]
                    + h10 * h * self.dx[i][k]
                    + h01 * self.x[i + 1][k]
                    + h11 * h * self.dx[i + 1][k]
            })
            .collect()
    }

    /// Uniform grid from the first to the last time with spacing `dt`
    /// (the last time is always included).
    pub fn resample(&self, dt: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let t0 = self.t[0];
        let t1 = self.end_time();
        let steps = ((t1 - t0) / dt).floor() as usize;
        let mut ts: Vec<f64> = (0..=steps).map(|i| t0 + i as f64 * dt).collect();
        if t1 - ts.last().copied().unwrap_or(t0) > 1e-9 * dt {
            ts.push(t1);
        }
        let xs = ts.iter().map(|&t| self.interpolate(t)).collect();
        (ts, xs)
    }
}

/// Integrates `field` from `x0` over `span` with adaptive step control.
pub fn integrate(field: &dyn VectorField, x0: &[f64], span: (f64, f64), tol: &Tolerances) -> Result<Solution> {
    if x0.len() != field.dim() {
        return Err(Error::input(format!("state has {} entries, field expects {}", x0.len(), field.dim())));
    }
    if !(tol.abs > 0.0 && tol.rel >= 0.0 && tol.max_step > 0.0) {
        return Err(Error::input("tolerances must be positive"));
    }
    if !(span.1 >= span.0) {
        return Err(Error::input(format!("time span ({}, {}) is reversed", span.0, span.1)));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { last_good_t: span.0 });
    }
    match tol.method {
        Method::DormandPrince => dopri::integrate(field, x0, span, tol),
        Method::Rosenbrock => rosenbrock::integrate(field, x0, span, tol),
    }
}

/// Weighted RMS norm used by the step-size controllers.
fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], tol: &Tolerances) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = tol.abs + tol.rel * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Starting step size (Hairer, Nørsett & Wanner, II.4) for a method of order `order`.
fn initial_step(field: &dyn VectorField, t: f64, y: &[f64], f0: &[f64], order: i32, tol: &Tolerances, span: f64) -> f64 {
    if let Some(h) = tol.initial_step {
        return h.min(span);
    }
    let sc: Vec<f64> = y.iter().map(|v| tol.abs + tol.rel * v.abs()).collect();
    let rms = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len().max(1) as f64).sqrt();
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span).min(tol.max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    field.eval(t + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (order as f64 + 1.0))
    };
    (100.0 * h0).min(h1).min(span).min(tol.max_step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_hits_analytic_value() {
        let f = FnField::new(1, |_t, x: &[f64], dx: &mut [f64]| dx[0] = -x[0]);
        let sol = integrate(&f, &[1.0], (0.0, 1.0), &Tolerances::default()).unwrap();
        assert!((sol.last()[0] - (-1.0f64).exp()).abs() < 1e-8);
        assert_eq!(sol.end_time(), 1.0);
    }

    #[test]
    fn rotation_returns_after_one_period() {
        let f = FnField::new(2, |_t, x: &[f64], dx: &mut [f64]| {
            dx[0] = -x[1];
            dx[1] = x[0];
        });
        let period = 2.0 * std::f64::consts::PI;
        let sol = integrate(&f, &[1.0, 0.0], (0.0, period), &Tolerances::default()).unwrap();
        let x = sol.last();
        assert!((x[0] - 1.0).abs() < 1e-6 && x[1].abs() < 1e-6);
        for y in &sol.x {
            assert!(((y[0] * y[0] + y[1] * y[1]).sqrt() - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn rosenbrock_handles_extreme_stiffness() {
        // Fast mode at -1e12 slaved to a slow mode at -1.
        let f = FnField::new(2, |_t, x: &[f64], dx: &mut [f64]| {
            dx[0] = -x[0];
            dx[1] = -1e12 * (x[1] - x[0]);
        });
        let tol = Tolerances::default().with_method(Method::Rosenbrock);
        let sol = integrate(&f, &[1.0, 0.0], (0.0, 2.0), &tol).unwrap();
        let e = (-2.0f64).exp();
        assert!((sol.last()[0] - e).abs() < 1e-5);
        assert!((sol.last()[1] - e).abs() < 1e-5);
        assert!(sol.stats.accepted < 5000, "{:?}", sol.stats);
    }

    #[test]
    fn non_finite_state_is_divergence() {
        let f = FnField::new(1, |_t, x: &[f64], dx: &mut [f64]| dx[0] = x[0] * x[0]);
        match integrate(&f, &[1.0], (0.0, 2.0), &Tolerances::default()) {
            // The blow-up is at t = 1; error control may carry the last finite step slightly past it.
            Err(Error::Divergence { last_good_t }) => assert!(last_good_t < 1.0 + 1e-6 && last_good_t > 0.9, "{last_good_t}"),
            Err(Error::StepUnderflow { t, .. }) => assert!(t < 1.0 + 1e-6 && t > 0.9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hermite_resample_includes_endpoints() {
        let f = FnField::new(1, |_t, x: &[f64], dx: &mut [f64]| dx[0] = -x[0]);
        let sol = integrate(&f, &[1.0], (0.0, 1.0), &Tolerances::default()).unwrap();
        let (ts, xs) = sol.resample(0.01);
        assert_eq!(ts.len(), 101);
        // Cubic Hermite between accepted steps is fourth-order accurate in the step size.
        for (t, x) in ts.iter().zip(&xs) {
            assert!((x[0] - (-t).exp()).abs() < 1e-5);
        }
    }
}
