//! Shampine–Reichelt Rosenbrock 2(3) pair (the scheme behind MATLAB's ode23s).
//! L-stable, so very fast linear modes are damped at step sizes set by the slow
//! dynamics. Assumes the field has no explicit time dependence within a call.
//! The local error estimate is filtered through `(I − h d J)⁻¹`, as in Radau5,
//! so initial layers of very fast modes do not force sub-femtosecond steps.

use nalgebra::{DMatrix, DVector, LU, Dyn};

use super::dopri::finite;
use super::{error_norm, initial_step, Solution, Tolerances, VectorField, MIN_STEP};
use crate::error::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// LU of a row-equilibrated matrix.
struct ScaledLu {
    lu: LU<f64, Dyn, Dyn>,
    scale: Vec<f64>,
}

impl ScaledLu {
    fn new(mut w: DMatrix<f64>) -> Self {
        let scale: Vec<f64> = (0..w.nrows())
            .map(|i| {
                let s = w.row(i).amax();
                if s > 0.0 { s } else { 1.0 }
            })
            .collect();
        for (i, s) in scale.iter().enumerate() {
            w.row_mut(i).scale_mut(1.0 / s);
        }
        ScaledLu { lu: w.lu(), scale }
    }

    fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let rhs = DVector::from_iterator(b.len(), b.iter().zip(&self.scale).map(|(v, s)| v / s));
        self.lu.solve(&rhs).map(|x| x.iter().copied().collect())
    }
}

fn jacobian(field: &dyn VectorField, t: f64, y: &[f64], f0: &[f64]) -> DMatrix<f64> {
    if let Some(j) = field.jacobian(t, y) {
        return j;
    }
    let n = y.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; n];
    for c in 0..n {
        let d = 1e-8 * y[c].abs().max(1e-3);
        yp[c] = y[c] + d;
        field.eval(t, &yp, &mut fp);
        for r in 0..n {
            jac[(r, c)] = (fp[r] - f0[r]) / d;
        }
        yp[c] = y[c];
    }
    jac
}

pub(super) fn integrate(field: &dyn VectorField, x0: &[f64], span: (f64, f64), tol: &Tolerances) -> Result<Solution> {
    let (t0, t1) = span;
    let n = x0.len();
    let d = 1.0 / (2.0 + SQRT2);
    let e32 = 6.0 + SQRT2;
    let mut t = t0;
    let mut y = x0.to_vec();
    let mut f0 = vec![0.0; n];
    field.eval(t, &y, &mut f0);
    let mut sol = Solution::start(t, y.clone(), f0.clone());
    sol.stats.evaluations = 1;
    if t1 == t0 {
        return Ok(sol);
    }
    if !finite(&f0) {
        return Err(Error::Divergence { last_good_t: t });
    }
    // The explicit estimate is driven by the fastest mode, which this method
    // damps anyway; start no lower than a thousandth of the span and let
    // rejections shrink the step if the slow dynamics need it.
    let span = t1 - t0;
    let mut h = match tol.initial_step {
        Some(h0) => h0.min(span),
        None => initial_step(field, t, &y, &f0, 2, tol, span).max(1e-3 * span.min(tol.max_step)),
    }
    .max(MIN_STEP * 10.0);
    let mut jac = jacobian(field, t, &y, &f0);
    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    while t < t1 {
        if sol.stats.accepted >= tol.max_steps {
            return Err(Error::numerical(format!("step budget of {} exhausted at t = {t}", tol.max_steps)));
        }
        let last = t + h >= t1 || (t1 - t - h) < 1e-12 * t1.abs().max(1.0);
        if last {
            h = t1 - t;
        }
        let w = DMatrix::identity(n, n) - &jac * (h * d);
        let lu = ScaledLu::new(w);
        let attempt = (|| {
            let k1 = lu.solve(&f0)?;
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            field.eval(t + 0.5 * h, &tmp, &mut f1);
            let r: Vec<f64> = (0..n).map(|i| f1[i] - k1[i]).collect();
            let k2: Vec<f64> = lu.solve(&r)?.iter().zip(&k1).map(|(a, b)| a + b).collect();
            let y_new: Vec<f64> = (0..n).map(|i| y[i] + h * k2[i]).collect();
            field.eval(t + h, &y_new, &mut f2);
            let r3: Vec<f64> = (0..n)
                .map(|i| f2[i] - e32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]))
                .collect();
            let k3 = lu.solve(&r3)?;
            let raw: Vec<f64> = (0..n).map(|i| h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i])).collect();
            // Filtering through W⁻¹ keeps damped stiff modes from dominating the estimate.
            let err = lu.solve(&raw)?;
            Some((y_new, err))
        })();
        sol.stats.evaluations += 2;
        let (ok, en, y_new) = match attempt {
            Some((y_new, err)) if finite(&y_new) && finite(&f2) => {
                let en = error_norm(&err, &y, &y_new, tol);
                (en.is_finite(), en, y_new)
            }
            _ => (false, f64::INFINITY, Vec::new()),
        };
        if ok && en <= 1.0 {
            t = if last { t1 } else { t + h };
            y = y_new;
            f0.copy_from_slice(&f2);
            sol.push(t, y.clone(), f0.clone());
            sol.stats.accepted += 1;
            let fac = if en == 0.0 { 5.0 } else { (0.8 * en.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
            h = (h * fac).min(tol.max_step);
            if t < t1 {
                jac = jacobian(field, t, &y, &f0);
                sol.stats.evaluations += 1;
            }
        } else {
            sol.stats.rejected += 1;
            let fac = if ok { (0.8 * en.powf(-1.0 / 3.0)).clamp(0.1, 0.9) } else { 0.2 };
            h *= fac;
            if h < MIN_STEP {
                return Err(if !ok {
                    Error::Divergence { last_good_t: t }
                } else {
                    Error::StepUnderflow { t, h }
                });
            }
        }
    }
    Ok(sol)
}
