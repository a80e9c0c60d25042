use super::{error_norm, initial_step, Solution, Tolerances, VectorField, MIN_STEP};
use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

pub(crate) fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite() && x.abs() < 1e150)
}

/// One Dormand–Prince step: returns (y_new, f(y_new), error estimate vector).
pub(crate) fn step(field: &dyn VectorField, t: f64, y: &[f64], f0: &[f64], h: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(f0.to_vec());
    let mut tmp = vec![0.0; n];
    for s in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc += A[s][j] * kj[i];
            }
            tmp[i] = y[i] + h * acc;
        }
        let mut ks = vec![0.0; n];
        field.eval(t + C[s] * h, &tmp, &mut ks);
        k.push(ks);
    }
    // Stage 7 is evaluated at the 5th-order solution (first same as last).
    let y_new = tmp;
    let err: Vec<f64> = (0..n)
        .map(|i| h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>())
        .collect();
    let f_new = k.pop().expect("seven stages");
    (y_new, f_new, err)
}

pub(super) fn integrate(field: &dyn VectorField, x0: &[f64], span: (f64, f64), tol: &Tolerances) -> Result<Solution> {
    let (t0, t1) = span;
    let mut t = t0;
    let mut y = x0.to_vec();
    let mut f = vec![0.0; y.len()];
    field.eval(t, &y, &mut f);
    let mut sol = Solution::start(t, y.clone(), f.clone());
    sol.stats.evaluations = 1;
    if t1 == t0 {
        return Ok(sol);
    }
    if !finite(&f) {
        return Err(Error::Divergence { last_good_t: t });
    }
    let mut h = initial_step(field, t, &y, &f, 4, tol, t1 - t0);
    sol.stats.evaluations += 1;
    while t < t1 {
        if sol.stats.accepted >= tol.max_steps {
            return Err(Error::numerical(format!("step budget of {} exhausted at t = {t}", tol.max_steps)));
        }
        let last = t + h >= t1 || (t1 - t - h) < 1e-12 * t1.abs().max(1.0);
        if last {
            h = t1 - t;
        }
        let (y_new, f_new, err) = step(field, t, &y, &f, h);
        sol.stats.evaluations += 6;
        let ok = finite(&y_new) && finite(&f_new);
        let en = if ok { error_norm(&err, &y, &y_new, tol) } else { f64::INFINITY };
        if ok && en <= 1.0 {
            t = if last { t1 } else { t + h };
            y = y_new;
            f = f_new;
            sol.push(t, y.clone(), f.clone());
            sol.stats.accepted += 1;
            let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(tol.max_step);
        } else {
            sol.stats.rejected += 1;
            let fac = if ok { (0.9 * en.powf(-0.2)).clamp(0.1, 0.9) } else { 0.2 };
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
