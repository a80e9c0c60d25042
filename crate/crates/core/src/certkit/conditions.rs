use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{build_m, pd_oracle, NestedConstants, PD_REL_TOL};
use crate::error::{Error, Result};

/// Relative tolerance applied to strict inequalities.
pub const STRICT_REL_TOL: f64 = 1e-12;

/// `lhs > rhs` with a relative margin of [`STRICT_REL_TOL`].
pub fn strictly_greater(lhs: f64, rhs: f64) -> bool {
    lhs - rhs > STRICT_REL_TOL * lhs.abs().max(rhs.abs())
}

/// Exact leading-minor test of the coupling matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition1 {
    pub pass: bool,
    /// `slack[i-2]` = α_i - γ_i - μ_i 𝛃_iᵀ M_{i-1}⁻¹ 𝛃_i for i = 2..=N; `None` when M_{i-1} is singular.
    pub slack: Vec<Option<f64>>,
    /// First scale whose inequality fails.
    pub failed_at: Option<usize>,
    pub diagnostics: Vec<String>,
}

pub fn check_condition1(c: &NestedConstants) -> Result<Condition1> {
    let cm = build_m(c)?;
    let n = c.n();
    let mut slack = Vec::with_capacity(n - 1);
    let mut failed_at = None;
    let mut diagnostics = Vec::new();
    for i in 2..=n {
        let prev = cm.leading(i - 1);
        let bv = DVector::from_vec(c.beta_vec(i));
        let sol = match prev.clone().cholesky() {
            Some(ch) => Some(ch.solve(&bv)),
            None => prev.lu().solve(&bv),
        };
        let mu = cm.mu[i - 1];
        let s = match sol {
            Some(x) => {
                let q = mu * bv.dot(&x);
                let s = c.alpha(i) - c.gamma(i) - q;
                if !strictly_greater(c.alpha(i), c.gamma(i) + q) && failed_at.is_none() {
                    failed_at = Some(i);
                }
                Some(s)
            }
            None => {
                diagnostics.push(format!("leading minor M_{} is singular", i - 1));
                failed_at.get_or_insert(i);
                None
            }
        };
        slack.push(s);
    }
    if let Some(i) = failed_at {
        diagnostics.push(format!("inequality violated at scale {i}"));
    }
    Ok(Condition1 { pass: failed_at.is_none(), slack, failed_at, diagnostics })
}

/// Inputs of one recursive step at scale i.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInput {
    pub alpha: f64,
    pub gamma: f64,
    /// β_{i,i-1}
    pub beta_back: f64,
    /// β_{i-1,i}
    pub beta_fwd_prev: f64,
    /// 𝛃_iᵀ𝛃_i
    pub beta_sq: f64,
    /// Margin of the previous scale.
    pub c_prev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    /// (lhs - rhs) / (β_{i,i-1} c_{i-1}), in the units of the decrease rates.
    pub slack: f64,
    pub discriminant: f64,
    /// New margin c_i.
    pub c: f64,
}

/// One step of the recursive sufficient test: checks
/// α β_back c_prev > β_fwd_prev 𝛃ᵀ𝛃 + γ β_back c_prev and returns the new margin.
pub fn condition2_step(s: &StepInput) -> Result<StepOutcome> {
    if !(s.beta_back > 0.0) || !(s.beta_fwd_prev > 0.0) {
        return Err(Error::not_applicable(format!(
            "coupling ratio undefined (back {}, forward {})",
            s.beta_back, s.beta_fwd_prev
        )));
    }
    if !(s.c_prev > 0.0) {
        return Err(Error::not_applicable(format!("previous margin {} is not positive", s.c_prev)));
    }
    let a = s.alpha - s.gamma;
    let r = s.beta_back * s.c_prev / s.beta_fwd_prev;
    let bb = s.beta_sq;
    let displayed = (a + r).powi(2) + 4.0 * (bb - a * r);
    let square = (a - r).powi(2) + 4.0 * bb;
    let scale = (a.abs() + r.abs()).powi(2) + 4.0 * bb.abs();
    if displayed < -1e-12 * scale || (displayed - square).abs() > 1e-9 * scale {
        return Err(Error::Inconsistent(format!(
            "discriminant forms disagree: {displayed} vs {square}"
        )));
    }
    let root = square.sqrt();
    let c = if a + r > 0.0 {
        2.0 * (a * r - bb) / (a + r + root)
    } else {
        0.5 * (a + r - root)
    };
    let lhs = s.alpha * s.beta_back * s.c_prev;
    let rhs = s.beta_fwd_prev * bb + s.gamma * s.beta_back * s.c_prev;
    let pass = strictly_greater(lhs, rhs);
    if pass && !(c > 0.0) {
        return Err(Error::Inconsistent(format!("step passed but margin {c} is not positive")));
    }
    Ok(StepOutcome {
        lhs,
        rhs,
        pass,
        slack: (lhs - rhs) / (s.beta_back * s.c_prev),
        discriminant: square,
        c,
    })
}

/// Recursive sufficient test with margins c_1 = α_1, c_2, ….
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition2 {
    pub pass: bool,
    /// `margins[i-1]` = c_i; `None` after the first failing step.
    pub margins: Vec<Option<f64>>,
    /// `slack[i-2]` for i = 2..=N, see [`StepOutcome::slack`].
    pub slack: Vec<Option<f64>>,
    pub failed_at: Option<usize>,
}

pub fn check_condition2(c: &NestedConstants) -> Result<Condition2> {
    let n = c.n();
    let mut margins = vec![None; n];
    let mut slack = vec![None; n - 1];
    margins[0] = Some(c.alpha(1));
    let mut c_prev = c.alpha(1);
    let mut failed_at = None;
    for i in 2..=n {
        let bv = c.beta_vec(i);
        let out = condition2_step(&StepInput {
            alpha: c.alpha(i),
            gamma: c.gamma(i),
            beta_back: c.beta(i, i - 1),
            beta_fwd_prev: c.beta_fwd(i - 1),
            beta_sq: bv.iter().map(|x| x * x).sum(),
            c_prev,
        })?;
        slack[i - 2] = Some(out.slack);
        if !out.pass {
            failed_at = Some(i);
            break;
        }
        margins[i - 1] = Some(out.c);
        c_prev = out.c;
    }
    Ok(Condition2 { pass: failed_at.is_none(), margins, slack, failed_at })
}

/// Smallest eigenvalue of M_i - μ_i c_i I for every leading minor.
pub fn verify_proposition1(c: &NestedConstants, margins: &[f64]) -> Result<Vec<f64>> {
    if margins.len() != c.n() {
        return Err(Error::input(format!("expected {} margins, got {}", c.n(), margins.len())));
    }
    let cm = build_m(c)?;
    let mut out = Vec::with_capacity(c.n());
    for i in 1..=c.n() {
        let mi = cm.leading(i);
        let shifted = &mi - DMatrix::identity(i, i) * (cm.mu[i - 1] * margins[i - 1]);
        let norm = pd_oracle(&mi)?.norm;
        let min = pd_oracle(&shifted)?.min_eigenvalue;
        if min < -PD_REL_TOL * norm {
            return Err(Error::Inconsistent(format!(
                "M_{i} - mu_{i} c_{i} I has eigenvalue {min} below -{PD_REL_TOL}*|M_{i}|"
            )));
        }
        out.push(min);
    }
    Ok(out)
}
