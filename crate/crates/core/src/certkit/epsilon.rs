use nalgebra::DVector;

use super::{build_m, NestedConstants};
use crate::error::{Error, Result};

const MAX_HALVINGS: usize = 400;

/// Both sides of the time-constant requirement at scale `i`:
/// γ^ε_i + μ^ε_i 𝛃^εᵀ H_{i-1}⁻¹ 𝛃^ε  versus  (1 - margin) α_i / ε_i.
///
/// Only `eps[..i]` is read; the left side does not depend on ε_i itself.
pub fn epsilon_requirement(c: &NestedConstants, eps: &[f64], i: usize, margin: f64) -> Result<(f64, f64)> {
    let n = c.n();
    let mut padded = eps[..i].to_vec();
    padded.resize(n, eps[i - 1]);
    let sc = c.scaled(&padded);
    let h = build_m(&sc)?;
    let prev = h.leading(i - 1);
    let bv = DVector::from_vec(sc.beta_vec(i));
    let x = prev
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&bv))
        .ok_or_else(|| Error::Inconsistent(format!("scaled minor H_{} is not positive definite", i - 1)))?;
    let lhs = sc.gamma(i) + h.mu[i - 1] * bv.dot(&x);
    let rhs = (1.0 - margin) * sc.alpha(i);
    Ok((lhs, rhs))
}

/// Time constants 1 = ε_1 > ε_2 > … > ε_N for which the scaled system passes the
/// leading-minor test with the requested relative margin. Each ε_i starts at
/// ε_{i-1} and is halved until the requirement holds.
pub fn synthesize_epsilons(c: &NestedConstants, margin: f64) -> Result<Vec<f64>> {
    c.validate()?;
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::input(format!("margin must lie in (0,1), got {margin}")));
    }
    let mut eps = vec![1.0];
    for i in 2..=c.n() {
        let mut e = eps[i - 2];
        let mut found = false;
        for _ in 0..MAX_HALVINGS {
            e *= 0.5;
            eps.push(e);
            let (lhs, rhs) = epsilon_requirement(c, &eps, i, margin)?;
            if lhs < rhs {
                found = true;
                break;
            }
            eps.pop();
        }
        if !found {
            return Err(Error::numerical(format!(
                "no time constant found for scale {i} after {MAX_HALVINGS} halvings"
            )));
        }
    }
    Ok(eps)
}
