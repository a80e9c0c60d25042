use nalgebra::DMatrix;
use super::NestedConstants;
use crate::error::{Error, Result};

/// The coupling matrix together with the Lyapunov weights used to build it.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub m: DMatrix<f64>,
    pub mu: Vec<f64>,
}

impl CouplingMatrix {
    /// Leading principal submatrix of order `i` (1-based, `i <= N`).
    pub fn leading(&self, i: usize) -> DMatrix<f64> {
        self.m.view((0, 0), (i, i)).into_owned()
    }
}

/// Lyapunov weights μ_1 = 1, μ_i = μ_{i-1} β_{i-1,i} / β_{i,i-1}.
pub fn compute_mu(c: &NestedConstants) -> Result<Vec<f64>> {
    let mut mu = Vec::with_capacity(c.n());
    mu.push(1.0);
    for i in 2..=c.n() {
        let back = c.beta(i, i - 1);
        if !(back > 0.0) {
            return Err(Error::not_applicable(format!(
                "beta[{i}][{}] = {back} is not positive",
                i - 1
            )));
        }
        let fwd = c.beta_fwd(i - 1);
        if !(fwd > 0.0) {
            return Err(Error::not_applicable(format!("beta[{}][{i}] = {fwd} is not positive", i - 1)));
        }
        mu.push(mu[i - 2] * fwd / back);
    }
    Ok(mu)
}

/// Builds M: M_1 = α_1, and each new row/column holds -μ_i 𝛃_i off the
/// diagonal and (α_i - γ_i) μ_i on it.
pub fn build_m(c: &NestedConstants) -> Result<CouplingMatrix> {
    let mu = compute_mu(c)?;
    let n = c.n();
    let mut m = DMatrix::zeros(n, n);
    m[(0, 0)] = c.alpha(1);
    for i in 2..=n {
        let bv = c.beta_vec(i);
        for (j, b) in bv.iter().enumerate() {
            let v = -b * mu[i - 1];
            m[(j, i - 1)] = v;
            m[(i - 1, j)] = v;
        }
        m[(i - 1, i - 1)] = (c.alpha(i) - c.gamma(i)) * mu[i - 1];
    }
    Ok(CouplingMatrix { m, mu })
}
