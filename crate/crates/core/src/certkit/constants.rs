use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One cross-coupling coefficient `b[i][j][k]` (1-based scale indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

#[derive(Serialize, Deserialize)]
struct ConstantsDoc {
    #[serde(rename = "N")]
    n: usize,
    alpha: Vec<f64>,
    alpha_prime: Vec<f64>,
    b: Vec<BEntry>,
    beta_fwd: Vec<f64>,
}

/// Decrease rates and coupling coefficients of a nested system.
///
/// Scale indices are 1-based throughout (`1` is the slowest scale). Missing
/// `b` entries are zero. The coefficients are kept in a sorted map so that
/// every derived sum is accumulated in the same index order regardless of how
/// the input listed them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConstantsDoc", into = "ConstantsDoc")]
pub struct NestedConstants {
    n: usize,
    alpha: Vec<f64>,
    alpha_prime: Vec<f64>,
    beta_fwd: Vec<f64>,
    b: BTreeMap<(usize, usize, usize), f64>,
}

impl TryFrom<ConstantsDoc> for NestedConstants {
    type Error = Error;

    fn try_from(doc: ConstantsDoc) -> Result<Self> {
        NestedConstants::new(
            doc.n,
            doc.alpha,
            doc.alpha_prime,
            doc.beta_fwd,
            doc.b.into_iter().map(|e| (e.i, e.j, e.k, e.value)),
        )
    }
}

impl From<NestedConstants> for ConstantsDoc {
    fn from(c: NestedConstants) -> Self {
        ConstantsDoc {
            n: c.n,
            b: c.entries().collect(),
            alpha: c.alpha,
            alpha_prime: c.alpha_prime,
            beta_fwd: c.beta_fwd,
        }
    }
}

impl NestedConstants {
    /// Structural validation only: lengths, index ranges, duplicates, finiteness.
    /// Sign requirements are checked by [`NestedConstants::validate`].
    pub fn new(
        n: usize,
        alpha: Vec<f64>,
        alpha_prime: Vec<f64>,
        beta_fwd: Vec<f64>,
        b: impl IntoIterator<Item = (usize, usize, usize, f64)>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::input(format!("N must be at least 2, got {n}")));
        }
        if alpha.len() != n || alpha_prime.len() != n {
            return Err(Error::input(format!(
                "alpha and alpha_prime need {n} entries, got {} and {}",
                alpha.len(),
                alpha_prime.len()
            )));
        }
        if beta_fwd.len() != n - 1 {
            return Err(Error::input(format!(
                "beta_fwd needs {} entries, got {}",
                n - 1,
                beta_fwd.len()
            )));
        }
        for (name, v) in [("alpha", &alpha), ("alpha_prime", &alpha_prime), ("beta_fwd", &beta_fwd)] {
            if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::input(format!("{name}[{}] is not finite", pos + 1)));
            }
        }
        let mut map = BTreeMap::new();
        for (i, j, k, value) in b {
            if !(2..=n).contains(&i) || !(1..i).contains(&k) || !(1..=k + 1).contains(&j) {
                return Err(Error::input(format!(
                    "b[{i}][{j}][{k}] outside i in [2,N], k in [1,i-1], j in [1,k+1]"
                )));
            }
            if !value.is_finite() {
                return Err(Error::input(format!("b[{i}][{j}][{k}] is not finite")));
            }
            if map.insert((i, j, k), value).is_some() {
                return Err(Error::input(format!("b[{i}][{j}][{k}] given twice")));
            }
        }
        Ok(NestedConstants { n, alpha, alpha_prime, beta_fwd, b: map })
    }

    /// Checks the sign requirements that the certificate construction relies on.
    pub fn validate(&self) -> Result<()> {
        for i in 1..=self.n {
            if !(self.alpha(i) > 0.0) {
                return Err(Error::not_applicable(format!("alpha[{i}] = {} is not positive", self.alpha(i))));
            }
            if self.alpha_prime(i) < 0.0 {
                return Err(Error::not_applicable(format!("alpha_prime[{i}] is negative")));
            }
        }
        for i in 1..self.n {
            if !(self.beta_fwd(i) > 0.0) {
                return Err(Error::not_applicable(format!(
                    "beta[{i}][{}] = {} is not positive",
                    i + 1,
                    self.beta_fwd(i)
                )));
            }
        }
        for i in 2..=self.n {
            for j in 1..i {
                let v = self.beta(i, j);
                if !(v > 0.0) {
                    return Err(Error::not_applicable(format!("beta[{i}][{j}] = {v} is not positive")));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alpha[i - 1]
    }

    pub fn alpha_prime(&self, i: usize) -> f64 {
        self.alpha_prime[i - 1]
    }

    /// Forward coupling β_{i,i+1}.
    pub fn beta_fwd(&self, i: usize) -> f64 {
        self.beta_fwd[i - 1]
    }

    pub fn b(&self, i: usize, j: usize, k: usize) -> f64 {
        self.b.get(&(i, j, k)).copied().unwrap_or(0.0)
    }

    /// All non-default coefficients in ascending (i, j, k) order.
    pub fn entries(&self) -> impl Iterator<Item = BEntry> + '_ {
        self.b.iter().map(|(&(i, j, k), &value)| BEntry { i, j, k, value })
    }

    /// Self-coupling γ_i = b[i][i][i-1].
    pub fn gamma(&self, i: usize) -> f64 {
        self.b(i, i, i - 1)
    }

    /// Backward coupling β_{i,j} for j < i, summed over k from max(1, j-1) to i-1.
    pub fn beta(&self, i: usize, j: usize) -> f64 {
        debug_assert!(j >= 1 && j < i);
        let mut s = 0.0;
        for k in j.saturating_sub(1).max(1)..i {
            s += self.b(i, j, k);
        }
        s
    }

    /// The coupling vector of scale i: (½β_{i,1}, …, ½β_{i,i-2}, β_{i,i-1}).
    pub fn beta_vec(&self, i: usize) -> Vec<f64> {
        (1..i)
            .map(|j| if j == i - 1 { self.beta(i, j) } else { 0.5 * self.beta(i, j) })
            .collect()
    }

    /// Constants of the system with scale i slowed by 1/ε_i: rates divide by the
    /// own ε, and every coefficient b[i][j][k] divides by ε_k.
    pub fn scaled(&self, eps: &[f64]) -> NestedConstants {
        assert_eq!(eps.len(), self.n);
        NestedConstants {
            n: self.n,
            alpha: self.alpha.iter().zip(eps).map(|(a, e)| a / e).collect(),
            alpha_prime: self.alpha_prime.iter().zip(eps).map(|(a, e)| a / e).collect(),
            beta_fwd: self.beta_fwd.iter().zip(eps).map(|(b, e)| b / e).collect(),
            b: self.b.iter().map(|(&key, &v)| (key, v / eps[key.2 - 1])).collect(),
        }
    }
}
