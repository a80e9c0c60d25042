//! Coupling-matrix certificates for nested systems.
//!
//! A nested system with `N` time scales is described by the decrease rates,
//! cross-coupling coefficients and forward couplings of its per-scale Lyapunov
//! functions ([`NestedConstants`]). From these we build the symmetric coupling
//! matrix `M`; positive definiteness of `M` certifies that the weighted sum of
//! Lyapunov functions decreases. Two checks are provided: an exact leading-minor
//! test (`check_condition1`) and a cheaper recursive sufficient test that also
//! yields convergence-rate margins (`check_condition2`). An independent
//! eigenvalue oracle is used to cross-check both.

mod conditions;
mod constants;
mod coupling;
mod epsilon;
mod report;

pub use conditions::{
    check_condition1, check_condition2, condition2_step, strictly_greater, verify_proposition1, Condition1,
    Condition2, StepInput, StepOutcome,
};
pub use constants::{BEntry, NestedConstants};
pub use coupling::{build_m, compute_mu, CouplingMatrix};
pub use epsilon::{epsilon_requirement, synthesize_epsilons};
pub use report::{certify, CertificateReport, Verdict};

use nalgebra::DMatrix;

use crate::error::Result;
use crate::linalg;

/// Outcome of the eigenvalue oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdVerdict {
    pub positive_definite: bool,
    pub min_eigenvalue: f64,
    /// Spectral norm, i.e. the largest eigenvalue magnitude.
    pub norm: f64,
}

/// Relative threshold below which the smallest eigenvalue does not count as positive.
pub const PD_REL_TOL: f64 = 1e-10;

/// Positive-definiteness test by Jacobi eigenvalues, independent of Conditions 1 and 2.
pub fn pd_oracle(m: &DMatrix<f64>) -> Result<PdVerdict> {
    linalg::check_symmetric(m)?;
    let ev = linalg::symmetric_eigenvalues(m);
    let min = ev.first().copied().unwrap_or(0.0);
    let norm = ev.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
    Ok(PdVerdict {
        positive_definite: !ev.is_empty() && min > PD_REL_TOL * norm,
        min_eigenvalue: min,
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_identity() {
        let v = pd_oracle(&DMatrix::identity(3, 3)).unwrap();
        assert!(v.positive_definite);
        assert_eq!(v.min_eigenvalue, 1.0);
    }

    #[test]
    fn oracle_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 1.0]);
        let v = pd_oracle(&m).unwrap();
        assert!(!v.positive_definite);
        assert!((v.min_eigenvalue + 1.0).abs() < 1e-14);
    }

    #[test]
    fn oracle_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(pd_oracle(&m).is_err());
    }
}
