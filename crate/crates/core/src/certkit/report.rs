use serde::{Deserialize, Serialize};

use super::{
    build_m, check_condition1, check_condition2, pd_oracle, synthesize_epsilons,
    verify_proposition1, NestedConstants,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// The recursive sufficient test passed (and therefore the exact one too).
    CertifiedSufficient,
    /// Only the exact leading-minor test passed.
    CertifiedNecessarySufficient,
    NotCertified,
    /// The constants violate a precondition of the construction.
    NotApplicable,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::CertifiedSufficient => "certified-sufficient",
            Verdict::CertifiedNecessarySufficient => "certified-necessary-sufficient",
            Verdict::NotCertified => "not-certified",
            Verdict::NotApplicable => "not-applicable",
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self, Verdict::CertifiedSufficient | Verdict::CertifiedNecessarySufficient)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub n: usize,
    pub condition1_pass: bool,
    pub condition1_slack: Vec<Option<f64>>,
    pub condition2_pass: bool,
    pub condition2_slack: Vec<Option<f64>>,
    /// c_1 … c_N from the recursive test.
    pub margins: Vec<Option<f64>>,
    pub mu: Vec<f64>,
    /// Row-major coupling matrix.
    pub coupling_matrix: Vec<Vec<f64>>,
    pub eigen_min: Option<f64>,
    pub eigen_positive_definite: bool,
    pub proposition1_min_eigenvalues: Option<Vec<f64>>,
    pub epsilons: Option<Vec<f64>>,
    pub verdict: Verdict,
    pub diagnostics: Vec<String>,
}

impl CertificateReport {
    fn not_applicable(n: usize, why: String) -> Self {
        CertificateReport {
            n,
            condition1_pass: false,
            condition1_slack: Vec::new(),
            condition2_pass: false,
            condition2_slack: Vec::new(),
            margins: Vec::new(),
            mu: Vec::new(),
            coupling_matrix: Vec::new(),
            eigen_min: None,
            eigen_positive_definite: false,
            proposition1_min_eigenvalues: None,
            epsilons: None,
            verdict: Verdict::NotApplicable,
            diagnostics: vec![why],
        }
    }
}

/// Runs both positivity tests, the eigenvalue oracle and, when the recursive
/// test passes, the margin check. With `margin` set, also synthesizes time
/// constants. Precondition violations yield a `not-applicable` report; only
/// internal inconsistencies are returned as errors.
pub fn certify(c: &NestedConstants, margin: Option<f64>) -> Result<CertificateReport> {
    if let Err(e) = c.validate() {
        return Ok(CertificateReport::not_applicable(c.n(), e.to_string()));
    }
    let cm = build_m(c)?;
    let c1 = check_condition1(c)?;
    let c2 = match check_condition2(c) {
        Ok(r) => r,
        Err(Error::NotApplicable(why)) => return Ok(CertificateReport::not_applicable(c.n(), why)),
        Err(e) => return Err(e),
    };
    let oracle = pd_oracle(&cm.m)?;
    let mut diagnostics = c1.diagnostics.clone();
    if let Some(i) = c2.failed_at {
        diagnostics.push(format!("recursive test fails at scale {i}"));
    }
    if c2.pass && !c1.pass {
        return Err(Error::Inconsistent("recursive test passed but leading-minor test failed".into()));
    }
    let band = super::PD_REL_TOL * oracle.norm;
    if (c1.pass && oracle.min_eigenvalue < -band) || (!c1.pass && oracle.min_eigenvalue > band) {
        return Err(Error::Inconsistent(format!(
            "leading-minor test says {} but smallest eigenvalue is {}",
            c1.pass, oracle.min_eigenvalue
        )));
    }
    let prop1 = if c2.pass {
        let margins: Vec<f64> = c2.margins.iter().map(|m| m.unwrap_or(f64::NAN)).collect();
        Some(verify_proposition1(c, &margins)?)
    } else {
        None
    };
    let epsilons = match margin {
        Some(m) => Some(synthesize_epsilons(c, m)?),
        None => None,
    };
    let verdict = if c2.pass {
        Verdict::CertifiedSufficient
    } else if c1.pass {
        Verdict::CertifiedNecessarySufficient
    } else {
        Verdict::NotCertified
    };
    Ok(CertificateReport {
        n: c.n(),
        condition1_pass: c1.pass,
        condition1_slack: c1.slack,
        condition2_pass: c2.pass,
        condition2_slack: c2.slack,
        margins: c2.margins,
        mu: cm.mu.clone(),
        coupling_matrix: cm.m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        eigen_min: Some(oracle.min_eigenvalue),
        eigen_positive_definite: oracle.positive_definite,
        proposition1_min_eigenvalues: prop1,
        epsilons,
        verdict,
        diagnostics,
    })
}
