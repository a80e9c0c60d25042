//! Three-scale example: a cubic slow state `x1`, a mid state `x2` and a fast
//! planar state `x3 = (x3a, x3b)` with gains `kappa` and `k`.
//!
//! The target set is the lift of `x1 ∈ {-2, 2}` through the steady-state maps,
//! i.e. the two points `(2, -1, (1, 0))` and `(-2, 1, (-1, 0))`. The origin is
//! an unstable equilibrium.

use std::io::{self, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certkit::{check_condition1, check_condition2, compute_mu, NestedConstants};
use crate::error::{Error, Result};
use crate::linalg::max_real_eigenvalue;
use crate::sim::VectorField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    pub kappa: f64,
    pub k: f64,
}

impl ToyParams {
    pub fn new(kappa: f64, k: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) || !(k > 0.0 && k.is_finite()) {
            return Err(Error::input(format!("gains must be positive and finite, got kappa = {kappa}, k = {k}")));
        }
        Ok(ToyParams { kappa, k })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ToyState {
    pub x1: f64,
    pub x2: f64,
    pub x3: [f64; 2],
}

impl ToyState {
    pub fn new(x1: f64, x2: f64, x3: [f64; 2]) -> Self {
        ToyState { x1, x2, x3 }
    }

    pub fn from_slice(x: &[f64]) -> Self {
        ToyState { x1: x[0], x2: x[1], x3: [x[2], x[3]] }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x1, self.x2, self.x3[0], self.x3[1]]
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// Right-hand side of the three-scale system.
pub fn field(p: &ToyParams, s: &ToyState) -> ToyState {
    let ToyParams { kappa, k } = *p;
    let [a, b] = s.x3;
    ToyState {
        x1: -0.25 * s.x1.powi(3) - 2.0 * s.x2,
        x2: s.x1 + 3.0 * s.x2 + a - 4.0 * b,
        x3: [
            -kappa * a - 4.0 * (1.0 - kappa) * b - kappa * ((1.0 + k) * s.x1 + (2.0 * k + 3.0) * s.x2),
            -b,
        ],
    }
}

/// Steady-state maps `phi2(x1)` and `phi3(x1, x2)`.
pub fn steady_maps(p: &ToyParams, x1: f64, x2: f64) -> (f64, [f64; 2]) {
    let phi2 = -0.5 * x1;
    let phi3 = [-((1.0 + p.k) * x1 + (2.0 * p.k + 3.0) * x2), 0.0];
    (phi2, phi3)
}

/// Reduced slow dynamics with both faster scales at their maps.
pub fn reduced_slow(x1: f64) -> f64 {
    -x1 * (0.25 * x1 * x1 - 1.0)
}

/// Reduced mid-scale dynamics with `x3` at its map.
pub fn reduced_mid(p: &ToyParams, x1: f64, x2: f64) -> f64 {
    -p.k * (x1 + 2.0 * x2)
}

/// Coupling constants of the example for the comparison functions
/// `psi3 = |[1 -4] y3|` and `psi3' = |[0 1] y3|`.
pub fn constants(p: &ToyParams) -> NestedConstants {
    let ToyParams { kappa, k } = *p;
    NestedConstants::new(
        3,
        vec![1.0, 1.0, 1.0],
        vec![0.0, 0.0, 1.0],
        vec![2.0, 1.0 / (2.0 * k)],
        [
            (2, 1, 1, 1.0 / (4.0 * k)),
            (2, 2, 1, -1.0 / (2.0 * k)),
            (3, 1, 1, (k + 1.0) / kappa),
            (3, 2, 1, 2.0 * (1.0 + k) / kappa),
            (3, 2, 2, 2.0 * k * (2.0 * k + 3.0) / kappa),
            (3, 3, 2, (2.0 * k + 3.0) / kappa),
        ],
    )
    .expect("toy constants are structurally valid")
}

/// Closed form of the second margin, `(8k + 5 - sqrt(64k² + 48k + 25)) / (16k)`.
pub fn c2_closed_form(k: f64) -> f64 {
    (8.0 * k + 5.0 - (64.0 * k * k + 48.0 * k + 25.0).sqrt()) / (16.0 * k)
}

/// Analytic Jacobian of [`field`].
pub fn jacobian(p: &ToyParams, s: &ToyState) -> DMatrix<f64> {
    let ToyParams { kappa, k } = *p;
    DMatrix::from_row_slice(
        4,
        4,
        &[
            -0.75 * s.x1 * s.x1, -2.0, 0.0, 0.0,
            1.0, 3.0, 1.0, -4.0,
            -kappa * (1.0 + k), -kappa * (2.0 * k + 3.0), -kappa, -4.0 * (1.0 - kappa),
            0.0, 0.0, 0.0, -1.0,
        ],
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyLyapunov {
    pub nu: f64,
    pub v: [f64; 3],
    pub psi: [f64; 3],
    pub psi3_prime: f64,
    /// Exact time derivative of `nu` along [`field`].
    pub dnu: f64,
}

/// Composite Lyapunov function with weights `mu` (from [`compute_mu`]).
pub fn lyapunov(p: &ToyParams, s: &ToyState, mu: &[f64]) -> ToyLyapunov {
    let ToyParams { kappa, k } = *p;
    let (phi2, phi3) = steady_maps(p, s.x1, s.x2);
    let y2 = s.x2 - phi2;
    let y3 = [s.x3[0] - phi3[0], s.x3[1] - phi3[1]];
    let w = 0.25 * s.x1 * s.x1 - 1.0;
    let lin = y3[0] - 4.0 * y3[1];
    let v1 = w * w;
    let v2 = y2 * y2 / (4.0 * k);
    // y3ᵀ P3 y3 with P3 = [[1, -4], [-4, 16]] / kappa + diag(0, 1)
    let v3 = 0.5 * (lin * lin / kappa + y3[1] * y3[1]);

    let d = field(p, s);
    let dv1 = 2.0 * w * 0.5 * s.x1 * d.x1;
    let dy2 = d.x2 + 0.5 * d.x1;
    let dv2 = y2 * dy2 / (2.0 * k);
    let dy3 = [d.x3[0] + (1.0 + k) * d.x1 + (2.0 * k + 3.0) * d.x2, d.x3[1]];
    let dlin = dy3[0] - 4.0 * dy3[1];
    let dv3 = lin * dlin / kappa + y3[1] * dy3[1];

    ToyLyapunov {
        nu: mu[0] * v1 + mu[1] * v2 + mu[2] * v3,
        v: [v1, v2, v3],
        psi: [s.x1.abs() * w.abs(), y2.abs(), lin.abs()],
        psi3_prime: y3[1].abs(),
        dnu: mu[0] * dv1 + mu[1] * dv2 + mu[2] * dv3,
    }
}

/// Euclidean distance to the nearer of the two target points.
pub fn distance_to_target(s: &ToyState) -> f64 {
    [1.0, -1.0]
        .iter()
        .map(|&sg| {
            let t = [2.0 * sg, -sg, sg, 0.0];
            s.to_vec().iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// The example as an integrable vector field, optionally with per-scale time
/// constants: scale i evolves as `f_i / eps[i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyModel {
    pub params: ToyParams,
    pub eps: [f64; 3],
}

impl ToyModel {
    pub fn new(params: ToyParams) -> Self {
        ToyModel { params, eps: [1.0; 3] }
    }

    pub fn with_epsilons(params: ToyParams, eps: [f64; 3]) -> Self {
        ToyModel { params, eps }
    }

    fn row_scale(&self, row: usize) -> f64 {
        1.0 / self.eps[match row {
            0 => 0,
            1 => 1,
            _ => 2,
        }]
    }
}

impl VectorField for ToyModel {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let d = field(&self.params, &ToyState::from_slice(x)).to_vec();
        for (i, v) in d.into_iter().enumerate() {
            dx[i] = v * self.row_scale(i);
        }
    }

    fn jacobian(&self, _t: f64, x: &[f64]) -> Option<DMatrix<f64>> {
        let mut j = jacobian(&self.params, &ToyState::from_slice(x));
        for r in 0..4 {
            let s = self.row_scale(r);
            j.row_mut(r).scale_mut(s);
        }
        Some(j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "P3")]
    P3,
    #[serde(rename = "P4-only")]
    P4Only,
    #[serde(rename = "P5-unknown")]
    P5Unknown,
    #[serde(rename = "P6-unstable")]
    P6Unstable,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::P3 => "P3",
            Region::P4Only => "P4-only",
            Region::P5Unknown => "P5-unknown",
            Region::P6Unstable => "P6-unstable",
        }
    }
}

/// Classification of one parameter point with the raw checker output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLabel {
    pub region: Region,
    pub condition1: bool,
    pub condition2: bool,
    /// Smallest defined leading-minor slack.
    pub slack_c1: Option<f64>,
    /// Smallest defined recursive-test slack.
    pub slack_c2: Option<f64>,
    /// Largest real part of the linearization at `x1 = 2`.
    pub max_real_eigenvalue: f64,
}

fn min_defined(v: &[Option<f64>]) -> Option<f64> {
    v.iter().flatten().copied().reduce(f64::min)
}

pub fn classify(p: &ToyParams) -> Result<RegionLabel> {
    let c = constants(p);
    let c1 = check_condition1(&c)?;
    let c2 = check_condition2(&c)?;
    let eq = ToyState::new(2.0, -1.0, [1.0, 0.0]);
    let lam = max_real_eigenvalue(&jacobian(p, &eq))?;
    let region = if c2.pass {
        Region::P3
    } else if c1.pass {
        Region::P4Only
    } else if lam > 1e-9 {
        Region::P6Unstable
    } else {
        Region::P5Unknown
    };
    Ok(RegionLabel {
        region,
        condition1: c1.pass,
        condition2: c2.pass,
        slack_c1: min_defined(&c1.slack),
        slack_c2: min_defined(&c2.slack),
        max_real_eigenvalue: lam,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kappa: f64,
    pub k: f64,
    pub label: RegionLabel,
}

/// Grid coordinates `lo + (hi - lo) (i + 1) / n` for `i in 0..n`, so the
/// interval is half-open at `lo`.
fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * (i + 1) as f64 / n as f64).collect()
}

/// Classifies a `w × h` grid over `kappa ∈ (lo, hi]`, `k ∈ (lo, hi]`.
/// Rows are ordered by `k` then `kappa`.
pub fn sweep(kappa: (f64, f64), k: (f64, f64), grid: (usize, usize)) -> Result<Vec<SweepRow>> {
    let (w, h) = grid;
    if w == 0 || h == 0 {
        return Err(Error::input("sweep grid is empty"));
    }
    for (name, (lo, hi)) in [("kappa", kappa), ("k", k)] {
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::input(format!("{name} range {lo}:{hi} must satisfy 0 <= lo < hi")));
        }
    }
    let ks = axis(k.0, k.1, h);
    let kappas = axis(kappa.0, kappa.1, w);
    let points: Vec<(f64, f64)> = ks.iter().flat_map(|&kk| kappas.iter().map(move |&ka| (ka, kk))).collect();
    points
        .par_iter()
        .map(|&(ka, kk)| {
            let label = classify(&ToyParams::new(ka, kk)?)?;
            Ok(SweepRow { kappa: ka, k: kk, label })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "kappa,k,label,slack_c1,slack_c2")?;
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.kappa,
            r.k,
            r.label.region.as_str(),
            opt(r.label.slack_c1),
            opt(r.label.slack_c2)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Leading-minor test.
    Condition1,
    /// Recursive sufficient test.
    Condition2,
}

fn passes(which: Boundary, kappa: f64, k: f64) -> Result<bool> {
    let c = constants(&ToyParams::new(kappa, k)?);
    Ok(match which {
        Boundary::Condition1 => check_condition1(&c)?.pass,
        Boundary::Condition2 => check_condition2(&c)?.pass,
    })
}

/// Smallest `kappa` at which the chosen test passes for fixed `k`, found by
/// bracketing with doubling and then bisection to absolute tolerance `tol`.
pub fn boundary_kappa(k: f64, which: Boundary, tol: f64) -> Result<f64> {
    let mut lo = 1.0;
    let mut hi = 1.0;
    if passes(which, hi, k)? {
        while passes(which, lo, k)? {
            lo *= 0.5;
            if lo < 1e-12 {
                return Err(Error::numerical(format!("test passes for every kappa down to {lo} at k = {k}")));
            }
        }
        hi = 2.0 * lo;
    } else {
        while !passes(which, hi, k)? {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::numerical(format!("no passing kappa below {hi} at k = {k}")));
            }
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if passes(which, mid, k)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Convenience for `compute_mu(constants(p))`.
pub fn weights(p: &ToyParams) -> Vec<f64> {
    compute_mu(&constants(p)).expect("toy constants are valid for positive gains")
}
