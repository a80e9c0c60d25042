use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::flow::{solve_power_flow, OperatingSolution};
use super::model::{setpoint_matrix, ClosedLoop};
use super::network::Network;
use super::spec::{Gains, PowerSystemSpec, Setpoints};
use crate::certkit::{condition2_step, strictly_greater, StepInput, StepOutcome};
use crate::error::{Error, Result};
use crate::linalg::{max_real_eigenvalue, spectral_norm};

/// Fraction of the loading headroom given to `c_L` and to `eta_a` each.
pub const HEADROOM_SHARE: f64 = 0.45;
/// `eta` starts at this fraction of its upper bound.
pub const ETA_SHARE: f64 = 0.5;
/// Cap on doublings (or halvings) in the synthesis loops.
pub const MAX_DOUBLINGS: usize = 60;

/// Network loading and time-scale separation of the reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingCheck {
    pub c_l: f64,
    pub lambda2: f64,
    pub d_max: f64,
    /// Per-node branch loading `Σ cos κ |p_jk| / v_k² + sin κ |q_jk| / v_k²`.
    pub loading: Vec<f64>,
    /// `v_min² / (2 v_max²) λ₂ − c_L`.
    pub loading_bound: f64,
    /// `min_k (loading_bound − loading_k − η_a)`.
    pub loading_slack: f64,
    pub eta_bound: f64,
    /// `eta_bound − η`.
    pub eta_slack: f64,
    /// Every line angle within ±π/2.
    pub angles_ok: bool,
    pub pass: bool,
}

/// Voltage-loop gain check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageLoopCheck {
    /// `c_L / (5 η ‖𝒦 − 𝓛‖²)`.
    pub alpha1: f64,
    pub k_minus_l_norm: f64,
    pub y_net_norm: f64,
    pub resistive_norm: f64,
    pub step: StepOutcome,
    pub c2: f64,
    pub gain_lhs: f64,
    /// Undefined when the recursive step fails.
    pub gain_rhs: Option<f64>,
    /// `gain_rhs − gain_lhs`.
    pub slack: Option<f64>,
    pub pass: bool,
}

/// Current-loop gain check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentLoopCheck {
    pub alpha3: f64,
    pub beta31: f64,
    pub step: StepOutcome,
    pub c3: f64,
    pub beta34: f64,
    pub beta41: f64,
    pub beta42: f64,
    pub beta43: f64,
    pub gamma4: f64,
    pub gain_lhs: f64,
    pub gain_rhs: Option<f64>,
    pub slack: Option<f64>,
    pub pass: bool,
}

/// Outcome of the three gain checks at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    pub gains: Gains,
    /// Setpoints consistent with the power flow, used for `𝒦`.
    pub setpoints: Setpoints,
    pub theta: Vec<f64>,
    pub loading: LoadingCheck,
    pub voltage_loop: Option<VoltageLoopCheck>,
    pub current_loop: Option<CurrentLoopCheck>,
    /// Lyapunov weights of the reference, line, voltage and current scales.
    pub mu: Option<Vec<f64>>,
    pub pass: bool,
    pub diagnostics: Vec<String>,
}

impl GainCertificate {
    pub fn alpha1(&self) -> Option<f64> {
        self.voltage_loop.as_ref().map(|v| v.alpha1)
    }
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::INFINITY, f64::min)
}

fn v_ratio(v: &[f64]) -> f64 {
    let lo = min_of(v.iter().copied());
    let hi = max_of(v.iter().copied());
    lo * lo / (2.0 * hi * hi)
}

/// Per-node branch loading seen by the loading inequality.
pub fn branch_loading(net: &Network, sol: &OperatingSolution) -> Vec<f64> {
    let (s, c) = net.kappa.sin_cos();
    let mut out = vec![0.0; net.nodes];
    for b in &sol.branches {
        for (node, p, q) in [(b.from, b.p_from, b.q_from), (b.to, b.p_to, b.q_to)] {
            let v2 = sol.v[node] * sol.v[node];
            out[node] += (c * p.abs() + s * q.abs()) / v2;
        }
    }
    out
}

/// Block-diagonal `𝒦` of the reference model.
pub fn setpoint_block(kappa: f64, sp: &Setpoints) -> DMatrix<f64> {
    let n = sp.v.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        let b = setpoint_matrix(kappa, sp.p[k], sp.q[k], sp.v[k]);
        for i in 0..2 {
            for j in 0..2 {
                m[(2 * k + i, 2 * k + j)] = b[i][j];
            }
        }
    }
    m
}

fn lambda2(net: &Network) -> Result<f64> {
    net.lambda2
        .ok_or_else(|| Error::not_applicable("a single node has no algebraic connectivity; the gain conditions need at least one line"))
}

/// Loading and `eta` inequalities for a given margin `c_l`.
pub fn check_loading(
    net: &Network,
    sol: &OperatingSolution,
    eta: f64,
    eta_a: f64,
    c_l: f64,
) -> Result<LoadingCheck> {
    if !(c_l > 0.0 && c_l.is_finite()) {
        return Err(Error::input(format!("load margin c_L = {c_l} must be positive")));
    }
    let l2 = lambda2(net)?;
    let rho = net.rho.ok_or_else(|| Error::not_applicable("network has no lines"))?;
    let loading = branch_loading(net, sol);
    let loading_bound = v_ratio(&sol.v) * l2 - c_l;
    let loading_slack = min_of(loading.iter().map(|l| loading_bound - (l + eta_a)));
    let apparent = max_of((0..net.nodes).map(|k| {
        let v2 = sol.v[k] * sol.v[k];
        sol.p[k].hypot(sol.q[k]) / v2
    }));
    let d = net.d_max;
    let eta_bound = c_l / (2.0 * rho * d * (c_l + 5.0 * apparent + 10.0 * d));
    let angles_ok = sol.branches.iter().all(|b| b.theta.abs() <= FRAC_PI_2);
    let pass = angles_ok
        && loading.iter().all(|l| strictly_greater(loading_bound, l + eta_a))
        && strictly_greater(eta_bound, eta);
    Ok(LoadingCheck {
        c_l,
        lambda2: l2,
        d_max: d,
        loading,
        loading_bound,
        loading_slack,
        eta_bound,
        eta_slack: eta_bound - eta,
        angles_ok,
        pass,
    })
}

/// Largest per-node `‖Y_f,k − K_pv,k I‖`, optionally divided by `c_f,k`.
fn filter_offset_norm(spec: &PowerSystemSpec, g: &Gains, per_capacitance: bool) -> f64 {
    max_of(spec.converters.iter().enumerate().map(|(k, c)| {
        let n = (c.g_f - g.k_pv[k]).hypot(spec.omega0 * c.c_f);
        if per_capacitance {
            n / c.c_f
        } else {
            n
        }
    }))
}

/// Voltage-loop check given `eta` and `c_l`. Errors when an integral gain does
/// not exceed the filter capacitance.
pub fn check_voltage_loop(
    spec: &PowerSystemSpec,
    net: &Network,
    kmat: &DMatrix<f64>,
    g: &Gains,
    c_l: f64,
) -> Result<VoltageLoopCheck> {
    if let Some(k) = (0..net.nodes).find(|&k| g.k_iv[k] <= spec.converters[k].c_f) {
        return Err(Error::input(format!(
            "k_iv[{k}] = {} must exceed the filter capacitance {}",
            g.k_iv[k], spec.converters[k].c_f
        )));
    }
    if !(g.eta > 0.0) {
        return Err(Error::not_applicable("eta = 0 freezes the reference model"));
    }
    let rho = net.rho.ok_or_else(|| Error::not_applicable("network has no lines"))?;
    let k_minus_l_norm = spectral_norm(&(kmat - &net.rotated));
    let alpha1 = c_l / (5.0 * g.eta * k_minus_l_norm * k_minus_l_norm);
    let y_net_norm = net.y_net_norm();
    let coupling = rho * y_net_norm;
    let step = condition2_step(&StepInput {
        alpha: 1.0,
        gamma: g.eta * coupling,
        beta_back: coupling,
        beta_fwd_prev: 1.0 / k_minus_l_norm,
        beta_sq: coupling * coupling,
        c_prev: alpha1,
    })?;
    let resistive_norm = net.resistive_norm();
    let ratio = max_of((0..net.nodes).map(|k| g.k_iv[k] / g.k_pv[k]));
    let stiffness = min_of((0..net.nodes).map(|k| g.k_iv[k] / spec.converters[k].c_f));
    let gain_lhs = (1.0 + ratio) / (stiffness - 1.0);
    let gain_rhs = step.pass.then(|| 4.0 * g.eta * step.c / (resistive_norm * (1.0 + 4.0 * g.eta * g.eta)));
    let pass = gain_rhs.is_some_and(|rhs| strictly_greater(rhs, gain_lhs));
    Ok(VoltageLoopCheck {
        alpha1,
        k_minus_l_norm,
        y_net_norm,
        resistive_norm,
        c2: step.c,
        step,
        gain_lhs,
        gain_rhs,
        slack: gain_rhs.map(|rhs| rhs - gain_lhs),
        pass,
    })
}

/// Current-loop check given the voltage-loop outcome.
pub fn check_current_loop(
    spec: &PowerSystemSpec,
    net: &Network,
    g: &Gains,
    voltage: &VoltageLoopCheck,
) -> Result<CurrentLoopCheck> {
    if let Some(k) = (0..net.nodes).find(|&k| g.k_if[k] <= spec.converters[k].l_f) {
        return Err(Error::input(format!(
            "k_if[{k}] = {} must exceed the filter inductance {}",
            g.k_if[k], spec.converters[k].l_f
        )));
    }
    let n = net.nodes;
    let cf = |k: usize| spec.converters[k].c_f;
    let alpha3 = 1.0 - max_of((0..n).map(|k| cf(k) / g.k_iv[k]));
    let beta31 = max_of((0..n).map(|k| cf(k) / g.k_iv[k] + cf(k) / g.k_pv[k]));
    let beta32 = g.eta * beta31;
    let step = condition2_step(&StepInput {
        alpha: alpha3,
        gamma: 0.0,
        beta_back: beta32,
        beta_fwd_prev: voltage.resistive_norm,
        beta_sq: 0.25 * beta31 * beta31 + beta32 * beta32,
        c_prev: voltage.c2,
    })?;
    let c3 = step.c;
    let beta34 = max_of((0..n).map(|k| 1.0 / g.k_iv[k] + 1.0 / g.k_pv[k]));
    let kpv_max = max_of(g.k_pv.iter().copied());
    let beta41 = kpv_max;
    let beta42 = spec.omega0 / net.kappa.sin() + g.eta * kpv_max;
    let beta43 = filter_offset_norm(spec, g, false) * max_of((0..n).map(|k| (g.k_pv[k] + g.k_iv[k]) / cf(k)))
        + net.inductive_norm()
        + max_of(g.k_iv.iter().copied());
    let gamma4 = filter_offset_norm(spec, g, true);
    let ratio = max_of((0..n).map(|k| g.k_if[k] / g.k_pf[k]));
    let stiffness = min_of((0..n).map(|k| g.k_if[k] / spec.converters[k].l_f));
    let gain_lhs = (1.0 + ratio) / (stiffness - 1.0);
    let gain_rhs = step.pass.then(|| {
        4.0 * c3 / ((beta34 / beta43) * (beta41 * beta41 + beta42 * beta42 + 4.0 * beta43 * beta43) + c3 * gamma4)
    });
    let pass = gain_rhs.is_some_and(|rhs| strictly_greater(rhs, gain_lhs));
    Ok(CurrentLoopCheck {
        alpha3,
        beta31,
        step,
        c3,
        beta34,
        beta41,
        beta42,
        beta43,
        gamma4,
        gain_lhs,
        gain_rhs,
        slack: gain_rhs.map(|rhs| rhs - gain_lhs),
        pass,
    })
}

/// Lyapunov weights `μ` from the coupling constants of the four scales.
fn weights(spec: &PowerSystemSpec, net: &Network, g: &Gains, v: &VoltageLoopCheck, c: &CurrentLoopCheck) -> Vec<f64> {
    let rho = net.rho.unwrap_or(0.0);
    let beta12 = 1.0 / v.k_minus_l_norm;
    let beta21 = rho * v.y_net_norm;
    let beta23 = v.resistive_norm;
    let beta32 = g.eta * c.beta31;
    let c_beta = max_of((0..net.nodes).map(|k| {
        let l = spec.converters[k].l_f;
        l / g.k_if[k] + l / g.k_pf[k]
    }));
    let mu2 = beta12 / beta21;
    let mu3 = mu2 * beta23 / beta32;
    let mu4 = mu3 * c.beta34 / (c_beta * c.beta43);
    vec![1.0, mu2, mu3, mu4]
}

struct Prepared {
    net: Network,
    solution: OperatingSolution,
    setpoints: Setpoints,
    kmat: DMatrix<f64>,
    diagnostics: Vec<String>,
}

fn prepare(spec: &PowerSystemSpec) -> Result<Prepared> {
    spec.validate()?;
    let net = Network::new(spec);
    lambda2(&net)?;
    let solution = solve_power_flow(spec)?;
    let mut diagnostics = solution.warnings.clone();
    let q_gap = max_of(solution.reactive_mismatch.iter().map(|x| x.abs()));
    if q_gap > 1e-6 * (1.0 + max_of(spec.setpoints.q.iter().map(|x| x.abs()))) {
        diagnostics.push(format!(
            "reactive setpoints replaced by power-flow values (largest change {q_gap:.3e} var)"
        ));
    }
    let setpoints = solution.consistent_setpoints();
    let kmat = setpoint_block(net.kappa, &setpoints);
    Ok(Prepared { net, solution, setpoints, kmat, diagnostics })
}

fn assemble(spec: &PowerSystemSpec, pre: Prepared, g: &Gains, c_l: f64) -> Result<GainCertificate> {
    let Prepared { net, solution, setpoints, kmat, mut diagnostics } = pre;
    let loading = check_loading(&net, &solution, g.eta, g.eta_a, c_l)?;
    if !loading.angles_ok {
        diagnostics.push("a line angle exceeds pi/2".into());
    }
    let voltage = check_voltage_loop(spec, &net, &kmat, g, c_l)?;
    let current = if voltage.step.pass { Some(check_current_loop(spec, &net, g, &voltage)?) } else { None };
    let mu = current.as_ref().map(|c| weights(spec, &net, g, &voltage, c));
    if !loading.pass {
        diagnostics.push(format!(
            "loading or eta bound violated (loading slack {:.3e}, eta slack {:.3e})",
            loading.loading_slack, loading.eta_slack
        ));
    }
    if !voltage.pass {
        diagnostics.push(match voltage.gain_rhs {
            Some(rhs) => format!("voltage-loop gains fail (lhs {:.3e}, rhs {rhs:.3e})", voltage.gain_lhs),
            None => "voltage-loop recursive step fails".to_string(),
        });
    }
    match &current {
        Some(c) if !c.pass => {
            diagnostics.push(match c.gain_rhs {
                Some(rhs) => format!("current-loop gains fail (lhs {:.3e}, rhs {rhs:.3e})", c.gain_lhs),
                None => "current-loop recursive step fails".to_string(),
            })
        }
        None => diagnostics.push("voltage-loop recursion failed; current loop not evaluated".into()),
        _ => {}
    }
    let pass = loading.pass && voltage.pass && current.as_ref().is_some_and(|c| c.pass);
    Ok(GainCertificate {
        gains: g.clone(),
        setpoints,
        theta: solution.theta,
        loading,
        voltage_loop: Some(voltage),
        current_loop: current,
        mu,
        pass,
        diagnostics,
    })
}

/// Largest load margin the loading inequality admits for the given gains,
/// shrunk by a factor 0.99 to keep the inequality strict.
fn default_margin(net: &Network, sol: &OperatingSolution, eta_a: f64) -> Result<f64> {
    let l2 = lambda2(net)?;
    let worst = max_of(branch_loading(net, sol).into_iter());
    let room = v_ratio(&sol.v) * l2 - worst - eta_a;
    if room > 0.0 {
        Ok(0.99 * room)
    } else {
        Err(Error::not_applicable(format!(
            "no positive load margin: loading plus eta_a exceeds the connectivity bound by {:.3e}",
            -room
        )))
    }
}

/// Checks the gains stored in `spec`. `c_l` defaults to the largest admissible margin.
pub fn certify_gains(spec: &PowerSystemSpec, c_l: Option<f64>) -> Result<GainCertificate> {
    let g = spec.gains()?.clone();
    let pre = prepare(spec)?;
    let c_l = match c_l {
        Some(c) => c,
        None => default_margin(&pre.net, &pre.solution, g.eta_a)?,
    };
    assemble(spec, pre, &g, c_l)
}

/// Constructs certified gains for a spec (any gains in it are ignored).
///
/// The loading headroom `R = v_min²/(2 v_max²) λ₂ − max loading` is split as
/// `c_L = η_a = 0.45 R`; `η` starts at half its bound and is halved until the
/// voltage-loop recursion holds. The PI gains keep `K_i = K_p` and double
/// `K_i / c_f` (then `K_i / ℓ_f`) from 2 until the gain inequalities hold.
pub fn synthesize_gains(spec: &PowerSystemSpec) -> Result<GainCertificate> {
    let bare = PowerSystemSpec { gains: None, ..spec.clone() };
    let pre = prepare(&bare)?;
    let n = pre.net.nodes;
    let l2 = lambda2(&pre.net)?;
    let worst = max_of(branch_loading(&pre.net, &pre.solution).into_iter());
    let headroom = v_ratio(&pre.solution.v) * l2 - worst;
    if !(headroom > 0.0) {
        return Err(Error::not_applicable(format!(
            "network too heavily loaded: branch loading {worst:.4e} exceeds the connectivity bound"
        )));
    }
    let c_l = HEADROOM_SHARE * headroom;
    let eta_a = c_l;
    let bound = check_loading(&pre.net, &pre.solution, 0.0, eta_a, c_l)?.eta_bound;

    let voltage_gains = |xi: f64| -> (Vec<f64>, Vec<f64>) {
        let ki: Vec<f64> = spec.converters.iter().map(|c| xi * c.c_f).collect();
        (ki.clone(), ki)
    };
    let current_gains = |xi: f64| -> (Vec<f64>, Vec<f64>) {
        let ki: Vec<f64> = spec.converters.iter().map(|c| xi * c.l_f).collect();
        (ki.clone(), ki)
    };
    let (k_pv, k_iv) = voltage_gains(2.0);
    let (k_pf, k_if) = current_gains(2.0);
    let mut g = Gains { eta: ETA_SHARE * bound, eta_a, k_pv, k_iv, k_pf, k_if };

    let mut halvings = 0;
    loop {
        let v = check_voltage_loop(&bare, &pre.net, &pre.kmat, &g, c_l)?;
        if v.step.pass {
            break;
        }
        halvings += 1;
        if halvings > MAX_DOUBLINGS {
            return Err(Error::numerical("eta halving cap reached without a positive voltage-loop margin"));
        }
        g.eta *= 0.5;
    }

    let mut xi = 2.0;
    let mut voltage = None;
    for _ in 0..=MAX_DOUBLINGS {
        (g.k_pv, g.k_iv) = voltage_gains(xi);
        let v = check_voltage_loop(&bare, &pre.net, &pre.kmat, &g, c_l)?;
        if v.pass {
            voltage = Some(v);
            break;
        }
        xi *= 2.0;
    }
    let voltage = voltage.ok_or_else(|| Error::numerical("voltage gain doubling cap reached"))?;

    let mut xi = 2.0;
    let mut found = false;
    for _ in 0..=MAX_DOUBLINGS {
        (g.k_pf, g.k_if) = current_gains(xi);
        if check_current_loop(&bare, &pre.net, &g, &voltage)?.pass {
            found = true;
            break;
        }
        xi *= 2.0;
    }
    if !found {
        return Err(Error::numerical("current gain doubling cap reached"));
    }
    debug_assert_eq!(g.k_pv.len(), n);
    let cert = assemble(&bare, pre, &g, c_l)?;
    if !cert.pass {
        return Err(Error::Inconsistent(format!("synthesized gains fail re-certification: {:?}", cert.diagnostics)));
    }
    Ok(cert)
}

/// Spectral abscissa of the closed loop linearized at the zero state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginSpectrum {
    pub max_real: f64,
    /// Set when `eta = 0`: the reference block is identically zero.
    pub degenerate: bool,
}

pub fn instability_at_origin(spec: &PowerSystemSpec) -> Result<OriginSpectrum> {
    let model = ClosedLoop::new(spec)?;
    let j = model.jacobian_at(&vec![0.0; model.layout.dim()]);
    Ok(OriginSpectrum { max_real: max_real_eigenvalue(&j)?, degenerate: model.gains.eta == 0.0 })
}
