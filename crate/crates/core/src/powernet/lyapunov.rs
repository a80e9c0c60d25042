use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::certificate::GainCertificate;
use super::model::ClosedLoop;
use super::network::block_rotation;
use crate::error::{Error, Result};

/// Value of the composite Lyapunov function and the distances to the target set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovValue {
    pub nu: f64,
    pub reference: f64,
    pub lines: f64,
    pub voltage: f64,
    pub current: f64,
    /// `‖P_S v̂‖`: phase misalignment.
    pub dist_s: f64,
    /// `√Σ (‖v̂_k‖ − v★_k)²`: amplitude error.
    pub dist_a: f64,
    /// `‖y_t‖ + ‖y_v‖ + ‖y_f‖`.
    pub fast_error: f64,
}

/// Composite Lyapunov function of a certified closed loop (zero load, all
/// stages enabled).
#[derive(Debug, Clone)]
pub struct LyapunovFunction {
    model: ClosedLoop,
    mu: [f64; 4],
    /// `½ η η_a α₁`.
    amplitude_weight: f64,
    projector: DMatrix<f64>,
    line_weight: DMatrix<f64>,
    /// Per node: `[c_f/K_pv, c_f/K_iv, K_pv/K_iv + K_iv/K_pv]`.
    voltage_blocks: Vec<[f64; 3]>,
    current_blocks: Vec<[f64; 3]>,
}

fn pi_block(storage: f64, kp: f64, ki: f64) -> [f64; 3] {
    [storage / kp, storage / ki, kp / ki + ki / kp]
}

fn block_pd(b: &[f64; 3]) -> bool {
    b[0] > 0.0 && b[0] * b[2] - b[1] * b[1] > 0.0
}

fn quad_block(b: &[f64; 3], e: &[f64], z: &[f64]) -> f64 {
    (0..2).map(|d| b[0] * e[d] * e[d] + 2.0 * b[1] * e[d] * z[d] + b[2] * z[d] * z[d]).sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl LyapunovFunction {
    /// `model` must carry the certificate's gains and consistent setpoints.
    pub fn new(model: &ClosedLoop, cert: &GainCertificate) -> Result<Self> {
        let mu = cert
            .mu
            .as_deref()
            .ok_or_else(|| Error::not_applicable("certificate has no Lyapunov weights (voltage-loop recursion failed)"))?;
        let alpha1 = cert.alpha1().ok_or_else(|| Error::not_applicable("certificate has no reference decrease rate"))?;
        let n = model.layout.nodes;
        let g = &model.gains;
        let sp = &model.setpoints;
        if cert.theta.len() != n {
            return Err(Error::input(format!("certificate has {} angles for {n} nodes", cert.theta.len())));
        }

        let mut s = DMatrix::zeros(2 * n, 2);
        for k in 0..n {
            let r = block_rotation(1, cert.theta[k]) * sp.v[k];
            s.view_mut((2 * k, 0), (2, 2)).copy_from(&r);
        }
        let total: f64 = sp.v.iter().map(|v| v * v).sum();
        let projector = DMatrix::identity(2 * n, 2 * n) - &s * s.transpose() / total;

        let net = &model.net;
        let rho = net.rho.unwrap_or(0.0);
        let l_t = DMatrix::from_diagonal(&DVector::from_iterator(
            2 * net.lines,
            net.inductance.iter().flat_map(|l| [*l, *l]),
        ));
        let b = &net.incidence2;
        let bn = &net.cycles2;
        let line_weight = (b.transpose() * b + &l_t * bn * bn.transpose() * &l_t) * rho;

        let mut voltage_blocks = Vec::with_capacity(n);
        let mut current_blocks = Vec::with_capacity(n);
        for k in 0..n {
            let c = &model.converters[k];
            let vb = pi_block(c.c_f, g.k_pv[k], g.k_iv[k]);
            let cb = pi_block(c.l_f, g.k_pf[k], g.k_if[k]);
            if !block_pd(&vb) {
                return Err(Error::input(format!("voltage PI gains at node {k} give an indefinite storage function")));
            }
            if !block_pd(&cb) {
                return Err(Error::input(format!("current PI gains at node {k} give an indefinite storage function")));
            }
            voltage_blocks.push(vb);
            current_blocks.push(cb);
        }
        Ok(LyapunovFunction {
            model: model.clone(),
            mu: [mu[0], mu[1], mu[2], mu[3]],
            amplitude_weight: 0.5 * g.eta * g.eta_a * alpha1,
            projector,
            line_weight,
            voltage_blocks,
            current_blocks,
        })
    }

    pub fn weights(&self) -> [f64; 4] {
        self.mu
    }

    pub fn projector(&self) -> &DMatrix<f64> {
        &self.projector
    }

    pub fn evaluate(&self, x: &[f64]) -> LyapunovValue {
        let m = &self.model;
        let lay = m.layout;
        let n = lay.nodes;
        let s = lay.view(x);
        let sp = &m.setpoints;

        let vh = DVector::from_column_slice(s.vhat);
        let pv = &self.projector * &vh;
        let mut amp = 0.0;
        let mut dist_a = 0.0;
        for k in 0..n {
            let m2 = s.vhat[2 * k].powi(2) + s.vhat[2 * k + 1].powi(2);
            amp += ((sp.v[k] * sp.v[k] - m2) / sp.v[k]).powi(2);
            dist_a += (m2.sqrt() - sp.v[k]).powi(2);
        }
        let reference = 0.5 * vh.dot(&pv) + self.amplitude_weight * amp;

        let y_t: Vec<f64> = m.phi_t(s.vhat).iter().zip(s.i_t).map(|(p, i)| i - p).collect();
        let yt = DVector::from_column_slice(&y_t);
        let lines = 0.5 * yt.dot(&(&self.line_weight * &yt));

        let e_v: Vec<f64> = s.v.iter().zip(s.vhat).map(|(v, h)| v - h).collect();
        let ifr = m.reference_current(x);
        let e_f: Vec<f64> = s.i_f.iter().zip(&ifr).map(|(i, r)| i - r).collect();
        let mut voltage = 0.0;
        let mut current = 0.0;
        for k in 0..n {
            let r = 2 * k..2 * k + 2;
            voltage += 0.5 * quad_block(&self.voltage_blocks[k], &e_v[r.clone()], &s.zeta_v[r.clone()]);
            current += 0.5 * quad_block(&self.current_blocks[k], &e_f[r.clone()], &s.zeta_f[r]);
        }
        let fast_error = norm(&y_t) + (norm(&e_v).powi(2) + norm(s.zeta_v).powi(2)).sqrt()
            + (norm(&e_f).powi(2) + norm(s.zeta_f).powi(2)).sqrt();
        LyapunovValue {
            nu: self.mu[0] * reference + self.mu[1] * lines + self.mu[2] * voltage + self.mu[3] * current,
            reference,
            lines,
            voltage,
            current,
            dist_s: pv.norm(),
            dist_a: dist_a.sqrt(),
            fast_error,
        }
    }
}
