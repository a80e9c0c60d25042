use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::flow::{solve_power_flow, OperatingSolution};
use super::network::Network;
use super::spec::{Converter, Gains, PowerSystemSpec, Setpoints};
use crate::error::{Error, Result};
use crate::linalg::rot2;
use crate::sim::VectorField;

/// Which parts of a converter's control are running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Converter off: zero modulation voltage, the filter stays connected as
    /// a passive RLC branch; all controller states frozen.
    Disabled,
    /// Current loop only, tracking `i_f^r = Y_f v`; reference and voltage
    /// integrator frozen.
    CurrentOnly,
    /// Reference model and voltage loop active, without the output-current
    /// feed-forward.
    #[serde(alias = "reference+voltage", alias = "+reference+voltage")]
    ReferenceVoltage,
    /// Complete controller.
    #[default]
    #[serde(alias = "feedforward", alias = "+feedforward")]
    Full,
}

impl Stage {
    fn reference_active(self) -> bool {
        matches!(self, Stage::ReferenceVoltage | Stage::Full)
    }
}

/// Offsets of the stacked state `(v̂, i_t, v, ζ_v, i_f, ζ_f)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub nodes: usize,
    pub lines: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        10 * self.nodes + 2 * self.lines
    }
    pub fn vhat(&self) -> usize {
        0
    }
    pub fn i_t(&self) -> usize {
        2 * self.nodes
    }
    pub fn v(&self) -> usize {
        2 * self.nodes + 2 * self.lines
    }
    pub fn zeta_v(&self) -> usize {
        self.v() + 2 * self.nodes
    }
    pub fn i_f(&self) -> usize {
        self.v() + 4 * self.nodes
    }
    pub fn zeta_f(&self) -> usize {
        self.v() + 6 * self.nodes
    }

    /// CSV column names, 1-based node and line numbers.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        let mut block = |prefix: &str, count: usize| {
            for i in 1..=count {
                out.push(format!("{prefix}{i}_d"));
                out.push(format!("{prefix}{i}_q"));
            }
        };
        block("vhat", self.nodes);
        block("it", self.lines);
        block("v", self.nodes);
        block("zv", self.nodes);
        block("if", self.nodes);
        block("zf", self.nodes);
        out
    }
}

/// Views of the state blocks.
pub struct StateView<'a> {
    pub vhat: &'a [f64],
    pub i_t: &'a [f64],
    pub v: &'a [f64],
    pub zeta_v: &'a [f64],
    pub i_f: &'a [f64],
    pub zeta_f: &'a [f64],
}

impl Layout {
    pub fn view<'a>(&self, x: &'a [f64]) -> StateView<'a> {
        let n2 = 2 * self.nodes;
        StateView {
            vhat: &x[self.vhat()..self.vhat() + n2],
            i_t: &x[self.i_t()..self.i_t() + 2 * self.lines],
            v: &x[self.v()..self.v() + n2],
            zeta_v: &x[self.zeta_v()..self.zeta_v() + n2],
            i_f: &x[self.i_f()..self.i_f() + n2],
            zeta_f: &x[self.zeta_f()..self.zeta_f() + n2],
        }
    }
}

#[inline]
fn mul(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// `J v` with `J` the quarter-turn rotation.
#[inline]
fn quarter(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

#[inline]
fn pair(x: &[f64], k: usize) -> [f64; 2] {
    [x[2 * k], x[2 * k + 1]]
}

/// Active and reactive power `p = vᵀ i`, `q = vᵀ J i` per node.
pub fn node_powers(v: &[f64], i_o: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = v.len() / 2;
    (0..n)
        .map(|k| {
            let (vk, ik) = (pair(v, k), pair(i_o, k));
            let ji = quarter(ik);
            (vk[0] * ik[0] + vk[1] * ik[1], vk[0] * ji[0] + vk[1] * ji[1])
        })
        .unzip()
}

/// dVOC gain matrix `R(kappa) [[p, q], [-q, p]] / v²`.
pub fn setpoint_matrix(kappa: f64, p: f64, q: f64, v: f64) -> [[f64; 2]; 2] {
    let r = rot2(kappa);
    let s = [[p / (v * v), q / (v * v)], [-q / (v * v), p / (v * v)]];
    [
        [r[0][0] * s[0][0] + r[0][1] * s[1][0], r[0][0] * s[0][1] + r[0][1] * s[1][1]],
        [r[1][0] * s[0][0] + r[1][1] * s[1][0], r[1][0] * s[0][1] + r[1][1] * s[1][1]],
    ]
}

/// Closed-loop converter network as a vector field.
///
/// Loads enter as shunt conductances at the converter terminals; the load
/// current is part of the measured output current `i_o`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub net: Network,
    pub layout: Layout,
    pub converters: Vec<Converter>,
    pub gains: Gains,
    pub setpoints: Setpoints,
    pub loads: Vec<f64>,
    pub stages: Vec<Stage>,
    kmat: Vec<[[f64; 2]; 2]>,
    rot: [[f64; 2]; 2],
    linear: DMatrix<f64>,
}

impl ClosedLoop {
    /// All converters fully enabled, loads from `spec`.
    pub fn new(spec: &PowerSystemSpec) -> Result<Self> {
        spec.validate()?;
        let gains = spec.gains()?.clone();
        let net = Network::new(spec);
        let layout = Layout { nodes: net.nodes, lines: net.lines };
        let mut cl = ClosedLoop {
            rot: rot2(net.kappa),
            layout,
            converters: spec.converters.clone(),
            gains,
            setpoints: spec.setpoints.clone(),
            loads: spec.load_conductances(),
            stages: vec![Stage::Full; net.nodes],
            kmat: Vec::new(),
            linear: DMatrix::zeros(0, 0),
            net,
        };
        cl.rebuild();
        Ok(cl)
    }

    fn rebuild(&mut self) {
        let sp = &self.setpoints;
        self.kmat = (0..self.layout.nodes)
            .map(|k| setpoint_matrix(self.net.kappa, sp.p[k], sp.q[k], sp.v[k]))
            .collect();
        let n = self.layout.dim();
        let mut lin = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.eval_inner(&e, &mut col, false);
            lin.set_column(j, &nalgebra::DVector::from_column_slice(&col));
            e[j] = 0.0;
        }
        self.linear = lin;
    }

    pub fn set_stage(&mut self, node: usize, stage: Stage) -> Result<()> {
        self.check_node(node)?;
        self.stages[node] = stage;
        self.rebuild();
        Ok(())
    }

    pub fn set_load(&mut self, node: usize, conductance: f64) -> Result<()> {
        self.check_node(node)?;
        if !(conductance >= 0.0 && conductance.is_finite()) {
            return Err(Error::input(format!("load conductance {conductance} must be non-negative")));
        }
        self.loads[node] = conductance;
        self.rebuild();
        Ok(())
    }

    pub fn set_setpoints(&mut self, sp: Setpoints) -> Result<()> {
        let n = self.layout.nodes;
        if sp.p.len() != n || sp.q.len() != n || sp.v.len() != n {
            return Err(Error::input(format!("setpoints need {n} entries each")));
        }
        if let Some(k) = sp.v.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::input(format!("voltage setpoint at node {k} must be positive")));
        }
        self.setpoints = sp;
        self.rebuild();
        Ok(())
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.layout.nodes {
            return Err(Error::input(format!("node {node} outside 0..{}", self.layout.nodes)));
        }
        Ok(())
    }

    /// Output currents `𝓑 i_t + G_load v`.
    pub fn output_currents(&self, x: &[f64]) -> Vec<f64> {
        let s = self.layout.view(x);
        let mut io = self.net.injections(s.i_t);
        for k in 0..self.layout.nodes {
            io[2 * k] += self.loads[k] * s.v[2 * k];
            io[2 * k + 1] += self.loads[k] * s.v[2 * k + 1];
        }
        io
    }

    pub fn powers(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        node_powers(self.layout.view(x).v, &self.output_currents(x))
    }

    fn y_f(&self, k: usize, v: [f64; 2]) -> [f64; 2] {
        let c = &self.converters[k];
        let jv = quarter(v);
        [c.g_f * v[0] + self.net.omega0 * c.c_f * jv[0], c.g_f * v[1] + self.net.omega0 * c.c_f * jv[1]]
    }

    /// Reference model `η (K v̂ − R(κ) i_o + η_a Φ(v̂) v̂)`.
    pub fn dvoc(&self, vhat: &[f64], i_o: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; vhat.len()];
        for k in 0..self.layout.nodes {
            let d = self.dvoc_node(k, pair(vhat, k), pair(i_o, k), true);
            out[2 * k] = d[0];
            out[2 * k + 1] = d[1];
        }
        out
    }

    fn dvoc_node(&self, k: usize, vh: [f64; 2], io: [f64; 2], nonlinear: bool) -> [f64; 2] {
        let g = &self.gains;
        let kv = mul(&self.kmat[k], vh);
        let ri = mul(&self.rot, io);
        let phi = if nonlinear {
            let vs = self.setpoints.v[k];
            1.0 - (vh[0] * vh[0] + vh[1] * vh[1]) / (vs * vs)
        } else {
            0.0
        };
        [
            g.eta * (kv[0] - ri[0] + g.eta_a * phi * vh[0]),
            g.eta * (kv[1] - ri[1] + g.eta_a * phi * vh[1]),
        ]
    }

    /// Voltage loop: filter current reference and integrator derivative.
    pub fn voltage_loop(&self, v: &[f64], zeta_v: &[f64], vhat: &[f64], i_o: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.layout.nodes;
        let mut ifr = vec![0.0; 2 * n];
        let mut dz = vec![0.0; 2 * n];
        for k in 0..n {
            let r = self.reference_node(k, pair(v, k), pair(zeta_v, k), pair(vhat, k), pair(i_o, k), Stage::Full);
            ifr[2 * k..2 * k + 2].copy_from_slice(&r);
            dz[2 * k] = v[2 * k] - vhat[2 * k];
            dz[2 * k + 1] = v[2 * k + 1] - vhat[2 * k + 1];
        }
        (ifr, dz)
    }

    /// Current loop: modulation voltage and integrator derivative.
    pub fn current_loop(&self, i_f: &[f64], zeta_f: &[f64], ifr: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.layout.nodes;
        let mut vm = vec![0.0; 2 * n];
        let mut dz = vec![0.0; 2 * n];
        for k in 0..n {
            let c = &self.converters[k];
            let (kp, ki) = (self.gains.k_pf[k], self.gains.k_if[k]);
            let f = pair(i_f, k);
            let jf = quarter(f);
            for d in 0..2 {
                let e = i_f[2 * k + d] - ifr[2 * k + d];
                let zf = c.r_f * f[d] + self.net.omega0 * c.l_f * jf[d];
                vm[2 * k + d] = zf + v[2 * k + d] - kp * e - ki * zeta_f[2 * k + d];
                dz[2 * k + d] = e;
            }
        }
        (vm, dz)
    }

    fn reference_node(&self, k: usize, v: [f64; 2], zv: [f64; 2], vh: [f64; 2], io: [f64; 2], stage: Stage) -> [f64; 2] {
        let yv = self.y_f(k, v);
        let (kp, ki) = (self.gains.k_pv[k], self.gains.k_iv[k]);
        match stage {
            Stage::Disabled | Stage::CurrentOnly => yv,
            Stage::ReferenceVoltage => [
                yv[0] - kp * (v[0] - vh[0]) - ki * zv[0],
                yv[1] - kp * (v[1] - vh[1]) - ki * zv[1],
            ],
            Stage::Full => [
                yv[0] + io[0] - kp * (v[0] - vh[0]) - ki * zv[0],
                yv[1] + io[1] - kp * (v[1] - vh[1]) - ki * zv[1],
            ],
        }
    }

    /// Filter current reference of the active stage at every node.
    pub fn reference_current(&self, x: &[f64]) -> Vec<f64> {
        let s = self.layout.view(x);
        let io = self.output_currents(x);
        let mut out = vec![0.0; 2 * self.layout.nodes];
        for k in 0..self.layout.nodes {
            let r = self.reference_node(k, pair(s.v, k), pair(s.zeta_v, k), pair(s.vhat, k), pair(&io, k), self.stages[k]);
            out[2 * k..2 * k + 2].copy_from_slice(&r);
        }
        out
    }

    fn eval_inner(&self, x: &[f64], dx: &mut [f64], nonlinear: bool) {
        let lay = self.layout;
        let s = lay.view(x);
        let w0 = self.net.omega0;
        let io = {
            let mut io = self.net.injections(s.i_t);
            for k in 0..lay.nodes {
                io[2 * k] += self.loads[k] * s.v[2 * k];
                io[2 * k + 1] += self.loads[k] * s.v[2 * k + 1];
            }
            io
        };
        for l in 0..lay.lines {
            let (a, b) = self.net.ends[l];
            let i = pair(s.i_t, l);
            let ji = quarter(i);
            let (r, ell) = (self.net.resistance[l], self.net.inductance[l]);
            for d in 0..2 {
                dx[lay.i_t() + 2 * l + d] =
                    (-r * i[d] - w0 * ell * ji[d] + s.v[2 * a + d] - s.v[2 * b + d]) / ell;
            }
        }
        for k in 0..lay.nodes {
            let c = &self.converters[k];
            let stage = self.stages[k];
            let vh = pair(s.vhat, k);
            let v = pair(s.v, k);
            let zv = pair(s.zeta_v, k);
            let f = pair(s.i_f, k);
            let zf = pair(s.zeta_f, k);
            let iok = pair(&io, k);

            let dvh = if stage.reference_active() { self.dvoc_node(k, vh, iok, nonlinear) } else { [0.0; 2] };
            let yv = self.y_f(k, v);
            let ifr = self.reference_node(k, v, zv, vh, iok, stage);
            let (kp, ki) = (self.gains.k_pf[k], self.gains.k_if[k]);
            let jf = quarter(f);
            for d in 0..2 {
                dx[lay.vhat() + 2 * k + d] = dvh[d];
                dx[lay.v() + 2 * k + d] = (-yv[d] - iok[d] + f[d]) / c.c_f;
                dx[lay.zeta_v() + 2 * k + d] = if stage.reference_active() { v[d] - vh[d] } else { 0.0 };
                let e = f[d] - ifr[d];
                if stage == Stage::Disabled {
                    let zf_i = c.r_f * f[d] + w0 * c.l_f * jf[d];
                    dx[lay.i_f() + 2 * k + d] = (-zf_i - v[d]) / c.l_f;
                    dx[lay.zeta_f() + 2 * k + d] = 0.0;
                } else {
                    dx[lay.i_f() + 2 * k + d] = (-kp * e - ki * zf[d]) / c.l_f;
                    dx[lay.zeta_f() + 2 * k + d] = e;
                }
            }
        }
    }

    /// Quasi-steady line currents `Z_T⁻¹ 𝓑ᵀ v̂`.
    pub fn phi_t(&self, vhat: &[f64]) -> Vec<f64> {
        self.net.line_currents(vhat)
    }

    /// Voltage-loop steady state `(v̂, 0)`.
    pub fn phi_v(&self, vhat: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vhat.to_vec(), vec![0.0; vhat.len()])
    }

    /// Current-loop steady state `(i_f^r, 0)`.
    pub fn phi_f(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.reference_current(x), vec![0.0; 2 * self.layout.nodes])
    }

    /// Voltage dynamics with the current loop at its reference.
    pub fn reduced_voltage(&self, vhat: &[f64], v: &[f64], zeta_v: &[f64]) -> Vec<f64> {
        let n = self.layout.nodes;
        let mut out = vec![0.0; 4 * n];
        for k in 0..n {
            let (kp, ki, cf) = (self.gains.k_pv[k], self.gains.k_iv[k], self.converters[k].c_f);
            for d in 0..2 {
                let e = v[2 * k + d] - vhat[2 * k + d];
                out[2 * k + d] = -(kp * e + ki * zeta_v[2 * k + d]) / cf;
                out[2 * n + 2 * k + d] = e;
            }
        }
        out
    }

    /// Line dynamics driven by `v̂` directly.
    pub fn reduced_lines(&self, vhat: &[f64], i_t: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; i_t.len()];
        let w0 = self.net.omega0;
        for l in 0..self.layout.lines {
            let (a, b) = self.net.ends[l];
            let i = pair(i_t, l);
            let ji = quarter(i);
            let (r, ell) = (self.net.resistance[l], self.net.inductance[l]);
            for d in 0..2 {
                out[2 * l + d] = (-r * i[d] - w0 * ell * ji[d] + vhat[2 * a + d] - vhat[2 * b + d]) / ell;
            }
        }
        out
    }

    /// Reference model with lines at their quasi-steady state.
    pub fn reduced_reference(&self, vhat: &[f64]) -> Vec<f64> {
        let io = self.net.injections(&self.phi_t(vhat));
        self.dvoc(vhat, &io)
    }

    /// State with every scale at its steady-state map over reference angles
    /// `theta` and the voltage setpoints.
    pub fn equilibrium(&self, theta: &[f64]) -> Vec<f64> {
        let lay = self.layout;
        let mut x = vec![0.0; lay.dim()];
        for k in 0..lay.nodes {
            let vs = self.setpoints.v[k];
            x[2 * k] = vs * theta[k].cos();
            x[2 * k + 1] = vs * theta[k].sin();
        }
        let vhat = x[..2 * lay.nodes].to_vec();
        let it = self.phi_t(&vhat);
        x[lay.i_t()..lay.i_t() + 2 * lay.lines].copy_from_slice(&it);
        x[lay.v()..lay.v() + 2 * lay.nodes].copy_from_slice(&vhat);
        let ifr = self.reference_current(&x);
        x[lay.i_f()..lay.i_f() + 2 * lay.nodes].copy_from_slice(&ifr);
        x
    }

    /// Analytic Jacobian: the cached linear part plus the amplitude regulator.
    pub fn jacobian_at(&self, x: &[f64]) -> DMatrix<f64> {
        let mut j = self.linear.clone();
        let g = &self.gains;
        for k in 0..self.layout.nodes {
            if !self.stages[k].reference_active() {
                continue;
            }
            let vs2 = self.setpoints.v[k].powi(2);
            let vh = [x[2 * k], x[2 * k + 1]];
            let phi = 1.0 - (vh[0] * vh[0] + vh[1] * vh[1]) / vs2;
            for r in 0..2 {
                for c in 0..2 {
                    let id = if r == c { phi } else { 0.0 };
                    j[(2 * k + r, 2 * k + c)] += g.eta * g.eta_a * (id - 2.0 * vh[r] * vh[c] / vs2);
                }
            }
        }
        j
    }
}

impl VectorField for ClosedLoop {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        self.eval_inner(x, dx, true);
    }

    fn jacobian(&self, _t: f64, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.jacobian_at(x))
    }
}

/// Operating point of a spec: power flow on its setpoints (p-only), the
/// closed loop rebuilt with the consistent setpoints, and its equilibrium.
pub struct OperatingPoint {
    pub solution: OperatingSolution,
    pub model: ClosedLoop,
    pub state: Vec<f64>,
}

pub fn operating_point(spec: &PowerSystemSpec) -> Result<OperatingPoint> {
    let solution = solve_power_flow(spec)?;
    let consistent = spec.with_setpoints(solution.consistent_setpoints());
    let model = ClosedLoop::new(&consistent)?;
    let state = model.equilibrium(&solution.theta);
    Ok(OperatingPoint { solution, model, state })
}
