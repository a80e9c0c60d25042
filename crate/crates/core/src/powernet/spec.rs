use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the uniform inductance/resistance ratio of all lines.
pub const RATIO_REL_TOL: f64 = 1e-9;

/// One line `[from, to, r_t, l_t]`, nodes 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line(pub usize, pub usize, pub f64, pub f64);

impl Line {
    pub fn from(&self) -> usize {
        self.0
    }
    pub fn to(&self) -> usize {
        self.1
    }
    pub fn resistance(&self) -> f64 {
        self.2
    }
    pub fn inductance(&self) -> f64 {
        self.3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub nodes: usize,
    pub edges: Vec<Line>,
}

/// RLC output filter of one converter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Converter {
    pub r_f: f64,
    pub l_f: f64,
    pub c_f: f64,
    #[serde(default)]
    pub g_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub eta: f64,
    pub eta_a: f64,
    pub k_pv: Vec<f64>,
    pub k_iv: Vec<f64>,
    pub k_pf: Vec<f64>,
    pub k_if: Vec<f64>,
}

impl Gains {
    /// Same gains at every one of `n` nodes.
    pub fn uniform(n: usize, eta: f64, eta_a: f64, k_pv: f64, k_iv: f64, k_pf: f64, k_if: f64) -> Self {
        Gains {
            eta,
            eta_a,
            k_pv: vec![k_pv; n],
            k_iv: vec![k_iv; n],
            k_pf: vec![k_pf; n],
            k_if: vec![k_if; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setpoints {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl Setpoints {
    pub fn flat(n: usize, v: f64) -> Self {
        Setpoints { p: vec![0.0; n], q: vec![0.0; n], v: vec![v; n] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSystemSpec {
    pub graph: Graph,
    pub converters: Vec<Converter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Gains>,
    pub setpoints: Setpoints,
    pub omega0: f64,
    /// Per-node shunt conductance of resistive loads (simulation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loads: Option<Vec<f64>>,
}

fn positive(name: &str, idx: usize, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("{name}[{idx}] = {v} must be positive and finite")))
    }
}

impl PowerSystemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PowerSystemSpec =
            serde_json::from_str(text).map_err(|e| Error::input(format!("power system spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn nodes(&self) -> usize {
        self.graph.nodes
    }

    pub fn load_conductances(&self) -> Vec<f64> {
        self.loads.clone().unwrap_or_else(|| vec![0.0; self.nodes()])
    }

    /// Common `l_t / r_t` of all lines, `None` without lines.
    pub fn ratio(&self) -> Option<f64> {
        self.graph.edges.first().map(|l| l.inductance() / l.resistance())
    }

    /// Structural and physical checks: sizes, signs, connectivity and a
    /// uniform inductance/resistance ratio over all lines.
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.nodes;
        if n == 0 {
            return Err(Error::input("network has no nodes"));
        }
        if self.converters.len() != n {
            return Err(Error::input(format!("{} converters for {n} nodes", self.converters.len())));
        }
        let sp = &self.setpoints;
        if sp.p.len() != n || sp.q.len() != n || sp.v.len() != n {
            return Err(Error::input(format!("setpoints need {n} entries each")));
        }
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(Error::input(format!("omega0 = {} must be positive", self.omega0)));
        }
        for (k, c) in self.converters.iter().enumerate() {
            positive("r_f", k, c.r_f)?;
            positive("l_f", k, c.l_f)?;
            positive("c_f", k, c.c_f)?;
            if !(c.g_f >= 0.0 && c.g_f.is_finite()) {
                return Err(Error::input(format!("g_f[{k}] = {} must be non-negative", c.g_f)));
            }
        }
        for k in 0..n {
            positive("v", k, sp.v[k])?;
            if !sp.p[k].is_finite() || !sp.q[k].is_finite() {
                return Err(Error::input(format!("setpoint at node {k} is not finite")));
            }
        }
        if let Some(loads) = &self.loads {
            if loads.len() != n {
                return Err(Error::input(format!("loads need {n} entries, got {}", loads.len())));
            }
            if let Some(k) = loads.iter().position(|g| !(*g >= 0.0 && g.is_finite())) {
                return Err(Error::input(format!("load conductance at node {k} must be non-negative")));
            }
        }
        if let Some(g) = &self.gains {
            self.validate_gains(g)?;
        }
        for (l, e) in self.graph.edges.iter().enumerate() {
            if e.from() >= n || e.to() >= n {
                return Err(Error::input(format!("line {l} references a node outside 0..{n}")));
            }
            if e.from() == e.to() {
                return Err(Error::input(format!("line {l} is a self loop")));
            }
            positive("r_t", l, e.resistance())?;
            positive("l_t", l, e.inductance())?;
        }
        if let Some(rho) = self.ratio() {
            for (l, e) in self.graph.edges.iter().enumerate() {
                let r = e.inductance() / e.resistance();
                if (r - rho).abs() > RATIO_REL_TOL * rho {
                    return Err(Error::input(format!(
                        "line {l} has l_t/r_t = {r}, line 0 has {rho}: the model requires a uniform \
                         inductance/resistance ratio across all lines"
                    )));
                }
            }
        }
        if !self.connected() {
            return Err(Error::input("network graph is not connected"));
        }
        Ok(())
    }

    pub fn validate_gains(&self, g: &Gains) -> Result<()> {
        let n = self.graph.nodes;
        if !(g.eta >= 0.0 && g.eta.is_finite()) || !(g.eta_a > 0.0 && g.eta_a.is_finite()) {
            return Err(Error::input(format!("eta = {} and eta_a = {} must be non-negative / positive", g.eta, g.eta_a)));
        }
        for (name, v) in [("k_pv", &g.k_pv), ("k_iv", &g.k_iv), ("k_pf", &g.k_pf), ("k_if", &g.k_if)] {
            if v.len() != n {
                return Err(Error::input(format!("{name} needs {n} entries, got {}", v.len())));
            }
            for (k, x) in v.iter().enumerate() {
                positive(name, k, *x)?;
            }
        }
        Ok(())
    }

    fn connected(&self) -> bool {
        let n = self.graph.nodes;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for e in &self.graph.edges {
            let a = find(&mut parent, e.from());
            let b = find(&mut parent, e.to());
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        (0..n).all(|i| find(&mut parent, i) == root)
    }

    pub fn gains(&self) -> Result<&Gains> {
        self.gains.as_ref().ok_or_else(|| Error::input("spec has no control gains"))
    }

    pub fn with_gains(&self, gains: Gains) -> Self {
        PowerSystemSpec { gains: Some(gains), ..self.clone() }
    }

    pub fn with_setpoints(&self, setpoints: Setpoints) -> Self {
        PowerSystemSpec { setpoints, ..self.clone() }
    }

    pub fn with_loads(&self, loads: Vec<f64>) -> Self {
        PowerSystemSpec { loads: Some(loads), ..self.clone() }
    }
}

/// Filter and line values used throughout the examples and tests: 120 V
/// converters with `r_f = 0.124 Ω`, `l_f = 1 mH`, `c_f = 24 µF` and lines with
/// `r_t = 50 mΩ`, `l_t = 0.2 mH` at 60 Hz.
pub mod reference {
    use super::*;

    pub const OMEGA0: f64 = 2.0 * std::f64::consts::PI * 60.0;
    pub const R_T: f64 = 0.05;
    pub const L_T: f64 = 2e-4;
    pub const V_NOM: f64 = 120.0;

    pub fn converter() -> Converter {
        Converter { r_f: 0.124, l_f: 1e-3, c_f: 24e-6, g_f: 0.0 }
    }

    /// Path network `0 - 1 - … - (n-1)` with flat setpoints and no gains.
    pub fn path(n: usize) -> PowerSystemSpec {
        PowerSystemSpec {
            graph: Graph { nodes: n, edges: (1..n).map(|k| Line(k - 1, k, R_T, L_T)).collect() },
            converters: vec![converter(); n],
            gains: None,
            setpoints: Setpoints::flat(n, V_NOM),
            omega0: OMEGA0,
            loads: None,
        }
    }

    /// Triangle network with flat setpoints.
    pub fn triangle() -> PowerSystemSpec {
        let mut s = path(3);
        s.graph.edges.push(Line(2, 0, R_T, L_T));
        s
    }

    /// Hand-tuned gains of the laboratory setup (not certified by the checkers).
    pub fn lab_gains(n: usize) -> Gains {
        Gains::uniform(n, 8.14, 3.13, 0.07, 0.15, 5.93, 12.49)
    }
}
