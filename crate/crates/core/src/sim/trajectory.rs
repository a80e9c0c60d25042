use std::f64::consts::PI;
use std::io::{self, Write};

/// Sampled states with optional per-node derived channels.
///
/// Channel vectors are either empty (no network attached) or hold one entry
/// per sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub state_names: Vec<String>,
    pub nodes: usize,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub vmag: Vec<Vec<f64>>,
    pub freq: Vec<Vec<Option<f64>>>,
    pub nu: Vec<Option<f64>>,
    pub dist_s: Vec<Option<f64>>,
    pub dist_a: Vec<Option<f64>>,
}

impl Trajectory {
    pub fn from_states(t: Vec<f64>, x: Vec<Vec<f64>>, state_names: Vec<String>) -> Self {
        Trajectory { t, x, state_names, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.x.last().map(|v| v.as_slice())
    }

    /// Index of the first sample with `t >= time`.
    pub fn index_at(&self, time: f64) -> usize {
        self.t.partition_point(|&s| s < time).min(self.t.len().saturating_sub(1))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(self.state_names.iter().cloned());
        let has_channels = self.nodes > 0 && self.p.len() == self.t.len();
        if has_channels {
            for prefix in ["p", "q", "vmag", "f"] {
                header.extend((1..=self.nodes).map(|k| format!("{prefix}_{k}")));
            }
            header.extend(["nu", "dist_S", "dist_A"].map(String::from));
        }
        writeln!(out, "{}", header.join(","))?;
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
        for i in 0..self.t.len() {
            let mut row: Vec<String> = Vec::with_capacity(header.len());
            row.push(self.t[i].to_string());
            row.extend(self.x[i].iter().map(|v| v.to_string()));
            if has_channels {
                row.extend(self.p[i].iter().map(|v| v.to_string()));
                row.extend(self.q[i].iter().map(|v| v.to_string()));
                row.extend(self.vmag[i].iter().map(|v| v.to_string()));
                row.extend(self.freq[i].iter().map(|&v| opt(v)));
                row.push(opt(self.nu.get(i).copied().flatten()));
                row.push(opt(self.dist_s.get(i).copied().flatten()));
                row.push(opt(self.dist_a.get(i).copied().flatten()));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Electrical frequency in Hz of a rotating-frame phasor sampled at `t`.
///
/// Central differences of the unwrapped angle (one-sided at the ends).
/// Samples whose phasor norm is below 1e-9 are reported as `None`, as are
/// samples whose difference stencil touches one.
pub fn phasor_frequency(t: &[f64], phasor: &[[f64; 2]], omega0: f64) -> Vec<Option<f64>> {
    let n = t.len();
    let base = omega0 / (2.0 * PI);
    if n < 2 {
        return vec![None; n];
    }
    let mut angle: Vec<Option<f64>> = Vec::with_capacity(n);
    let mut prev: Option<f64> = None;
    for v in phasor {
        if v[0].hypot(v[1]) < 1e-9 {
            angle.push(None);
            continue;
        }
        let raw = v[1].atan2(v[0]);
        let a = match prev {
            Some(p) => {
                let mut d = raw - p;
                d -= 2.0 * PI * (d / (2.0 * PI)).round();
                p + d
            }
            None => raw,
        };
        prev = Some(a);
        angle.push(Some(a));
    }
    (0..n)
        .map(|i| {
            let (lo, hi) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            if angle[i].is_none() {
                return None;
            }
            match (angle[lo], angle[hi]) {
                (Some(a), Some(b)) => Some(base + (b - a) / (t[hi] - t[lo]) / (2.0 * PI)),
                _ => None,
            }
        })
        .collect()
}

/// Frequency channel of `node`, reading the node's reference phasor from the
/// leading `2 * nodes` state entries.
pub fn frequency_estimate(traj: &Trajectory, node: usize, omega0: f64) -> Vec<Option<f64>> {
    let phasors: Vec<[f64; 2]> = traj.x.iter().map(|x| [x[2 * node], x[2 * node + 1]]).collect();
    phasor_frequency(&traj.t, &phasors, omega0)
}
