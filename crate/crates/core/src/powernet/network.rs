use nalgebra::DMatrix;

use super::spec::PowerSystemSpec;
use crate::linalg::{kron_i2, rot2, spectral_norm, symmetric_eigenvalues};

/// Matrices of the line network derived from a validated spec.
///
/// Line `l` is oriented from `from` to `to`, so the incidence entry is +1 at
/// `from` and the line current counts as an injection out of `from`.
#[derive(Debug, Clone)]
pub struct Network {
    pub nodes: usize,
    pub lines: usize,
    pub omega0: f64,
    pub resistance: Vec<f64>,
    pub inductance: Vec<f64>,
    /// Node-by-line incidence `B`.
    pub incidence: DMatrix<f64>,
    /// `B ⊗ I2`.
    pub incidence2: DMatrix<f64>,
    /// Orthonormal basis of the null space of `B` (one column per independent cycle).
    pub cycles: DMatrix<f64>,
    pub cycles2: DMatrix<f64>,
    /// Common `l_t / r_t`; `None` without lines.
    pub rho: Option<f64>,
    /// `atan(omega0 * rho)`, zero without lines.
    pub kappa: f64,
    /// `𝓑 Z_T⁻¹ 𝓑ᵀ`.
    pub y_net: DMatrix<f64>,
    /// `R(kappa) 𝓑 Z_T⁻¹ 𝓑ᵀ`.
    pub rotated: DMatrix<f64>,
    /// Scalar Laplacian with edge weights `|Y_l| = 1 / |Z_l|`.
    pub laplacian: DMatrix<f64>,
    pub admittance: Vec<f64>,
    /// `(from, to)` per line.
    pub ends: Vec<(usize, usize)>,
    /// Algebraic connectivity; `None` for a single node.
    pub lambda2: Option<f64>,
    /// Largest weighted node degree.
    pub d_max: f64,
}

impl Network {
    pub fn new(spec: &PowerSystemSpec) -> Self {
        let nc = spec.graph.nodes;
        let nt = spec.graph.edges.len();
        let w0 = spec.omega0;
        let mut incidence = DMatrix::zeros(nc, nt);
        let mut resistance = Vec::with_capacity(nt);
        let mut inductance = Vec::with_capacity(nt);
        for (l, e) in spec.graph.edges.iter().enumerate() {
            incidence[(e.from(), l)] = 1.0;
            incidence[(e.to(), l)] = -1.0;
            resistance.push(e.resistance());
            inductance.push(e.inductance());
        }
        let incidence2 = kron_i2(&incidence);

        let cycles = null_space(&incidence);
        let cycles2 = kron_i2(&cycles);

        let rho = spec.ratio();
        let kappa = rho.map_or(0.0, |r| (w0 * r).atan());

        let mut zinv = DMatrix::zeros(2 * nt, 2 * nt);
        let mut admittance = Vec::with_capacity(nt);
        for l in 0..nt {
            let (r, x) = (resistance[l], w0 * inductance[l]);
            let d = r * r + x * x;
            zinv[(2 * l, 2 * l)] = r / d;
            zinv[(2 * l, 2 * l + 1)] = x / d;
            zinv[(2 * l + 1, 2 * l)] = -x / d;
            zinv[(2 * l + 1, 2 * l + 1)] = r / d;
            admittance.push(1.0 / d.sqrt());
        }
        let y_net = &incidence2 * &zinv * incidence2.transpose();
        let rotated = block_rotation(nc, kappa) * &y_net;

        let mut laplacian = DMatrix::zeros(nc, nc);
        for (l, e) in spec.graph.edges.iter().enumerate() {
            let (a, b, w) = (e.from(), e.to(), admittance[l]);
            laplacian[(a, a)] += w;
            laplacian[(b, b)] += w;
            laplacian[(a, b)] -= w;
            laplacian[(b, a)] -= w;
        }
        let lambda2 = if nc >= 2 { Some(symmetric_eigenvalues(&laplacian)[1]) } else { None };
        let d_max = (0..nc).map(|k| laplacian[(k, k)]).fold(0.0, f64::max);

        Network {
            nodes: nc,
            lines: nt,
            omega0: w0,
            resistance,
            inductance,
            incidence,
            incidence2,
            cycles,
            cycles2,
            rho,
            kappa,
            y_net,
            rotated,
            laplacian,
            admittance,
            ends: spec.graph.edges.iter().map(|e| (e.from(), e.to())).collect(),
            lambda2,
            d_max,
        }
    }

    /// `Z_l⁻¹` of line `l` as a 2×2 block.
    pub fn z_inv(&self, l: usize) -> [[f64; 2]; 2] {
        let (r, x) = (self.resistance[l], self.omega0 * self.inductance[l]);
        let d = r * r + x * x;
        [[r / d, x / d], [-x / d, r / d]]
    }

    /// Quasi-steady line currents `Z_T⁻¹ 𝓑ᵀ v`.
    pub fn line_currents(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.lines];
        for l in 0..self.lines {
            let (a, b) = self.ends[l];
            let dv = [v[2 * a] - v[2 * b], v[2 * a + 1] - v[2 * b + 1]];
            let z = self.z_inv(l);
            out[2 * l] = z[0][0] * dv[0] + z[0][1] * dv[1];
            out[2 * l + 1] = z[1][0] * dv[0] + z[1][1] * dv[1];
        }
        out
    }

    /// `(from, to)` of line `l`.
    pub fn line_ends(&self, l: usize) -> (usize, usize) {
        self.ends[l]
    }

    /// Node injections `𝓑 i_t`.
    pub fn injections(&self, i_t: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.nodes];
        for l in 0..self.lines {
            let (a, b) = self.ends[l];
            for c in 0..2 {
                out[2 * a + c] += i_t[2 * l + c];
                out[2 * b + c] -= i_t[2 * l + c];
            }
        }
        out
    }

    pub fn y_net_norm(&self) -> f64 {
        spectral_norm(&self.y_net)
    }

    /// `‖𝓑 R_T⁻¹ 𝓑ᵀ‖`.
    pub fn resistive_norm(&self) -> f64 {
        self.weighted_laplacian_norm(&self.resistance)
    }

    /// `‖𝓑 L_T⁻¹ 𝓑ᵀ‖`.
    pub fn inductive_norm(&self) -> f64 {
        self.weighted_laplacian_norm(&self.inductance)
    }

    fn weighted_laplacian_norm(&self, per_line: &[f64]) -> f64 {
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.lines,
            per_line.iter().map(|x| 1.0 / x),
        ));
        spectral_norm(&(&self.incidence * w * self.incidence.transpose()))
    }
}

/// Block-diagonal `I_n ⊗ R(theta)`.
pub fn block_rotation(n: usize, theta: f64) -> DMatrix<f64> {
    let r = rot2(theta);
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        for i in 0..2 {
            for j in 0..2 {
                m[(2 * k + i, 2 * k + j)] = r[i][j];
            }
        }
    }
    m
}

/// Orthonormal null-space basis of `a` from the eigenvectors of `aᵀa`.
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let ata = a.transpose() * a;
    let eig = ata.clone().symmetric_eigen();
    let scale = ata.amax().max(1.0);
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i].abs() < 1e-9 * scale).collect();
    let mut out = DMatrix::zeros(n, cols.len());
    for (c, &i) in cols.iter().enumerate() {
        out.set_column(c, &eig.eigenvectors.column(i));
    }
    out
}
