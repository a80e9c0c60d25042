//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
///
/// Iterates until the off-diagonal Frobenius mass drops below `1e-13` of the
/// full Frobenius norm (or is exactly zero). Only the upper triangle is read
/// implicitly through the rotations, so the input should be symmetric.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let total = m.norm();
    if total == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += m[(p, q)] * m[(p, q)];
                }
            }
        }
        if off.sqrt() <= 1e-13 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Rejects matrices that are not symmetric to `1e-12` relative to the largest entry.
pub fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::input(format!(
            "matrix is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.amax();
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::input(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    a[(i, j)],
                    a[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Diagonal similarity scaling (radix 2) that equalizes row and column norms,
/// so that eigenvalues of badly scaled matrices are computed accurately.
pub fn balance(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _ in 0..200 {
        let mut done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / 2.0;
            while c < g {
                f *= 2.0;
                c *= 4.0;
            }
            g = r * 2.0;
            while c > g {
                f /= 2.0;
                c /= 4.0;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
    m
}

/// Iteration cap for the real Schur decomposition.
pub const SCHUR_MAX_ITERATIONS: usize = 10_000;

/// Eigenvalues of a general real matrix as (re, im) pairs, after balancing.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    // The shifted QR sweep occasionally stalls on structured matrices; retry on
    // the raw matrix, then on a seeded orthogonal similarity of it.
    let schur = Schur::try_new(balance(a), f64::EPSILON, SCHUR_MAX_ITERATIONS)
        .or_else(|| Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITERATIONS))
        .or_else(|| {
            let q = random_orthogonal(a.nrows());
            Schur::try_new(balance(&(q.transpose() * a * &q)), f64::EPSILON, SCHUR_MAX_ITERATIONS)
        })
        .ok_or_else(|| {
            Error::numerical(format!("Schur iteration did not converge within {SCHUR_MAX_ITERATIONS} sweeps"))
        })?;
    Ok(schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect())
}

fn random_orthogonal(n: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    g.qr().q()
}

/// Largest real part over the spectrum of a general real matrix.
pub fn max_real_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().fold(f64::NEG_INFINITY, |acc, &(re, _)| acc.max(re)))
}

/// Solves `a x = b` with row equilibration followed by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let mut a = a.clone();
    let mut b = b.clone();
    for i in 0..a.nrows() {
        let s = a.row(i).amax();
        if s > 0.0 {
            for j in 0..a.ncols() {
                a[(i, j)] /= s;
            }
            b[i] /= s;
        }
    }
    a.lu().solve(&b)
}

/// 2x2 rotation matrix R(theta) = [[cos, -sin], [sin, cos]].
pub fn rot2(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    [[c, -s], [s, c]]
}

/// Kronecker product `a ⊗ I2`.
pub fn kron_i2(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(2 * a.nrows(), 2 * a.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out[(2 * i, 2 * j)] = a[(i, j)];
            out[(2 * i + 1, 2 * j + 1)] = a[(i, j)];
        }
    }
    out
}
