#![allow(dead_code)]

use nestcert::NestedConstants;
use rand::Rng;

/// Log-uniform draw from `[lo, hi]`.
pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

/// Random constants with `n` scales: every rate and coupling log-uniform in
/// `[1e-2, 1e2]`, each `alpha_prime` zero or up to `alpha`, and the
/// self-coupling `gamma_i` of either sign.
pub fn random_constants<R: Rng>(rng: &mut R, n: usize) -> NestedConstants {
    let alpha: Vec<f64> = (0..n).map(|_| log_uniform(rng, 1e-2, 1e2)).collect();
    let alpha_prime: Vec<f64> =
        alpha.iter().map(|a| if rng.gen_bool(0.5) { 0.0 } else { a * rng.gen::<f64>() }).collect();
    let beta_fwd: Vec<f64> = (1..n).map(|_| log_uniform(rng, 1e-2, 1e2)).collect();
    let mut b = Vec::new();
    for i in 2..=n {
        for k in 1..i {
            for j in 1..=k + 1 {
                let mut v = log_uniform(rng, 1e-2, 1e2);
                if j == i && rng.gen_bool(0.3) {
                    v = -v;
                }
                b.push((i, j, k, v));
            }
        }
    }
    NestedConstants::new(n, alpha, alpha_prime, beta_fwd, b).expect("generator emits well-formed constants")
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}
