//! Shared inputs for the benchmarks.

use nestcert::powernet::{reference, ClosedLoop};
use nestcert::{NestedConstants, PowerSystemSpec, ToyParams};

/// Constants of the three-scale example at `(kappa, k)`.
pub fn toy_constants(kappa: f64, k: f64) -> NestedConstants {
    nestcert::toy::constants(&ToyParams::new(kappa, k).expect("positive gains"))
}

/// Path network of `n` converters with a small power transfer along it.
pub fn loaded_path(n: usize) -> PowerSystemSpec {
    let mut spec = reference::path(n);
    let share = 200.0 / (n - 1).max(1) as f64;
    spec.setpoints.p = (0..n).map(|k| if k == 0 { 200.0 } else { -share }).collect();
    spec
}

/// Closed loop under the hand-tuned gains and its equilibrium, with the first
/// reference voltage pushed off by 5 V.
pub fn displaced_lab_loop(n: usize) -> (ClosedLoop, Vec<f64>) {
    let spec = loaded_path(n).with_gains(reference::lab_gains(n));
    let op = nestcert::powernet::operating_point(&spec).expect("power flow converges");
    let mut x0 = op.state;
    x0[0] += 5.0;
    (op.model, x0)
}
