//! Grid-forming converter networks: specification, network matrices, power
//! flow, the closed-loop vector field, gain certificates and the composite
//! Lyapunov function.

mod certificate;
mod flow;
mod lyapunov;
mod model;
mod network;
mod spec;

pub use certificate::{
    branch_loading, certify_gains, check_current_loop, check_loading, check_voltage_loop,
    instability_at_origin, setpoint_block, synthesize_gains, CurrentLoopCheck, GainCertificate,
    LoadingCheck, OriginSpectrum, VoltageLoopCheck, ETA_SHARE, HEADROOM_SHARE, MAX_DOUBLINGS,
};
pub use flow::{branch_power, solve_power_flow, BranchFlow, OperatingSolution, MAX_ITERATIONS, RESIDUAL_TOL};
pub use lyapunov::{LyapunovFunction, LyapunovValue};
pub use model::{node_powers, operating_point, setpoint_matrix, ClosedLoop, Layout, OperatingPoint, Stage, StateView};
pub use network::{block_rotation, Network};
pub use spec::{reference, Converter, Gains, Graph, Line, PowerSystemSpec, Setpoints, RATIO_REL_TOL};
