//! Lyapunov certificates for nested multi-time-scale dynamical systems, with a
//! worked three-scale example, a grid-forming converter network model and an
//! ODE integrator to validate the certificates by simulation.

pub mod certkit;
pub mod error;
pub mod linalg;
pub mod powernet;
pub mod sim;
pub mod toy;

pub use certkit::{
    build_m, certify, check_condition1, check_condition2, compute_mu, pd_oracle,
    synthesize_epsilons, verify_proposition1, CertificateReport, CouplingMatrix,
    NestedConstants, Verdict,
};
pub use error::{Error, Result};
pub use powernet::{GainCertificate, Gains, OperatingSolution, PowerSystemSpec};
pub use sim::{integrate, Method, Scenario, Solution, Tolerances, Trajectory, VectorField};
pub use toy::{RegionLabel, ToyParams, ToyState};
