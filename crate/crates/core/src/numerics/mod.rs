//! Self-contained numeric kernels: bounded-variable phase-1 simplex for
//! linear feasibility and an Edmonds–Karp max-flow solver.
//!
//! Both kernels are deterministic. The simplex uses Bland's rule so repeated
//! runs on the same problem pivot identically; max-flow augments along
//! shortest paths found by BFS in a fixed arc order.

mod flow;
mod simplex;

pub use flow::{max_flow, FlowArc, FlowNetwork, MaxFlowOutcome};
pub use simplex::{
    solve_feasibility, FarkasCertificate, Feasibility, LinearConstraint, LinearFeasibilityProblem,
};

use thiserror::Error;

/// Default decision tolerance for the kernels.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("simplex iteration limit reached after {iterations} pivots; problem is likely ill-conditioned")]
    IterationLimit { iterations: usize },
    #[error("non-finite value encountered during pivoting")]
    NotFinite,
}
