//! Joint offloading and reverse-diffusion step allocation for generative
//! services hosted on a mobile edge server.
//!
//! Each UE either generates locally or offloads to the edge; the solver picks
//! the offload decisions and per-UE reverse step counts that minimize a
//! blend of time, error, energy and utility under a shared edge step budget.
//!
//! Pipeline: [`model`] evaluates the problem, [`surrogate`] builds the
//! decoupled convex upper bound, [`kkt`] solves each convex subproblem in
//! closed form plus bisection, and [`sca`] drives the inner auxiliary fixed
//! point and the outer penalty linearization before rounding to a binary
//! allocation. [`oracle`] is an independent exhaustive solver for small N and
//! [`experiments`] runs the parameter sweeps.

pub mod error;
pub mod experiments;
pub mod kkt;
pub mod model;
pub mod oracle;
pub mod roots;
pub mod sca;
pub mod surrogate;

pub use error::{Error, Result};
pub use kkt::{solve_kkt, Multipliers};
pub use model::{Allocation, BlendWeights, CostWeights, Mode, SystemConfig, Tolerances, UeProfile};
pub use sca::{inter_solve, solve, SolveReport, SolveStatus};
