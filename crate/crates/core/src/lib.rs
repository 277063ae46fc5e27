//! Monotone policies for finite-horizon, possibly constrained MDPs.
//!
//! The optimal policy is sought through the occupation-measure LP, solved by
//! ADMM, alternated with subgradient steps on a nearly-isotonic penalty that
//! pulls the conditional policy towards monotonicity in the state.

pub mod admm;
pub mod dp;
pub mod error;
pub mod generator;
pub mod isotonic;
mod kkt;
pub mod lp;
pub mod model;
pub mod policy;
pub mod solver;
pub mod structure;

pub use error::{MdpError, Result};
pub use model::{AverageConstraint, MdpModel};
pub use policy::{ConditionalPolicy, OccupationMeasure, StateDistribution};
pub use solver::{solve, Mode, SolveOutcome, SolveStatus, SolverConfig};
