//! Elastic-net Lasso solved as a nonnegative QP by a fixed-time Newton flow
//! on its KKT conditions.
//!
//! The regression problem is split into nonnegative parts, the KKT residual
//! of the resulting QP is driven to zero along a Newton direction scaled so
//! that the residual norm reaches zero before a prescribed time, and the flow
//! is integrated with an adaptive implicit scheme.

pub mod error;
pub mod flow;
pub mod harness;
pub mod integrate;
pub mod linalg;
pub mod oracle;
pub mod problem;

pub use error::{Error, Result};
pub use flow::{FlowParams, FlowState};
pub use integrate::{integrate_flow, Trajectory};
pub use problem::{build_nnqp, recover_solution, LassoProblem, NnqpProblem};
