//! Negative-imaginary analysis and output-feedback consensus for networks of
//! nonlinear plants driven by identical linear controllers mixed through a graph
//! Laplacian.
//!
//! The crate covers linear strictness tests, nonlinear plant models with storage
//! functions, closed-loop simulation and trajectory-level dissipation checks.

pub mod analysis;
pub mod checks;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod linsys;
pub mod network;
pub mod plant;
pub mod sim;

pub use error::{Error, Result};
pub use graph::Graph;
pub use linsys::{FreqGrid, StateSpace};
pub use network::{ClosedLoop, ControllerNetwork, Mode};
pub use sim::{IntegratorConfig, Trajectory};
