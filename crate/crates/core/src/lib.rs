//! Mirrorless parametric oscillation in a resonant double-Λ medium: classical
//! steady states, oscillation thresholds and quantum-limited linewidths.

pub mod constants;
pub mod error;
pub mod model;
pub mod noise;
pub mod ode;
pub mod par;
pub mod steady;
pub mod sweep;
pub mod threshold;

pub use error::{Error, Result};
pub use model::{MediumBuilder, MediumParams, PumpBoundary};
pub use par::Execution;
pub use steady::{Branch, SolverOptions, SteadyState};
