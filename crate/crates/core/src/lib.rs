//! Closed-form rate model, stability-region geometry and queue-aware
//! scheduling for MIMO interference networks that use interference
//! alignment over a limited-capacity backhaul.
//!
//! The modules build on each other bottom-up:
//!
//! - [`numerics`]: hypergeometric series, incomplete gamma, Laguerre coefficients.
//! - [`rate_model`]: success probabilities and average rates.
//! - [`region_geometry`]: vertex sets, optimal loads, fractions, hull membership.
//! - [`policies`]: Max-Weight and its reduced-complexity variants.
//! - [`sim`]: Monte Carlo estimators and the slot-level queue simulator.

pub mod error;
pub mod numerics;
pub mod policies;
pub mod rate_model;
pub mod region_geometry;
pub mod sim;

pub use error::{Error, Result};
pub use numerics::LaguerreCoeffs;
pub use policies::{QueueState, ScheduleOutcome, Technique};
pub use rate_model::{DecisionVector, DerivedParams, RateMode, RateTable, SystemConfig};
pub use region_geometry::{NnlsResult, OptimalLoad, RegionTechnique, RegionVertexSet};
pub use sim::{ArrivalSpec, QueueTrajectory, RngStream};

/// Largest pair count accepted by exhaustive enumerations (2^N decisions).
pub const ENUMERATION_LIMIT: usize = 20;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
