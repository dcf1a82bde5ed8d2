//! Planar three-link biped with a hip inertial disc: hybrid dynamics,
//! impact map, nominal gait synthesis, two-level tracking controller,
//! event-driven simulation and Poincaré stability analysis.

// `!(x < tol)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dynamics;
pub mod error;
pub mod gait;
pub mod impact;
pub mod numerics;
pub mod sim;
pub mod stability;

pub use control::{Controller, Gains, YState};
pub use dynamics::{DynTerms, GenPos, GenVel, Omega, RobotParams, State};
pub use error::{Error, Result};
pub use gait::{GaitRequest, GaitSpec};
pub use sim::{PerturbSpec, SimConfig, Trace};
pub use stability::{PhiEntries, StabilityReport};
