//! Numerical building blocks shared by design, simulation and analysis.

pub mod bezier;
pub mod ode;
pub mod quad;
pub mod roots;
pub mod spline;
