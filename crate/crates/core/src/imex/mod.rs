//! Implicit-explicit BDF stepping as a sequence of convex minimizations.

pub mod cost;
pub mod grid;
pub mod scheme;

pub use cost::{cost_integrand, dirichlet_energy, discrete_cost, explicit_term, ExplicitData};
pub use grid::{grid_forcing, GridResiduals, GridStep};
pub use scheme::{bdf_coefficients, SchemeCoefficients, Snapshot, TimestepHistory};
