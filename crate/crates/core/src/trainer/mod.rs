//! Training loop: samplers, Adam, the initial fit and the per-timestep solves.

pub mod adam;
pub mod config;
pub mod sampling;
pub mod sobol;
mod sobol_table;
pub mod solve;
pub mod step;

pub use adam::{adam_step, AdamState};
pub use config::{BumpParams, EnergyMode, IntegralMethod, SolveConfig};
pub use sampling::{face_samples, init_moneyness_samples};
pub use sobol::{sobol_samples, Sobol};
pub use solve::{solve, InitReport, Solution, SolveReport, StepReport, SurrogateReport};
pub use step::{advance_timestep, fit_initial_bump, EpochBatch, InitialFit, StepEngine, StepResult};
