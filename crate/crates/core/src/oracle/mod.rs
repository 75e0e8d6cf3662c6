//! Reference prices: Black–Scholes, the Merton series and the conditioned QMC pricer.

pub mod closed_form;
pub mod qmc;

pub use closed_form::{black_scholes_call, merton_series_call, norm_cdf};
pub use qmc::{poisson_weights, qmc_basket_call, QmcConfig, QmcEstimate};
