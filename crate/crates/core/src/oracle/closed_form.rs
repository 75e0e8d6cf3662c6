//! Black–Scholes and the Merton Poisson-mixture series for one asset.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub const MAX_SERIES_TERMS: usize = 200;

/// Standard normal CDF via the complementary error function.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// European call `e^{-rT} E[(S_T - K)^+]` under geometric Brownian motion.
pub fn black_scholes_call(s0: f64, k: f64, sigma: f64, r: f64, t: f64) -> f64 {
    let disc_k = k * (-r * t).exp();
    if s0 <= 0.0 {
        return 0.0;
    }
    let vol = sigma * t.sqrt();
    if vol <= 0.0 {
        return (s0 - disc_k).max(0.0);
    }
    let d1 = ((s0 / k).ln() + (r + 0.5 * sigma * sigma) * t) / vol;
    let d2 = d1 - vol;
    s0 * norm_cdf(d1) - disc_k * norm_cdf(d2)
}

/// Merton jump-diffusion call as a Poisson mixture of Black–Scholes prices:
/// `sum_n e^{-l'T} (l'T)^n / n! BS(S0, K, sigma_n, r_n, T)` with
/// `kappa = e^{mu_J + sigma_J^2/2} - 1`, `l' = lambda (1 + kappa)`,
/// `sigma_n^2 = sigma^2 + n sigma_J^2 / T`, `r_n = r - lambda kappa + n (mu_J + sigma_J^2/2) / T`.
/// Summation stops once the remaining Poisson mass falls below `tol`.
#[allow(clippy::too_many_arguments)]
pub fn merton_series_call(s0: f64, k: f64, sigma: f64, r: f64, t: f64, lambda: f64, mu_j: f64, sigma_j: f64, tol: f64) -> Result<f64> {
    let kappa = (mu_j + 0.5 * sigma_j * sigma_j).exp() - 1.0;
    let lp_t = lambda * (1.0 + kappa) * t;
    let mut weight = (-lp_t).exp();
    let mut mass = 0.0;
    let mut price = 0.0;
    for n in 0..MAX_SERIES_TERMS {
        if n > 0 {
            weight *= lp_t / n as f64;
        }
        let nf = n as f64;
        let sigma_n = (sigma * sigma + nf * sigma_j * sigma_j / t).sqrt();
        let r_n = r - lambda * kappa + nf * (mu_j + 0.5 * sigma_j * sigma_j) / t;
        price += weight * black_scholes_call(s0, k, sigma_n, r_n, t);
        mass += weight;
        if 1.0 - mass < tol {
            return Ok(price);
        }
    }
    Err(Error::NoConvergence { terms: MAX_SERIES_TERMS, tail: 1.0 - mass })
}
