//! Randomized quasi-Monte-Carlo basket pricer conditioned on the jump count.
//!
//! Given `N_T = n`, the log-moneyness vector is Gaussian with mean
//! `log x0 + b T + n mu_J` and covariance `Sigma T + n Sigma_J`, so the price
//! is a Poisson mixture of Gaussian expectations, each estimated with
//! scrambled Sobol points.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::market::{psd_factor, Coefficients, MertonModel};
use crate::rng::{derive, label};
use crate::trainer::Sobol;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QmcConfig {
    /// Total number of points across all replicates.
    pub paths: usize,
    /// Poisson tail mass at which the jump-count sum is truncated.
    pub tolerance: f64,
    pub seed: u64,
    pub scramble: bool,
    /// Independent scramblings used for the error estimate.
    pub replicates: usize,
}

impl Default for QmcConfig {
    fn default() -> Self {
        Self { paths: 1 << 18, tolerance: 1e-12, seed: 2024, scramble: true, replicates: 8 }
    }
}

impl QmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(Error::config("oracle.paths", "must be at least 2"));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-6) {
            return Err(Error::config("oracle.tolerance", "must lie in (0, 1e-6]"));
        }
        if self.replicates < 2 || self.replicates > self.paths {
            return Err(Error::config("oracle.replicates", "must lie in 2..=paths"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmcEstimate {
    /// Mean over replicates.
    pub price: f64,
    /// Error proxy: sample standard deviation of the replicate estimates.
    pub error_proxy: f64,
    /// `error_proxy / sqrt(replicates)`, the nominal standard error of the mean.
    pub std_error: f64,
    /// Jump counts `0 .. jump_terms` were summed.
    pub jump_terms: usize,
}

/// Poisson weights `P(N = n)` until the tail mass drops below `tol`.
pub fn poisson_weights(mean: f64, tol: f64) -> Result<Vec<f64>> {
    let mut w = vec![(-mean).exp()];
    let mut mass = w[0];
    while 1.0 - mass >= tol {
        let n = w.len();
        if n >= 1000 {
            return Err(Error::NoConvergence { terms: n, tail: 1.0 - mass });
        }
        let next = w[n - 1] * mean / n as f64;
        mass += next;
        w.push(next);
    }
    Ok(w)
}

pub fn qmc_basket_call(model: &MertonModel<f64>, x0: &[f64], t: f64, cfg: &QmcConfig) -> Result<QmcEstimate> {
    cfg.validate()?;
    let d = model.dim();
    if x0.len() != d {
        return Err(Error::Dimension { expected: d, found: x0.len() });
    }
    let alpha = model.alpha().to_vec();
    let law = model.jump_law();
    let drift = model.martingale_drift();
    let cov = model.diffusion_cov();
    let weights = poisson_weights(law.lambda * t, cfg.tolerance)?;

    // Per jump count: mean shift and factor of the log-return covariance.
    let mut shifts = Vec::with_capacity(weights.len());
    let mut factors = Vec::with_capacity(weights.len());
    for n in 0..weights.len() {
        let nf = n as f64;
        shifts.push((0..d).map(|i| drift[i] * t + nf * law.mean[i]).collect::<Vec<f64>>());
        let c: Vec<f64> = cov.iter().zip(&law.cov).map(|(s, j)| s * t + nf * j).collect();
        factors.push(psd_factor(&c, d).map_err(Error::Model)?);
    }

    let normal = Normal::standard();
    let per = cfg.paths / cfg.replicates;
    let discount = (-model.rate() * t).exp();
    let mut estimates = Vec::with_capacity(cfg.replicates);
    let mut g = vec![0.0; d];
    let mut y = vec![0.0; d];
    for rep in 0..cfg.replicates {
        let key = derive(cfg.seed, &[label::QMC, rep as u64]);
        let sobol = Sobol::new(d, cfg.scramble.then_some(key))?;
        // Unscrambled replicates take disjoint consecutive blocks, skipping the origin.
        let start = if cfg.scramble { 0 } else { 1 + (rep * per) as u64 };
        let u = sobol.unit(start, per);
        let mut acc = vec![0.0; weights.len()];
        for p in 0..per {
            for (gi, &ui) in g.iter_mut().zip(&u[p * d..(p + 1) * d]) {
                *gi = normal.inverse_cdf(ui);
            }
            for (n, a) in acc.iter_mut().enumerate() {
                let f = &factors[n];
                for i in 0..d {
                    let mut s = shifts[n][i];
                    for j in 0..d {
                        s += f[i * d + j] * g[j];
                    }
                    y[i] = s;
                }
                let basket: f64 = (0..d).map(|i| alpha[i] * x0[i] * y[i].exp()).sum();
                *a += (basket - 1.0).max(0.0);
            }
        }
        let price: f64 = weights.iter().zip(&acc).map(|(w, a)| w * a / per as f64).sum();
        estimates.push(discount * price);
    }
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let sd = var.sqrt();
    Ok(QmcEstimate { price: mean, error_proxy: sd, std_error: sd / r.sqrt(), jump_terms: weights.len() })
}
