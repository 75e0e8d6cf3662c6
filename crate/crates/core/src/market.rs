//! Multi-asset Merton jump-diffusion: parameters, the risk-neutral drift, the
//! basket payoff and the PIDE coefficients in divergence form.
//!
//! States are moneynesses `x_i = S_i / K` (strike normalized to one).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalues below this are treated as a PSD violation.
pub const PSD_TOLERANCE: f64 = -1e-10;

/// Plain model parameters as read from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MertonParams {
    /// Diffusion volatilities, per sqrt(year).
    pub sigma: Vec<f64>,
    /// Diffusion correlation matrix, row-major `d x d`.
    pub rho: Vec<Vec<f64>>,
    /// Risk-free rate, per year.
    pub r: f64,
    /// Jump intensity, per year.
    pub lambda: f64,
    pub mu_j: Vec<f64>,
    pub sigma_j: Vec<f64>,
    pub rho_j: Vec<Vec<f64>>,
    /// Basket weights.
    pub alpha: Vec<f64>,
}

impl MertonParams {
    /// Equally weighted basket with equicorrelated diffusions and jumps.
    #[allow(clippy::too_many_arguments)]
    pub fn equicorrelated(
        d: usize,
        sigma: f64,
        rho: f64,
        r: f64,
        lambda: f64,
        mu_j: f64,
        sigma_j: f64,
        rho_j: f64,
    ) -> Self {
        let corr = |c: f64| -> Vec<Vec<f64>> {
            (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { c }).collect()).collect()
        };
        Self {
            sigma: vec![sigma; d],
            rho: corr(rho),
            r,
            lambda,
            mu_j: vec![mu_j; d],
            sigma_j: vec![sigma_j; d],
            rho_j: corr(rho_j),
            alpha: vec![1.0 / d as f64; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }
}

/// Compound-Poisson jump law: intensity and the Gaussian law of log-jump sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLaw {
    pub lambda: f64,
    pub mean: Vec<f64>,
    /// Covariance `Sigma_J`, row-major `d x d`.
    pub cov: Vec<f64>,
}

impl JumpLaw {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `E[e^{z_i}] - 1` per coordinate.
    pub fn mean_relative_jump(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| (self.mean[i] + 0.5 * self.cov[i * d + i]).exp() - 1.0).collect()
    }
}

/// PIDE coefficient source. The operator is
/// `A u = -sum a_ij u_ij + sum b_i(x) u_i + r u - I[u]`, split as
/// `A u = L u + f[u]` with `L u = -div(a grad u) + r u`.
pub trait Coefficients<T: Real>: Send + Sync {
    fn dim(&self) -> usize;
    fn rate(&self) -> T;
    fn alpha(&self) -> &[T];
    /// `a(x)`, row-major `d x d`.
    fn diffusion_matrix(&self, x: &[T]) -> Vec<T>;
    /// `B(x)` with `a(x) = B B^T / 2`, row-major `d x d`.
    fn diffusion_factor(&self, x: &[T]) -> Vec<T>;
    /// First-order coefficient `b_i(x)` of the operator.
    fn drift(&self, x: &[T]) -> Vec<T>;
    /// `sum_j d a_ij / d x_j`.
    fn diffusion_divergence(&self, x: &[T]) -> Vec<T>;
    fn jump_law(&self) -> &JumpLaw;

    /// Coefficient of `u_i` in `f[u]`: `b_i(x) + sum_j d a_ij / d x_j`.
    fn convection(&self, x: &[T]) -> Vec<T> {
        self.drift(x).into_iter().zip(self.diffusion_divergence(x)).map(|(b, g)| b + g).collect()
    }
}

/// Validated Merton model with precomputed factorizations.
#[derive(Debug, Clone)]
pub struct MertonModel<T> {
    params: MertonParams,
    d: usize,
    sigma: Vec<T>,
    rho: Vec<T>,
    /// `C` with `rho = C C^T`, row-major.
    rho_factor: Vec<T>,
    alpha: Vec<T>,
    r: T,
    /// `r - lambda * kappa_i`: the risk-neutral growth rate of each asset.
    growth: Vec<T>,
    jumps: JumpLaw,
}

impl<T: Real> MertonModel<T> {
    pub fn new(params: MertonParams) -> Result<Self> {
        let d = params.dim();
        if d == 0 {
            return Err(Error::Model("at least one asset is required".into()));
        }
        let check_len = |name: &str, n: usize| -> Result<()> {
            if n != d {
                return Err(Error::Model(format!("{name} has length {n}, expected {d}")));
            }
            Ok(())
        };
        check_len("mu_j", params.mu_j.len())?;
        check_len("sigma_j", params.sigma_j.len())?;
        check_len("alpha", params.alpha.len())?;
        check_len("rho", params.rho.len())?;
        check_len("rho_j", params.rho_j.len())?;
        for (name, v) in [("sigma", &params.sigma), ("sigma_j", &params.sigma_j), ("alpha", &params.alpha)] {
            if let Some(i) = v.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
                return Err(Error::Model(format!("{name}[{i}] must be positive and finite")));
            }
        }
        if !(params.lambda >= 0.0 && params.lambda.is_finite()) {
            return Err(Error::Model("lambda must be non-negative".into()));
        }
        if !params.r.is_finite() || params.mu_j.iter().any(|m| !m.is_finite()) {
            return Err(Error::Model("r and mu_j must be finite".into()));
        }
        let rho = correlation(&params.rho, "rho")?;
        let rho_j = correlation(&params.rho_j, "rho_j")?;
        let rho_factor = psd_factor(&rho, d).map_err(|e| Error::Model(format!("rho: {e}")))?;
        psd_factor(&rho_j, d).map_err(|e| Error::Model(format!("rho_j: {e}")))?;

        let mut cov_j = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                cov_j[i * d + j] = params.sigma_j[i] * params.sigma_j[j] * rho_j[i * d + j];
            }
        }
        let jumps = JumpLaw { lambda: params.lambda, mean: params.mu_j.clone(), cov: cov_j };
        let kappa = jumps.mean_relative_jump();
        let growth = kappa.iter().map(|k| T::of(params.r - params.lambda * k)).collect();

        Ok(Self {
            d,
            sigma: params.sigma.iter().map(|&v| T::of(v)).collect(),
            rho: rho.iter().map(|&v| T::of(v)).collect(),
            rho_factor: rho_factor.iter().map(|&v| T::of(v)).collect(),
            alpha: params.alpha.iter().map(|&v| T::of(v)).collect(),
            r: T::of(params.r),
            growth,
            jumps,
            params,
        })
    }

    pub fn params(&self) -> &MertonParams {
        &self.params
    }

    pub fn cast<U: Real>(&self) -> MertonModel<U> {
        MertonModel::new(self.params.clone()).expect("already validated")
    }

    /// Log-drift `b_i = r - sigma_i^2/2 - lambda (exp(mu_J,i + sigma_J,i^2/2) - 1)`
    /// making each discounted asset price a martingale.
    pub fn martingale_drift(&self) -> Vec<f64> {
        let p = &self.params;
        (0..self.d)
            .map(|i| {
                let kappa = (p.mu_j[i] + 0.5 * p.sigma_j[i] * p.sigma_j[i]).exp() - 1.0;
                p.r - 0.5 * p.sigma[i] * p.sigma[i] - p.lambda * kappa
            })
            .collect()
    }

    /// Diffusion covariance `Sigma_ij = sigma_i sigma_j rho_ij`, row-major.
    pub fn diffusion_cov(&self) -> Vec<f64> {
        let p = &self.params;
        let d = self.d;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = p.sigma[i] * p.sigma[j] * p.rho[i][j];
            }
        }
        out
    }

    /// Basket payoff at `t = 0`.
    pub fn payoff(&self, x: &[T]) -> T {
        payoff(x, &self.alpha)
    }
}

impl<T: Real> Coefficients<T> for MertonModel<T> {
    fn dim(&self) -> usize {
        self.d
    }

    fn rate(&self) -> T {
        self.r
    }

    fn alpha(&self) -> &[T] {
        &self.alpha
    }

    /// `a_ij(x) = sigma_i rho_ij sigma_j x_i x_j / 2`.
    fn diffusion_matrix(&self, x: &[T]) -> Vec<T> {
        let d = self.d;
        let half = T::of(0.5);
        let mut a = vec![T::zero(); d * d];
        for i in 0..d {
            let si = self.sigma[i] * x[i];
            for j in 0..d {
                a[i * d + j] = half * si * self.rho[i * d + j] * self.sigma[j] * x[j];
            }
        }
        a
    }

    fn diffusion_factor(&self, x: &[T]) -> Vec<T> {
        let d = self.d;
        let mut b = vec![T::zero(); d * d];
        for i in 0..d {
            let si = self.sigma[i] * x[i];
            for j in 0..d {
                b[i * d + j] = si * self.rho_factor[i * d + j];
            }
        }
        b
    }

    /// `b_i(x) = -(r - lambda kappa_i) x_i`, the first-order coefficient of the
    /// pricing operator in time-to-maturity.
    fn drift(&self, x: &[T]) -> Vec<T> {
        self.growth.iter().zip(x).map(|(&g, &xi)| -g * xi).collect()
    }

    /// `sigma_i^2 x_i` from the diagonal plus `sigma_i rho_ij sigma_j x_i / 2` for `j != i`.
    fn diffusion_divergence(&self, x: &[T]) -> Vec<T> {
        let d = self.d;
        let half = T::of(0.5);
        (0..d)
            .map(|i| {
                let mut acc = self.sigma[i] * self.sigma[i] * x[i];
                for j in 0..d {
                    if j != i {
                        acc += half * self.sigma[i] * self.rho[i * d + j] * self.sigma[j] * x[i];
                    }
                }
                acc
            })
            .collect()
    }

    fn jump_law(&self) -> &JumpLaw {
        &self.jumps
    }
}

/// `max(sum alpha_i x_i - 1, 0)`.
pub fn payoff<T: Real>(x: &[T], alpha: &[T]) -> T {
    let m: T = x.iter().zip(alpha).map(|(&a, &b)| a * b).sum();
    (m - T::one()).max(T::zero())
}

/// Converts spot prices and a raw strike into moneynesses.
pub fn moneyness_from_spot(spots: &[f64], strike: f64) -> Vec<f64> {
    spots.iter().map(|s| s / strike).collect()
}

fn correlation(rows: &[Vec<f64>], name: &str) -> Result<Vec<f64>> {
    let d = rows.len();
    let mut out = Vec::with_capacity(d * d);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::Model(format!("{name} row {i} has length {}, expected {d}", r.len())));
        }
        out.extend_from_slice(r);
    }
    for i in 0..d {
        if (out[i * d + i] - 1.0).abs() > 1e-12 {
            return Err(Error::Model(format!("{name}[{i}][{i}] must be 1")));
        }
        for j in 0..i {
            if (out[i * d + j] - out[j * d + i]).abs() > 1e-12 {
                return Err(Error::Model(format!("{name} is not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(out)
}

/// Symmetric PSD factor `Q sqrt(max(Lambda, 0))` of a row-major matrix, or an
/// error when an eigenvalue falls below [`PSD_TOLERANCE`].
pub fn psd_factor(m: &[f64], d: usize) -> std::result::Result<Vec<f64>, String> {
    let eig = symmetric_eigen(m, d);
    if let Some(&min) = eig.eigenvalues.iter().min_by(|a, b| a.total_cmp(b)) {
        if min < PSD_TOLERANCE {
            return Err(format!("not positive semi-definite (eigenvalue {min:e})"));
        }
    }
    let mut out = vec![0.0; d * d];
    for j in 0..d {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..d {
            out[i * d + j] = eig.eigenvectors[(i, j)] * s;
        }
    }
    Ok(out)
}

pub fn symmetric_eigen(m: &[f64], d: usize) -> SymmetricEigen<f64, nalgebra::Dyn> {
    DMatrix::from_row_slice(d, d, m).symmetric_eigen()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(sigma: f64, r: f64, lambda: f64, mu: f64, sj: f64) -> MertonModel<f64> {
        MertonModel::new(MertonParams::equicorrelated(1, sigma, 0.0, r, lambda, mu, sj, 0.0)).unwrap()
    }

    #[test]
    fn drift_without_jumps_is_black_scholes() {
        let m = single(0.5, 0.05, 0.0, 0.3, 0.2);
        assert!((m.martingale_drift()[0] + 0.075).abs() < 1e-15);
    }

    #[test]
    fn drift_with_jumps() {
        let m = single(0.5, 0.05, 1.0, 0.0, 0.5);
        // e^{0.125} - 1 = 0.133148453...
        assert!((m.martingale_drift()[0] - (-0.208_148_453_07)).abs() < 1e-9);
    }

    #[test]
    fn degenerate_zero_drift() {
        // sigma must be positive for a valid model, so evaluate the formula limit directly.
        let m = single(1e-9, 0.0, 0.0, 0.0, 0.5);
        assert!(m.martingale_drift()[0].abs() < 1e-15);
    }

    #[test]
    fn payoff_examples() {
        assert_eq!(payoff(&[1.0, 1.0], &[0.5, 0.5]), 0.0);
        assert_eq!(payoff(&[2.0, 2.0], &[0.5, 0.5]), 1.0);
        assert_eq!(payoff(&[0.0, 0.0, 0.0], &[0.2, 0.3, 0.5]), 0.0);
    }

    #[test]
    fn diffusion_matrix_examples() {
        let m1 = single(0.5, 0.05, 0.0, 0.0, 0.5);
        assert_eq!(m1.diffusion_matrix(&[0.0]), vec![0.0]);
        assert!((m1.diffusion_matrix(&[2.0])[0] - 0.5).abs() < 1e-15);
        let m2 = MertonModel::<f64>::new(MertonParams::equicorrelated(2, 0.5, 0.5, 0.05, 1.0, 0.0, 0.5, 0.2)).unwrap();
        let a = m2.diffusion_matrix(&[1.0, 1.0]);
        assert!((a[1] - 0.0625).abs() < 1e-15);
        assert_eq!(a[1], a[2]);
    }

    #[test]
    fn factor_reproduces_diffusion_matrix() {
        let m = MertonModel::<f64>::new(MertonParams::equicorrelated(3, 0.4, 0.5, 0.05, 1.0, 0.0, 0.5, 0.2)).unwrap();
        let x = [0.7, 1.3, 2.1];
        let a = m.diffusion_matrix(&x);
        let b = m.diffusion_factor(&x);
        for i in 0..3 {
            for j in 0..3 {
                let bbt: f64 = (0..3).map(|k| b[i * 3 + k] * b[j * 3 + k]).sum();
                assert!((0.5 * bbt - a[i * 3 + j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn convection_examples() {
        let m = single(0.5, 0.05, 0.0, 0.0, 0.5);
        assert_eq!(m.convection(&[0.0]), vec![0.0]);
        // -(r) x + sigma^2 x at x = 1 with no jumps.
        assert!((m.convection(&[1.0])[0] - 0.2).abs() < 1e-15);
        let m2 = MertonModel::<f64>::new(MertonParams::equicorrelated(2, 0.5, 0.0, 0.05, 1.0, 0.0, 0.5, 0.0)).unwrap();
        let c = m2.convection(&[1.3, 1.3]);
        assert_eq!(c[0], c[1]);
    }

    #[test]
    fn convection_matches_finite_differences_of_diffusion() {
        let m = MertonModel::<f64>::new(MertonParams::equicorrelated(3, 0.5, 0.3, 0.05, 1.0, 0.1, 0.4, 0.2)).unwrap();
        let x = [0.8, 1.7, 1.1];
        let h = 1e-5;
        let c = m.convection(&x);
        let drift = m.drift(&x);
        for i in 0..3 {
            let mut div = 0.0;
            for j in 0..3 {
                let mut xp = x;
                xp[j] += h;
                let mut xm = x;
                xm[j] -= h;
                div += (m.diffusion_matrix(&xp)[i * 3 + j] - m.diffusion_matrix(&xm)[i * 3 + j]) / (2.0 * h);
            }
            let want = drift[i] + div;
            assert!(((c[i] - want) / want).abs() < 1e-6, "{} vs {}", c[i], want);
        }
    }

    #[test]
    fn invalid_models_are_rejected() {
        let good = MertonParams::equicorrelated(2, 0.5, 0.5, 0.05, 1.0, 0.0, 0.5, 0.2);
        let mut p = good.clone();
        p.rho[0][1] = 1.5;
        p.rho[1][0] = 1.5;
        assert!(MertonModel::<f64>::new(p).is_err());
        let mut p = good.clone();
        p.rho[0][1] = 0.2;
        assert!(MertonModel::<f64>::new(p).is_err());
        let mut p = good.clone();
        p.lambda = -1.0;
        assert!(MertonModel::<f64>::new(p).is_err());
        let mut p = good.clone();
        p.alpha[1] = 0.0;
        assert!(MertonModel::<f64>::new(p).is_err());
        let mut p = good;
        p.sigma_j.pop();
        assert!(MertonModel::<f64>::new(p).is_err());
    }
}
