//! Dirichlet energy, the explicit remainder `f[u]` and the per-timestep cost
//! `(x_max)^d / N sum_i { 1/2 (beta_p U_i - h_i)^2 + tau E[U]_i + tau F_i U_i }`.

use crate::error::{Error, Result};
use crate::market::Coefficients;
use crate::scalar::Real;

/// `1/2 grad^T a(x) grad + 1/2 r u^2`.
pub fn dirichlet_energy<T: Real, M: Coefficients<T> + ?Sized>(model: &M, x: &[T], u: T, grad: &[T]) -> T {
    let d = model.dim();
    let a = model.diffusion_matrix(x);
    let half = T::of(0.5);
    let mut q = T::zero();
    for i in 0..d {
        for j in 0..d {
            q += grad[i] * a[i * d + j] * grad[j];
        }
    }
    half * q + half * model.rate() * u * u
}

/// `f[u](x) = sum_i c_i(x) du/dx_i - I[u](x)`.
pub fn explicit_term<T: Real, M: Coefficients<T> + ?Sized>(model: &M, x: &[T], _u: T, grad: &[T], integral: T) -> T {
    let c = model.convection(x);
    c.iter().zip(grad).map(|(&ci, &g)| ci * g).sum::<T>() - integral
}

/// θ-independent data of one sample batch.
#[derive(Debug, Clone, Default)]
pub struct ExplicitData<T> {
    /// `sum_j beta_j U(t_{k-j-1}, x_i)`.
    pub history: Vec<T>,
    /// `sum_j gamma_j f[U(t_{k-j-1})](x_i)`.
    pub forcing: Vec<T>,
}

/// Per-sample integrand `1/2 (beta_p u - h)^2 + tau e + tau F u`.
#[inline]
pub fn cost_integrand<T: Real>(beta_p: T, tau: T, u: T, energy: T, history: T, forcing: T) -> T {
    let res = beta_p * u - history;
    T::of(0.5) * res * res + tau * energy + tau * forcing * u
}

/// The discretized cost for given values and energies at `N` samples drawn
/// from a domain of measure `volume`. Errors name the first non-finite sample.
pub fn discrete_cost<T: Real>(
    beta_p: T,
    tau: T,
    volume: T,
    values: &[T],
    energies: &[T],
    explicit: &ExplicitData<T>,
) -> Result<T> {
    let n = values.len();
    if energies.len() != n || explicit.history.len() != n || explicit.forcing.len() != n {
        return Err(Error::Dimension { expected: n, found: energies.len().min(explicit.history.len()) });
    }
    let mut total = T::zero();
    for i in 0..n {
        let c = cost_integrand(beta_p, tau, values[i], energies[i], explicit.history[i], explicit.forcing[i]);
        if !c.is_finite() {
            return Err(Error::NonFinite(format!("cost at sample {i}")));
        }
        total += c;
    }
    Ok(total * volume / T::of(n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{MertonModel, MertonParams};

    fn model(lambda: f64) -> MertonModel<f64> {
        MertonModel::new(MertonParams::equicorrelated(1, 0.5, 0.0, 0.05, lambda, 0.0, 0.5, 0.0)).unwrap()
    }

    #[test]
    fn energy_examples() {
        let m = model(1.0);
        assert_eq!(dirichlet_energy(&m, &[1.0], 0.0, &[0.0]), 0.0);
        assert!((dirichlet_energy(&m, &[1.0], 0.0, &[2.0]) - 0.25).abs() < 1e-15);
        assert!((dirichlet_energy(&m, &[1.0], 2.0, &[0.0]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn explicit_term_examples() {
        let m = model(0.0);
        assert_eq!(explicit_term(&m, &[1.3], 4.0, &[0.0], 0.0), 0.0);
        // c(1) = -(r) + sigma^2 without jumps.
        assert!((explicit_term(&m, &[1.0], 0.0, &[1.0], 0.0) - 0.2).abs() < 1e-15);
        let mj = model(1.0);
        let x = [1.4];
        let kappa = 0.125f64.exp() - 1.0;
        let integral = 1.0 * x[0] * kappa;
        let c = mj.convection(&x)[0];
        assert!((explicit_term(&mj, &x, 1.4, &[1.0], integral) - (c - x[0] * kappa)).abs() < 1e-15);
    }

    #[test]
    fn explicit_term_is_linear() {
        let m = model(1.0);
        let x = [0.9];
        let f = |g: f64, i: f64| explicit_term(&m, &x, 0.0, &[g], i);
        assert!((f(0.3 + 2.0 * 0.7, 0.1 + 2.0 * 0.4) - (f(0.3, 0.1) + 2.0 * f(0.7, 0.4))).abs() < 1e-15);
    }

    #[test]
    fn cost_examples() {
        let e = ExplicitData { history: vec![0.3, 0.5], forcing: vec![1.0, -2.0] };
        let c = discrete_cost(1.0, 0.0, 4.0, &[0.3, 0.5], &[9.0, 9.0], &e).unwrap();
        assert_eq!(c, 0.0);
        let vals = [0.1, 0.7];
        let en = [0.2, 0.05];
        let c1: f64 = discrete_cost(1.0, 0.02, 4.0, &vals, &en, &e).unwrap();
        let e2 = ExplicitData { history: [e.history.clone(), e.history.clone()].concat(), forcing: [e.forcing.clone(), e.forcing.clone()].concat() };
        let c2 = discrete_cost(1.0, 0.02, 4.0, &[vals, vals].concat(), &[en, en].concat(), &e2).unwrap();
        assert!((c1 - c2).abs() < 1e-15);
        assert!(discrete_cost(1.0, 0.02, 4.0, &[f64::NAN, 0.0], &en, &e).is_err());
    }
}
