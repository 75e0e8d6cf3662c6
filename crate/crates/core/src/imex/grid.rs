//! One-asset timestep on a uniform grid, with grid functions in place of the
//! network. The cost is quadratic in the nodal values, so its minimizer can be
//! found exactly and set against the discrete Euler–Lagrange system.
//!
//! The matching term `1/2 (beta_p u - h)^2` has stationarity condition
//! `beta_p (beta_p u - h) / tau + L u + F = 0`, which is the displayed scheme
//! `(beta_p u - h) / tau + L u + F = 0` only when `beta_p = 1`. Both residuals
//! are reported by [`GridStep::residuals`].

use nalgebra::{DMatrix, DVector};

use super::cost::{cost_integrand, dirichlet_energy, explicit_term};
use crate::ann::Mat;
use crate::error::{Error, Result};
use crate::market::MertonModel;
use crate::quadrature::{JumpOperator, QuadratureRule};

/// Nodes `x_i = i h` on `[0, x_max]`, one per entry of `history`.
#[derive(Debug, Clone)]
pub struct GridStep<'a> {
    pub model: &'a MertonModel<f64>,
    pub x_max: f64,
    pub tau: f64,
    pub beta_p: f64,
    /// `sum_j beta_j u^{k-j-1}` at the nodes.
    pub history: Vec<f64>,
    /// `sum_j gamma_j f_h[u^{k-j-1}]` at the nodes.
    pub forcing: Vec<f64>,
}

/// Largest nodal residuals of a grid function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridResiduals {
    /// `(beta_p u - h) / tau + L_h u + F`.
    pub scheme: f64,
    /// `beta_p (beta_p u - h) / tau + L_h u + F`, the gradient of the cost over `h tau`.
    pub stationarity: f64,
}

impl<'a> GridStep<'a> {
    pub fn new(model: &'a MertonModel<f64>, x_max: f64, tau: f64, beta_p: f64, history: Vec<f64>, forcing: Vec<f64>) -> Result<Self> {
        use crate::market::Coefficients;
        if model.dim() != 1 {
            return Err(Error::Dimension { expected: 1, found: model.dim() });
        }
        if history.len() < 2 || forcing.len() != history.len() {
            return Err(Error::Dimension { expected: history.len().max(2), found: forcing.len() });
        }
        Ok(Self { model, x_max, tau, beta_p, history, forcing })
    }

    pub fn spacing(&self) -> f64 {
        self.x_max / (self.history.len() - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.history.len()).map(|i| i as f64 * h).collect()
    }

    /// Lumped nodal sum of the cost integrand plus the face energies
    /// `1/2 a(x_{i+1/2}) ((u_{i+1} - u_i) / h)^2`.
    pub fn cost(&self, u: &[f64]) -> f64 {
        let h = self.spacing();
        let mut total = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            let x = i as f64 * h;
            let e = dirichlet_energy(self.model, &[x], ui, &[0.0]);
            total += cost_integrand(self.beta_p, self.tau, ui, e, self.history[i], self.forcing[i]);
        }
        for i in 0..u.len() - 1 {
            let g = (u[i + 1] - u[i]) / h;
            total += self.tau * dirichlet_energy(self.model, &[(i as f64 + 0.5) * h], 0.0, &[g]);
        }
        h * total
    }

    /// Exact minimizer, with the Hessian and gradient at zero read off the
    /// cost by polarization.
    pub fn minimize(&self) -> Result<Vec<f64>> {
        let n = self.history.len();
        let c0 = self.cost(&vec![0.0; n]);
        let axis = |i: usize, s: f64| {
            let mut v = vec![0.0; n];
            v[i] = s;
            self.cost(&v)
        };
        let mut hess = DMatrix::zeros(n, n);
        let mut grad = DVector::zeros(n);
        for i in 0..n {
            // C(e) - C(-e) = 2 g_i and C(2e) = c0 + 2 g_i + 2 H_ii.
            grad[i] = 0.5 * (axis(i, 1.0) - axis(i, -1.0));
            hess[(i, i)] = 0.5 * (axis(i, 2.0) - c0 - 2.0 * grad[i]);
        }
        // The stencil couples neighbours only.
        for i in 0..n - 1 {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v[i + 1] = 1.0;
            let hij = self.cost(&v) - c0 - grad[i] - grad[i + 1] - 0.5 * (hess[(i, i)] + hess[(i + 1, i + 1)]);
            hess[(i, i + 1)] = hij;
            hess[(i + 1, i)] = hij;
        }
        let chol = hess.cholesky().ok_or_else(|| Error::NonFinite("grid cost Hessian is not positive definite".into()))?;
        Ok(chol.solve(&(-grad)).iter().copied().collect())
    }

    /// `L_h u = -D(a D u) + r u` with zero flux through both ends.
    pub fn operator(&self, u: &[f64]) -> Vec<f64> {
        use crate::market::Coefficients;
        let h = self.spacing();
        let n = u.len();
        let a = |x: f64| self.model.diffusion_matrix(&[x])[0];
        (0..n)
            .map(|i| {
                let mut flux = 0.0;
                if i + 1 < n {
                    flux += a((i as f64 + 0.5) * h) * (u[i + 1] - u[i]);
                }
                if i > 0 {
                    flux -= a((i as f64 - 0.5) * h) * (u[i] - u[i - 1]);
                }
                -flux / (h * h) + self.model.rate() * u[i]
            })
            .collect()
    }

    pub fn residuals(&self, u: &[f64]) -> GridResiduals {
        let lu = self.operator(u);
        let mut out = GridResiduals { scheme: 0.0, stationarity: 0.0 };
        for i in 0..u.len() {
            let jump = (self.beta_p * u[i] - self.history[i]) / self.tau;
            out.scheme = out.scheme.max((jump + lu[i] + self.forcing[i]).abs());
            out.stationarity = out.stationarity.max((self.beta_p * jump + lu[i] + self.forcing[i]).abs());
        }
        out
    }
}

/// `f_h[u] = c(x) D u - I_h[u]` at the nodes: centred differences, and the jump
/// integral of the piecewise linear interpolant, extended linearly past `x_max`.
pub fn grid_forcing(model: &MertonModel<f64>, rule: &QuadratureRule, x_max: f64, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let h = x_max / (n - 1) as f64;
    let interp = |x: f64| {
        let s = (x / h).max(0.0);
        let i = (s.floor() as usize).min(n - 2);
        let w = s - i as f64;
        (1.0 - w) * u[i] + w * u[i + 1]
    };
    let xs = Mat::from_vec(n, 1, (0..n).map(|i| i as f64 * h).collect());
    let op = JumpOperator::<f64>::new(rule, model.params().lambda);
    let integral = op.apply(&xs, u, |pts| (0..pts.rows).map(|k| interp(pts.row(k)[0])).collect());
    (0..n)
        .map(|i| {
            let g = if i == 0 {
                (u[1] - u[0]) / h
            } else if i == n - 1 {
                (u[n - 1] - u[n - 2]) / h
            } else {
                (u[i + 1] - u[i - 1]) / (2.0 * h)
            };
            explicit_term(model, &[i as f64 * h], u[i], &[g], integral[i])
        })
        .collect()
}
