//! Second network for the jump integral. The integral is predicted as
//! `G(x; theta_I) - lambda U(x)` and regressed onto noisy targets
//! `lambda (mean_m U(x e^{z_m}) - U(x))` with fresh draws every epoch; since
//! `U(x)` is known exactly the network only has to carry the smooth part
//! `lambda E[U(x e^z)]`, not the kink of `U` itself.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ann::{Mat, NetworkParams, NetworkShape};
use crate::error::{Error, Result};
use crate::market::{psd_factor, JumpLaw};
use crate::rng::{derive, label, stream};
use crate::scalar::Real;
use crate::trainer::adam::{adam_step, AdamState};
use crate::trainer::sobol::sobol_samples;

/// Rows per backward pass.
const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    /// Adam steps for a fit from fresh weights.
    pub epochs: usize,
    /// Adam steps when warm-started from the previous surrogate.
    pub warm_epochs: usize,
    /// Training points per epoch.
    pub samples: usize,
    /// Jump draws per training point per epoch.
    pub jump_draws: usize,
    pub layers: usize,
    pub width: usize,
    pub learning_rate: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { epochs: 2048, warm_epochs: 256, samples: 4096, jump_draws: 8, layers: 2, width: 64, learning_rate: 3e-4 }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("quadrature.surrogate.epochs", self.epochs),
            ("quadrature.surrogate.warm_epochs", self.warm_epochs),
            ("quadrature.surrogate.samples", self.samples),
            ("quadrature.surrogate.jump_draws", self.jump_draws),
            ("quadrature.surrogate.layers", self.layers),
            ("quadrature.surrogate.width", self.width),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("quadrature.surrogate.learning_rate", "must be positive"));
        }
        Ok(())
    }
}

/// A fitted integral surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralSurrogate<T> {
    pub params: NetworkParams<T>,
    pub lambda: T,
    /// Mean squared regression residual of the last epoch.
    pub final_loss: f64,
    pub epochs: usize,
}

/// Fits `G` to the jump integral of the function behind `eval`, which must
/// accept arbitrary non-negative points (applying any extension itself).
///
/// Draws come in antithetic pairs. With `linear_control = Some(c)` the
/// zero-mean term `c . x (e^z - E e^z)` is subtracted from each draw, which
/// removes the spread of the targets where the function is close to linear.
pub fn fit_surrogate<T: Real, F>(
    mut eval: F,
    law: &JumpLaw,
    x_max: f64,
    cfg: &SurrogateConfig,
    linear_control: Option<&[f64]>,
    warm: Option<&NetworkParams<T>>,
    seed: u64,
) -> Result<IntegralSurrogate<T>>
where
    F: FnMut(&Mat<T>) -> Vec<T>,
{
    cfg.validate()?;
    let d = law.dim();
    let factor = psd_factor(&law.cov, d).map_err(|e| Error::Model(format!("jump covariance {e}")))?;
    let shape = NetworkShape::new(d, cfg.layers, cfg.width)?;
    let (mut params, epochs) = match warm {
        Some(p) if p.shape == shape => (p.clone(), cfg.warm_epochs),
        _ => (NetworkParams::xavier(shape, derive(seed, &[label::INIT_PARAMS])), cfg.epochs),
    };
    let mut adam = AdamState::new(params.len());
    let lambda = T::of(law.lambda);
    let inv_draws = T::of(1.0 / cfg.jump_draws as f64);
    let mut final_loss = 0.0;
    let mut grad = vec![T::zero(); params.len()];
    let mut g = vec![0.0; d];
    let mean_growth = law.mean_relative_jump().iter().map(|k| 1.0 + k).collect::<Vec<_>>();

    for epoch in 0..epochs {
        let xs: Mat<T> = sobol_samples(cfg.samples, d, x_max, derive(seed, &[label::SOBOL, epoch as u64]), true)?.cast();
        let mut rng = stream(seed, &[label::JUMPS, epoch as u64]);
        let mut jumped = Mat::zeros(cfg.samples * cfg.jump_draws, d);
        let mut control = vec![T::zero(); cfg.samples];
        for i in 0..cfg.samples {
            let x = xs.row(i);
            let mut cv = 0.0;
            for m in 0..cfg.jump_draws {
                // Antithetic pairs: every odd draw mirrors the previous one.
                if m % 2 == 0 {
                    for v in g.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                } else {
                    g.iter_mut().for_each(|v| *v = -*v);
                }
                let row = jumped.row_mut(i * cfg.jump_draws + m);
                for a in 0..d {
                    let growth = (law.mean[a] + (0..d).map(|b| factor[a * d + b] * g[b]).sum::<f64>()).exp();
                    row[a] = x[a] * T::of(growth);
                    if let Some(w) = linear_control {
                        cv += w[a] * x[a].f64() * (growth - mean_growth[a]);
                    }
                }
            }
            control[i] = T::of(cv);
        }
        let u0 = eval(&xs);
        let uj = eval(&jumped);
        // Target for `G`: the integral target shifted by the exact `lambda U(x)`.
        let target: Vec<T> = (0..cfg.samples)
            .map(|i| {
                let s: T = uj[i * cfg.jump_draws..(i + 1) * cfg.jump_draws].iter().copied().sum();
                let integral = lambda * ((s - control[i]) * inv_draws - u0[i]);
                integral + lambda * u0[i]
            })
            .collect();
        if let Some(i) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("surrogate target at sample {i}, epoch {epoch}")));
        }

        grad.iter_mut().for_each(|v| *v = T::zero());
        let scale = T::of(1.0 / cfg.samples as f64);
        let mut loss = T::zero();
        for start in (0..cfg.samples).step_by(CHUNK) {
            let end = (start + CHUNK).min(cfg.samples);
            let chunk = xs.slice_rows(start..end);
            let tgt = &target[start..end];
            loss += params.output_gradient(&chunk, &mut grad, |o| {
                let mut l = T::zero();
                let adj = o
                    .iter()
                    .zip(tgt)
                    .map(|(&v, &y)| {
                        let r = v - y;
                        l += r * r;
                        T::of(2.0) * r * scale
                    })
                    .collect();
                (l * scale, adj)
            });
        }
        if !loss.is_finite() {
            return Err(Error::Diverged { step: 0, epoch, detail: "surrogate loss is not finite".into() });
        }
        final_loss = loss.f64();
        adam_step(&mut params.values, &grad, &mut adam, cfg.learning_rate)?;
    }
    Ok(IntegralSurrogate { params, lambda, final_loss, epochs })
}

/// Surrogate integral `G(x_i) - lambda u_i` on a batch, given `u_i = U(x_i)`.
pub fn integral_operator_ann<T: Real>(surrogate: &IntegralSurrogate<T>, xs: &Mat<T>, u_at_x: &[T]) -> Vec<T> {
    surrogate.params.forward(xs).into_iter().zip(u_at_x).map(|(g, &u)| g - surrogate.lambda * u).collect()
}
