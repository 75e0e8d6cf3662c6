//! The initial fit and one minimizing-movement step.

use rand::Rng;

use super::adam::{adam_step, AdamState};
use super::config::{EnergyMode, IntegralMethod, SolveConfig};
use super::sampling::{face_samples, init_moneyness_samples};
use super::sobol::{sobol_samples, Sobol};
use crate::ann::{Adjoint, Mat, NetworkParams, SolutionHead};
use crate::error::{Error, Result};
use crate::imex::{bdf_coefficients, cost_integrand, ExplicitData, SchemeCoefficients, TimestepHistory};
use crate::market::{Coefficients, MertonModel};
use crate::quadrature::{build_rule, integral_operator_ann, JumpOperator};
use crate::rng::{derive, label, stream};
use crate::scalar::{softplus, Real};

/// Model, solution head and quadrature in the working precision.
#[derive(Debug, Clone)]
pub struct StepEngine<'a, T: Real> {
    pub model: MertonModel<T>,
    pub head: SolutionHead<T>,
    pub cfg: &'a SolveConfig,
    gh: Option<JumpOperator<T>>,
}

impl<'a, T: Real> StepEngine<'a, T> {
    pub fn new(model: &MertonModel<f64>, cfg: &'a SolveConfig) -> Result<Self> {
        cfg.validate()?;
        let p = model.params();
        if p.dim() != cfg.region.dim() || p.alpha.iter().zip(&cfg.region.alpha).any(|(a, b)| a != b) {
            return Err(Error::config("model.alpha", "basket weights of the model and the region differ"));
        }
        let gh = match &cfg.integral {
            IntegralMethod::GaussHermite(spec) => Some(JumpOperator::new(&build_rule(model.jump_law(), spec)?, p.lambda)),
            IntegralMethod::Surrogate(_) => None,
        };
        let head = SolutionHead::new(cfg.region.cast(), &cfg.mollifier, T::of(p.r));
        Ok(Self { model: model.cast(), head, cfg, gh })
    }

    pub fn dim(&self) -> usize {
        self.head.dim()
    }

    /// `U` of a stored snapshot on a batch.
    pub fn snapshot_values(&self, params: &NetworkParams<T>, k: usize, t: f64, xs: &Mat<T>) -> Vec<T> {
        self.head.values(params, k, T::of(t), xs)
    }

    /// `sum_j beta_j U^{k-j-1}` and `sum_j gamma_j f[U^{k-j-1}]` on `xs`.
    pub fn explicit_data(&self, history: &TimestepHistory<T>, coeffs: &SchemeCoefficients, xs: &Mat<T>) -> Result<ExplicitData<T>> {
        let n = xs.rows;
        let d = self.dim();
        let mut conv = Mat::zeros(n, d);
        for i in 0..n {
            conv.row_mut(i).copy_from_slice(&self.model.convection(xs.row(i)));
        }
        let mut out = ExplicitData { history: vec![T::zero(); n], forcing: vec![T::zero(); n] };
        for j in 0..coeffs.p {
            let snap = history.get(j).ok_or_else(|| Error::Unsupported(format!("history lacks entry {j}")))?;
            let tj = T::of(snap.t);
            let ev = self.head.evaluate(&snap.params, snap.k, tj, xs, std::slice::from_ref(&conv));
            let integral = match (&self.gh, &snap.surrogate) {
                (Some(op), _) => op.apply(xs, &ev.values, |m| self.head.values(&snap.params, snap.k, tj, m)),
                (None, Some(s)) => integral_operator_ann(s, xs, &ev.values),
                (None, None) => return Err(Error::Unsupported(format!("snapshot {} has no integral surrogate", snap.k))),
            };
            let (b, g) = (T::of(coeffs.beta[j]), T::of(coeffs.gamma[j]));
            for i in 0..n {
                out.history[i] += b * ev.values[i];
                out.forcing[i] += g * (ev.directional[0][i] - integral[i]);
            }
        }
        Ok(out)
    }

    /// `sum_j gamma_j (a grad U^{k-j-1})_i` at points of the face `x_i = x_max`,
    /// `per_face` consecutive rows per face.
    pub fn face_flux(&self, history: &TimestepHistory<T>, coeffs: &SchemeCoefficients, faces: &Mat<T>, per_face: usize) -> Vec<T> {
        let d = self.dim();
        let mut dir = Mat::zeros(faces.rows, d);
        for r in 0..faces.rows {
            let face = r / per_face;
            let a = self.model.diffusion_matrix(faces.row(r));
            dir.row_mut(r).copy_from_slice(&a[face * d..(face + 1) * d]);
        }
        let mut flux = vec![T::zero(); faces.rows];
        for j in 0..coeffs.p {
            let snap = history.get(j).expect("history depth checked by explicit_data");
            let ev = self.head.evaluate(&snap.params, snap.k, T::of(snap.t), faces, std::slice::from_ref(&dir));
            let g = T::of(coeffs.gamma[j]);
            for (f, v) in flux.iter_mut().zip(&ev.directional[0]) {
                *f += g * *v;
            }
        }
        flux
    }

    /// Tangent batches whose squared directional derivatives estimate
    /// `|B(x)^T grad U|^2`, plus the weight of each square.
    fn energy_directions(&self, xs: &Mat<T>, k: usize, epoch: usize) -> (Vec<Mat<T>>, T) {
        let (n, d) = (xs.rows, self.dim());
        let factors: Vec<Vec<T>> = (0..n).map(|i| self.model.diffusion_factor(xs.row(i))).collect();
        match self.cfg.energy {
            EnergyMode::Exact => {
                let dirs = (0..d)
                    .map(|l| {
                        let mut m = Mat::zeros(n, d);
                        for (i, b) in factors.iter().enumerate() {
                            for (a, v) in m.row_mut(i).iter_mut().enumerate() {
                                *v = b[a * d + l];
                            }
                        }
                        m
                    })
                    .collect();
                (dirs, T::one())
            }
            EnergyMode::Hutchinson => {
                let probes = self.cfg.energy_probes;
                let mut rng = stream(self.cfg.seed, &[label::HUTCHINSON, k as u64, epoch as u64]);
                let mut dirs = vec![Mat::zeros(n, d); probes];
                let mut xi = vec![T::zero(); d];
                for (i, b) in factors.iter().enumerate() {
                    for m in dirs.iter_mut() {
                        for v in xi.iter_mut() {
                            *v = if rng.random::<bool>() { T::one() } else { -T::one() };
                        }
                        for (a, o) in m.row_mut(i).iter_mut().enumerate() {
                            *o = (0..d).map(|l| b[a * d + l] * xi[l]).sum();
                        }
                    }
                }
                (dirs, T::of(1.0 / probes as f64))
            }
        }
    }
}

/// Everything one epoch needs besides the trainable parameters.
pub struct EpochBatch<T> {
    pub xs: Mat<T>,
    pub explicit: ExplicitData<T>,
    pub dirs: Vec<Mat<T>>,
    pub dir_weight: T,
    pub faces: Option<(Mat<T>, Vec<T>, T)>,
}

impl<'a, T: Real> StepEngine<'a, T> {
    /// Fresh scrambled Sobol batch in `[0, x_max]^d` with its explicit data.
    pub fn epoch_batch(&self, history: &TimestepHistory<T>, coeffs: &SchemeCoefficients, k: usize, epoch: usize) -> Result<EpochBatch<T>> {
        let cfg = self.cfg;
        let d = self.dim();
        let seed = derive(cfg.seed, &[label::SOBOL, k as u64, epoch as u64]);
        let xs: Mat<T> = sobol_samples(cfg.samples_per_epoch, d, cfg.region.x_max, seed, true)?.cast();
        let explicit = self.explicit_data(history, coeffs, &xs)?;
        let (dirs, dir_weight) = self.energy_directions(&xs, k, epoch);
        let faces = if cfg.boundary_flux {
            let per_face = if d == 1 { 1 } else { cfg.face_samples };
            let unit = if d == 1 {
                Vec::new()
            } else {
                Sobol::new(d - 1, Some(derive(cfg.seed, &[label::SOBOL, k as u64, epoch as u64, 1])))?.unit(0, per_face)
            };
            let pts: Mat<T> = face_samples(d, cfg.region.x_max, per_face, &unit).cast();
            let flux = self.face_flux(history, coeffs, &pts, per_face);
            let area = cfg.region.x_max.powi(d as i32 - 1) / per_face as f64;
            Some((pts, flux, T::of(area)))
        } else {
            None
        };
        Ok(EpochBatch { xs, explicit, dirs, dir_weight, faces })
    }

    /// Discretized cost on `batch` and its parameter gradient (accumulated into
    /// `grad`, which is zeroed first). Errors name the first non-finite sample.
    pub fn cost_and_gradient(
        &self,
        params: &NetworkParams<T>,
        k: usize,
        coeffs: &SchemeCoefficients,
        batch: &EpochBatch<T>,
        grad: &mut [T],
    ) -> std::result::Result<T, usize> {
        let cfg = self.cfg;
        grad.iter_mut().for_each(|g| *g = T::zero());
        let t = T::of(k as f64 * cfg.tau);
        let (beta_p, tau, r) = (T::of(coeffs.beta_p), T::of(cfg.tau), self.model.rate());
        let n = batch.xs.rows;
        let scale = T::of(cfg.region.x_max.powi(self.dim() as i32) / n as f64);
        let half = T::of(0.5);
        let quarter_w = T::of(0.25) * batch.dir_weight;
        let mut total = T::zero();
        let mut bad: Option<usize> = None;
        for start in (0..n).step_by(cfg.batch) {
            let range = start..(start + cfg.batch).min(n);
            let xs = batch.xs.slice_rows(range.clone());
            let dirs: Vec<Mat<T>> = batch.dirs.iter().map(|m| m.slice_rows(range.clone())).collect();
            let h = &batch.explicit.history[range.clone()];
            let f = &batch.explicit.forcing[range.clone()];
            let bad_ref = &mut bad;
            total += self.head.value_and_gradient(params, k, t, &xs, &dirs, grad, |ev| {
                let m = ev.values.len();
                let mut l = T::zero();
                let mut adj = Adjoint { values: vec![T::zero(); m], directional: vec![vec![T::zero(); m]; dirs.len()] };
                for i in 0..m {
                    let u = ev.values[i];
                    let sq: T = ev.directional.iter().map(|dv| dv[i] * dv[i]).sum();
                    let energy = quarter_w * sq + half * r * u * u;
                    let c = cost_integrand(beta_p, tau, u, energy, h[i], f[i]);
                    if !c.is_finite() && bad_ref.is_none() {
                        *bad_ref = Some(range.start + i);
                    }
                    l += c;
                    adj.values[i] = scale * (beta_p * (beta_p * u - h[i]) + tau * (r * u + f[i]));
                    for (a, dv) in adj.directional.iter_mut().zip(&ev.directional) {
                        a[i] = scale * tau * half * batch.dir_weight * dv[i];
                    }
                }
                (l * scale, adj)
            });
        }
        if let Some((pts, flux, area)) = &batch.faces {
            let w = -tau * *area;
            total += self.head.value_and_gradient(params, k, t, pts, &[], grad, |ev| {
                let l = ev.values.iter().zip(flux).map(|(&u, &g)| w * g * u).sum();
                (l, Adjoint { values: flux.iter().map(|&g| w * g).collect(), directional: Vec::new() })
            });
        }
        match bad {
            Some(i) => Err(i),
            None if !total.is_finite() => Err(n),
            None => Ok(total),
        }
    }
}

/// Relative floor of the initial-fit target.
pub const BUMP_FLOOR: f64 = 1e-3;

/// Outcome of the `t = 0` fit.
#[derive(Debug, Clone)]
pub struct InitialFit<T> {
    pub params: NetworkParams<T>,
    pub final_loss: f64,
    pub holdout_rms: f64,
    /// Set when the loss did not decrease over the final tenth of the epochs.
    pub warning: Option<String>,
}

/// Fits `Softplus(network; delta)` (without the `k = 0` gate) to the bump on
/// moneyness-stratified Dirichlet samples, evaluated at the projected points.
///
/// The regression runs on the raw network output against the inverse
/// Softplus of the bump, floored at `BUMP_FLOOR * epsilon`. A value-space
/// fit drives the output deep into the flat tail of the Softplus, where the
/// bump can no longer pull it back.
pub fn fit_initial_bump<T: Real>(head: &SolutionHead<T>, cfg: &SolveConfig) -> Result<InitialFit<T>> {
    cfg.validate()?;
    let alpha: Vec<f64> = cfg.region.alpha.clone();
    let mut params = NetworkParams::<T>::xavier(cfg.shape, derive(cfg.seed, &[label::INIT_PARAMS]));
    let mut adam = AdamState::new(params.len());
    let mut grad = vec![T::zero(); params.len()];
    let delta = head.delta;

    let floor = BUMP_FLOOR * cfg.bump.epsilon;
    let delta64 = delta.f64();
    let targets = |xs: &Mat<f64>| -> (Mat<T>, Vec<T>, Vec<T>) {
        let mut y = Mat::zeros(xs.rows, xs.cols);
        let mut f = Vec::with_capacity(xs.rows);
        let mut raw = Vec::with_capacity(xs.rows);
        for i in 0..xs.rows {
            let p = cfg.region.project(xs.row(i));
            let v = cfg.bump.value(cfg.region.moneyness(&p));
            f.push(T::of(v));
            raw.push(T::of((delta64 * v.max(floor)).exp_m1().ln() / delta64));
            y.row_mut(i).copy_from_slice(&p);
        }
        (y.cast(), f, raw)
    };

    let mut losses = Vec::with_capacity(cfg.epochs_init);
    for epoch in 0..cfg.epochs_init {
        let mut rng = stream(cfg.seed, &[label::INIT_SAMPLES, epoch as u64]);
        let (y, _, raw) = targets(&init_moneyness_samples(cfg.init_samples, &alpha, cfg.region.x_r, &mut rng));
        grad.iter_mut().for_each(|g| *g = T::zero());
        let scale = T::of(1.0 / y.rows as f64);
        let mut loss = T::zero();
        for start in (0..y.rows).step_by(cfg.batch) {
            let end = (start + cfg.batch).min(y.rows);
            let ft = &raw[start..end];
            loss += params.output_gradient(&y.slice_rows(start..end), &mut grad, |o| {
                let mut l = T::zero();
                let adj = o
                    .iter()
                    .zip(ft)
                    .map(|(&v, &target)| {
                        let res = v - target;
                        l += res * res;
                        T::of(2.0) * res * scale
                    })
                    .collect();
                (l * scale, adj)
            });
        }
        if !loss.is_finite() {
            return Err(Error::Diverged { step: 0, epoch, detail: "initial fit loss is not finite".into() });
        }
        losses.push(loss.f64());
        adam_step(&mut params.values, &grad, &mut adam, cfg.learning_rate)?;
    }

    let mut rng = stream(cfg.seed, &[label::HOLDOUT]);
    let (y, f, _) = targets(&init_moneyness_samples(4096, &alpha, cfg.region.x_r, &mut rng));
    let out = params.forward(&y);
    let mse = out.iter().zip(&f).map(|(&o, &t)| (softplus(o, delta) - t).f64().powi(2)).sum::<f64>() / f.len() as f64;

    let tail = (losses.len() / 10).max(2).min(losses.len());
    let warning = if tail >= 2 {
        let last = &losses[losses.len() - tail..];
        let half = tail / 2;
        let early = last[..half].iter().sum::<f64>() / half as f64;
        let late = last[half..].iter().sum::<f64>() / (tail - half) as f64;
        (late >= early).then(|| format!("initial fit loss did not decrease over the final {tail} epochs ({early:.3e} -> {late:.3e})"))
    } else {
        None
    };
    Ok(InitialFit { params, final_loss: losses.last().copied().unwrap_or(f64::NAN), holdout_rms: mse.sqrt(), warning })
}

/// Result of one timestep.
#[derive(Debug, Clone)]
pub struct StepResult<T> {
    pub params: NetworkParams<T>,
    pub k: usize,
    /// Scheme order actually used (lower than configured during the bootstrap).
    pub order: usize,
    pub epochs: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    /// First-epoch cost of a freshly initialized network on the same batch.
    pub fresh_first_loss: f64,
}

/// Minimizes the step-`k` cost starting from `warm`, where `k` is the step
/// following the newest snapshot in `history`.
pub fn advance_timestep<T: Real>(engine: &StepEngine<T>, history: &TimestepHistory<T>, warm: &NetworkParams<T>) -> Result<StepResult<T>> {
    let cfg = engine.cfg;
    let k = history.next_k();
    if k == 0 {
        return Err(Error::Unsupported("the history is empty; fit the initial snapshot first".into()));
    }
    let order = history.order();
    let coeffs = bdf_coefficients(order)?;
    let epochs = if k == 1 { cfg.epochs_first } else { cfg.epochs_step };
    let mut params = warm.clone();
    let mut adam = AdamState::new(params.len());
    let mut grad = vec![T::zero(); params.len()];
    let (mut first, mut last, mut fresh) = (f64::NAN, f64::NAN, f64::NAN);
    let diverged = |epoch: usize, i: usize| Error::Diverged { step: k, epoch, detail: format!("non-finite cost at sample {i}") };
    for epoch in 0..epochs {
        let batch = engine.epoch_batch(history, &coeffs, k, epoch)?;
        if epoch == 0 {
            let xavier = NetworkParams::xavier(cfg.shape, derive(cfg.seed, &[label::INIT_PARAMS, k as u64]));
            let mut scratch = vec![T::zero(); params.len()];
            fresh = engine.cost_and_gradient(&xavier, k, &coeffs, &batch, &mut scratch).map_or(f64::NAN, |c| c.f64());
        }
        let cost = engine.cost_and_gradient(&params, k, &coeffs, &batch, &mut grad).map_err(|i| diverged(epoch, i))?;
        if epoch == 0 {
            first = cost.f64();
        }
        last = cost.f64();
        adam_step(&mut params.values, &grad, &mut adam, cfg.learning_rate)
            .map_err(|e| Error::Diverged { step: k, epoch, detail: e.to_string() })?;
    }
    Ok(StepResult { params, k, order, epochs, first_loss: first, final_loss: last, fresh_first_loss: fresh })
}
