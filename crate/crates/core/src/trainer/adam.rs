//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], state: &mut AdamState<T>, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Dimension { expected: params.len(), found: grads.len() });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i}")));
    }
    state.step += 1;
    let (b1, b2) = (T::of(state.beta1), T::of(state.beta2));
    let c1 = 1.0 - state.beta1.powf(state.step as f64);
    let c2 = 1.0 - state.beta2.powf(state.step as f64);
    // lr * m / c1 / (sqrt(v / c2) + eps), folded into two scalars.
    let step_size = T::of(lr / c1);
    let inv_sqrt_c2 = T::of(1.0 / c2.sqrt());
    let eps = T::of(state.eps);
    let one = T::one();
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * state.m[i] + (one - b1) * g;
        let v = b2 * state.v[i] + (one - b2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        params[i] -= step_size * m / (v.sqrt() * inv_sqrt_c2 + eps);
    }
    if let Some(i) = params.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!("parameter {i} after update")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 3e-4).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p: Vec<f64> = vec![0.0, 0.0, 0.0];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[2.5, -0.01, 1e3], &mut s, 3e-4).unwrap();
        for (v, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - sign * 3e-4).abs() < 3e-4 * 1e-5, "{v}");
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut p: Vec<f64> = vec![0.8, -0.5, 0.3];
        let n0 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut s = AdamState::new(3);
        for _ in 0..10_000 {
            let g = p.clone();
            adam_step(&mut p, &g, &mut s, 3e-4).unwrap();
        }
        let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(n <= 1e-3 * n0, "{n}");
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        assert!(adam_step(&mut p, &[f64::NAN], &mut s, 1e-3).is_err());
    }
}
