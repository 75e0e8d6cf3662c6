//! Domain truncation, the moneyness projection onto the bounded region, the
//! mollified intrinsic-value lower bound and the linear price extension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{logistic, Real};

/// `R = { x >= 0 : sum alpha_i x_i < x_r, x_i <= x_max }`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationRegion<T> {
    pub x_max: T,
    pub x_r: T,
    pub alpha: Vec<T>,
}

impl<T: Real> TruncationRegion<T> {
    pub fn new(x_max: T, x_r: T, alpha: Vec<T>) -> Result<Self> {
        if !(x_max > T::zero() && x_max.is_finite()) {
            return Err(Error::config("region.x_max", "must be positive and finite"));
        }
        if !(x_r > T::zero() && x_r <= x_max) {
            return Err(Error::config("region.x_r", "must satisfy 0 < x_r <= x_max"));
        }
        if alpha.is_empty() || alpha.iter().any(|a| *a <= T::zero()) {
            return Err(Error::config("model.alpha", "basket weights must be positive"));
        }
        Ok(Self { x_max, x_r, alpha })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn moneyness(&self, x: &[T]) -> T {
        basket(x, &self.alpha)
    }

    /// True when `x` lies in `R` (strict moneyness bound, inclusive cap).
    pub fn contains(&self, x: &[T]) -> bool {
        self.moneyness(x) < self.x_r && x.iter().all(|&v| v >= T::zero() && v <= self.x_max)
    }

    /// Scaling `q(x)` so that `q(x) x` lies in the closure of `R`:
    /// `x_max / max x_i` when `max x_i >= max(m, x_r) x_max / x_r`, otherwise
    /// `x_r / max(m, x_r)`. `q(0) = 1`.
    pub fn projection_factor(&self, x: &[T]) -> T {
        let top = x.iter().fold(T::zero(), |a, &b| a.max(b));
        if top <= T::zero() {
            return T::one();
        }
        let m = self.moneyness(x).max(self.x_r);
        if top >= m * self.x_max / self.x_r {
            self.x_max / top
        } else {
            self.x_r / m
        }
    }

    pub fn project(&self, x: &[T]) -> Vec<T> {
        let q = self.projection_factor(x);
        x.iter().map(|&v| q * v).collect()
    }

    /// `price_at_y + sum alpha_i (x_i - y_i)` for `y = project(x)`.
    pub fn extend_price(&self, x: &[T], price_at_y: T) -> T {
        let q = self.projection_factor(x);
        price_at_y + (T::one() - q) * self.moneyness(x)
    }

    pub fn cast<U: Real>(&self) -> TruncationRegion<U> {
        TruncationRegion {
            x_max: U::of(self.x_max.f64()),
            x_r: U::of(self.x_r.f64()),
            alpha: self.alpha.iter().map(|a| U::of(a.f64())).collect(),
        }
    }
}

/// Sharpness constants of the two smooth heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierParams {
    /// Sigmoid sharpness of the mollified lower bound.
    pub eta: f64,
    /// Softplus sharpness of the time-value head.
    pub delta: f64,
}

impl Default for MollifierParams {
    fn default() -> Self {
        Self { eta: 10.0, delta: 1.0 }
    }
}

impl MollifierParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config("region.eta", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config("network.delta", "must be positive"));
        }
        Ok(())
    }
}

/// `sum alpha_i x_i`.
#[inline]
pub fn basket<T: Real>(x: &[T], alpha: &[T]) -> T {
    x.iter().zip(alpha).map(|(&a, &b)| a * b).sum()
}

/// `sum alpha_i (x_i - y_i)`.
#[inline]
pub fn linear_offset<T: Real>(x: &[T], y: &[T], alpha: &[T]) -> T {
    x.iter().zip(y).zip(alpha).map(|((&a, &b), &w)| w * (a - b)).sum()
}

/// `(m - 1)^+ + (1 - e^{-rt}) Sigmoid(m - e^{-rt}; eta)` with `m = sum alpha_i y_i`.
pub fn mollified_lower_bound<T: Real>(t: T, y: &[T], eta: T, r: T, alpha: &[T]) -> T {
    lower_bound_of_moneyness(t, basket(y, alpha), eta, r)
}

pub fn lower_bound_of_moneyness<T: Real>(t: T, m: T, eta: T, r: T) -> T {
    let disc = (-r * t).exp();
    (m - T::one()).max(T::zero()) + (T::one() - disc) * logistic(eta * (m - disc))
}

/// Derivative of the lower bound with respect to the moneyness `m`; the
/// gradient in `y` is this value times `alpha`. The `(m - 1)^+` kink takes the
/// right derivative at `m = 1`.
pub fn lower_bound_slope<T: Real>(t: T, m: T, eta: T, r: T) -> T {
    let disc = (-r * t).exp();
    let s = logistic(eta * (m - disc));
    let kink = if m > T::one() { T::one() } else { T::zero() };
    kink + (T::one() - disc) * eta * s * (T::one() - s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn region(d: usize) -> TruncationRegion<f64> {
        TruncationRegion::new(4.0, 3.0, vec![1.0 / d as f64; d]).unwrap()
    }

    #[test]
    fn inside_points_are_fixed() {
        let r = region(3);
        let x = [0.5, 1.0, 2.0];
        assert!(r.contains(&x));
        assert_eq!(r.projection_factor(&x), 1.0);
        assert_eq!(r.project(&x), x.to_vec());
        assert_eq!(r.project(&[0.0, 0.0, 0.0]), vec![0.0; 3]);
    }

    #[test]
    fn moneyness_branch_halves() {
        let r = region(2);
        // m = 6 = 2 x_r, max x_i = 6 < 6 * 4 / 3.
        let x = [6.0, 6.0];
        assert_eq!(r.projection_factor(&x), 0.5);
        assert_eq!(r.project(&x), vec![3.0, 3.0]);
    }

    #[test]
    fn cap_branch_halves() {
        let r = region(2);
        // max x_i = 8 = 2 x_max; m = 4.5, threshold max(4.5, 3) * 4/3 = 6.
        let x = [8.0, 1.0];
        assert_eq!(r.projection_factor(&x), 0.5);
    }

    #[test]
    fn invalid_regions() {
        assert!(TruncationRegion::new(3.0, 4.0, vec![1.0]).is_err());
        assert!(TruncationRegion::new(0.0, 0.0, vec![1.0]).is_err());
        assert!(TruncationRegion::new(4.0, 3.0, vec![0.0]).is_err());
    }

    #[test]
    fn lower_bound_examples() {
        let a = [0.5, 0.5];
        let v0 = mollified_lower_bound(0.0, &[1.6, 1.0], 10.0, 0.05, &a);
        assert!((v0 - 0.3f64).abs() < 1e-15);
        let t = 0.7;
        let disc = (-0.05f64 * t).exp();
        let y = [disc, disc];
        let v = mollified_lower_bound(t, &y, 10.0, 0.05, &a);
        assert!((v - (1.0 - disc) / 2.0).abs() < 1e-15);
        // eta -> infinity recovers (m - e^{-rt})^+ away from the kink.
        for &m in &[0.5, 0.9, 1.2, 2.0] {
            let sharp = lower_bound_of_moneyness(t, m, 1e6, 0.05);
            let want = (m - disc).max(0.0);
            assert!((sharp - want).abs() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn payoff_recovered_at_time_zero() {
        for &m in &[0.0, 0.5, 1.0, 1.3, 2.9] {
            assert_eq!(lower_bound_of_moneyness(0.0, m, 10.0, 0.05), (m - 1.0f64).max(0.0));
        }
    }

    #[test]
    fn extension_examples() {
        let r = region(2);
        let inside = [1.0, 1.0];
        assert_eq!(r.extend_price(&inside, 0.3), 0.3);
        let x = [6.0, 6.0];
        let p = 0.7;
        assert!((r.extend_price(&x, p) - (p + 3.0)).abs() < 1e-15);
        let t = 0.5;
        let deep = 3.0 - (-0.05f64 * t).exp();
        assert!((r.extend_price(&x, deep) - (6.0 - (-0.05f64 * t).exp())).abs() < 1e-14);
    }

    #[test]
    fn lower_bound_is_monotone_and_below_asymptote() {
        let (eta, r) = (10.0f64, 0.05);
        for i in 0..=300 {
            let m = i as f64 * 0.01;
            for j in 0..=20 {
                let t = j as f64 * 0.05;
                let v = lower_bound_of_moneyness(t, m, eta, r);
                // At m = 0 the sigmoid tail leaves ṽ(t, 0) > 0; that floor is the only excess.
                let floor = lower_bound_of_moneyness(t, 0.0, eta, r);
                assert!(v <= m.max(floor) + 1e-15, "m={m} t={t}");
                assert!(v >= 0.0);
                assert!(lower_bound_of_moneyness(t, m + 0.01, eta, r) >= v);
                if m >= 1.0 {
                    assert!(lower_bound_of_moneyness(t + 0.05, m, eta, r) >= v - 1e-15);
                }
            }
        }
    }

    #[test]
    fn slope_matches_finite_differences() {
        let (eta, r, t) = (10.0f64, 0.05, 0.4);
        for &m in &[0.3, 0.95, 0.99, 1.2, 2.5] {
            let h = 1e-6;
            let fd = (lower_bound_of_moneyness(t, m + h, eta, r) - lower_bound_of_moneyness(t, m - h, eta, r)) / (2.0 * h);
            assert!((fd - lower_bound_slope(t, m, eta, r)).abs() < 1e-6, "m={m}");
        }
    }

    proptest! {
        #[test]
        fn projection_lands_in_closed_region(x in prop::collection::vec(0.0f64..20.0, 1..6)) {
            let d = x.len();
            let r = region(d);
            let q = r.projection_factor(&x);
            prop_assert!((0.0..=1.0).contains(&q));
            let y = r.project(&x);
            prop_assert!(r.moneyness(&y) <= r.x_r + 1e-12);
            prop_assert!(y.iter().all(|&v| v <= r.x_max + 1e-12));
            let yy = r.project(&y);
            for (a, b) in yy.iter().zip(&y) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
