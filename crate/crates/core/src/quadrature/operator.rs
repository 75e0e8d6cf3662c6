//! Gauss–Hermite evaluation of `I[u](x) = lambda int (u(x e^z) - u(x)) phi(dz)`.

use super::rule::QuadratureRule;
use crate::ann::Mat;
use crate::scalar::Real;

/// Rows of `x` per evaluator call.
const CHUNK: usize = 256;

/// Rule with the node factors `e^{z_m}` precomputed in the working precision.
#[derive(Debug, Clone)]
pub struct JumpOperator<T> {
    pub lambda: T,
    pub d: usize,
    growth: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> JumpOperator<T> {
    pub fn new(rule: &QuadratureRule, lambda: f64) -> Self {
        Self {
            lambda: T::of(lambda),
            d: rule.d,
            growth: rule.nodes.iter().map(|z| T::of(z.exp())).collect(),
            weights: rule.weights.iter().map(|&w| T::of(w)).collect(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.weights.len()
    }

    /// `I[u]` at every row of `xs`, given `u` values there (`u_at_x`) and an
    /// evaluator for `u` on arbitrary batches (which must apply the extension
    /// beyond the truncation region).
    pub fn apply<F>(&self, xs: &Mat<T>, u_at_x: &[T], mut eval: F) -> Vec<T>
    where
        F: FnMut(&Mat<T>) -> Vec<T>,
    {
        let (d, m) = (self.d, self.nodes());
        let mut out = Vec::with_capacity(xs.rows);
        for start in (0..xs.rows).step_by(CHUNK) {
            let end = (start + CHUNK).min(xs.rows);
            let mut jumped = Mat::zeros((end - start) * m, d);
            for i in start..end {
                let x = xs.row(i);
                for k in 0..m {
                    let row = jumped.row_mut((i - start) * m + k);
                    let g = &self.growth[k * d..(k + 1) * d];
                    for j in 0..d {
                        row[j] = x[j] * g[j];
                    }
                }
            }
            let u = eval(&jumped);
            for i in start..end {
                let s: T = (0..m).map(|k| self.weights[k] * u[(i - start) * m + k]).sum();
                out.push(self.lambda * (s - u_at_x[i]));
            }
        }
        out
    }
}

/// `I[u](x)` at a single point.
pub fn integral_operator_gh<T: Real, F>(eval: F, x: &[T], rule: &QuadratureRule, lambda: f64) -> T
where
    F: Fn(&Mat<T>) -> Vec<T>,
{
    let op = JumpOperator::new(rule, lambda);
    let xs = Mat::from_vec(1, x.len(), x.to_vec());
    let u0 = eval(&xs);
    op.apply(&xs, &u0, eval)[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::{NetworkParams, NetworkShape, SolutionHead};
    use crate::geometry::{MollifierParams, TruncationRegion};
    use crate::market::JumpLaw;
    use crate::quadrature::rule::{build_rule, RuleSpec};

    fn rule(d: usize) -> (QuadratureRule, JumpLaw) {
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] = 0.25 * if i == j { 1.0 } else { 0.3 };
            }
        }
        let law = JumpLaw { lambda: 1.0, mean: vec![0.05; d], cov };
        (build_rule(&law, &RuleSpec::default()).unwrap(), law)
    }

    #[test]
    fn constant_function_gives_zero() {
        let (r, _) = rule(2);
        let v = integral_operator_gh(|m: &Mat<f64>| vec![3.5; m.rows], &[1.0, 2.0], &r, 1.3);
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn linear_function_gives_mean_relative_jump() {
        for d in [1usize, 2, 3, 5] {
            let (r, law) = rule(d);
            let c: Vec<f64> = (0..d).map(|i| 0.5 + 0.25 * i as f64).collect();
            let x: Vec<f64> = (0..d).map(|i| 0.8 + 0.1 * i as f64).collect();
            let lin = |m: &Mat<f64>| (0..m.rows).map(|i| m.row(i).iter().zip(&c).map(|(a, b)| a * b).sum()).collect();
            let v = integral_operator_gh(lin, &x, &r, 1.0);
            let kappa = law.mean_relative_jump();
            let exact: f64 = (0..d).map(|i| c[i] * x[i] * kappa[i]).sum();
            let tol = if d <= 3 { 1e-6 } else { 1e-3 };
            assert!((v - exact).abs() < tol * exact.abs().max(1.0), "d={d}: {v} vs {exact}");
        }
    }

    #[test]
    fn origin_is_absorbing() {
        let (r, _) = rule(2);
        let region = TruncationRegion::new(4.0, 3.0, vec![0.5, 0.5]).unwrap();
        let head = SolutionHead::new(region, &MollifierParams::default(), 0.0);
        let p = NetworkParams::<f64>::zeros(NetworkShape::new(2, 1, 4).unwrap());
        // At k = 0 the solution is the payoff, which vanishes at the origin.
        let eval = |m: &Mat<f64>| head.values(&p, 0, 0.0, m);
        assert_eq!(integral_operator_gh(eval, &[0.0, 0.0], &r, 1.0), 0.0);
    }

    #[test]
    fn operator_is_linear_in_the_solution() {
        let (r, _) = rule(2);
        let region = TruncationRegion::new(4.0, 3.0, vec![0.5, 0.5]).unwrap();
        let head = SolutionHead::new(region, &MollifierParams::default(), 0.05);
        let shape = NetworkShape::new(2, 2, 6).unwrap();
        let (p, q) = (NetworkParams::<f64>::xavier(shape, 1), NetworkParams::<f64>::xavier(shape, 2));
        let (a, b) = (0.7, -1.9);
        let x = [1.2, 0.6];
        let iu = integral_operator_gh(|m: &Mat<f64>| head.values(&p, 1, 0.1, m), &x, &r, 1.0);
        let iv = integral_operator_gh(|m: &Mat<f64>| head.values(&q, 1, 0.1, m), &x, &r, 1.0);
        let combo = |m: &Mat<f64>| {
            let u = head.values(&p, 1, 0.1, m);
            let v = head.values(&q, 1, 0.1, m);
            u.iter().zip(&v).map(|(s, w)| a * s + b * w).collect()
        };
        let ic = integral_operator_gh(combo, &x, &r, 1.0);
        assert!((ic - (a * iu + b * iv)).abs() < 1e-13);
    }
}
