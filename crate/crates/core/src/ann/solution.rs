//! Composed price representation
//! `U(t_k, x) = (1 - delta_k0) Softplus(W_out S^L; delta) + v~(t_k, y) + sum alpha_i (x_i - y_i)`
//! with `y = q(x) x`, and its derivatives in space and in the parameters.

use super::dense::Mat;
use super::network::{record, NetworkParams};
use super::tape::Tape;
use crate::error::{Error, Result};
use crate::geometry::{basket, lower_bound_of_moneyness, lower_bound_slope, MollifierParams, TruncationRegion};
use crate::scalar::{logistic, softplus, Real};

/// Rows per tape in the evaluation-only paths.
const CHUNK: usize = 1024;

/// Everything the solution needs besides the network weights.
#[derive(Debug, Clone)]
pub struct SolutionHead<T> {
    pub region: TruncationRegion<T>,
    pub eta: T,
    pub delta: T,
    pub rate: T,
}

/// Values and directional derivatives of `U` on a batch.
#[derive(Debug, Clone, Default)]
pub struct Evaluation<T> {
    pub values: Vec<T>,
    /// `directional[j][i]` is `grad U(x_i) . dir_j(x_i)`.
    pub directional: Vec<Vec<T>>,
}

/// Adjoints of a scalar loss with respect to an [`Evaluation`].
#[derive(Debug, Clone)]
pub struct Adjoint<T> {
    pub values: Vec<T>,
    pub directional: Vec<Vec<T>>,
}

struct Prepared<T> {
    y: Mat<T>,
    inside: Vec<bool>,
    /// `v~(t, y) + sum alpha (x - y)`.
    offset: Vec<T>,
    /// `d v~ / d m` at `y` for inside points.
    slope: Vec<T>,
}

impl<T: Real> SolutionHead<T> {
    pub fn new(region: TruncationRegion<T>, mollifier: &MollifierParams, rate: T) -> Self {
        Self { region, eta: T::of(mollifier.eta), delta: T::of(mollifier.delta), rate }
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    pub fn alpha(&self) -> &[T] {
        &self.region.alpha
    }

    /// `v~(t, y)` at the projected point plus the linear extension.
    pub fn floor(&self, t: T, x: &[T]) -> T {
        let q = self.region.projection_factor(x);
        let m = self.region.moneyness(x);
        lower_bound_of_moneyness(t, q * m, self.eta, self.rate) + (T::one() - q) * m
    }

    fn prepare(&self, t: T, xs: &Mat<T>) -> Prepared<T> {
        let d = self.dim();
        assert_eq!(xs.cols, d, "batch has the wrong dimension");
        let n = xs.rows;
        let mut y = Mat::zeros(n, d);
        let mut inside = Vec::with_capacity(n);
        let mut offset = Vec::with_capacity(n);
        let mut slope = Vec::with_capacity(n);
        for i in 0..n {
            let x = xs.row(i);
            let q = self.region.projection_factor(x);
            for (o, &v) in y.row_mut(i).iter_mut().zip(x) {
                *o = q * v;
            }
            let m = self.region.moneyness(x);
            let my = q * m;
            inside.push(self.region.contains(x));
            offset.push(lower_bound_of_moneyness(t, my, self.eta, self.rate) + (T::one() - q) * m);
            slope.push(lower_bound_slope(t, my, self.eta, self.rate));
        }
        Prepared { y, inside, offset, slope }
    }

    /// Values of `U` on a batch; `params` is ignored when `k == 0`.
    pub fn values(&self, params: &NetworkParams<T>, k: usize, t: T, xs: &Mat<T>) -> Vec<T> {
        if xs.rows > CHUNK {
            let mut out = Vec::with_capacity(xs.rows);
            for start in (0..xs.rows).step_by(CHUNK) {
                let end = (start + CHUNK).min(xs.rows);
                out.extend(self.values(params, k, t, &xs.slice_rows(start..end)));
            }
            return out;
        }
        let prep = self.prepare(t, xs);
        if k == 0 {
            return prep.offset;
        }
        let raw = params.forward(&prep.y);
        raw.into_iter().zip(prep.offset).map(|(o, off)| softplus(o, self.delta) + off).collect()
    }

    /// `U(t_k, x)` at one point.
    pub fn value(&self, params: &NetworkParams<T>, k: usize, t: T, x: &[T]) -> Result<T> {
        self.check_point(params, x)?;
        let v = self.values(params, k, t, &Mat::from_vec(1, x.len(), x.to_vec()))[0];
        if !v.is_finite() {
            return Err(Error::NonFinite("solution value".into()));
        }
        Ok(v)
    }

    /// `grad_x U(t_k, x)` for `x` inside the truncation region.
    pub fn spatial_gradient(&self, params: &NetworkParams<T>, k: usize, t: T, x: &[T]) -> Result<Vec<T>> {
        self.check_point(params, x)?;
        if !self.region.contains(x) {
            return Err(Error::OutsideRegion(format!("{:?}", x.iter().map(|v| v.f64()).collect::<Vec<_>>())));
        }
        let d = x.len();
        let xs = Mat::from_vec(1, d, x.to_vec());
        let dirs: Vec<Mat<T>> = (0..d)
            .map(|j| {
                let mut e = Mat::zeros(1, d);
                e.data[j] = T::one();
                e
            })
            .collect();
        let ev = self.evaluate(params, k, t, &xs, &dirs);
        let g: Vec<T> = ev.directional.iter().map(|v| v[0]).collect();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spatial gradient".into()));
        }
        Ok(g)
    }

    fn check_point(&self, params: &NetworkParams<T>, x: &[T]) -> Result<()> {
        if x.len() != self.dim() || params.shape.d != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), found: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("solution input".into()));
        }
        Ok(())
    }

    /// Values and directional derivatives along `dirs` (each `n x d`). Points
    /// outside the region use the analytic gradient `alpha` of the extension.
    pub fn evaluate(&self, params: &NetworkParams<T>, k: usize, t: T, xs: &Mat<T>, dirs: &[Mat<T>]) -> Evaluation<T> {
        let mut out = Evaluation { values: Vec::with_capacity(xs.rows), directional: vec![Vec::with_capacity(xs.rows); dirs.len()] };
        for start in (0..xs.rows).step_by(CHUNK) {
            let range = start..(start + CHUNK).min(xs.rows);
            let sub: Vec<Mat<T>> = dirs.iter().map(|m| m.slice_rows(range.clone())).collect();
            let ev = self.run::<fn(&Evaluation<T>) -> (T, Adjoint<T>)>(params, k, t, &xs.slice_rows(range), &sub, None).0;
            out.values.extend(ev.values);
            for (o, v) in out.directional.iter_mut().zip(ev.directional) {
                o.extend(v);
            }
        }
        out
    }

    /// Evaluates the batch, calls `loss` on the result to obtain the loss and
    /// its adjoints, and accumulates the parameter gradient into `grad`.
    pub fn value_and_gradient<F>(
        &self,
        params: &NetworkParams<T>,
        k: usize,
        t: T,
        xs: &Mat<T>,
        dirs: &[Mat<T>],
        grad: &mut [T],
        loss: F,
    ) -> T
    where
        F: FnOnce(&Evaluation<T>) -> (T, Adjoint<T>),
    {
        self.run(params, k, t, xs, dirs, Some((grad, loss))).1
    }

    fn run<F>(
        &self,
        params: &NetworkParams<T>,
        k: usize,
        t: T,
        xs: &Mat<T>,
        dirs: &[Mat<T>],
        backward: Option<(&mut [T], F)>,
    ) -> (Evaluation<T>, T)
    where
        F: FnOnce(&Evaluation<T>) -> (T, Adjoint<T>),
    {
        let n = xs.rows;
        let prep = self.prepare(t, xs);
        let alpha = self.alpha();
        // Contribution of the lower bound and extension to each directional derivative.
        let base_dir: Vec<Vec<T>> = dirs
            .iter()
            .map(|dir| {
                (0..n)
                    .map(|i| {
                        let a = basket(dir.row(i), alpha);
                        if prep.inside[i] {
                            prep.slope[i] * a
                        } else {
                            a
                        }
                    })
                    .collect()
            })
            .collect();

        if k == 0 {
            let ev = Evaluation { values: prep.offset, directional: base_dir };
            let l = match backward {
                Some((_, f)) => f(&ev).0,
                None => T::zero(),
            };
            return (ev, l);
        }

        let masked: Vec<Mat<T>> = dirs
            .iter()
            .map(|dir| {
                let mut m = dir.clone();
                for i in 0..n {
                    if !prep.inside[i] {
                        m.row_mut(i).iter_mut().for_each(|v| *v = T::zero());
                    }
                }
                m
            })
            .collect();
        let layout = params.shape.layout();
        let mut tape = Tape::new(&params.values);
        let rec = record(&mut tape, &layout, prep.y, masked);
        let o = &tape.value(rec.out).data;
        let s: Vec<T> = o.iter().map(|&v| logistic(self.delta * v)).collect();
        let values: Vec<T> = o.iter().zip(&prep.offset).map(|(&v, &off)| softplus(v, self.delta) + off).collect();
        let directional: Vec<Vec<T>> = rec
            .tangents
            .iter()
            .zip(base_dir)
            .map(|(&id, base)| {
                let dv = &tape.value(id).data;
                (0..n).map(|i| s[i] * dv[i] + base[i]).collect()
            })
            .collect();
        let ev = Evaluation { values, directional };

        let Some((grad, f)) = backward else { return (ev, T::zero()) };
        let (l, adj) = f(&ev);
        let mut d_out = Mat::zeros(n, 1);
        let mut seeds = Vec::with_capacity(1 + rec.tangents.len());
        for i in 0..n {
            let mut g = adj.values[i] * s[i];
            for (j, &id) in rec.tangents.iter().enumerate() {
                let dv = tape.value(id).data[i];
                g += adj.directional[j][i] * self.delta * s[i] * (T::one() - s[i]) * dv;
            }
            d_out.data[i] = g;
        }
        seeds.push((rec.out, d_out));
        for (j, &id) in rec.tangents.iter().enumerate() {
            let seed: Vec<T> = (0..n).map(|i| adj.directional[j][i] * s[i]).collect();
            seeds.push((id, Mat::from_vec(n, 1, seed)));
        }
        tape.backward(seeds, grad);
        (ev, l)
    }
}

/// Parameter gradient of `loss` composed with the solution on a batch; errors
/// name the first parameter block holding a non-finite entry.
#[allow(clippy::too_many_arguments)]
pub fn parameter_gradient<T: Real, F>(
    head: &SolutionHead<T>,
    params: &NetworkParams<T>,
    k: usize,
    t: T,
    xs: &Mat<T>,
    dirs: &[Mat<T>],
    loss: F,
) -> Result<(T, Vec<T>)>
where
    F: FnOnce(&Evaluation<T>) -> (T, Adjoint<T>),
{
    let mut grad = vec![T::zero(); params.len()];
    let l = head.value_and_gradient(params, k, t, xs, dirs, &mut grad, loss);
    if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("gradient block {}", params.shape.layout().block_name(i))));
    }
    Ok((l, grad))
}

/// `U(t_k, x)` for one point; a free-function form of [`SolutionHead::value`].
pub fn solution_value<T: Real>(
    params: &NetworkParams<T>,
    k: usize,
    t: T,
    x: &[T],
    region: &TruncationRegion<T>,
    mollifier: &MollifierParams,
    rate: T,
) -> Result<T> {
    SolutionHead::new(region.clone(), mollifier, rate).value(params, k, t, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::NetworkShape;
    use crate::geometry::mollified_lower_bound;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn head(d: usize) -> SolutionHead<f64> {
        let region = TruncationRegion::new(4.0, 3.0, vec![1.0 / d as f64; d]).unwrap();
        SolutionHead::new(region, &MollifierParams::default(), 0.05)
    }

    fn net(d: usize, seed: u64) -> NetworkParams<f64> {
        NetworkParams::xavier(NetworkShape::new(d, 2, 8).unwrap(), seed)
    }

    #[test]
    fn time_zero_is_the_payoff() {
        let h = head(2);
        let p = net(2, 1);
        for x in [[0.2, 0.4], [1.5, 1.1], [2.0, 3.0]] {
            let want = (0.5 * (x[0] + x[1]) - 1.0f64).max(0.0);
            assert_eq!(h.value(&p, 0, 0.0, &x).unwrap(), want);
        }
    }

    #[test]
    fn time_value_is_positive_and_ray_linear() {
        let h = head(3);
        let p = net(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..8.0)).collect();
            let t = rng.random_range(0.0..1.0);
            let u = h.value(&p, 3, t, &x).unwrap();
            let y = h.region.project(&x);
            let floor = mollified_lower_bound(t, &y, 10.0, 0.05, h.alpha()) + crate::geometry::linear_offset(&x, &y, h.alpha());
            assert!(u > floor);
            if !h.region.contains(&x) {
                let at_y = h.value(&p, 3, t, &y).unwrap();
                let lin = crate::geometry::linear_offset(&x, &y, h.alpha());
                assert!((u - at_y - lin).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spatial_gradient_matches_finite_differences() {
        let h = head(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..100 {
            let p = net(2, 100 + trial);
            let x: [f64; 2] = [rng.random_range(0.05..2.5), rng.random_range(0.05..2.5)];
            let m = 0.5 * (x[0] + x[1]);
            if (m - 1.0).abs() < 1e-3 || m > 2.95 {
                continue;
            }
            let t = 0.3;
            let g = h.spatial_gradient(&p, 1, t, &x).unwrap();
            for j in 0..2 {
                let step = 1e-5;
                let mut xp = x;
                xp[j] += step;
                let mut xm = x;
                xm[j] -= step;
                let fd = (h.value(&p, 1, t, &xp).unwrap() - h.value(&p, 1, t, &xm).unwrap()) / (2.0 * step);
                let rel = (fd - g[j]).abs() / g[j].abs().max(1e-3);
                assert!(rel < 1e-4, "trial {trial} axis {j}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn gradient_at_time_zero_is_alpha_in_the_money() {
        let h = head(2);
        let p = net(2, 3);
        let g = h.spatial_gradient(&p, 0, 0.0, &[2.0, 1.6]).unwrap();
        assert!(g.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        let g = h.spatial_gradient(&NetworkParams::zeros(p.shape), 0, 0.0, &[0.5, 0.5]).unwrap();
        assert!(g.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_outside_region_is_an_error() {
        let h = head(1);
        assert!(matches!(h.spatial_gradient(&net(1, 1), 1, 0.1, &[3.5]), Err(Error::OutsideRegion(_))));
    }

    #[test]
    fn squared_value_gradient_matches_finite_differences() {
        let h = head(2);
        let p = net(2, 4);
        let x = [1.3, 0.4];
        let t = 0.2;
        let xs = Mat::from_rows(&[x]);
        let (_, g) = parameter_gradient(&h, &p, 2, t, &xs, &[], |ev| {
            let u = ev.values[0];
            (u * u, Adjoint { values: vec![2.0 * u], directional: vec![] })
        })
        .unwrap();
        let layout = p.shape.layout();
        for (name, block) in layout.named_blocks() {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in block.range() {
                let step = 1e-6;
                let mut pp = p.clone();
                pp.values[i] += step;
                let mut pm = p.clone();
                pm.values[i] -= step;
                let up = h.value(&pp, 2, t, &x).unwrap();
                let um = h.value(&pm, 2, t, &x).unwrap();
                let fd = (up * up - um * um) / (2.0 * step);
                num += (fd - g[i]).powi(2);
                den += fd * fd;
            }
            assert!(num.sqrt() <= 1e-4 * den.sqrt().max(1e-8), "block {name}");
        }
    }

    #[test]
    fn directional_loss_gradient_matches_finite_differences() {
        let h = head(2);
        let p = net(2, 6);
        let xs = Mat::from_rows(&[[0.7, 1.1], [3.9, 3.0], [1.8, 0.2]]);
        let dirs = vec![Mat::from_rows(&[[0.3, -0.2], [1.0, 1.0], [0.5, 0.9]])];
        let t = 0.4;
        // L = sum u_i g_i + g_i^2
        let loss = |ev: &Evaluation<f64>| {
            let l: f64 = (0..3).map(|i| ev.values[i] * ev.directional[0][i] + ev.directional[0][i].powi(2)).sum();
            let du = ev.directional[0].clone();
            let dg = (0..3).map(|i| ev.values[i] + 2.0 * ev.directional[0][i]).collect();
            (l, Adjoint { values: du, directional: vec![dg] })
        };
        let (_, g) = parameter_gradient(&h, &p, 1, t, &xs, &dirs, loss).unwrap();
        let f = |q: &NetworkParams<f64>| {
            let ev = h.evaluate(q, 1, t, &xs, &dirs);
            loss(&ev).0
        };
        let mut max_rel = 0.0f64;
        for i in (0..p.len()).step_by(7) {
            let step = 1e-6;
            let mut pp = p.clone();
            pp.values[i] += step;
            let mut pm = p.clone();
            pm.values[i] -= step;
            let fd = (f(&pp) - f(&pm)) / (2.0 * step);
            max_rel = max_rel.max((fd - g[i]).abs() / fd.abs().max(1e-4));
        }
        assert!(max_rel < 1e-4, "{max_rel}");
    }

    #[test]
    fn duplicated_points_double_the_gradient() {
        let h = head(1);
        let p = net(1, 8);
        let sq = |ev: &Evaluation<f64>| {
            let l = ev.values.iter().map(|u| u * u).sum();
            (l, Adjoint { values: ev.values.iter().map(|u| 2.0 * u).collect(), directional: vec![] })
        };
        let (_, g1) = parameter_gradient(&h, &p, 1, 0.1, &Mat::from_rows(&[[1.2]]), &[], sq).unwrap();
        let (_, g2) = parameter_gradient(&h, &p, 1, 0.1, &Mat::from_rows(&[[1.2], [1.2]]), &[], sq).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
        let (_, g0) = parameter_gradient(&h, &p, 1, 0.1, &Mat::from_rows(&[[1.2]]), &[], |ev| {
            (1.0, Adjoint { values: vec![0.0; ev.values.len()], directional: vec![] })
        })
        .unwrap();
        assert!(g0.iter().all(|&v| v == 0.0));
    }
}
