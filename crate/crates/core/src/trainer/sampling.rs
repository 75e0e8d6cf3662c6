//! Samplers: moneyness-stratified Dirichlet points for the initial fit and
//! boundary-face points for the flux term.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::ann::Mat;

/// `m ~ U(0, x_r)`, `s ~ Dirichlet(1, ..., 1)`, `x_i = m s_i / alpha_i`; every
/// point satisfies `sum alpha_i x_i = m <= x_r`.
pub fn init_moneyness_samples<R: Rng>(n: usize, alpha: &[f64], x_r: f64, rng: &mut R) -> Mat<f64> {
    let d = alpha.len();
    let mut out = Mat::zeros(n, d);
    let mut e = vec![0.0; d];
    for i in 0..n {
        let m = rng.random::<f64>() * x_r;
        for v in e.iter_mut() {
            *v = Exp1.sample(rng);
        }
        let total: f64 = e.iter().sum();
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = m * e[j] / total / alpha[j];
        }
    }
    out
}

/// Points on the faces `x_i = x_max`: `per_face` points per face, the free
/// coordinates taken from `unit` (row-major, `d - 1` columns).
pub fn face_samples(d: usize, x_max: f64, per_face: usize, unit: &[f64]) -> Mat<f64> {
    let mut out = Mat::zeros(d * per_face, d);
    for face in 0..d {
        for p in 0..per_face {
            let row = out.row_mut(face * per_face + p);
            let mut c = 0;
            for (j, v) in row.iter_mut().enumerate() {
                if j == face {
                    *v = x_max;
                } else {
                    *v = unit[p * (d - 1) + c] * x_max;
                    c += 1;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirichlet_points_respect_the_moneyness_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let alpha = [0.2, 0.3, 0.5];
        let x = init_moneyness_samples(100_000, &alpha, 3.0, &mut rng);
        let mut mean = 0.0;
        for i in 0..x.rows {
            let m: f64 = x.row(i).iter().zip(&alpha).map(|(a, b)| a * b).sum();
            assert!(m <= 3.0 + 1e-12 && x.row(i).iter().all(|&v| v >= 0.0));
            mean += m;
        }
        mean /= x.rows as f64;
        assert!((mean - 1.5).abs() < 0.015, "{mean}");
    }

    #[test]
    fn one_dimension_is_uniform_over_alpha() {
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let x = init_moneyness_samples(1000, &[0.5], 3.0, &mut a);
        assert!(x.data.iter().all(|&v| (0.0..=6.0).contains(&v)));
        let mut b = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(x, init_moneyness_samples(1000, &[0.5], 3.0, &mut b));
    }

    #[test]
    fn faces_pin_one_coordinate() {
        let unit = [0.25, 0.5, 0.75, 1.0];
        let f = face_samples(3, 4.0, 2, &unit);
        assert_eq!(f.row(0), &[4.0, 1.0, 2.0]);
        assert_eq!(f.row(3), &[3.0, 4.0, 4.0]);
        assert_eq!(face_samples(1, 4.0, 1, &[]).data, vec![4.0]);
    }
}
