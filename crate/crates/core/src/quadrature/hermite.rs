//! Gauss–Hermite rules for the weight `e^{-xi^2}` by the Golub–Welsch method.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAX_NODES: usize = 64;

/// Abscissae (ascending) and weights of the `n`-point rule for `int f(xi) e^{-xi^2} d xi`.
pub fn hermite_rule_1d(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=MAX_NODES).contains(&n) {
        return Err(Error::config("quadrature.nodes", format!("node count {n} outside 1..={MAX_NODES}")));
    }
    // Jacobi matrix of the monic Hermite recurrence: zero diagonal, off-diagonal sqrt(k/2).
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = j.symmetric_eigen();
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize: the exact rule is symmetric about zero.
    let mut xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut ws: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..n / 2 {
        let k = n - 1 - i;
        let x = 0.5 * (xs[k] - xs[i]);
        let w = 0.5 * (ws[k] + ws[i]);
        xs[i] = -x;
        xs[k] = x;
        ws[i] = w;
        ws[k] = w;
    }
    if n % 2 == 1 {
        xs[n / 2] = 0.0;
    }
    Ok((xs, ws))
}

/// The same rule rescaled to integrate against the standard normal density:
/// nodes `sqrt(2) xi`, weights summing to one.
pub fn normal_rule_1d(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (xs, ws) = hermite_rule_1d(n)?;
    let total: f64 = ws.iter().sum();
    Ok((xs.iter().map(|x| x * std::f64::consts::SQRT_2).collect(), ws.iter().map(|w| w / total).collect()))
}
