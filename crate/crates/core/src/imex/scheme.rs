//! IMEX-BDF coefficient tables and the history of previous solution snapshots.

use std::collections::VecDeque;

use crate::ann::NetworkParams;
use crate::quadrature::IntegralSurrogate;
use crate::error::{Error, Result};

/// `beta_p u^k - sum_j beta_j u^{k-j-1} + tau (L u^k + sum_j gamma_j f[u^{k-j-1}]) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeCoefficients {
    pub p: usize,
    /// Coefficient of the implicit value `u^k`.
    pub beta_p: f64,
    /// `beta_0 .. beta_{p-1}`, multiplying `u^{k-1} .. u^{k-p}`.
    pub beta: Vec<f64>,
    /// `gamma_0 .. gamma_{p-1}`, extrapolation weights of the explicit term.
    pub gamma: Vec<f64>,
}

pub fn bdf_coefficients(p: usize) -> Result<SchemeCoefficients> {
    match p {
        1 => Ok(SchemeCoefficients { p, beta_p: 1.0, beta: vec![1.0], gamma: vec![1.0] }),
        2 => Ok(SchemeCoefficients { p, beta_p: 1.5, beta: vec![2.0, -0.5], gamma: vec![2.0, -1.0] }),
        _ => Err(Error::Unsupported(format!("BDF order {p}; only 1 and 2 are implemented"))),
    }
}

/// One stored solution `(k, t_k, theta^k)`, with the integral surrogate fitted
/// to it when the surrogate quadrature is in use.
#[derive(Debug, Clone)]
pub struct Snapshot<T> {
    pub k: usize,
    pub t: f64,
    pub params: NetworkParams<T>,
    pub surrogate: Option<IntegralSurrogate<T>>,
}

/// The last `p` snapshots, newest first.
#[derive(Debug, Clone)]
pub struct TimestepHistory<T> {
    pub p: usize,
    pub tau: f64,
    entries: VecDeque<Snapshot<T>>,
}

impl<T> TimestepHistory<T> {
    pub fn new(p: usize, tau: f64) -> Result<Self> {
        bdf_coefficients(p)?;
        Ok(Self { p, tau, entries: VecDeque::with_capacity(p) })
    }

    /// Index of the step being computed.
    pub fn next_k(&self) -> usize {
        self.entries.front().map_or(0, |s| s.k + 1)
    }

    pub fn depth(&self) -> usize {
        self.entries.len()
    }

    /// Scheme order usable at the next step: `min(k, p)`, so the first
    /// `p - 1` steps fall back to lower order.
    pub fn order(&self) -> usize {
        self.depth().min(self.p)
    }

    /// `u^{k-j-1}` for the next step `k`.
    pub fn get(&self, j: usize) -> Option<&Snapshot<T>> {
        self.entries.get(j)
    }

    pub fn newest(&self) -> Option<&Snapshot<T>> {
        self.entries.front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Snapshot<T>> {
        self.entries.iter()
    }

    /// Appends the newest snapshot; must be contiguous with the previous one.
    pub fn push(&mut self, snap: Snapshot<T>) -> Result<()> {
        if let Some(front) = self.entries.front() {
            if snap.k != front.k + 1 {
                return Err(Error::Unsupported(format!("snapshot {} does not follow {}", snap.k, front.k)));
            }
        }
        self.entries.push_front(snap);
        self.entries.truncate(self.p);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::NetworkShape;

    #[test]
    fn tables() {
        let e = bdf_coefficients(1).unwrap();
        assert_eq!((e.beta_p, e.beta[0], e.gamma[0]), (1.0, 1.0, 1.0));
        let b = bdf_coefficients(2).unwrap();
        assert_eq!((b.beta_p, b.beta[0], b.beta[1], b.gamma[0], b.gamma[1]), (1.5, 2.0, -0.5, 2.0, -1.0));
        assert!(bdf_coefficients(3).is_err());
        assert!(bdf_coefficients(0).is_err());
    }

    #[test]
    fn consistency_sums() {
        for p in 1..=2 {
            let c = bdf_coefficients(p).unwrap();
            assert_eq!(c.beta.iter().sum::<f64>(), c.beta_p);
            assert_eq!(c.gamma.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn history_ring() {
        let shape = NetworkShape::new(1, 1, 2).unwrap();
        let snap = |k| Snapshot { k, t: k as f64 * 0.1, params: NetworkParams::<f64>::zeros(shape), surrogate: None };
        let mut h = TimestepHistory::new(2, 0.1).unwrap();
        assert_eq!((h.next_k(), h.order()), (0, 0));
        h.push(snap(0)).unwrap();
        assert_eq!((h.next_k(), h.order()), (1, 1));
        h.push(snap(1)).unwrap();
        h.push(snap(2)).unwrap();
        assert_eq!((h.next_k(), h.order(), h.depth()), (3, 2, 2));
        assert_eq!(h.get(0).unwrap().k, 2);
        assert_eq!(h.get(1).unwrap().k, 1);
        assert!(h.push(snap(5)).is_err());
    }
}
