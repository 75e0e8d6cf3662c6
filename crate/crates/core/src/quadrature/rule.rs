//! Multivariate Gauss–Hermite rules for the Gaussian jump law, laid out along
//! the eigen-axes of the jump covariance.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::hermite::normal_rule_1d;
use crate::error::{Error, Result};
use crate::market::{symmetric_eigen, JumpLaw, PSD_TOLERANCE};

/// Tensor rules are used up to this dimension in `auto` mode.
pub const TENSOR_MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxesMode {
    /// Tensor for `d <= 3`, sparse otherwise.
    Auto,
    Tensor,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub mode: AxesMode,
    /// Nodes per eigen-axis for tensor rules.
    pub nodes: usize,
    /// Smolyak level; the 1-D rule at level `l` has `2l - 1` nodes.
    pub level: usize,
}

impl Default for RuleSpec {
    fn default() -> Self {
        Self { mode: AxesMode::Auto, nodes: 5, level: 3 }
    }
}

/// Jump vectors `z_m` (row-major `M x d`) and weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub d: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, m: usize) -> &[f64] {
        &self.nodes[m * self.d..(m + 1) * self.d]
    }

    /// `sum_m w_m f(z_m)`.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|m| self.weights[m] * f(self.node(m))).sum()
    }

    /// CSV with header `weight,z1,...,zd`; values use the shortest
    /// round-trip decimal representation.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("weight".to_string()).chain((1..=self.d).map(|i| format!("z{i}"))).collect();
        writeln!(out, "{}", header.join(","))?;
        for m in 0..self.len() {
            let row: Vec<String> = std::iter::once(self.weights[m]).chain(self.node(m).iter().copied()).map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Eigenvectors `Q` (row-major, columns are axes) and eigenvalues of `Sigma_J`.
pub fn jump_axes(law: &JumpLaw) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = law.dim();
    let eig = symmetric_eigen(&law.cov, d);
    let mut q = vec![0.0; d * d];
    let mut lam = vec![0.0; d];
    for j in 0..d {
        let l = eig.eigenvalues[j];
        if l < PSD_TOLERANCE {
            return Err(Error::Model(format!("jump covariance has eigenvalue {l:e}")));
        }
        lam[j] = l.max(0.0);
        for i in 0..d {
            q[i * d + j] = eig.eigenvectors[(i, j)];
        }
    }
    Ok((q, lam))
}

/// Builds the rule in standard-normal coordinates, then maps each node through
/// `z = mu_J + Q diag(sqrt(lambda)) g`. Weights are renormalized to sum to one.
pub fn build_rule(law: &JumpLaw, spec: &RuleSpec) -> Result<QuadratureRule> {
    let d = law.dim();
    let mode = match spec.mode {
        AxesMode::Auto if d <= TENSOR_MAX_DIM => AxesMode::Tensor,
        AxesMode::Auto => AxesMode::Sparse,
        m => m,
    };
    let (std_nodes, mut weights) = match mode {
        AxesMode::Tensor => tensor_normal(d, spec.nodes)?,
        _ => {
            if spec.level == 0 {
                return Err(Error::config("quadrature.level", "must be at least 1"));
            }
            smolyak_normal(d, spec.level)?
        }
    };
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let (q, lam) = jump_axes(law)?;
    let scale: Vec<f64> = lam.iter().map(|l| l.sqrt()).collect();
    let m = weights.len();
    let mut nodes = vec![0.0; m * d];
    for k in 0..m {
        let g = &std_nodes[k * d..(k + 1) * d];
        for i in 0..d {
            let mut z = law.mean[i];
            for j in 0..d {
                z += q[i * d + j] * scale[j] * g[j];
            }
            nodes[k * d + i] = z;
        }
    }
    Ok(QuadratureRule { d, nodes, weights })
}

fn tensor_normal(d: usize, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, w) = normal_rule_1d(n)?;
    let total = n.checked_pow(d as u32).filter(|&m| m <= 1 << 22).ok_or_else(|| {
        Error::config("quadrature.nodes", format!("tensor rule with {n}^{d} nodes is too large"))
    })?;
    let mut nodes = Vec::with_capacity(total * d);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let mut wt = 1.0;
        for &i in &idx {
            nodes.push(x[i]);
            wt *= w[i];
        }
        weights.push(wt);
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    Ok((nodes, weights))
}

/// Smolyak combination `sum (-1)^{q-|l|} C(d-1, q-|l|) U^{l_1} x ... x U^{l_d}`
/// over `q - d + 1 <= |l| <= q`, `q = level + d - 1`, with coincident nodes merged.
fn smolyak_normal(d: usize, level: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = level + d - 1;
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (1..=level).map(|l| normal_rule_1d(2 * l - 1)).collect::<Result<_>>()?;
    let mut acc: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
    let lo = q.saturating_sub(d - 1).max(d);
    let mut multi = vec![1usize; d];
    enumerate(&mut multi, 0, q, &mut |l: &[usize]| {
        let s: usize = l.iter().sum();
        if s < lo {
            return;
        }
        let gap = q - s;
        let coef = binomial(d - 1, gap) * if gap % 2 == 0 { 1.0 } else { -1.0 };
        let parts: Vec<&(Vec<f64>, Vec<f64>)> = l.iter().map(|&li| &rules[li - 1]).collect();
        let mut idx = vec![0usize; d];
        loop {
            let mut w = coef;
            let mut point = Vec::with_capacity(d);
            for (k, &i) in idx.iter().enumerate() {
                point.push(parts[k].0[i]);
                w *= parts[k].1[i];
            }
            let key = point.iter().map(|v| (v * 1e12).round() as i64).collect();
            acc.entry(key).or_insert_with(|| (point, 0.0)).1 += w;
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < parts[k].0.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    });
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (_, (p, w)) in acc {
        if w.abs() > 1e-15 {
            nodes.extend(p);
            weights.push(w);
        }
    }
    Ok((nodes, weights))
}

fn enumerate(l: &mut Vec<usize>, pos: usize, budget: usize, f: &mut impl FnMut(&[usize])) {
    let d = l.len();
    if pos == d {
        f(l);
        return;
    }
    let used: usize = l[..pos].iter().sum();
    let rest = d - pos - 1;
    let max = budget - used - rest;
    for v in 1..=max {
        l[pos] = v;
        enumerate(l, pos + 1, budget, f);
    }
    l[pos] = 1;
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
