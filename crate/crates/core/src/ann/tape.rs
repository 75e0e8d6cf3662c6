//! Reverse-mode tape over batched dense primitives.
//!
//! Every node holds a `rows x cols` matrix (one row per sample). Parameters are
//! never copied onto the tape: affine nodes reference [`Block`]s of the flat
//! parameter vector, and [`Tape::backward`] accumulates straight into a flat
//! gradient of the same layout.

use super::dense::{gemm_add_dytx, gemm_add_dyw, gemm_xwt, Mat, MatRef};
use crate::scalar::Real;

pub type NodeId = usize;

/// A `rows x cols` slab of the flat parameter vector starting at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    fn view<'a, T: Real>(&self, flat: &'a [T]) -> MatRef<'a, T> {
        MatRef::new(self.rows, self.cols, &flat[self.range()])
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `sum_i x_i W_i^T (+ b)`.
    Affine { terms: Vec<(NodeId, Block)>, bias: Option<Block> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    /// `1 - y^2` of a node `y`; the derivative of tanh expressed from its output.
    TanhSlope(NodeId),
    OneMinus(NodeId),
}

pub struct Tape<'p, T: Real> {
    params: &'p [T],
    values: Vec<Mat<T>>,
    ops: Vec<Op>,
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p [T]) -> Self {
        Self { params, values: Vec::with_capacity(256), ops: Vec::with_capacity(256) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Mat<T> {
        &self.values[id]
    }

    fn push(&mut self, value: Mat<T>, op: Op) -> NodeId {
        self.values.push(value);
        self.ops.push(op);
        self.values.len() - 1
    }

    /// Constant input; receives no gradient.
    pub fn leaf(&mut self, value: Mat<T>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn affine(&mut self, terms: &[(NodeId, Block)], bias: Option<Block>) -> NodeId {
        let (first, wb) = terms[0];
        let rows = self.values[first].rows;
        let cols = wb.rows;
        let mut out = Mat::zeros(rows, cols);
        for &(x, w) in terms {
            let xv = &self.values[x];
            debug_assert_eq!(xv.rows, rows);
            debug_assert_eq!(w.rows, cols);
            gemm_xwt(xv.into(), w.view(self.params), T::one(), &mut out.data);
        }
        if let Some(b) = bias {
            let bv = &self.params[b.range()];
            for r in 0..rows {
                for (o, &bb) in out.row_mut(r).iter_mut().zip(bv) {
                    *o += bb;
                }
            }
        }
        self.push(out, Op::Affine { terms: terms.to_vec(), bias })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a].zip_map(&self.values[b], |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a].zip_map(&self.values[b], |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a].zip_map(&self.values[b], |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let mut v = self.values[a].clone();
        T::tanh_in_place(&mut v.data);
        self.push(v, Op::Tanh(a))
    }

    pub fn tanh_slope(&mut self, y: NodeId) -> NodeId {
        let v = self.values[y].map(|x| T::one() - x * x);
        self.push(v, Op::TanhSlope(y))
    }

    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a].map(|x| T::one() - x);
        self.push(v, Op::OneMinus(a))
    }

    /// Propagates the seeded adjoints back through the tape and accumulates
    /// the parameter gradient into `grad` (same layout as the parameters).
    pub fn backward(&self, seeds: Vec<(NodeId, Mat<T>)>, grad: &mut [T]) {
        assert_eq!(grad.len(), self.params.len(), "gradient layout mismatch");
        let mut adj: Vec<Option<Mat<T>>> = vec![None; self.values.len()];
        let mut top = 0;
        for (id, seed) in seeds {
            assert!(seed.same_shape(&self.values[id]), "seed shape mismatch at node {id}");
            top = top.max(id + 1);
            match &mut adj[id] {
                Some(a) => a.add_assign(&seed),
                slot => *slot = Some(seed),
            }
        }

        for id in (0..top).rev() {
            let Some(g) = adj[id].take() else { continue };
            match &self.ops[id] {
                Op::Leaf => {}
                Op::Affine { terms, bias } => {
                    for &(x, w) in terms {
                        gemm_add_dytx((&g).into(), (&self.values[x]).into(), &mut grad[w.range()]);
                        if !matches!(self.ops[x], Op::Leaf) {
                            let xv = &self.values[x];
                            let slot = adj[x].get_or_insert_with(|| Mat::zeros(xv.rows, xv.cols));
                            gemm_add_dyw((&g).into(), w.view(self.params), &mut slot.data);
                        }
                    }
                    if let Some(b) = bias {
                        let gb = &mut grad[b.range()];
                        for r in 0..g.rows {
                            for (acc, &v) in gb.iter_mut().zip(g.row(r)) {
                                *acc += v;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, &self.values, *a, &g, |v, _| v);
                    accumulate(&mut adj, &self.values, *b, &g, |v, _| v);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, &self.values, *a, &g, |v, _| v);
                    accumulate(&mut adj, &self.values, *b, &g, |v, _| -v);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let bv = &self.values[b];
                    accumulate_with(&mut adj, &self.values, a, &g, bv);
                    let av = &self.values[a];
                    accumulate_with(&mut adj, &self.values, b, &g, av);
                }
                Op::Tanh(a) => {
                    let y = &self.values[id];
                    accumulate(&mut adj, &self.values, *a, &g, |v, i| v * (T::one() - y.data[i] * y.data[i]));
                }
                Op::TanhSlope(y) => {
                    let yv = &self.values[*y];
                    let two = T::of(2.0);
                    accumulate(&mut adj, &self.values, *y, &g, |v, i| -two * yv.data[i] * v);
                }
                Op::OneMinus(a) => {
                    accumulate(&mut adj, &self.values, *a, &g, |v, _| -v);
                }
            }
        }
    }
}

fn accumulate<T: Real>(
    adj: &mut [Option<Mat<T>>],
    values: &[Mat<T>],
    target: NodeId,
    g: &Mat<T>,
    f: impl Fn(T, usize) -> T,
) {
    let tv = &values[target];
    let slot = adj[target].get_or_insert_with(|| Mat::zeros(tv.rows, tv.cols));
    for (i, (s, &v)) in slot.data.iter_mut().zip(&g.data).enumerate() {
        *s += f(v, i);
    }
}

fn accumulate_with<T: Real>(
    adj: &mut [Option<Mat<T>>],
    values: &[Mat<T>],
    target: NodeId,
    g: &Mat<T>,
    other: &Mat<T>,
) {
    let tv = &values[target];
    let slot = adj[target].get_or_insert_with(|| Mat::zeros(tv.rows, tv.cols));
    for ((s, &v), &o) in slot.data.iter_mut().zip(&g.data).zip(&other.data) {
        *s += v * o;
    }
}
