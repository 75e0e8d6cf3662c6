//! Residual DGM-layer network: shape, flat parameter layout, initialization and
//! the batched forward pass with optional forward-mode tangents.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::Mat;
use super::tape::{Block, NodeId, Tape};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Gate order inside a DGM layer; also the block order in the flat layout.
pub const GATES: [char; 4] = ['g', 'z', 'r', 'h'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    /// Input dimension (asset count).
    pub d: usize,
    /// Number of hidden DGM layers.
    pub layers: usize,
    pub width: usize,
}

impl NetworkShape {
    pub fn new(d: usize, layers: usize, width: usize) -> Result<Self> {
        if d == 0 || layers == 0 || width == 0 {
            return Err(Error::InvalidShape { d, layers, width });
        }
        Ok(Self { d, layers, width })
    }

    /// `width*d + width + 4L(width*d + width^2 + width) + width`.
    pub fn param_count(&self) -> usize {
        let (d, l, w) = (self.d, self.layers, self.width);
        w * d + w + 4 * l * (w * d + w * w + w) + w
    }

    pub fn layout(&self) -> Layout {
        Layout::new(*self)
    }
}

/// Blocks of one gate in one layer.
#[derive(Debug, Clone, Copy)]
pub struct GateBlocks {
    /// Input weights, `width x d`.
    pub v: Block,
    /// Recurrent weights, `width x width`.
    pub w: Block,
    pub b: Block,
}

/// Fixed block order of the flat parameter vector:
/// `W_in, b_in, then for each layer and gate g,z,r,h: V, W, b, then W_out`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub shape: NetworkShape,
    pub w_in: Block,
    pub b_in: Block,
    pub layers: Vec<[GateBlocks; 4]>,
    pub w_out: Block,
    pub total: usize,
}

impl Layout {
    fn new(shape: NetworkShape) -> Self {
        let (d, w) = (shape.d, shape.width);
        let mut offset = 0;
        let mut take = |rows: usize, cols: usize| {
            let b = Block { offset, rows, cols };
            offset += rows * cols;
            b
        };
        let w_in = take(w, d);
        let b_in = take(1, w);
        let mut layers = Vec::with_capacity(shape.layers);
        for _ in 0..shape.layers {
            let mut gate = || GateBlocks { v: take(w, d), w: take(w, w), b: take(1, w) };
            layers.push([gate(), gate(), gate(), gate()]);
        }
        let w_out = take(1, w);
        Self { shape, w_in, b_in, layers, w_out, total: offset }
    }

    /// Named blocks in layout order, for diagnostics and serialization.
    pub fn named_blocks(&self) -> Vec<(String, Block)> {
        let mut out = vec![("W_in".to_string(), self.w_in), ("b_in".to_string(), self.b_in)];
        for (l, gates) in self.layers.iter().enumerate() {
            for (g, blocks) in GATES.iter().zip(gates) {
                out.push((format!("V^{g},{}", l + 1), blocks.v));
                out.push((format!("W^{g},{}", l + 1), blocks.w));
                out.push((format!("b^{g},{}", l + 1), blocks.b));
            }
        }
        out.push(("W_out".to_string(), self.w_out));
        out
    }

    /// Name of the block containing flat index `i`.
    pub fn block_name(&self, i: usize) -> String {
        self.named_blocks()
            .into_iter()
            .find(|(_, b)| b.range().contains(&i))
            .map(|(n, _)| n)
            .unwrap_or_else(|| "<out of range>".to_string())
    }
}

/// All trainable weights of one network, stored flat in [`Layout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub shape: NetworkShape,
    pub values: Vec<T>,
}

impl<T: Real> NetworkParams<T> {
    pub fn from_values(shape: NetworkShape, values: Vec<T>) -> Result<Self> {
        if values.len() != shape.param_count() {
            return Err(Error::ParamCount { expected: shape.param_count(), found: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {} ({})", i, shape.layout().block_name(i))));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: NetworkShape) -> Self {
        Self { shape, values: vec![T::zero(); shape.param_count()] }
    }

    /// Xavier/Glorot uniform weights with bound `sqrt(6 / (fan_in + fan_out))`,
    /// zero biases. Deterministic in `seed`.
    pub fn xavier(shape: NetworkShape, seed: u64) -> Self {
        let layout = shape.layout();
        let mut values = vec![T::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |b: Block| {
            let bound = (6.0 / (b.rows + b.cols) as f64).sqrt();
            for v in &mut values[b.range()] {
                *v = T::of(rng.random_range(-bound..bound));
            }
        };
        fill(layout.w_in);
        for gates in &layout.layers {
            for g in gates {
                fill(g.v);
                fill(g.w);
            }
        }
        fill(layout.w_out);
        debug_assert_eq!(values.len(), shape.param_count());
        Self { shape, values }
    }

    /// `(2L + 1) sum |W_out|`, a bound on `|network(y)|` for every input.
    pub fn output_bound(&self) -> T {
        let w_out = self.shape.layout().w_out;
        T::of((2 * self.shape.layers + 1) as f64) * self.values[w_out.range()].iter().map(|v| v.abs()).sum::<T>()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams { shape: self.shape, values: self.values.iter().map(|v| U::of(v.f64())).collect() }
    }

    /// Raw scalar output `W_out S^L` at a single point.
    pub fn forward_point(&self, y: &[T]) -> Result<T> {
        if y.len() != self.shape.d {
            return Err(Error::Dimension { expected: self.shape.d, found: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        let out = self.forward(&Mat::from_vec(1, y.len(), y.to_vec()));
        Ok(out[0])
    }

    /// Raw outputs for a batch of inputs (one row each).
    pub fn forward(&self, y: &Mat<T>) -> Vec<T> {
        let mut tape = Tape::new(&self.values);
        let fwd = record(&mut tape, &self.shape.layout(), y.clone(), Vec::new());
        tape.value(fwd.out).data.clone()
    }

    /// Raw outputs and directional derivatives `d out / d y . dy_k` for each tangent batch.
    pub fn forward_with_tangents(&self, y: &Mat<T>, tangents: Vec<Mat<T>>) -> (Vec<T>, Vec<Vec<T>>) {
        let mut tape = Tape::new(&self.values);
        let fwd = record(&mut tape, &self.shape.layout(), y.clone(), tangents);
        let out = tape.value(fwd.out).data.clone();
        let tans = fwd.tangents.iter().map(|&t| tape.value(t).data.clone()).collect();
        (out, tans)
    }

    /// Evaluates the raw output on `y`, passes it to `loss` (returning the loss
    /// and its adjoint per row) and accumulates the parameter gradient into `grad`.
    pub fn output_gradient<F>(&self, y: &Mat<T>, grad: &mut [T], loss: F) -> T
    where
        F: FnOnce(&[T]) -> (T, Vec<T>),
    {
        let mut tape = Tape::new(&self.values);
        let fwd = record(&mut tape, &self.shape.layout(), y.clone(), Vec::new());
        let (l, adj) = loss(&tape.value(fwd.out).data);
        tape.backward(vec![(fwd.out, Mat::from_vec(y.rows, 1, adj))], grad);
        l
    }
}

/// Node handles of a recorded forward pass.
pub struct Recorded {
    /// `n x 1` raw output.
    pub out: NodeId,
    /// `n x 1` directional derivative per tangent.
    pub tangents: Vec<NodeId>,
}

/// Records the DGM forward pass for a batch `y` (`n x d`) on `tape`, carrying
/// the forward-mode tangents `dy_k` (`n x d` each) alongside the primal.
pub fn record<T: Real>(tape: &mut Tape<'_, T>, layout: &Layout, y: Mat<T>, tangents: Vec<Mat<T>>) -> Recorded {
    let y = tape.leaf(y);
    let dys: Vec<NodeId> = tangents.into_iter().map(|t| tape.leaf(t)).collect();

    let a0 = tape.affine(&[(y, layout.w_in)], Some(layout.b_in));
    let mut s = tape.tanh(a0);
    let mut ds: Vec<NodeId> = Vec::with_capacity(dys.len());
    if !dys.is_empty() {
        let slope = tape.tanh_slope(s);
        for &dy in &dys {
            let da = tape.affine(&[(dy, layout.w_in)], None);
            ds.push(tape.mul(slope, da));
        }
    }

    for gates in &layout.layers {
        let [g, z, r, h] = gates;
        let (gv, dg) = gate(tape, g, y, s, &dys, &ds);
        let (zv, dz) = gate(tape, z, y, s, &dys, &ds);
        let (rv, dr) = gate(tape, r, y, s, &dys, &ds);

        let sr = tape.mul(s, rv);
        let dsr: Vec<NodeId> = (0..dys.len())
            .map(|k| {
                let a = tape.mul(ds[k], rv);
                let b = tape.mul(s, dr[k]);
                tape.add(a, b)
            })
            .collect();
        let (hv, dh) = gate(tape, h, y, sr, &dys, &dsr);

        let one_minus_g = tape.one_minus(gv);
        let left = tape.mul(one_minus_g, hv);
        let right = tape.mul(zv, s);
        let s_next = tape.add(left, right);

        let ds_next: Vec<NodeId> = (0..dys.len())
            .map(|k| {
                let a = tape.mul(one_minus_g, dh[k]);
                let b = tape.mul(dg[k], hv);
                let ab = tape.sub(a, b);
                let c = tape.mul(dz[k], s);
                let e = tape.mul(zv, ds[k]);
                let ce = tape.add(c, e);
                tape.add(ab, ce)
            })
            .collect();
        s = s_next;
        ds = ds_next;
    }

    let out = tape.affine(&[(s, layout.w_out)], None);
    let tangents = ds.iter().map(|&d| tape.affine(&[(d, layout.w_out)], None)).collect();
    Recorded { out, tangents }
}

/// `tanh(V y + W s + b)` and its tangents.
fn gate<T: Real>(
    tape: &mut Tape<'_, T>,
    blocks: &GateBlocks,
    y: NodeId,
    s: NodeId,
    dys: &[NodeId],
    ds: &[NodeId],
) -> (NodeId, Vec<NodeId>) {
    let pre = tape.affine(&[(y, blocks.v), (s, blocks.w)], Some(blocks.b));
    let out = tape.tanh(pre);
    if dys.is_empty() {
        return (out, Vec::new());
    }
    let slope = tape.tanh_slope(out);
    let tans = dys
        .iter()
        .zip(ds)
        .map(|(&dy, &dsk)| {
            let dpre = tape.affine(&[(dy, blocks.v), (dsk, blocks.w)], None);
            tape.mul(slope, dpre)
        })
        .collect();
    (out, tans)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_for_reference_shape() {
        let shape = NetworkShape::new(5, 2, 64).unwrap();
        assert_eq!(shape.param_count(), 36_288);
        assert_eq!(shape.layout().total, 36_288);
        assert_eq!(NetworkParams::<f64>::xavier(shape, 3).len(), 36_288);
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(NetworkShape::new(1, 0, 8).is_err());
        assert!(NetworkShape::new(0, 1, 8).is_err());
        assert!(NetworkShape::new(1, 1, 0).is_err());
    }

    #[test]
    fn xavier_is_deterministic_and_bounded() {
        let shape = NetworkShape::new(3, 2, 16).unwrap();
        let a = NetworkParams::<f64>::xavier(shape, 11);
        let b = NetworkParams::<f64>::xavier(shape, 11);
        let c = NetworkParams::<f64>::xavier(shape, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let layout = shape.layout();
        let bound = (6.0f64 / (16.0 + 16.0)).sqrt();
        let w = layout.layers[1][2].w;
        assert!(a.values[w.range()].iter().all(|v| v.abs() <= bound));
        assert!(a.values[layout.layers[0][0].b.range()].iter().all(|&v| v == 0.0));
        assert!(a.values[layout.b_in.range()].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let shape = NetworkShape::new(2, 3, 8).unwrap();
        let p = NetworkParams::<f64>::zeros(shape);
        assert_eq!(p.forward_point(&[0.7, 1.9]).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let shape = NetworkShape::new(2, 1, 4).unwrap();
        let p = NetworkParams::<f64>::xavier(shape, 1);
        assert!(p.forward_point(&[f64::NAN, 1.0]).is_err());
        assert!(p.forward_point(&[1.0]).is_err());
    }

    #[test]
    fn tangents_match_central_differences() {
        let shape = NetworkShape::new(3, 2, 12).unwrap();
        let p = NetworkParams::<f64>::xavier(shape, 5);
        let y = Mat::from_rows(&[[0.4, 1.2, 0.9], [2.0, 0.1, 0.5]]);
        let dir = Mat::from_rows(&[[0.3, -0.5, 1.0], [1.0, 0.2, -0.4]]);
        let (_, tans) = p.forward_with_tangents(&y, vec![dir.clone()]);
        let h = 1e-6;
        let plus = p.forward(&y.zip_map(&dir, |a, b| a + h * b));
        let minus = p.forward(&y.zip_map(&dir, |a, b| a - h * b));
        for i in 0..2 {
            let fd = (plus[i] - minus[i]) / (2.0 * h);
            assert!((fd - tans[0][i]).abs() < 1e-8, "row {i}: {fd} vs {}", tans[0][i]);
        }
    }

    // |S^0| <= 1 and |S^l| <= |1 - G||H| + |Z||S^{l-1}| < 2 + |S^{l-1}|, so
    // |S^L| <= 2L + 1 componentwise and |out| <= (2L + 1) * sum|W_out|.
    #[test]
    fn output_respects_interval_bound() {
        let shape = NetworkShape::new(2, 2, 10).unwrap();
        let mut p = NetworkParams::<f64>::xavier(shape, 9);
        for v in &mut p.values {
            *v *= 4.0;
        }
        let layout = shape.layout();
        let wsum: f64 = p.values[layout.w_out.range()].iter().map(|v| v.abs()).sum();
        let bound = (2 * shape.layers + 1) as f64 * wsum;
        assert_eq!(p.output_bound(), bound);
        for i in 0..50 {
            let y = [i as f64 * 0.07, 3.0 - i as f64 * 0.05];
            assert!(p.forward_point(&y).unwrap().abs() <= bound);
        }
    }
}
