//! Reverse-mode differentiation over a fixed vocabulary of batched matrix
//! operations.
//!
//! Every value on the tape is a [`Tensor`] whose rows are independent batch
//! samples. Leaves created with [`Tape::leaf`] receive gradients; constants
//! do not, and operations whose inputs are all constant are never visited
//! during the backward sweep.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Column index table that is either shared by all rows or given per row.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnTable {
    Shared(Vec<u32>),
    /// `rows * terms` entries, row-major.
    PerRow(Vec<u32>),
}

impl ColumnTable {
    #[inline]
    fn get(&self, row: usize, term: usize, terms: usize) -> usize {
        match self {
            ColumnTable::Shared(c) => c[term] as usize,
            ColumnTable::PerRow(c) => c[row * terms + term] as usize,
        }
    }
}

/// Sparse row-wise linear map:
/// `out[b, out_col(b, t)] += weight[t] * in[b, in_col(b, t)]` for every term `t`.
///
/// Covers column selection, gathers, scatter-adds and fixed weighted sums.
#[derive(Debug, Clone, PartialEq)]
pub struct GatherMap {
    pub out_cols: usize,
    pub weights: Vec<f64>,
    pub in_col: ColumnTable,
    pub out_col: ColumnTable,
}

impl GatherMap {
    pub fn terms(&self) -> usize {
        self.weights.len()
    }

    pub fn apply(&self, input: &Tensor) -> Tensor {
        let rows = input.rows();
        let terms = self.terms();
        let mut out = Tensor::zeros(rows, self.out_cols);
        for b in 0..rows {
            let src = input.row_slice(b);
            let dst = out.row_slice_mut(b);
            for t in 0..terms {
                dst[self.out_col.get(b, t, terms)] += self.weights[t] * src[self.in_col.get(b, t, terms)];
            }
        }
        out
    }

    fn apply_transpose(&self, grad_out: &Tensor, in_cols: usize) -> Tensor {
        let rows = grad_out.rows();
        let terms = self.terms();
        let mut out = Tensor::zeros(rows, in_cols);
        for b in 0..rows {
            let src = grad_out.row_slice(b);
            let dst = out.row_slice_mut(b);
            for t in 0..terms {
                dst[self.in_col.get(b, t, terms)] += self.weights[t] * src[self.out_col.get(b, t, terms)];
            }
        }
        out
    }
}

/// Softmax normalization direction for rows that hold a flattened
/// `groups_rows x groups_cols` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftmaxAxis {
    /// Normalize each matrix row (over `cols` entries).
    Rows,
    /// Normalize each matrix column (over `rows` entries).
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    Square(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax { x: Var, rows: usize, cols: usize, axis: SoftmaxAxis },
    Gather(Var, Rc<GatherMap>),
    SumAll(Var),
    MeanRows(Var),
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients from one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}

fn softmax_groups(rows: usize, cols: usize, axis: SoftmaxAxis) -> (usize, usize, usize, usize) {
    // (group count, group length, group stride, element stride)
    match axis {
        SoftmaxAxis::Rows => (rows, cols, cols, 1),
        SoftmaxAxis::Cols => (cols, rows, 1, cols),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// `x w + b`, with `b` a `1 x out` row broadcast over the batch.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        assert_eq!(bv.shape(), [1, wv.cols()], "bias shape");
        let mut out = Tensor::zeros(xv.rows(), wv.cols());
        for r in 0..out.rows() {
            out.row_slice_mut(r).copy_from_slice(bv.data());
        }
        out.gemm_into(xv, false, wv, false, 1.0, 1.0);
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(out, Op::Affine { x, w, b }, ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let out = self.value(a).zip_map(self.value(b), f);
        let ng = self.needs(a) || self.needs(b);
        self.push(out, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Cellwise minimum. On exact ties the gradient is split evenly.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, f64::min, Op::Min(a, b))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).map(f);
        let ng = self.needs(x);
        self.push(out, op, ng)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| c * v, Op::Scale(x, c))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, libm::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// Softmax inside each batch row, viewed as a `rows x cols` matrix.
    pub fn softmax(&mut self, x: Var, rows: usize, cols: usize, axis: SoftmaxAxis) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.cols(), rows * cols, "softmax block shape");
        let mut out = xv.clone();
        let (groups, len, gstride, estride) = softmax_groups(rows, cols, axis);
        for b in 0..out.rows() {
            let row = out.row_slice_mut(b);
            for g in 0..groups {
                let base = g * gstride;
                let mut hi = f64::NEG_INFINITY;
                for i in 0..len {
                    hi = hi.max(row[base + i * estride]);
                }
                let mut z = 0.0;
                for i in 0..len {
                    let e = libm::exp(row[base + i * estride] - hi);
                    row[base + i * estride] = e;
                    z += e;
                }
                for i in 0..len {
                    row[base + i * estride] /= z;
                }
            }
        }
        let ng = self.needs(x);
        self.push(out, Op::Softmax { x, rows, cols, axis }, ng)
    }

    pub fn gather(&mut self, x: Var, map: Rc<GatherMap>) -> Var {
        let out = map.apply(self.value(x));
        let ng = self.needs(x);
        self.push(out, Op::Gather(x, map), ng)
    }

    /// Sum of every entry, as a `1 x 1` tensor.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let ng = self.needs(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), ng)
    }

    /// Column means over the batch, as a `1 x cols` tensor.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = Tensor::zeros(1, xv.cols());
        for r in 0..xv.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(xv.row_slice(r)) {
                *o += v;
            }
        }
        let inv = 1.0 / xv.rows().max(1) as f64;
        for o in out.data_mut() {
            *o *= inv;
        }
        let ng = self.needs(x);
        self.push(out, Op::MeanRows(x), ng)
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let out = self.value(x).clone().reshape(rows, cols);
        let ng = self.needs(x);
        self.push(out, Op::Reshape(x), ng)
    }

    /// Gradients of the scalar `output` with respect to every value that
    /// depends on a leaf.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::filled(1, 1, 1.0));
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        match node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                if self.needs(x) {
                    let wv = self.value(w);
                    let mut gx = Tensor::zeros(g.rows(), wv.rows());
                    gx.gemm_into(g, false, wv, true, 1.0, 0.0);
                    self.accumulate(grads, x, gx);
                }
                if self.needs(w) {
                    let xv = self.value(x);
                    let mut gw = Tensor::zeros(xv.cols(), g.cols());
                    gw.gemm_into(xv, true, g, false, 1.0, 0.0);
                    self.accumulate(grads, w, gw);
                }
                if self.needs(b) {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row_slice(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, b, gb);
                }
            }
            Op::MatMul(a, b) => {
                if self.needs(a) {
                    let bv = self.value(b);
                    let mut ga = Tensor::zeros(g.rows(), bv.rows());
                    ga.gemm_into(g, false, bv, true, 1.0, 0.0);
                    self.accumulate(grads, a, ga);
                }
                if self.needs(b) {
                    let av = self.value(a);
                    let mut gb = Tensor::zeros(av.cols(), g.cols());
                    gb.gemm_into(av, true, g, false, 1.0, 0.0);
                    self.accumulate(grads, b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.needs(a) {
                    self.accumulate(grads, a, g.zip_map(self.value(b), |gv, bv| gv * bv));
                }
                if self.needs(b) {
                    self.accumulate(grads, b, g.zip_map(self.value(a), |gv, av| gv * av));
                }
            }
            Op::Min(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let share = |x: f64, other: f64| -> f64 {
                    if x < other {
                        1.0
                    } else if x == other {
                        0.5
                    } else {
                        0.0
                    }
                };
                if self.needs(a) {
                    let mut ga = g.clone();
                    for ((gv, &x), &o) in ga.data_mut().iter_mut().zip(av.data()).zip(bv.data()) {
                        *gv *= share(x, o);
                    }
                    self.accumulate(grads, a, ga);
                }
                if self.needs(b) {
                    let mut gb = g.clone();
                    for ((gv, &x), &o) in gb.data_mut().iter_mut().zip(bv.data()).zip(av.data()) {
                        *gv *= share(x, o);
                    }
                    self.accumulate(grads, b, gb);
                }
            }
            Op::Scale(x, c) => self.accumulate(grads, x, g.map(|v| c * v)),
            Op::Square(x) => {
                let gx = g.zip_map(self.value(x), |gv, xv| 2.0 * xv * gv);
                self.accumulate(grads, x, gx);
            }
            Op::Tanh(x) => self.accumulate(grads, x, g.zip_map(y, |gv, yv| gv * (1.0 - yv * yv))),
            Op::Sigmoid(x) => self.accumulate(grads, x, g.zip_map(y, |gv, yv| gv * yv * (1.0 - yv))),
            Op::Relu(x) => {
                let gx = g.zip_map(self.value(x), |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                self.accumulate(grads, x, gx);
            }
            Op::Softmax { x, rows, cols, axis } => {
                let mut gx = g.clone();
                let (groups, len, gstride, estride) = softmax_groups(rows, cols, axis);
                for b in 0..gx.rows() {
                    let yr = y.row_slice(b);
                    let gr = gx.row_slice_mut(b);
                    for grp in 0..groups {
                        let base = grp * gstride;
                        let mut dot = 0.0;
                        for i in 0..len {
                            let k = base + i * estride;
                            dot += gr[k] * yr[k];
                        }
                        for i in 0..len {
                            let k = base + i * estride;
                            gr[k] = yr[k] * (gr[k] - dot);
                        }
                    }
                }
                self.accumulate(grads, x, gx);
            }
            Op::Gather(x, ref map) => {
                let cols = self.value(x).cols();
                self.accumulate(grads, x, map.apply_transpose(g, cols));
            }
            Op::SumAll(x) => {
                let xv = self.value(x);
                self.accumulate(grads, x, Tensor::filled(xv.rows(), xv.cols(), g.item()));
            }
            Op::MeanRows(x) => {
                let xv = self.value(x);
                let inv = 1.0 / xv.rows().max(1) as f64;
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    for (o, v) in gx.row_slice_mut(r).iter_mut().zip(g.data()) {
                        *o = v * inv;
                    }
                }
                self.accumulate(grads, x, gx);
            }
            Op::Reshape(x) => {
                let [r, c] = self.value(x).shape();
                self.accumulate(grads, x, g.clone().reshape(r, c));
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
