//! Reverse-mode gradient recording.
//!
//! Every forward op appends a node holding its value and the ids of its
//! inputs. Nodes are appended in evaluation order, so the tape is always
//! topologically sorted and `backward` is a single reverse sweep that applies
//! each op's local chain rule (the per-layer error recursion of
//! backpropagation: `δˡ = (Wˡ⁺¹)ᵀ δˡ⁺¹ ⊙ σ'(zˡ)`, `∂C/∂b = δ`, `∂C/∂W = aˡ⁻¹ δ`).

use std::sync::atomic::{AtomicUsize, Ordering};

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm_acc, gemm_tn_acc, Tensor};
use super::AutodiffError;

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: usize,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Sum(Var),
    Mean(Var),
    Clamp(Var, f64, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Tape {
    id: usize,
    nodes: Vec<Node>,
    params: Vec<(usize, u64, ParamId)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new(), params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node { value, op, requires_grad });
        Var { tape: self.id, index }
    }

    fn checked(&mut self, name: &'static str, value: Tensor, op: Op, rg: bool) -> Result<Var, AutodiffError> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFiniteValue { op: name });
        }
        Ok(self.push(value, op, rg))
    }

    fn node(&self, v: Var) -> &Node {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        &self.nodes[v.index]
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    /// A value that gradients never flow into.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A free input that gradients are collected for.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a trainable parameter; its gradient lands in `store` on
    /// [`Gradients::accumulate_into`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.params.push((v.index, store.key(), id));
        v
    }

    /// Binds a parameter as a constant (frozen for this tape).
    pub fn frozen_param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.constant(store.value(id).clone())
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|&v| self.node(v).requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch { op, left: sa, right: sb });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.checked("matmul", out, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.checked("add", out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.checked("sub", out, Op::Sub(a, b), rg)
    }

    /// `a + 1ᵀ·row`: adds a `1 x n` row (a bias) to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AutodiffError> {
        let (sa, sr) = (self.value(a).shape(), self.value(row).shape());
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(AutodiffError::ShapeMismatch { op: "add_row", left: sa, right: sr });
        }
        let mut out = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for chunk in out.data_mut().chunks_mut(sa.1.max(1)) {
            for (o, b) in chunk.iter_mut().zip(&r) {
                *o += b;
            }
        }
        let rg = self.rg(&[a, row]);
        self.checked("add_row", out, Op::AddRow(a, row), rg)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("hadamard", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.checked("hadamard", out, Op::Hadamard(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, AutodiffError> {
        let out = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.checked("scale", out, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var, AutodiffError> {
        let out = self.value(a).map(|x| x + s);
        let rg = self.rg(&[a]);
        self.checked("add_scalar", out, Op::AddScalar(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(&[a]);
        self.checked("sigmoid", out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(&[a]);
        self.checked("tanh", out, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(&[a]);
        self.checked("relu", out, Op::Relu(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let out = self.value(a).map(f64::exp);
        let rg = self.rg(&[a]);
        self.checked("exp", out, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let out = self.value(a).map(f64::ln);
        let rg = self.rg(&[a]);
        self.checked("log", out, Op::Log(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        let mut out = v.clone();
        let cols = v.cols().max(1);
        for row in out.data_mut().chunks_mut(cols) {
            softmax_in_place(row);
        }
        let rg = self.rg(&[a]);
        self.checked("softmax_rows", out, Op::SoftmaxRows(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.0 != rows {
                return Err(AutodiffError::ShapeMismatch { op: "concat_cols", left: (rows, cols), right: s });
            }
            cols += s.1;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = self.rg(parts);
        self.checked("concat_cols", out, Op::ConcatCols(parts.to_vec()), rg)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        if start > end || end > v.cols() {
            return Err(AutodiffError::ShapeMismatch { op: "slice_cols", left: v.shape(), right: (start, end) });
        }
        let mut data = Vec::with_capacity(v.rows() * (end - start));
        for r in 0..v.rows() {
            data.extend_from_slice(&v.row(r)[start..end]);
        }
        let out = Tensor::new(v.rows(), end - start, data)?;
        let rg = self.rg(&[a]);
        self.checked("slice_cols", out, Op::SliceCols(a, start), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(AutodiffError::ShapeMismatch { op: "concat_rows", left: (rows, cols), right: v.shape() });
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = self.rg(parts);
        self.checked("concat_rows", out, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        if start > end || end > v.rows() {
            return Err(AutodiffError::ShapeMismatch { op: "slice_rows", left: v.shape(), right: (start, end) });
        }
        let cols = v.cols();
        let out = Tensor::new(end - start, cols, v.data()[start * cols..end * cols].to_vec())?;
        let rg = self.rg(&[a]);
        self.checked("slice_rows", out, Op::SliceRows(a, start), rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.checked("sum", out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        let out = Tensor::scalar(v.sum() / v.data().len() as f64);
        let rg = self.rg(&[a]);
        self.checked("mean", out, Op::Mean(a), rg)
    }

    /// Elementwise clamp into `[lo, hi]`; the gradient is zero where clamping bites.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, AutodiffError> {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        let rg = self.rg(&[a]);
        self.checked("clamp", out, Op::Clamp(a, lo, hi), rg)
    }

    /// Reverse sweep from a `1 x 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        if loss.tape != self.id || loss.index >= self.nodes.len() {
            return Err(AutodiffError::DisconnectedLoss);
        }
        let shape = self.nodes[loss.index].value.shape();
        if shape != (1, 1) {
            return Err(AutodiffError::NotScalar { shape });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.index + 1];
        grads[loss.index] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.index).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.requires_grad(*a) {
                    let mut da = Tensor::zeros(m, k);
                    let bt = vb.transpose();
                    gemm_acc(g.data(), bt.data(), da.data_mut(), m, n, k);
                    self.accumulate(grads, *a, da);
                }
                if self.requires_grad(*b) {
                    let mut db = Tensor::zeros(k, n);
                    gemm_tn_acc(va.data(), g.data(), db.data_mut(), m, k, n);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.requires_grad(*row) {
                    let cols = g.cols();
                    let mut dr = Tensor::zeros(1, cols);
                    for chunk in g.data().chunks(cols.max(1)) {
                        for (d, x) in dr.data_mut().iter_mut().zip(chunk) {
                            *d += x;
                        }
                    }
                    self.accumulate(grads, *row, dr);
                }
            }
            Op::Hadamard(a, b) => {
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, g.zip_map(self.value(*b), |d, x| d * x));
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, g.zip_map(self.value(*a), |d, x| d * x));
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|d| d * s)),
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::Sigmoid(a) => self.accumulate(grads, *a, g.zip_map(y, |d, s| d * s * (1.0 - s))),
            Op::Tanh(a) => self.accumulate(grads, *a, g.zip_map(y, |d, t| d * (1.0 - t * t))),
            Op::Relu(a) => {
                self.accumulate(grads, *a, g.zip_map(self.value(*a), |d, x| if x > 0.0 { d } else { 0.0 }))
            }
            Op::Exp(a) => self.accumulate(grads, *a, g.zip_map(y, |d, e| d * e)),
            Op::Log(a) => self.accumulate(grads, *a, g.zip_map(self.value(*a), |d, x| d / x)),
            Op::SoftmaxRows(a) => {
                let cols = y.cols().max(1);
                let mut dx = g.clone();
                for (drow, yrow) in dx.data_mut().chunks_mut(cols).zip(y.data().chunks(cols)) {
                    let dot: f64 = drow.iter().zip(yrow).map(|(d, p)| d * p).sum();
                    for (d, p) in drow.iter_mut().zip(yrow) {
                        *d = p * (*d - dot);
                    }
                }
                self.accumulate(grads, *a, dx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.value(p).shape();
                    if self.requires_grad(p) {
                        let mut data = Vec::with_capacity(rows * cols);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        self.accumulate(grads, p, Tensor::new(rows, cols, data).expect("shape"));
                    }
                    offset += cols;
                }
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = self.value(*a).shape();
                let mut da = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    for (c, &d) in g.row(r).iter().enumerate() {
                        da.set(r, start + c, d);
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.value(p).shape();
                    if self.requires_grad(p) {
                        let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        self.accumulate(grads, p, Tensor::new(rows, cols, data).expect("shape"));
                    }
                    offset += rows;
                }
            }
            Op::SliceRows(a, start) => {
                let (rows, cols) = self.value(*a).shape();
                let mut da = Tensor::zeros(rows, cols);
                da.data_mut()[start * cols..start * cols + g.data().len()].copy_from_slice(g.data());
                self.accumulate(grads, *a, da);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                self.accumulate(grads, *a, Tensor::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                self.accumulate(grads, *a, Tensor::filled(r, c, g.item() / (r * c) as f64));
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                self.accumulate(
                    grads,
                    *a,
                    g.zip_map(self.value(*a), |d, x| if x >= lo && x <= hi { d } else { 0.0 }),
                );
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.index].requires_grad {
            return;
        }
        match &mut grads[v.index] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

/// Result of one reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    tape: usize,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `∂loss/∂v`, or `None` when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(Option::as_ref)
    }

    /// Adds the gradients of every parameter bound from `store` into the
    /// store's gradient buffers. Buffers are not cleared first.
    pub fn accumulate_into(&self, tape: &Tape, store: &mut ParamStore) {
        debug_assert_eq!(tape.id, self.tape);
        for &(index, key, id) in &tape.params {
            if key != store.key() {
                continue;
            }
            if let Some(Some(g)) = self.grads.get(index) {
                store.grad_mut(id).add_assign(g);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
