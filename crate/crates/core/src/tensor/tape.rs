//! Append-only reverse-mode tape.
//!
//! Nodes are stored in creation order, so every node's inputs precede it
//! and a single reverse sweep computes all vector-Jacobian products. A tape
//! is built for one forward pass and discarded after its gradients are read.

use std::collections::HashMap;
use std::sync::Arc;

use super::kernels::{self, check_axis, split_axis};
use super::{Csr, Tensor};
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Operation catalog. Reductions keep the reduced axis with length 1.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    /// Trainable input.
    Leaf,
    /// Input (or inference-mode result) that receives no gradient.
    Constant,
    /// `[m,k] x [k,n]`
    MatMul,
    /// `[m,k] x [n,k]^T`
    MatMulNT,
    Add,
    Sub,
    Hadamard,
    ScalarMul(f64),
    AddScalar(f64),
    Transpose,
    Concat { axis: usize },
    Relu,
    Sigmoid,
    Tanh,
    Abs,
    Square,
    Softmax { axis: usize },
    Mean { axis: usize },
    Sum { axis: usize },
    SumAll,
    MeanAll,
    /// `[1,C]` (or `[C]`) repeated to `[rows,C]`.
    BroadcastRows { rows: usize },
    Reshape { shape: Vec<usize> },
    Slice { axis: usize, start: usize, len: usize },
    Permute { perm: Vec<usize> },
    /// `L[M,N]` applied to each `N`-row block of `X[B*N,D]`, giving `[B*M,D]`.
    BlockMatMul,
    /// Row softmax of `ReLU(E1 E2^T)`, fused so the forward pass allocates
    /// only the output matrix.
    AdaptiveAdjacency,
    /// Per stored entry `(r, c)`: `E_dst[r] . E_src[c]`, shape `[nnz,1]`.
    EdgeDot(Arc<Csr>),
    /// Softmax over each row's stored entries; empty rows are skipped.
    SegmentSoftmax(Arc<Csr>),
    /// Sparse weights `[nnz,1]` applied to each `n_cols`-row block of `X`.
    SpMM(Arc<Csr>),
}

impl OpKind {
    fn arity(&self) -> Option<usize> {
        use OpKind::*;
        match self {
            Leaf | Constant => Some(0),
            MatMul | MatMulNT | Add | Sub | Hadamard | BlockMatMul | AdaptiveAdjacency | EdgeDot(_)
            | SpMM(_) => Some(2),
            Concat { .. } => None,
            _ => Some(1),
        }
    }

    pub fn name(&self) -> &'static str {
        use OpKind::*;
        match self {
            Leaf => "leaf",
            Constant => "constant",
            MatMul => "matmul",
            MatMulNT => "matmul_nt",
            Add => "add",
            Sub => "sub",
            Hadamard => "hadamard",
            ScalarMul(_) => "scalar_mul",
            AddScalar(_) => "add_scalar",
            Transpose => "transpose",
            Concat { .. } => "concat",
            Relu => "relu",
            Sigmoid => "sigmoid",
            Tanh => "tanh",
            Abs => "abs",
            Square => "square",
            Softmax { .. } => "softmax",
            Mean { .. } => "mean",
            Sum { .. } => "sum",
            SumAll => "sum_all",
            MeanAll => "mean_all",
            BroadcastRows { .. } => "broadcast_rows",
            Reshape { .. } => "reshape",
            Slice { .. } => "slice",
            Permute { .. } => "permute",
            BlockMatMul => "block_matmul",
            AdaptiveAdjacency => "adaptive_adjacency",
            EdgeDot(_) => "edge_dot",
            SegmentSoftmax(_) => "segment_softmax",
            SpMM(_) => "spmm",
        }
    }
}

struct Node<T: Scalar> {
    op: OpKind,
    inputs: Vec<Var>,
    value: Tensor<T>,
    needs_grad: bool,
}

pub struct Tape<T: Scalar = f64> {
    nodes: Vec<Node<T>>,
    recording: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to trainable leaves.
#[derive(Debug)]
pub struct Gradients<T: Scalar = f64> {
    grads: HashMap<usize, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(&v.0)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.remove(&v.0)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), recording: true }
    }

    /// A tape that evaluates ops without recording them: results are
    /// constants and `backward` yields no gradients.
    pub fn inference() -> Self {
        Tape { nodes: Vec::new(), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a trainable input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let op = if self.recording { OpKind::Leaf } else { OpKind::Constant };
        let needs_grad = self.recording;
        self.push(Node { op, inputs: Vec::new(), value, needs_grad })
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(Node { op: OpKind::Constant, inputs: Vec::new(), value, needs_grad: false })
    }

    /// Every node in creation order.
    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (0..self.nodes.len()).map(Var)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &OpKind {
        &self.nodes[v.0].op
    }

    pub fn inputs(&self, v: Var) -> &[Var] {
        &self.nodes[v.0].inputs
    }

    fn push(&mut self, node: Node<T>) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// Evaluates `op` on `inputs` and records the result.
    pub fn apply(&mut self, op: OpKind, inputs: &[Var]) -> Result<Var> {
        if matches!(op, OpKind::Leaf | OpKind::Constant) {
            return Err(Error::Invalid(format!("{} cannot be applied", op.name())));
        }
        for v in inputs {
            if v.0 >= self.nodes.len() {
                return Err(Error::Invalid(format!("{v:?} is not on this tape")));
            }
        }
        let values: Vec<&Tensor<T>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let value = eval(&op, &values)?;
        if !self.recording {
            return Ok(self.constant(value));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        Ok(self.push(Node { op, inputs: inputs.to_vec(), value, needs_grad }))
    }

    /// Re-evaluates every op from the recorded leaves and constants.
    pub fn replay(&self) -> Result<Tape<T>> {
        let mut out = Tape { nodes: Vec::with_capacity(self.nodes.len()), recording: self.recording };
        for node in &self.nodes {
            let value = match node.op {
                OpKind::Leaf | OpKind::Constant => node.value.clone(),
                _ => {
                    let values: Vec<&Tensor<T>> = node.inputs.iter().map(|v| &out.nodes[v.0].value).collect();
                    eval(&node.op, &values)?
                }
            };
            out.nodes.push(Node { op: node.op.clone(), inputs: node.inputs.clone(), value, needs_grad: node.needs_grad });
        }
        Ok(out)
    }

    /// Gradients of the scalar `loss` with respect to every trainable leaf
    /// it depends on. Leaves it does not reach are absent from the result.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut result = HashMap::new();
        if !self.nodes[loss.0].needs_grad {
            return Ok(Gradients { grads: result });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(loss_value.shape(), T::one()));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match node.op {
                OpKind::Leaf => {
                    result.insert(id, g);
                    continue;
                }
                OpKind::Constant => continue,
                _ => {}
            }
            let need: Vec<bool> = node.inputs.iter().map(|v| self.nodes[v.0].needs_grad).collect();
            if !need.iter().any(|&b| b) {
                continue;
            }
            let values: Vec<&Tensor<T>> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let input_grads = vjp(&node.op, &values, &node.value, &g, &need)?;
            for (v, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                match &mut grads[v.0] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(ig.data()) {
                            *a += *b;
                        }
                    }
                    slot => *slot = Some(ig),
                }
            }
        }
        Ok(Gradients { grads: result })
    }

    // Convenience wrappers over `apply`.

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::MatMul, &[a, b])
    }
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::MatMulNT, &[a, b])
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Hadamard, &[a, b])
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(OpKind::ScalarMul(c), &[a])
    }
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(OpKind::AddScalar(c), &[a])
    }
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Transpose, &[a])
    }
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        self.apply(OpKind::Concat { axis }, parts)
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Relu, &[a])
    }
    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sigmoid, &[a])
    }
    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Tanh, &[a])
    }
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Abs, &[a])
    }
    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Square, &[a])
    }
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(OpKind::Softmax { axis }, &[a])
    }
    pub fn sum(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(OpKind::Sum { axis }, &[a])
    }
    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(OpKind::Mean { axis }, &[a])
    }
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::SumAll, &[a])
    }
    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::MeanAll, &[a])
    }
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        self.apply(OpKind::BroadcastRows { rows }, &[a])
    }
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.apply(OpKind::Reshape { shape: shape.to_vec() }, &[a])
    }
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.apply(OpKind::Slice { axis, start, len }, &[a])
    }
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        self.apply(OpKind::Permute { perm: perm.to_vec() }, &[a])
    }
    pub fn block_matmul(&mut self, left: Var, x: Var) -> Result<Var> {
        self.apply(OpKind::BlockMatMul, &[left, x])
    }
    pub fn adaptive_adjacency(&mut self, e1: Var, e2: Var) -> Result<Var> {
        self.apply(OpKind::AdaptiveAdjacency, &[e1, e2])
    }
    pub fn edge_dot(&mut self, csr: &Arc<Csr>, dst: Var, src: Var) -> Result<Var> {
        self.apply(OpKind::EdgeDot(csr.clone()), &[dst, src])
    }
    pub fn segment_softmax(&mut self, csr: &Arc<Csr>, scores: Var) -> Result<Var> {
        self.apply(OpKind::SegmentSoftmax(csr.clone()), &[scores])
    }
    pub fn spmm(&mut self, csr: &Arc<Csr>, weights: Var, x: Var) -> Result<Var> {
        self.apply(OpKind::SpMM(csr.clone()), &[weights, x])
    }

    /// `x W + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        match b {
            Some(b) => {
                let rows = self.value(xw).shape()[0];
                let bb = self.broadcast_rows(b, rows)?;
                self.add(xw, bb)
            }
            None => Ok(xw),
        }
    }
}

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn dims2<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => shape_err(op, format!("expected a matrix, got shape {s:?}")),
    }
}

fn out<T: Scalar>(shape: Vec<usize>, data: Vec<T>) -> Tensor<T> {
    Tensor::from_parts(shape, data)
}

fn unary<T: Scalar>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    x.map(f)
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Forward evaluation of one op.
pub(crate) fn eval<T: Scalar>(op: &OpKind, x: &[&Tensor<T>]) -> Result<Tensor<T>> {
    use OpKind::*;
    let name = op.name();
    match op.arity() {
        Some(k) if k != x.len() => {
            return shape_err(name, format!("expected {k} inputs, got {}", x.len()));
        }
        None if x.is_empty() => return shape_err(name, "expected at least one input"),
        _ => {}
    }
    Ok(match op {
        Leaf | Constant => unreachable!("rejected by Tape::apply"),
        MatMul => {
            let (m, k) = dims2(name, x[0])?;
            let (k2, n) = dims2(name, x[1])?;
            if k != k2 {
                return shape_err(name, format!("{:?} x {:?}", x[0].shape(), x[1].shape()));
            }
            out(vec![m, n], kernels::matmul(x[0].data(), x[1].data(), m, k, n))
        }
        MatMulNT => {
            let (m, k) = dims2(name, x[0])?;
            let (n, k2) = dims2(name, x[1])?;
            if k != k2 {
                return shape_err(name, format!("{:?} x {:?}^T", x[0].shape(), x[1].shape()));
            }
            out(vec![m, n], kernels::matmul_nt(x[0].data(), x[1].data(), m, k, n))
        }
        Add => {
            same_shape(name, x[0], x[1])?;
            x[0].zip_map(x[1], |a, b| a + b)?
        }
        Sub => {
            same_shape(name, x[0], x[1])?;
            x[0].zip_map(x[1], |a, b| a - b)?
        }
        Hadamard => {
            same_shape(name, x[0], x[1])?;
            x[0].zip_map(x[1], |a, b| a * b)?
        }
        ScalarMul(c) => {
            let c = T::lit(*c);
            unary(x[0], |v| v * c)
        }
        AddScalar(c) => {
            let c = T::lit(*c);
            unary(x[0], |v| v + c)
        }
        Transpose => {
            let (r, c) = dims2(name, x[0])?;
            out(vec![c, r], kernels::transpose(x[0].data(), r, c))
        }
        Concat { axis } => {
            let shapes: Vec<&[usize]> = x.iter().map(|t| t.shape()).collect();
            let datas: Vec<&[T]> = x.iter().map(|t| t.data()).collect();
            let (shape, data) = kernels::concat(&datas, &shapes, *axis)?;
            out(shape, data)
        }
        Relu => unary(x[0], |v| if v > T::zero() { v } else { T::zero() }),
        Sigmoid => unary(x[0], sigmoid),
        Tanh => unary(x[0], |v| v.tanh()),
        Abs => unary(x[0], |v| v.abs()),
        Square => unary(x[0], |v| v * v),
        Softmax { axis } => {
            check_axis(name, x[0].shape(), *axis)?;
            if x[0].shape()[*axis] == 0 {
                return shape_err(name, format!("softmax over empty axis {axis} of {:?}", x[0].shape()));
            }
            out(x[0].shape().to_vec(), kernels::softmax_axis(x[0].data(), x[0].shape(), *axis))
        }
        Sum { axis } | Mean { axis } => {
            check_axis(name, x[0].shape(), *axis)?;
            let len = x[0].shape()[*axis];
            let mut data = kernels::sum_axis(x[0].data(), x[0].shape(), *axis);
            if matches!(op, Mean { .. }) {
                if len == 0 {
                    return shape_err(name, "mean over empty axis");
                }
                let inv = T::one() / T::from_usize_lossy(len);
                data.iter_mut().for_each(|v| *v *= inv);
            }
            let mut shape = x[0].shape().to_vec();
            shape[*axis] = 1;
            out(shape, data)
        }
        SumAll => out(vec![1], vec![x[0].sum()]),
        MeanAll => {
            if x[0].numel() == 0 {
                return shape_err(name, "mean of empty tensor");
            }
            out(vec![1], vec![x[0].sum() / T::from_usize_lossy(x[0].numel())])
        }
        BroadcastRows { rows } => {
            let cols = match x[0].shape() {
                [1, c] | [c] => *c,
                s => return shape_err(name, format!("expected [1,C] or [C], got {s:?}")),
            };
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..*rows {
                data.extend_from_slice(x[0].data());
            }
            out(vec![*rows, cols], data)
        }
        Reshape { shape } => {
            if shape.iter().product::<usize>() != x[0].numel() {
                return shape_err(name, format!("{:?} -> {shape:?}", x[0].shape()));
            }
            out(shape.clone(), x[0].to_vec())
        }
        Slice { axis, start, len } => {
            let (shape, data) = kernels::slice_axis(x[0].data(), x[0].shape(), *axis, *start, *len)?;
            out(shape, data)
        }
        Permute { perm } => {
            let (shape, data) = kernels::permute(x[0].data(), x[0].shape(), perm)?;
            out(shape, data)
        }
        BlockMatMul => {
            let (m, n) = dims2(name, x[0])?;
            let (rows, d) = dims2(name, x[1])?;
            if n == 0 || rows % n != 0 {
                return shape_err(name, format!("{:?} over blocks of {:?}", x[0].shape(), x[1].shape()));
            }
            let blocks = rows / n;
            let mut data = Vec::with_capacity(blocks * m * d);
            for b in 0..blocks {
                let xb = &x[1].data()[b * n * d..(b + 1) * n * d];
                data.extend(kernels::matmul(x[0].data(), xb, m, n, d));
            }
            out(vec![blocks * m, d], data)
        }
        AdaptiveAdjacency => {
            let (n1, d) = dims2(name, x[0])?;
            let (n2, d2) = dims2(name, x[1])?;
            if d != d2 {
                return shape_err(name, format!("{:?} vs {:?}", x[0].shape(), x[1].shape()));
            }
            let (e1, e2) = (x[0].data(), x[1].data());
            let mut data = vec![T::zero(); n1 * n2];
            for i in 0..n1 {
                let row = &mut data[i * n2..(i + 1) * n2];
                let ei = &e1[i * d..(i + 1) * d];
                for (j, r) in row.iter_mut().enumerate() {
                    let s = kernels::dot(ei, &e2[j * d..(j + 1) * d]);
                    *r = if s > T::zero() { s } else { T::zero() };
                }
                kernels::softmax_slice(row);
            }
            out(vec![n1, n2], data)
        }
        EdgeDot(csr) => {
            let (r, d) = dims2(name, x[0])?;
            let (c, d2) = dims2(name, x[1])?;
            if r != csr.n_rows() || c != csr.n_cols() || d != d2 {
                return shape_err(
                    name,
                    format!("{:?}, {:?} for a {}x{} pattern", x[0].shape(), x[1].shape(), csr.n_rows(), csr.n_cols()),
                );
            }
            let data = (0..csr.nnz())
                .map(|e| {
                    let (u, v) = (csr.row_of(e), csr.cols()[e]);
                    kernels::dot(&x[0].data()[u * d..(u + 1) * d], &x[1].data()[v * d..(v + 1) * d])
                })
                .collect();
            out(vec![csr.nnz(), 1], data)
        }
        SegmentSoftmax(csr) => {
            if x[0].numel() != csr.nnz() {
                return shape_err(name, format!("{:?} for {} stored entries", x[0].shape(), csr.nnz()));
            }
            let mut data = x[0].to_vec();
            for r in 0..csr.n_rows() {
                kernels::softmax_slice(&mut data[csr.row_range(r)]);
            }
            out(x[0].shape().to_vec(), data)
        }
        SpMM(csr) => {
            let (rows, d) = dims2(name, x[1])?;
            if x[0].numel() != csr.nnz() || csr.n_cols() == 0 || rows % csr.n_cols() != 0 {
                return shape_err(
                    name,
                    format!("weights {:?}, x {:?} for a {}x{} pattern", x[0].shape(), x[1].shape(), csr.n_rows(), csr.n_cols()),
                );
            }
            let blocks = rows / csr.n_cols();
            let (w, xs) = (x[0].data(), x[1].data());
            let mut data = vec![T::zero(); blocks * csr.n_rows() * d];
            for b in 0..blocks {
                for r in 0..csr.n_rows() {
                    let dst = (b * csr.n_rows() + r) * d;
                    for e in csr.row_range(r) {
                        let src = (b * csr.n_cols() + csr.cols()[e]) * d;
                        for k in 0..d {
                            data[dst + k] += w[e] * xs[src + k];
                        }
                    }
                }
            }
            out(vec![blocks * csr.n_rows(), d], data)
        }
    })
}

/// Vector-Jacobian products for one op; `None` where `need` is false.
fn vjp<T: Scalar>(
    op: &OpKind,
    x: &[&Tensor<T>],
    y: &Tensor<T>,
    g: &Tensor<T>,
    need: &[bool],
) -> Result<Vec<Option<Tensor<T>>>> {
    use OpKind::*;
    let shaped = |t: &Tensor<T>, data: Vec<T>| out(t.shape().to_vec(), data);
    let elementwise = |f: &dyn Fn(usize) -> T| -> Tensor<T> { out(x[0].shape().to_vec(), (0..g.numel()).map(f).collect()) };
    let gd = g.data();
    Ok(match op {
        Leaf | Constant => Vec::new(),
        MatMul => {
            let (m, k) = x[0].dims2()?;
            let n = x[1].shape()[1];
            vec![
                need[0].then(|| shaped(x[0], kernels::matmul_nt(gd, x[1].data(), m, n, k))),
                need[1].then(|| shaped(x[1], kernels::matmul_tn(x[0].data(), gd, m, k, n))),
            ]
        }
        MatMulNT => {
            let (m, k) = x[0].dims2()?;
            let n = x[1].shape()[0];
            vec![
                need[0].then(|| shaped(x[0], kernels::matmul(gd, x[1].data(), m, n, k))),
                need[1].then(|| shaped(x[1], kernels::matmul_tn(gd, x[0].data(), m, n, k))),
            ]
        }
        Add => vec![need[0].then(|| g.clone()), need[1].then(|| g.clone())],
        Sub => vec![need[0].then(|| g.clone()), need[1].then(|| g.map(|v| -v))],
        Hadamard => vec![
            need[0].then(|| g.zip_map(x[1], |a, b| a * b)).transpose()?,
            need[1].then(|| g.zip_map(x[0], |a, b| a * b)).transpose()?,
        ],
        ScalarMul(c) => {
            let c = T::lit(*c);
            vec![Some(g.map(|v| v * c))]
        }
        AddScalar(_) => vec![Some(g.clone())],
        Transpose => {
            let (r, c) = x[0].dims2()?;
            vec![Some(shaped(x[0], kernels::transpose(gd, c, r)))]
        }
        Concat { axis } => {
            let mut start = 0;
            let mut grads = Vec::with_capacity(x.len());
            for (xi, &ni) in x.iter().zip(need) {
                let len = xi.shape()[*axis];
                if ni {
                    let (_, data) = kernels::slice_axis(gd, g.shape(), *axis, start, len)?;
                    grads.push(Some(shaped(xi, data)));
                } else {
                    grads.push(None);
                }
                start += len;
            }
            grads
        }
        Relu => {
            let xd = x[0].data();
            vec![Some(elementwise(&|i| if xd[i] > T::zero() { gd[i] } else { T::zero() }))]
        }
        Sigmoid => {
            let yd = y.data();
            vec![Some(elementwise(&|i| gd[i] * yd[i] * (T::one() - yd[i])))]
        }
        Tanh => {
            let yd = y.data();
            vec![Some(elementwise(&|i| gd[i] * (T::one() - yd[i] * yd[i])))]
        }
        Abs => {
            let xd = x[0].data();
            vec![Some(elementwise(&|i| {
                if xd[i] > T::zero() {
                    gd[i]
                } else if xd[i] < T::zero() {
                    -gd[i]
                } else {
                    T::zero()
                }
            }))]
        }
        Square => {
            let xd = x[0].data();
            let two = T::lit(2.0);
            vec![Some(elementwise(&|i| two * xd[i] * gd[i]))]
        }
        Softmax { axis } => {
            let shape = y.shape();
            let (outer, len, inner) = split_axis(shape, *axis);
            let yd = y.data();
            let mut dx = vec![T::zero(); yd.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |k: usize| (o * len + k) * inner + i;
                    let dotp = (0..len).fold(T::zero(), |s, k| s + gd[idx(k)] * yd[idx(k)]);
                    for k in 0..len {
                        dx[idx(k)] = yd[idx(k)] * (gd[idx(k)] - dotp);
                    }
                }
            }
            vec![Some(shaped(x[0], dx))]
        }
        Sum { axis } | Mean { axis } => {
            let (outer, len, inner) = split_axis(x[0].shape(), *axis);
            let mut dx = kernels::expand_axis(gd, outer, len, inner);
            if matches!(op, Mean { .. }) {
                let inv = T::one() / T::from_usize_lossy(len);
                dx.iter_mut().for_each(|v| *v *= inv);
            }
            vec![Some(shaped(x[0], dx))]
        }
        SumAll => vec![Some(Tensor::full(x[0].shape(), gd[0]))],
        MeanAll => vec![Some(Tensor::full(x[0].shape(), gd[0] / T::from_usize_lossy(x[0].numel())))],
        BroadcastRows { rows } => {
            let cols = x[0].numel();
            let mut dx = vec![T::zero(); cols];
            for r in 0..*rows {
                for (d, &v) in dx.iter_mut().zip(&gd[r * cols..(r + 1) * cols]) {
                    *d += v;
                }
            }
            vec![Some(shaped(x[0], dx))]
        }
        Reshape { .. } => vec![Some(shaped(x[0], g.to_vec()))],
        Slice { axis, start, len } => {
            let (outer, full, inner) = split_axis(x[0].shape(), *axis);
            let mut dx = vec![T::zero(); x[0].numel()];
            for o in 0..outer {
                let dst = (o * full + start) * inner;
                let src = o * len * inner;
                dx[dst..dst + len * inner].copy_from_slice(&gd[src..src + len * inner]);
            }
            vec![Some(shaped(x[0], dx))]
        }
        Permute { perm } => {
            let (_, dx) = kernels::permute(gd, g.shape(), &kernels::inverse_permutation(perm))?;
            vec![Some(shaped(x[0], dx))]
        }
        BlockMatMul => {
            let (m, n) = x[0].dims2()?;
            let d = x[1].shape()[1];
            let blocks = x[1].shape()[0] / n;
            let mut dl = need[0].then(|| vec![T::zero(); m * n]);
            let mut dx = need[1].then(|| Vec::with_capacity(x[1].numel()));
            for b in 0..blocks {
                let gb = &gd[b * m * d..(b + 1) * m * d];
                let xb = &x[1].data()[b * n * d..(b + 1) * n * d];
                if let Some(dl) = dl.as_mut() {
                    for (acc, v) in dl.iter_mut().zip(kernels::matmul_nt(gb, xb, m, d, n)) {
                        *acc += v;
                    }
                }
                if let Some(dx) = dx.as_mut() {
                    dx.extend(kernels::matmul_tn(x[0].data(), gb, m, n, d));
                }
            }
            vec![dl.map(|v| shaped(x[0], v)), dx.map(|v| shaped(x[1], v))]
        }
        AdaptiveAdjacency => {
            let (n1, d) = x[0].dims2()?;
            let n2 = x[1].shape()[0];
            let (e1, e2, a) = (x[0].data(), x[1].data(), y.data());
            let mut de1 = vec![T::zero(); n1 * d];
            let mut de2 = vec![T::zero(); n2 * d];
            let mut row_grad = vec![T::zero(); n2];
            for i in 0..n1 {
                let ai = &a[i * n2..(i + 1) * n2];
                let gi = &gd[i * n2..(i + 1) * n2];
                let dotp = kernels::dot(ai, gi);
                let ei = &e1[i * d..(i + 1) * d];
                for j in 0..n2 {
                    let ej = &e2[j * d..(j + 1) * d];
                    // ReLU gate: the score is recomputed instead of stored.
                    row_grad[j] = if kernels::dot(ei, ej) > T::zero() { ai[j] * (gi[j] - dotp) } else { T::zero() };
                }
                for j in 0..n2 {
                    let s = row_grad[j];
                    if s == T::zero() {
                        continue;
                    }
                    for k in 0..d {
                        de1[i * d + k] += s * e2[j * d + k];
                        de2[j * d + k] += s * e1[i * d + k];
                    }
                }
            }
            vec![need[0].then(|| shaped(x[0], de1)), need[1].then(|| shaped(x[1], de2))]
        }
        EdgeDot(csr) => {
            let d = x[0].shape()[1];
            let (ed, es) = (x[0].data(), x[1].data());
            let mut dd = vec![T::zero(); ed.len()];
            let mut ds = vec![T::zero(); es.len()];
            for e in 0..csr.nnz() {
                let (u, v) = (csr.row_of(e), csr.cols()[e]);
                for k in 0..d {
                    dd[u * d + k] += gd[e] * es[v * d + k];
                    ds[v * d + k] += gd[e] * ed[u * d + k];
                }
            }
            vec![need[0].then(|| shaped(x[0], dd)), need[1].then(|| shaped(x[1], ds))]
        }
        SegmentSoftmax(csr) => {
            let yd = y.data();
            let mut dx = vec![T::zero(); yd.len()];
            for r in 0..csr.n_rows() {
                let range = csr.row_range(r);
                let dotp = range.clone().fold(T::zero(), |s, e| s + gd[e] * yd[e]);
                for e in range {
                    dx[e] = yd[e] * (gd[e] - dotp);
                }
            }
            vec![Some(shaped(x[0], dx))]
        }
        SpMM(csr) => {
            let d = x[1].shape()[1];
            let blocks = x[1].shape()[0] / csr.n_cols();
            let (w, xs) = (x[0].data(), x[1].data());
            let mut dw = vec![T::zero(); w.len()];
            let mut dx = vec![T::zero(); xs.len()];
            for b in 0..blocks {
                for r in 0..csr.n_rows() {
                    let dst = (b * csr.n_rows() + r) * d;
                    for e in csr.row_range(r) {
                        let src = (b * csr.n_cols() + csr.cols()[e]) * d;
                        for k in 0..d {
                            dw[e] += gd[dst + k] * xs[src + k];
                            dx[src + k] += w[e] * gd[dst + k];
                        }
                    }
                }
            }
            vec![need[0].then(|| shaped(x[0], dw)), need[1].then(|| shaped(x[1], dx))]
        }
    })
}
