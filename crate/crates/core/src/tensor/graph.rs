use alloc::borrow::Cow;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::Tensor;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    Conv2d { input: NodeId, kernels: NodeId, bias: NodeId, cols: Vec<f64> },
    MaxPool2d { input: NodeId, argmax: Vec<usize> },
    Relu(NodeId),
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Softmax(NodeId),
    CrossEntropy { logits: NodeId, label: usize, probs: Vec<f64> },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    MeanRows(NodeId),
    Reshape(NodeId),
    SliceCols { input: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    StackRows(Vec<NodeId>),
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    tracked: bool,
}

/// A tape of primitive applications.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and [`Graph::backward`] is a single reverse sweep.
/// Leaves can borrow their tensors, which lets many graphs share one set of
/// model parameters without copying them.
#[derive(Debug, Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, tracked: bool) -> NodeId {
        debug_assert!(value.is_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node { value, op, tracked });
        NodeId(self.nodes.len() - 1)
    }

    fn tracked(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].tracked)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor) -> NodeId {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn variable(&mut self, value: Tensor) -> NodeId {
        self.push(Cow::Owned(value), Op::Leaf, true)
    }

    pub fn variable_ref(&mut self, value: &'a Tensor) -> NodeId {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn data(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    fn matrix_dims(&self, op: &'static str, id: NodeId) -> Result<(usize, usize)> {
        match *self.shape(id) {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::shape(op, format!("expected a matrix, got {s:?}"))),
        }
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}x{k}] x [{k2}x{n}]")));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul(self.data(a), self.data(b), &mut out, m, k, n);
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(Cow::Owned(Tensor::new(&[m, n], out)?), Op::MatMul(a, b), tracked))
    }

    /// `a[m×k] · b[n×k]ᵀ`.
    pub fn matmul_transposed(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.matrix_dims("matmul_transposed", a)?;
        let (n, k2) = self.matrix_dims("matmul_transposed", b)?;
        if k != k2 {
            return Err(Error::shape("matmul_transposed", format!("[{m}x{k}] x [{n}x{k2}]^T")));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_nt(self.data(a), self.data(b), &mut out, m, k, n);
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(Cow::Owned(Tensor::new(&[m, n], out)?), Op::MatMulNt(a, b), tracked))
    }

    /// 3×3 cross-correlation with zero padding 1 and stride 1, plus a
    /// per-output-channel bias.
    pub fn conv2d(&mut self, input: NodeId, kernels: NodeId, bias: NodeId) -> Result<NodeId> {
        let (c_in, h, w) = match *self.shape(input) {
            [c, h, w] => (c, h, w),
            ref s => return Err(Error::shape("conv2d", format!("input {s:?} is not c×h×w"))),
        };
        let c_out = match *self.shape(kernels) {
            [co, ci, 3, 3] if ci == c_in => co,
            ref s => {
                return Err(Error::shape(
                    "conv2d",
                    format!("kernels {s:?} do not match {c_in} input channels with 3x3 windows"),
                ))
            }
        };
        if self.shape(bias) != [c_out] {
            return Err(Error::shape("conv2d", format!("bias {:?} for {c_out} channels", self.shape(bias))));
        }
        let plane = h * w;
        let mut cols = vec![0.0; c_in * 9 * plane];
        kernels::im2col3(self.data(input), c_in, h, w, &mut cols);
        let mut out = vec![0.0; c_out * plane];
        kernels::matmul(self.data(kernels), &cols, &mut out, c_out, c_in * 9, plane);
        for (co, &b) in self.data(bias).iter().enumerate() {
            for v in &mut out[co * plane..(co + 1) * plane] {
                *v += b;
            }
        }
        let tracked = self.tracked(&[input, kernels, bias]);
        // Columns are only needed for kernel gradients.
        let cols = if self.nodes[kernels.0].tracked { cols } else { Vec::new() };
        Ok(self.push(Cow::Owned(Tensor::new(&[c_out, h, w], out)?), Op::Conv2d { input, kernels, bias, cols }, tracked))
    }

    /// 2×2 max pooling with stride 2; a trailing odd row or column is dropped.
    /// Ties resolve to the first element in row-major window order.
    pub fn maxpool2d(&mut self, input: NodeId) -> Result<NodeId> {
        let (c, h, w) = match *self.shape(input) {
            [c, h, w] if h >= 2 && w >= 2 => (c, h, w),
            ref s => return Err(Error::shape("maxpool2d", format!("input {s:?} needs c×h×w with h,w >= 2"))),
        };
        let (oh, ow) = (h / 2, w / 2);
        let x = self.data(input);
        let mut out = vec![0.0; c * oh * ow];
        let mut argmax = vec![0usize; c * oh * ow];
        for ch in 0..c {
            let base = ch * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let top = base + 2 * oy * w + 2 * ox;
                    let mut best = top;
                    for cand in [top + 1, top + w, top + w + 1] {
                        if x[cand] > x[best] {
                            best = cand;
                        }
                    }
                    let o = ch * oh * ow + oy * ow + ox;
                    out[o] = x[best];
                    argmax[o] = best;
                }
            }
        }
        let tracked = self.tracked(&[input]);
        Ok(self.push(Cow::Owned(Tensor::new(&[c, oh, ow], out)?), Op::MaxPool2d { input, argmax }, tracked))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let tracked = self.tracked(&[x]);
        self.push(Cow::Owned(out), Op::Relu(x), tracked)
    }

    /// `W·x + b` for `x[n]`, `W[m×n]`, `b[m]`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, n) = self.matrix_dims("affine", w)?;
        if self.shape(x) != [n] || self.shape(b) != [m] {
            return Err(Error::shape("affine", format!("x {:?}, W [{m}x{n}], b {:?}", self.shape(x), self.shape(b))));
        }
        let (xv, wv, bv) = (self.data(x), self.data(w), self.data(b));
        let out: Vec<f64> = (0..m).map(|i| kernels::dot(&wv[i * n..(i + 1) * n], xv) + bv[i]).collect();
        let tracked = self.tracked(&[x, w, b]);
        Ok(self.push(Cow::Owned(Tensor::vector(out)), Op::Affine { x, w, b }, tracked))
    }

    /// Stabilized softmax along the last axis.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x);
        let width = *value.shape().last().expect("tensors have rank >= 1");
        let mut out = value.clone();
        for row in out.data_mut().chunks_mut(width) {
            kernels::softmax_in_place(row);
        }
        let tracked = self.tracked(&[x]);
        self.push(Cow::Owned(out), Op::Softmax(x), tracked)
    }

    /// `−log softmax(logits)[label]` as a one-element tensor.
    pub fn cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let z = self.value(logits);
        if z.rank() != 1 {
            return Err(Error::shape("cross_entropy", format!("logits {:?}", z.shape())));
        }
        if label >= z.len() {
            return Err(Error::LabelOutOfRange { label, classes: z.len() });
        }
        let max = z.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_total = libm::log(z.data().iter().map(|v| libm::exp(v - max)).sum::<f64>());
        let loss = log_total - (z.data()[label] - max);
        let mut probs = vec![0.0; z.len()];
        kernels::softmax_slice(z.data(), &mut probs);
        let tracked = self.tracked(&[logits]);
        Ok(self.push(Cow::Owned(Tensor::scalar(loss)), Op::CrossEntropy { logits, label, probs }, tracked))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(Cow::Owned(out), Op::Add(a, b), tracked))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let out = Tensor::new(self.shape(a), data)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(Cow::Owned(out), Op::Mul(a, b), tracked))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let out = self.value(x).map(|v| v * factor);
        let tracked = self.tracked(&[x]);
        self.push(Cow::Owned(out), Op::Scale(x, factor), tracked)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let out = Tensor::scalar(self.value(x).sum());
        let tracked = self.tracked(&[x]);
        self.push(Cow::Owned(out), Op::Sum(x), tracked)
    }

    /// Mean over the rows of a matrix, giving a vector of its column count.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.matrix_dims("mean_rows", x)?;
        let xv = self.data(x);
        let mut out = vec![0.0; c];
        for row in xv.chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        let tracked = self.tracked(&[x]);
        Ok(self.push(Cow::Owned(Tensor::vector(out)), Op::MeanRows(x), tracked))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.value(x).clone().reshape(shape)?;
        let tracked = self.tracked(&[x]);
        Ok(self.push(Cow::Owned(out), Op::Reshape(x), tracked))
    }

    /// Columns `start..start + width` of a matrix.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, width: usize) -> Result<NodeId> {
        let (r, c) = self.matrix_dims("slice_cols", x)?;
        if width == 0 || start + width > c {
            return Err(Error::shape("slice_cols", format!("columns {start}..{} of {c}", start + width)));
        }
        let xv = self.data(x);
        let mut out = Vec::with_capacity(r * width);
        for row in xv.chunks(c) {
            out.extend_from_slice(&row[start..start + width]);
        }
        let tracked = self.tracked(&[x]);
        Ok(self.push(Cow::Owned(Tensor::new(&[r, width], out)?), Op::SliceCols { input: x, start }, tracked))
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts.first().ok_or_else(|| Error::shape("concat_cols", "no inputs".into()))?;
        let (r, _) = self.matrix_dims("concat_cols", first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.matrix_dims("concat_cols", p)?;
            if pr != r {
                return Err(Error::shape("concat_cols", format!("row counts {r} and {pr}")));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &pc) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.data(p)[i * pc..(i + 1) * pc]);
            }
        }
        let tracked = self.tracked(parts);
        Ok(self.push(Cow::Owned(Tensor::new(&[r, total], out)?), Op::ConcatCols(parts.to_vec()), tracked))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let first = *rows.first().ok_or_else(|| Error::shape("stack_rows", "no inputs".into()))?;
        let width = self.value(first).len();
        let mut out = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            if self.shape(r) != [width] {
                return Err(Error::shape("stack_rows", format!("row {:?}, expected [{width}]", self.shape(r))));
            }
            out.extend_from_slice(self.data(r));
        }
        let tracked = self.tracked(rows);
        Ok(self.push(Cow::Owned(Tensor::new(&[rows.len(), width], out)?), Op::StackRows(rows.to_vec()), tracked))
    }

    /// Reverse sweep from a one-element `loss` node. Gradient contributions
    /// from a node consumed several times are summed.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let shape = self.shape(loss);
        if self.value(loss).len() != 1 {
            return Err(Error::NotScalar(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(shape, 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<'a>, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let wants = |id: NodeId| self.nodes[id.0].tracked;
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.matrix_dims("matmul", a)?;
                let n = self.shape(b)[1];
                if wants(a) {
                    let mut da = vec![0.0; m * k];
                    kernels::matmul_nt(gd, self.data(b), &mut da, m, n, k);
                    accumulate(grads, a, Tensor::new(&[m, k], da)?);
                }
                if wants(b) {
                    let mut db = vec![0.0; k * n];
                    kernels::matmul_tn(self.data(a), gd, &mut db, m, k, n);
                    accumulate(grads, b, Tensor::new(&[k, n], db)?);
                }
            }
            &Op::MatMulNt(a, b) => {
                let (m, k) = self.matrix_dims("matmul_transposed", a)?;
                let n = self.shape(b)[0];
                if wants(a) {
                    let mut da = vec![0.0; m * k];
                    kernels::matmul(gd, self.data(b), &mut da, m, n, k);
                    accumulate(grads, a, Tensor::new(&[m, k], da)?);
                }
                if wants(b) {
                    let mut db = vec![0.0; n * k];
                    kernels::matmul_tn(gd, self.data(a), &mut db, m, n, k);
                    accumulate(grads, b, Tensor::new(&[n, k], db)?);
                }
            }
            Op::Conv2d { input, kernels: kern, bias, cols } => {
                let (input, kern, bias) = (*input, *kern, *bias);
                let (c_in, h, w) = {
                    let s = self.shape(input);
                    (s[0], s[1], s[2])
                };
                let c_out = self.shape(kern)[0];
                let plane = h * w;
                if wants(kern) {
                    let mut dk = vec![0.0; c_out * c_in * 9];
                    kernels::matmul_nt(gd, cols, &mut dk, c_out, plane, c_in * 9);
                    accumulate(grads, kern, Tensor::new(&[c_out, c_in, 3, 3], dk)?);
                }
                if wants(bias) {
                    let db = gd.chunks(plane).map(|ch| ch.iter().sum()).collect();
                    accumulate(grads, bias, Tensor::vector(db));
                }
                if wants(input) {
                    let mut dcols = vec![0.0; c_in * 9 * plane];
                    kernels::matmul_tn(self.data(kern), gd, &mut dcols, c_out, c_in * 9, plane);
                    let mut dx = vec![0.0; c_in * plane];
                    kernels::col2im3(&dcols, c_in, h, w, &mut dx);
                    accumulate(grads, input, Tensor::new(&[c_in, h, w], dx)?);
                }
            }
            Op::MaxPool2d { input, argmax } => {
                if wants(*input) {
                    let mut dx = Tensor::zeros(self.shape(*input));
                    let dxd = dx.data_mut();
                    for (&src, &gv) in argmax.iter().zip(gd) {
                        dxd[src] += gv;
                    }
                    accumulate(grads, *input, dx);
                }
            }
            &Op::Relu(x) => {
                let xv = self.data(x);
                let data = gd.iter().zip(xv).map(|(&gv, &v)| if v > 0.0 { gv } else { 0.0 }).collect();
                accumulate(grads, x, Tensor::new(self.shape(x), data)?);
            }
            &Op::Affine { x, w, b } => {
                let (m, n) = self.matrix_dims("affine", w)?;
                if wants(w) {
                    let xv = self.data(x);
                    let mut dw = vec![0.0; m * n];
                    for (i, &gv) in gd.iter().enumerate() {
                        if gv != 0.0 {
                            kernels::axpy(gv, xv, &mut dw[i * n..(i + 1) * n]);
                        }
                    }
                    accumulate(grads, w, Tensor::new(&[m, n], dw)?);
                }
                if wants(x) {
                    let mut dx = vec![0.0; n];
                    kernels::matmul_tn(self.data(w), gd, &mut dx, m, n, 1);
                    accumulate(grads, x, Tensor::vector(dx));
                }
                if wants(b) {
                    accumulate(grads, b, g.clone());
                }
            }
            &Op::Softmax(x) => {
                let y = node.value.data();
                let width = *node.value.shape().last().expect("rank >= 1");
                let mut dx = Vec::with_capacity(y.len());
                for (yr, gr) in y.chunks(width).zip(gd.chunks(width)) {
                    let inner = kernels::dot(yr, gr);
                    dx.extend(yr.iter().zip(gr).map(|(yv, gv)| yv * (gv - inner)));
                }
                accumulate(grads, x, Tensor::new(self.shape(x), dx)?);
            }
            Op::CrossEntropy { logits, label, probs } => {
                let scale = gd[0];
                let mut dz: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                dz[*label] -= scale;
                accumulate(grads, *logits, Tensor::vector(dz));
            }
            &Op::Add(a, b) => {
                for id in [a, b] {
                    if wants(id) {
                        accumulate(grads, id, g.clone());
                    }
                }
            }
            &Op::Mul(a, b) => {
                if wants(a) {
                    let data = gd.iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
                    accumulate(grads, a, Tensor::new(g.shape(), data)?);
                }
                if wants(b) {
                    let data = gd.iter().zip(self.data(a)).map(|(x, y)| x * y).collect();
                    accumulate(grads, b, Tensor::new(g.shape(), data)?);
                }
            }
            &Op::Scale(x, factor) => accumulate(grads, x, g.map(|v| v * factor)),
            &Op::Sum(x) => accumulate(grads, x, Tensor::full(self.shape(x), gd[0])),
            &Op::MeanRows(x) => {
                let (r, c) = self.matrix_dims("mean_rows", x)?;
                let mut dx = Vec::with_capacity(r * c);
                for _ in 0..r {
                    dx.extend(gd.iter().map(|v| v / r as f64));
                }
                accumulate(grads, x, Tensor::new(&[r, c], dx)?);
            }
            &Op::Reshape(x) => accumulate(grads, x, g.clone().reshape(self.shape(x))?),
            &Op::SliceCols { input, start } => {
                let (r, c) = self.matrix_dims("slice_cols", input)?;
                let width = g.shape()[1];
                let mut dx = Tensor::zeros(&[r, c]);
                for (i, grow) in gd.chunks(width).enumerate() {
                    dx.data_mut()[i * c + start..i * c + start + width].copy_from_slice(grow);
                }
                accumulate(grads, input, dx);
            }
            Op::ConcatCols(parts) => {
                let (r, total) = (g.shape()[0], g.shape()[1]);
                let mut offset = 0;
                for &p in parts {
                    let pc = self.shape(p)[1];
                    if wants(p) {
                        let mut dp = Vec::with_capacity(r * pc);
                        for i in 0..r {
                            dp.extend_from_slice(&gd[i * total + offset..i * total + offset + pc]);
                        }
                        accumulate(grads, p, Tensor::new(&[r, pc], dp)?);
                    }
                    offset += pc;
                }
            }
            Op::StackRows(rows) => {
                let width = g.shape()[1];
                for (i, &r) in rows.iter().enumerate() {
                    if wants(r) {
                        accumulate(grads, r, Tensor::vector(gd[i * width..(i + 1) * width].to_vec()));
                    }
                }
            }
        }
        Ok(())
    }
}
