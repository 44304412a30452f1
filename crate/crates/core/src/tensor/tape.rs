use super::kernels::{self, ConvDims};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Sum(Var),
    Mean(Var),
    Relu(Var),
    MaxPool2 { input: Var, argmax: Vec<usize> },
    Conv2d { input: Var, kernels: Var, bias: Var },
    GatherRows { table: Var, indices: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Eager computation record. Nodes are appended in execution order and
/// visited in exact reverse by [`Tape::backward`]. A tape supports one
/// backward pass; call [`Tape::reset`] to reuse it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradient buffers produced by [`Tape::backward`], keyed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if it required one and
    /// was reachable from the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`], but a zero tensor of the right shape for
    /// nodes the loss did not reach.
    pub fn get_or_zeros(&self, var: Var, tape: &Tape) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(var).shape().to_vec()))
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
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

    /// Drops every recorded node so the tape can record a new graph.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    /// Forgets every node recorded after the first `len`. Handles to the
    /// dropped nodes become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Registers an input tensor. It receives a gradient iff
    /// `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Result<Var> {
        if !tensor.is_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        let requires_grad = tensor.requires_grad();
        Ok(self.push_raw(tensor, Op::Leaf, requires_grad))
    }

    /// Registers a tensor that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor) -> Result<Var> {
        self.leaf(tensor.with_requires_grad(false))
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if self.consumed {
            return Err(Error::State(
                "cannot record on a tape whose backward pass already ran".into(),
            ));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, op, requires_grad))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Dimension {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_parts(ta.shape().to_vec(), data)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let ta = self.value(a);
        Tensor::from_parts(ta.shape().to_vec(), ta.data().iter().map(|&x| f(x)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.map(a, |x| x * factor);
        self.push("scale", out, Op::Scale(a, factor), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(
            "matmul",
            Tensor::from_parts(vec![m, n], data),
            Op::MatMul(a, b),
            &[a, b],
        )
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).shape();
        if s.len() != 2 {
            return Err(Error::Dimension {
                op: "transpose",
                lhs: s.to_vec(),
                rhs: vec![],
            });
        }
        let (r, c) = (s[0], s[1]);
        let data = kernels::transpose(self.value(a).data(), r, c);
        self.push(
            "transpose",
            Tensor::from_parts(vec![c, r], data),
            Op::Transpose(a),
            &[a],
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshaped(shape.to_vec())?.with_requires_grad(false);
        self.push("reshape", out, Op::Reshape(a), &[a])
    }

    /// Collapses any tensor to one dimension.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        self.reshape(a, &[n])
    }

    /// Joins tensors along `axis`; every other dimension must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Contract("concat needs at least one input".into()))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::Dimension {
                op: "concat",
                lhs: base,
                rhs: vec![axis],
            });
        }
        let mut axis_len = 0;
        for v in inputs {
            let s = self.value(*v).shape();
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::Dimension {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            axis_len += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * axis_len * inner);
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = axis_len;
        let op = Op::Concat {
            inputs: inputs.to_vec(),
            axis,
        };
        self.push("concat", Tensor::from_parts(shape, data), op, inputs)
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Mean of all elements as a scalar.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push("mean", Tensor::scalar(m), Op::Mean(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, |x| if x > 0.0 { x } else { 0.0 });
        self.push("relu", out, Op::Relu(a), &[a])
    }

    /// 2×2 stride-2 max pooling over a `[c,h,w]` tensor.
    pub fn maxpool2(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let &[c, h, w] = t.shape() else {
            return Err(Error::Dimension {
                op: "maxpool2",
                lhs: t.shape().to_vec(),
                rhs: vec![],
            });
        };
        let (data, argmax, oh, ow) = kernels::maxpool2_forward(t.data(), c, h, w);
        let out = Tensor::from_parts(vec![c, oh, ow], data);
        self.push("maxpool2", out, Op::MaxPool2 { input: a, argmax }, &[a])
    }

    /// Same-padded, stride-1 3×3 convolution of `input[c_in,h,w]` with
    /// `kernels[c_out,c_in,3,3]` plus `bias[c_out]`.
    pub fn conv2d(&mut self, input: Var, kernels: Var, bias: Var) -> Result<Var> {
        let dims = self.conv_dims(input, kernels, bias)?;
        let data = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(kernels).data(),
            self.value(bias).data(),
            dims,
        );
        let out = Tensor::from_parts(vec![dims.c_out, dims.h, dims.w], data);
        let op = Op::Conv2d { input, kernels, bias };
        self.push("conv2d", out, op, &[input, kernels, bias])
    }

    fn conv_dims(&self, input: Var, kernels: Var, bias: Var) -> Result<ConvDims> {
        let si = self.value(input).shape();
        let sk = self.value(kernels).shape();
        let sb = self.value(bias).shape();
        let dim_err = |rhs: &[usize]| Error::Dimension {
            op: "conv2d",
            lhs: si.to_vec(),
            rhs: rhs.to_vec(),
        };
        let &[c_in, h, w] = si else {
            return Err(dim_err(sk));
        };
        let &[c_out, kc, 3, 3] = sk else {
            return Err(dim_err(sk));
        };
        if kc != c_in {
            return Err(dim_err(sk));
        }
        if sb != [c_out] {
            return Err(dim_err(sb));
        }
        Ok(ConvDims { c_in, c_out, h, w })
    }

    /// Row lookup: output row `i` is `table[indices[i]]`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let &[v, d] = t.shape() else {
            return Err(Error::Dimension {
                op: "gather_rows",
                lhs: t.shape().to_vec(),
                rhs: vec![indices.len()],
            });
        };
        if indices.is_empty() {
            return Err(Error::Contract("gather_rows needs at least one index".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * d);
        for &ix in indices {
            if ix >= v {
                return Err(Error::Lookup { index: ix, size: v });
            }
            data.extend_from_slice(&t.data()[ix * d..(ix + 1) * d]);
        }
        let out = Tensor::from_parts(vec![indices.len(), d], data);
        let op = Op::GatherRows {
            table,
            indices: indices.to_vec(),
        };
        self.push("gather_rows", out, op, &[table])
    }

    /// Reverse sweep from a scalar `loss`. Fills a gradient for every node
    /// that requires one and is reachable from the loss. The tape is
    /// consumed afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::State("backward already ran on this tape; reset it first".into()));
        }
        let loss_shape = self.value(loss).shape().to_vec();
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {loss_shape:?}"
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(loss_shape, 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        // only nodes that asked for gradients keep them
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, contribution: Vec<f64>) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        match &mut grads[var.0] {
            Some(existing) => {
                for (e, c) in existing.data_mut().iter_mut().zip(contribution) {
                    *e += c;
                }
            }
            slot @ None => {
                let shape = self.nodes[var.0].value.shape().to_vec();
                *slot = Some(Tensor::from_parts(shape, contribution));
            }
        }
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, gd.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, gd.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, gd.iter().zip(vb).map(|(g, y)| g * y).collect());
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, gd.iter().zip(va).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale(a, f) => {
                self.accumulate(grads, *a, gd.iter().map(|x| x * f).collect());
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.requires_grad(*a) {
                    // grad_a = grad_out · bᵀ
                    self.accumulate(grads, *a, kernels::matmul_bt(gd, tb.data(), m, n, k));
                }
                if self.requires_grad(*b) {
                    // grad_b = aᵀ · grad_out
                    self.accumulate(grads, *b, kernels::matmul_at(ta.data(), gd, m, k, n));
                }
            }
            Op::Transpose(a) => {
                let s = g.shape();
                self.accumulate(grads, *a, kernels::transpose(gd, s[0], s[1]));
            }
            Op::Reshape(a) => {
                self.accumulate(grads, *a, gd.to_vec());
            }
            Op::Concat { inputs, axis } => {
                let shape = g.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let row = shape[*axis] * inner;
                let mut offset = 0;
                for v in inputs {
                    let chunk = self.value(*v).shape()[*axis] * inner;
                    if self.requires_grad(*v) {
                        let mut part = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            let start = o * row + offset;
                            part.extend_from_slice(&gd[start..start + chunk]);
                        }
                        self.accumulate(grads, *v, part);
                    }
                    offset += chunk;
                }
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, vec![gd[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, vec![gd[0] / n as f64; n]);
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let contribution = gd.iter().zip(x).map(|(&g, &x)| if x > 0.0 { g } else { 0.0 }).collect();
                self.accumulate(grads, *a, contribution);
            }
            Op::MaxPool2 { input, argmax } => {
                let mut contribution = vec![0.0; self.value(*input).numel()];
                for (&ix, &g) in argmax.iter().zip(gd) {
                    contribution[ix] += g;
                }
                self.accumulate(grads, *input, contribution);
            }
            Op::Conv2d {
                input,
                kernels: k,
                bias,
            } => {
                let dims = self
                    .conv_dims(*input, *k, *bias)
                    .expect("shapes validated at record time");
                let (gi, gk, gb) = kernels::conv2d_backward(self.value(*input).data(), self.value(*k).data(), gd, dims);
                self.accumulate(grads, *input, gi);
                self.accumulate(grads, *k, gk);
                self.accumulate(grads, *bias, gb);
            }
            Op::GatherRows { table, indices } => {
                let t = self.value(*table);
                let d = t.shape()[1];
                let mut contribution = vec![0.0; t.numel()];
                for (row, &ix) in indices.iter().enumerate() {
                    for j in 0..d {
                        contribution[ix * d + j] += gd[row * d + j];
                    }
                }
                self.accumulate(grads, *table, contribution);
            }
        }
    }
}
