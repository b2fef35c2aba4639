//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every op appends a node holding its output value; nodes are therefore in
//! topological order by construction and a single reverse sweep visits each
//! node after all of its consumers. Gradients accumulate additively across
//! fan-out. Graphs are rebuilt for every forward pass.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom};
use crate::tensor::{Real, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding that preserves spatial size.
    Same,
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

/// Probability floor applied before the log in [`Graph::nll`].
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
    },
    UpConv {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        dims: [usize; 4],
    },
    MaxPool {
        input: Var,
        argmax: Vec<u32>,
    },
    Affine {
        x: Var,
        w: Var,
        b: Var,
        rows: usize,
        n: usize,
        m: usize,
    },
    Act {
        x: Var,
        kind: Activation,
    },
    /// ReLU whose gate pattern was replayed from a [`BranchTape`].
    GatedRelu {
        x: Var,
        gate: Vec<bool>,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale {
        x: Var,
        factor: f64,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape {
        x: Var,
    },
    Transpose {
        x: Var,
    },
    Mean {
        x: Var,
        axes: Vec<usize>,
    },
    Sum {
        x: Var,
    },
    WeightedSum {
        stack: Var,
        weights: Var,
    },
    Nll {
        probs: Var,
        labels: Vec<u8>,
        ignore: u8,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param => "param",
            Op::Conv2d { .. } => "conv2d",
            Op::UpConv { .. } => "transposed_conv2d",
            Op::MaxPool { .. } => "maxpool2d",
            Op::Affine { .. } => "affine",
            Op::Act { .. } => "activation",
            Op::GatedRelu { .. } => "relu",
            Op::Softmax { .. } => "softmax",
            Op::Add(..) => "add",
            Op::Mul(..) => "hadamard",
            Op::Scale { .. } => "scale",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape { .. } => "reshape",
            Op::Transpose { .. } => "transpose",
            Op::Mean { .. } => "mean",
            Op::Sum { .. } => "sum",
            Op::WeightedSum { .. } => "weighted_sum",
            Op::Nll { .. } => "nll",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    op: Op,
    value: Tensor<T>,
}

/// The discrete choices of the piecewise-linear ops (ReLU gates, max-pool
/// winners) in construction order. Replaying a tape evaluates the smooth
/// piece the recording point lies on, which is what finite differences of a
/// gradient check must see.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BranchTape {
    relu: Vec<Vec<bool>>,
    pool: Vec<Vec<u32>>,
}

impl BranchTape {
    pub fn len(&self) -> usize {
        self.relu.len() + self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
enum Branching {
    #[default]
    Free,
    Record(BranchTape),
    Replay {
        tape: BranchTape,
        relu: usize,
        pool: usize,
    },
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, Var)>,
    fault: bool,
    branching: Branching,
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
            fault: false,
            branching: Branching::Free,
        }
    }

    /// Start recording ReLU gates and max-pool winners.
    pub fn record_branches(&mut self) {
        self.branching = Branching::Record(BranchTape::default());
    }

    /// The recorded tape, if recording was enabled.
    pub fn take_branches(&mut self) -> Option<BranchTape> {
        match std::mem::take(&mut self.branching) {
            Branching::Record(t) => Some(t),
            _ => None,
        }
    }

    /// Reuse `tape`'s choices instead of deciding from the current values.
    /// Ops must be built in the same order and shapes as when recording.
    pub fn replay_branches(&mut self, tape: BranchTape) {
        self.branching = Branching::Replay { tape, relu: 0, pool: 0 };
    }

    /// Test fixture: makes the sigmoid backward rule deliberately wrong so
    /// gradient checks can be shown to fail.
    pub fn inject_backward_fault(&mut self) {
        self.fault = true;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    fn push(&mut self, op: Op, value: Tensor<T>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("output of {}", op.name())));
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Non-differentiable input or constant.
    pub fn input(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(Op::Leaf, value)
    }

    pub fn param(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<Var> {
        let v = self.push(Op::Param, value)?;
        self.params.push((name.into(), v));
        Ok(v)
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, padding: Padding) -> Result<Var> {
        let (is, ks, bs) = (self.shape(input), self.shape(kernel), self.shape(bias));
        if is.len() != 3 || ks.len() != 4 {
            return Err(Error::dim(
                "conv2d",
                format!("input {is:?} must be [C,H,W] and kernel {ks:?} [Cout,Cin,k,k]"),
            ));
        }
        if ks[2] != ks[3] || ks[2] % 2 == 0 {
            return Err(Error::dim("conv2d", format!("kernel axes 2,3 {ks:?} must be equal and odd")));
        }
        if ks[1] != is[0] {
            return Err(Error::dim(
                "conv2d",
                format!("input axis 0 has {} channels but kernel axis 1 expects {}", is[0], ks[1]),
            ));
        }
        if bs != [ks[0]] {
            return Err(Error::dim("conv2d", format!("bias {bs:?} must be [{}]", ks[0])));
        }
        let k = ks[2];
        let pad = match padding {
            Padding::Same => k / 2,
            Padding::Valid => 0,
        };
        if pad == 0 && (is[1] < k || is[2] < k) {
            return Err(Error::dim(
                "conv2d",
                format!("input spatial axes {:?} smaller than kernel {k}", &is[1..]),
            ));
        }
        let geom = ConvGeom {
            cin: is[0],
            h: is[1],
            w: is[2],
            cout: ks[0],
            k,
            pad,
        };
        let out = kernels::conv2d_forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        let shape = vec![geom.cout, geom.out_h(), geom.out_w()];
        self.push(
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
            Tensor::from_parts_unchecked(shape, out),
        )
    }

    /// Fractionally strided upsampling; only stride 2 with a 2x2 kernel is supported.
    pub fn transposed_conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, stride: usize) -> Result<Var> {
        if stride != 2 {
            return Err(Error::Unsupported(format!("transposed_conv2d stride {stride} (only 2)")));
        }
        let (is, ks) = (self.shape(input), self.shape(kernel));
        if is.len() != 3 || ks.len() != 4 || ks[2] != 2 || ks[3] != 2 {
            return Err(Error::dim(
                "transposed_conv2d",
                format!("input {is:?} must be [C,H,W] and kernel {ks:?} [Cin,Cout,2,2]"),
            ));
        }
        if ks[0] != is[0] {
            return Err(Error::dim(
                "transposed_conv2d",
                format!("input axis 0 has {} channels but kernel axis 0 expects {}", is[0], ks[0]),
            ));
        }
        let dims = [is[0], is[1], is[2], ks[1]];
        if let Some(b) = bias {
            if self.shape(b) != [dims[3]] {
                return Err(Error::dim(
                    "transposed_conv2d",
                    format!("bias {:?} must be [{}]", self.shape(b), dims[3]),
                ));
            }
        }
        let out = kernels::upconv2_forward(
            self.value(input).data(),
            dims[0],
            dims[1],
            dims[2],
            self.value(kernel).data(),
            dims[3],
            bias.map(|b| self.value(b).data()),
        );
        let shape = vec![dims[3], 2 * dims[1], 2 * dims[2]];
        self.push(
            Op::UpConv {
                input,
                kernel,
                bias,
                dims,
            },
            Tensor::from_parts_unchecked(shape, out),
        )
    }

    pub fn maxpool2d(&mut self, input: Var) -> Result<Var> {
        let s = self.shape(input).to_vec();
        if s.len() != 3 || s[1] % 2 != 0 || s[2] % 2 != 0 {
            return Err(Error::dim("maxpool2d", format!("input {s:?} must be [C,H,W] with even H and W")));
        }
        let (mut out, mut argmax) = kernels::maxpool2_forward(self.value(input).data(), s[0], s[1], s[2]);
        match &mut self.branching {
            Branching::Free => {}
            Branching::Record(tape) => tape.pool.push(argmax.clone()),
            Branching::Replay { tape, pool, .. } => {
                let Some(fixed) = tape.pool.get(*pool).filter(|f| f.len() == argmax.len()) else {
                    return Err(Error::Contract(format!("branch tape has no max-pool entry {pool} of this shape")));
                };
                *pool += 1;
                argmax = fixed.clone();
                let src = self.nodes[input.0].value.data();
                out = argmax.iter().map(|&a| src[a as usize]).collect();
            }
        }
        self.push(
            Op::MaxPool { input, argmax },
            Tensor::from_parts_unchecked(vec![s[0], s[1] / 2, s[2] / 2], out),
        )
    }

    /// `W x + b` applied over the last axis of `x`; leading axes are batch axes.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if ws.len() != 2 {
            return Err(Error::dim("affine", format!("weight {ws:?} must be [m,n]")));
        }
        let (m, n) = (ws[0], ws[1]);
        let last = *xs.last().expect("tensors have at least one axis");
        if last != n {
            return Err(Error::dim(
                "affine",
                format!("input last axis {last} does not match weight axis 1 ({n})"),
            ));
        }
        if bs != [m] {
            return Err(Error::dim("affine", format!("bias {bs:?} must be [{m}]")));
        }
        let rows = self.value(x).len() / n;
        let mut shape = xs.to_vec();
        *shape.last_mut().unwrap() = m;
        let out = kernels::affine_forward(self.value(x).data(), rows, n, self.value(w).data(), m, self.value(b).data());
        self.push(
            Op::Affine { x, w, b, rows, n, m },
            Tensor::from_parts_unchecked(shape, out),
        )
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        if kind == Activation::Relu {
            match &mut self.branching {
                Branching::Free => {}
                Branching::Record(tape) => {
                    tape.relu.push(self.nodes[x.0].value.data().iter().map(|&v| v > T::zero()).collect());
                }
                Branching::Replay { tape, relu, .. } => {
                    let src = self.nodes[x.0].value.data();
                    let Some(gate) = tape.relu.get(*relu).filter(|g| g.len() == src.len()) else {
                        return Err(Error::Contract(format!("branch tape has no ReLU entry {relu} of this shape")));
                    };
                    *relu += 1;
                    let gate = gate.clone();
                    let data = src.iter().zip(&gate).map(|(&v, &on)| if on { v } else { T::zero() }).collect();
                    let shape = self.shape(x).to_vec();
                    return self.push(Op::GatedRelu { x, gate }, Tensor::from_parts_unchecked(shape, data));
                }
            }
        }
        let out = self.value(x).map(|v| match kind {
            Activation::Sigmoid => sigmoid(v),
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(T::zero()),
        });
        self.push(Op::Act { x, kind }, out)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(Error::dim("softmax", format!("axis {axis} out of range for {s:?}")));
        }
        let out = kernels::softmax_forward(self.value(x).data(), &s, axis);
        self.push(Op::Softmax { x, axis }, Tensor::from_parts_unchecked(s, out))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                op,
                format!("operand shapes {:?} and {:?} differ", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), data)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), data)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let f = T::of(factor);
        let out = self.value(x).map(|v| v * f);
        self.push(Op::Scale { x, factor }, out)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for (i, &p) in parts.iter().enumerate() {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(ax, (a, b))| ax == axis || a == b);
            if !compatible {
                return Err(Error::dim(
                    "concat",
                    format!("part {i} shape {s:?} disagrees with {base:?} off axis {axis}"),
                ));
            }
            total += s[axis];
        }
        let (outer, _, inner) = kernels::split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let n = self.shape(p)[axis];
                data.extend_from_slice(&self.value(p).data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.push(
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            Tensor::from_parts_unchecked(shape, data),
        )
    }

    /// Contiguous sub-range `[start, start + len)` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::dim(
                "slice",
                format!("range {start}..{} on axis {axis} of {s:?}", start + len),
            ));
        }
        let (outer, n, inner) = kernels::split_axis(&s, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        self.push(Op::Slice { x, axis, start }, Tensor::from_parts_unchecked(shape, data))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push(Op::Reshape { x }, t)
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::dim("transpose", format!("expected a 2-D tensor, got {s:?}")));
        }
        let (r, c) = (s[0], s[1]);
        let src = self.value(x).data();
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        self.push(Op::Transpose { x }, Tensor::from_parts_unchecked(vec![c, r], data))
    }

    /// Arithmetic mean over `axes`; reducing every axis yields shape `[1]`.
    pub fn mean(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let mut sorted = axes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != axes.len() || sorted.iter().any(|&a| a >= s.len()) || axes.is_empty() {
            return Err(Error::dim("mean", format!("axes {axes:?} invalid for {s:?}")));
        }
        let (out_shape, map, count) = reduce_map(&s, &sorted);
        let mut out = vec![T::zero(); out_shape.iter().product()];
        for (v, &o) in self.value(x).data().iter().zip(&map) {
            out[o] += *v;
        }
        let inv = T::one() / T::of(count as f64);
        out.iter_mut().for_each(|v| *v *= inv);
        self.push(
            Op::Mean { x, axes: sorted },
            Tensor::from_parts_unchecked(out_shape, out),
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).sum();
        self.push(Op::Sum { x }, Tensor::scalar(total))
    }

    /// `Σ_t w[t] · stack[t]` over the leading axis of `stack`.
    pub fn weighted_sum(&mut self, stack: Var, weights: Var) -> Result<Var> {
        let s = self.shape(stack).to_vec();
        let ws = self.shape(weights);
        if ws.len() != 1 || ws[0] != s[0] {
            return Err(Error::dim(
                "weighted_sum",
                format!("weights {ws:?} must have length of stack axis 0 ({})", s[0]),
            ));
        }
        let inner = self.value(stack).len() / s[0];
        let mut out = vec![T::zero(); inner];
        let src = self.value(stack).data();
        for (t, &wt) in self.value(weights).data().iter().enumerate() {
            for (o, &v) in out.iter_mut().zip(&src[t * inner..(t + 1) * inner]) {
                *o += wt * v;
            }
        }
        let shape = if s.len() == 1 { vec![1] } else { s[1..].to_vec() };
        self.push(Op::WeightedSum { stack, weights }, Tensor::from_parts_unchecked(shape, out))
    }

    /// Summed negative log-likelihood `Σ -ln max(p[label], floor)` over pixels
    /// whose label is not `ignore`. `probs` is `[L, ...]` with the class on axis 0.
    pub fn nll(&mut self, probs: Var, labels: &[u8], ignore: u8) -> Result<Var> {
        let s = self.shape(probs).to_vec();
        let classes = s[0];
        let pixels = self.value(probs).len() / classes;
        if labels.len() != pixels {
            return Err(Error::dim(
                "nll",
                format!("{} labels for {pixels} pixels of probs {s:?}", labels.len()),
            ));
        }
        let p = self.value(probs).data();
        let floor = T::of(PROB_FLOOR);
        let mut total = T::zero();
        for (i, &l) in labels.iter().enumerate() {
            if l == ignore {
                continue;
            }
            if usize::from(l) >= classes {
                return Err(Error::Contract(format!("label {l} at pixel {i} exceeds {classes} classes")));
            }
            total += -(p[usize::from(l) * pixels + i].max(floor)).ln();
        }
        self.push(
            Op::Nll {
                probs,
                labels: labels.to_vec(),
                ignore,
            },
            Tensor::scalar(total),
        )
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf | Op::Param) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients {
            grads: grads
                .into_iter()
                .zip(&self.nodes)
                .map(|(g, n)| g.map(|d| Tensor::from_parts_unchecked(n.value.shape().to_vec(), d)))
                .collect(),
            params: self.params.clone(),
        })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            } => {
                let (di, dk, db) = kernels::conv2d_backward(geom, val(*input), val(*kernel), g);
                accumulate(grads, *input, di);
                accumulate(grads, *kernel, dk);
                accumulate(grads, *bias, db);
            }
            Op::UpConv {
                input,
                kernel,
                bias,
                dims,
            } => {
                let (di, dk, db) =
                    kernels::upconv2_backward(val(*input), dims[0], dims[1], dims[2], val(*kernel), dims[3], g);
                accumulate(grads, *input, di);
                accumulate(grads, *kernel, dk);
                if let Some(b) = bias {
                    accumulate(grads, *b, db);
                }
            }
            Op::MaxPool { input, argmax } => {
                let mut di = vec![T::zero(); val(*input).len()];
                for (&a, &gv) in argmax.iter().zip(g) {
                    di[a as usize] += gv;
                }
                accumulate(grads, *input, di);
            }
            Op::Affine { x, w, b, rows, n, m } => {
                let (dx, dw, db) = kernels::affine_backward(val(*x), *rows, *n, val(*w), *m, g);
                accumulate(grads, *x, dx);
                accumulate(grads, *w, dw);
                accumulate(grads, *b, db);
            }
            Op::Act { x, kind } => {
                let y = node.value.data();
                let dx = match kind {
                    Activation::Sigmoid if self.fault => y.iter().zip(g).map(|(&s, &gv)| gv * s).collect(),
                    Activation::Sigmoid => y.iter().zip(g).map(|(&s, &gv)| gv * s * (T::one() - s)).collect(),
                    Activation::Tanh => y.iter().zip(g).map(|(&t, &gv)| gv * (T::one() - t * t)).collect(),
                    Activation::Relu => val(*x)
                        .iter()
                        .zip(g)
                        .map(|(&xi, &gv)| if xi > T::zero() { gv } else { T::zero() })
                        .collect(),
                };
                accumulate(grads, *x, dx);
            }
            Op::GatedRelu { x, gate } => {
                let dx = gate.iter().zip(g).map(|(&on, &gv)| if on { gv } else { T::zero() }).collect();
                accumulate(grads, *x, dx);
            }
            Op::Softmax { x, axis } => {
                let dx = kernels::softmax_backward(node.value.data(), g, node.value.shape(), *axis);
                accumulate(grads, *x, dx);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.to_vec());
                accumulate(grads, *b, g.to_vec());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                accumulate(grads, *a, g.iter().zip(bv).map(|(&gv, &y)| gv * y).collect());
                accumulate(grads, *b, g.iter().zip(av).map(|(&gv, &x)| gv * x).collect());
            }
            Op::Scale { x, factor } => {
                let f = T::of(*factor);
                accumulate(grads, *x, g.iter().map(|&gv| gv * f).collect());
            }
            Op::Concat { parts, axis } => {
                let out_shape = node.value.shape();
                let (outer, total, inner) = kernels::split_axis(out_shape, *axis);
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.shape()[*axis];
                    let mut dp = Vec::with_capacity(outer * n * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        dp.extend_from_slice(&g[start..start + n * inner]);
                    }
                    accumulate(grads, p, dp);
                    offset += n;
                }
            }
            Op::Slice { x, axis, start } => {
                let xs = self.nodes[x.0].value.shape();
                let (outer, n, inner) = kernels::split_axis(xs, *axis);
                let len = node.value.shape()[*axis];
                let mut dx = vec![T::zero(); outer * n * inner];
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    dx[dst..dst + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                accumulate(grads, *x, dx);
            }
            Op::Reshape { x } => accumulate(grads, *x, g.to_vec()),
            Op::Transpose { x } => {
                let s = node.value.shape();
                let (r, c) = (s[0], s[1]);
                let mut dx = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        dx[j * r + i] = g[i * c + j];
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Mean { x, axes } => {
                let xs = self.nodes[x.0].value.shape();
                let (_, map, count) = reduce_map(xs, axes);
                let inv = T::one() / T::of(count as f64);
                accumulate(grads, *x, map.iter().map(|&o| g[o] * inv).collect());
            }
            Op::Sum { x } => {
                let n = self.nodes[x.0].value.len();
                accumulate(grads, *x, vec![g[0]; n]);
            }
            Op::WeightedSum { stack, weights } => {
                let sv = val(*stack);
                let wv = val(*weights);
                let inner = g.len();
                let mut ds = Vec::with_capacity(sv.len());
                let mut dw = Vec::with_capacity(wv.len());
                for (t, &wt) in wv.iter().enumerate() {
                    let slice = &sv[t * inner..(t + 1) * inner];
                    ds.extend(g.iter().map(|&gv| gv * wt));
                    dw.push(slice.iter().zip(g).map(|(&a, &b)| a * b).sum());
                }
                accumulate(grads, *stack, ds);
                accumulate(grads, *weights, dw);
            }
            Op::Nll { probs, labels, ignore } => {
                let p = val(*probs);
                let pixels = labels.len();
                let floor = T::of(PROB_FLOOR);
                let mut dp = vec![T::zero(); p.len()];
                for (i, &l) in labels.iter().enumerate() {
                    if l == *ignore {
                        continue;
                    }
                    let idx = usize::from(l) * pixels + i;
                    if p[idx] > floor {
                        dp[idx] = -g[0] / p[idx];
                    }
                }
                accumulate(grads, *probs, dp);
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, d: Vec<T>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.iter_mut().zip(d) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(d),
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts_unchecked(a.shape().to_vec(), data)
}

#[inline]
pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// For a reduction over sorted `axes`: output shape, the output index of every
/// input element, and the number of elements folded into each output.
fn reduce_map(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>, usize) {
    let kept: Vec<usize> = (0..shape.len()).filter(|a| !axes.contains(a)).collect();
    let mut out_shape: Vec<usize> = kept.iter().map(|&a| shape[a]).collect();
    if out_shape.is_empty() {
        out_shape.push(1);
    }
    let count: usize = axes.iter().map(|&a| shape[a]).product();
    let n: usize = shape.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..n {
        let o = kept.iter().fold(0, |acc, &a| acc * shape[a] + idx[a]);
        map.push(o);
        for ax in (0..shape.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    (out_shape, map, count)
}

/// Gradients from one reverse sweep. Only leaves and parameters keep theirs.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(String, Var)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a leaf or parameter; `None` if it was not reached.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zero-filled when unreachable from the root.
    pub fn wrt_or_zero(&self, v: Var, shape: &[usize]) -> Tensor<T> {
        self.wrt(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    /// Per registered parameter, in registration order.
    pub fn params(&self) -> impl Iterator<Item = (&str, Option<&Tensor<T>>)> {
        self.params
            .iter()
            .map(|(name, v)| (name.as_str(), self.grads[v.0].as_ref()))
    }
}
