//! Tape-style reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every forward operation as a node holding its value.
//! [`Graph::backward`] walks the tape in reverse, accumulating gradients into
//! each node's inputs, and consumes the graph: each training step records a
//! fresh graph. Nodes whose inputs are all constants are marked as not
//! needing a gradient and are skipped on the way back.
//!
//! Vector ops (softmax, layer norm, cross entropy) take rank-1 inputs. A
//! `matmul` accepts `[m,k]x[k,n]`, `[m,k]x[k]` (matrix-vector) and
//! `[k]x[k,n]` (row vector times matrix).

use std::fmt;
use std::str::FromStr;

use super::{shape_err, EngineError, GradientMap, ParamId, ParamStore, Scalar, Tensor};

/// Layer-norm variance guard.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The primitive operation kinds the graph knows how to differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Add,
    Sub,
    Scale,
    ScaleBy,
    MatMul,
    Hadamard,
    Outer,
    Concat,
    Tanh,
    Sigmoid,
    Softmax,
    LayerNorm,
    RowMean,
    ColMean,
    Bilinear,
    CrossEntropy,
    Sum,
    OneMinus,
    Index,
}

impl OpKind {
    pub const ALL: [OpKind; 19] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Scale,
        OpKind::ScaleBy,
        OpKind::MatMul,
        OpKind::Hadamard,
        OpKind::Outer,
        OpKind::Concat,
        OpKind::Tanh,
        OpKind::Sigmoid,
        OpKind::Softmax,
        OpKind::LayerNorm,
        OpKind::RowMean,
        OpKind::ColMean,
        OpKind::Bilinear,
        OpKind::CrossEntropy,
        OpKind::Sum,
        OpKind::OneMinus,
        OpKind::Index,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Scale => "scale",
            OpKind::ScaleBy => "scale_by",
            OpKind::MatMul => "matmul",
            OpKind::Hadamard => "hadamard",
            OpKind::Outer => "outer",
            OpKind::Concat => "concat",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Softmax => "softmax",
            OpKind::LayerNorm => "layer_norm",
            OpKind::RowMean => "row_mean",
            OpKind::ColMean => "col_mean",
            OpKind::Bilinear => "bilinear",
            OpKind::CrossEntropy => "cross_entropy",
            OpKind::Sum => "sum",
            OpKind::OneMinus => "one_minus",
            OpKind::Index => "index",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| EngineError::Contract(format!("unknown op kind '{s}'")))
    }
}

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, T),
    ScaleBy(Var, Var),
    MatMul(Var, Var),
    Hadamard(Var, Var),
    Outer(Var, Var),
    Concat(Vec<Var>),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Vec<T>,
        inv_std: T,
    },
    RowMean(Var),
    ColMean(Var),
    Bilinear(Var, Var),
    CrossEntropy {
        logits: Var,
        probs: Vec<T>,
        target: usize,
    },
    Sum(Var),
    OneMinus(Var),
    Index(Var, usize),
}

impl<T> Op<T> {
    fn kind(&self) -> Option<OpKind> {
        Some(match self {
            Op::Constant | Op::Param(_) => return None,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Scale(..) => OpKind::Scale,
            Op::ScaleBy(..) => OpKind::ScaleBy,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Hadamard(..) => OpKind::Hadamard,
            Op::Outer(..) => OpKind::Outer,
            Op::Concat(..) => OpKind::Concat,
            Op::Tanh(..) => OpKind::Tanh,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::Softmax(..) => OpKind::Softmax,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::RowMean(..) => OpKind::RowMean,
            Op::ColMean(..) => OpKind::ColMean,
            Op::Bilinear(..) => OpKind::Bilinear,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
            Op::Sum(..) => OpKind::Sum,
            Op::OneMinus(..) => OpKind::OneMinus,
            Op::Index(..) => OpKind::Index,
        })
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// A recorded computation. Confined to one thread; see the module docs for
/// the lifetime policy.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    fault: Option<OpKind>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------------
// kernels

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softmax_into<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: T = out.iter().copied().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

fn fmt_shape(a: &[usize], b: &[usize]) -> String {
    format!("{a:?} and {b:?}")
}

// ---------------------------------------------------------------------------
// forward

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fault: None,
        }
    }

    /// Test hook: negates the incoming gradient of every node of `kind`
    /// during backward, i.e. corrupts that op's backward rule.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.ng(v)
    }

    /// A value that gradients do not flow into.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// A trainable leaf tied to parameter `id`.
    pub fn param(&mut self, id: ParamId, value: Tensor<T>) -> Var {
        self.push(value, Op::Param(id), true)
    }

    /// Registers every parameter of `store` as a leaf; the returned vector is
    /// indexed by [`ParamId`].
    pub fn bind(&mut self, store: &ParamStore<T>) -> Vec<Var> {
        store
            .iter()
            .map(|(id, _, t)| self.param(id, t.clone()))
            .collect()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), EngineError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, fmt_shape(sa, sb)));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.same_shape("add", a, b)?;
        let v = self.zip_map(a, b, |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_map(a, b, |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.same_shape("hadamard", a, b)?;
        let v = self.zip_map(a, b, |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Hadamard(a, b), ng))
    }

    /// Multiplies by a fixed scalar.
    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let v = self.value(x).map(|e| e * c);
        let ng = self.ng(x);
        self.push(v, Op::Scale(x, c), ng)
    }

    /// Multiplies `x` by the single-element tensor `s`; both receive gradients.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var, EngineError> {
        if self.value(s).len() != 1 {
            return Err(shape_err("scale_by", format!("scalar expected, got {:?}", self.shape(s))));
        }
        let c = self.value(s).item();
        let v = self.value(x).map(|e| e * c);
        let ng = self.ng(x) || self.ng(s);
        Ok(self.push(v, Op::ScaleBy(x, s), ng))
    }

    pub fn one_minus(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| T::one() - e);
        let ng = self.ng(x);
        self.push(v, Op::OneMinus(x), ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        let out = match (sa.len(), sb.len()) {
            (2, 2) if sa[1] == sb[0] => {
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let mut out = vec![T::zero(); m * n];
                for i in 0..m {
                    let orow = &mut out[i * n..(i + 1) * n];
                    for p in 0..k {
                        axpy(ta.data()[i * k + p], &tb.data()[p * n..(p + 1) * n], orow);
                    }
                }
                Tensor::new(&[m, n], out)?
            }
            (2, 1) if sa[1] == sb[0] => {
                let (m, k) = (sa[0], sa[1]);
                let x = tb.data();
                let out = (0..m).map(|i| dot(&ta.data()[i * k..(i + 1) * k], x)).collect();
                Tensor::vector(out)
            }
            (1, 2) if sa[0] == sb[0] => {
                let (k, n) = (sb[0], sb[1]);
                let mut out = vec![T::zero(); n];
                for (p, &xp) in ta.data().iter().enumerate().take(k) {
                    axpy(xp, &tb.data()[p * n..(p + 1) * n], &mut out);
                }
                Tensor::vector(out)
            }
            _ => return Err(shape_err("matmul", fmt_shape(sa, sb))),
        };
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `u ⊗ v`, the matrix with entries `u[i] * v[j]`.
    pub fn outer(&mut self, u: Var, v: Var) -> Result<Var, EngineError> {
        let (tu, tv) = (self.value(u), self.value(v));
        if tu.rank() != 1 || tv.rank() != 1 {
            return Err(shape_err("outer", fmt_shape(tu.shape(), tv.shape())));
        }
        let (m, n) = (tu.len(), tv.len());
        let mut out = Vec::with_capacity(m * n);
        for &a in tu.data() {
            out.extend(tv.data().iter().map(|&b| a * b));
        }
        let out = Tensor::new(&[m, n], out)?;
        let ng = self.ng(u) || self.ng(v);
        Ok(self.push(out, Op::Outer(u, v), ng))
    }

    /// Concatenates scalars and vectors into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, EngineError> {
        if parts.is_empty() {
            return Err(EngineError::InvalidShape("concat of nothing".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() > 1 {
                return Err(shape_err("concat", format!("vector parts expected, got {:?}", t.shape())));
            }
            out.extend_from_slice(t.data());
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::vector(out), Op::Concat(parts.to_vec()), ng))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(T::tanh);
        let ng = self.ng(x);
        self.push(v, Op::Tanh(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        let ng = self.ng(x);
        self.push(v, Op::Sigmoid(x), ng)
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var, EngineError> {
        let t = self.value(x);
        if t.rank() != 1 || t.is_empty() {
            return Err(EngineError::InvalidShape(format!(
                "softmax needs a non-empty vector, got {:?}",
                t.shape()
            )));
        }
        let v = Tensor::vector(softmax_into(t.data()));
        let ng = self.ng(x);
        Ok(self.push(v, Op::Softmax(x), ng))
    }

    /// `gain ⊙ (x - mean) / sqrt(var + eps) + bias` over a vector.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, EngineError> {
        let t = self.value(x);
        if t.rank() != 1 || t.is_empty() {
            return Err(EngineError::InvalidShape(format!(
                "layer_norm needs a non-empty vector, got {:?}",
                t.shape()
            )));
        }
        self.same_shape("layer_norm", x, gain)?;
        self.same_shape("layer_norm", x, bias)?;
        let n = T::from_f64(t.len() as f64);
        let mean = t.data().iter().copied().sum::<T>() / n;
        let var = t.data().iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv_std = T::one() / (var + T::from_f64(LAYER_NORM_EPS)).sqrt();
        let normed: Vec<T> = t.data().iter().map(|&v| (v - mean) * inv_std).collect();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let out = normed
            .iter()
            .zip(g.iter().zip(b))
            .map(|(&z, (&gi, &bi))| gi * z + bi)
            .collect();
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        Ok(self.push(
            Tensor::vector(out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
            ng,
        ))
    }

    /// Mean of each row of a matrix (length = rows).
    pub fn row_mean(&mut self, x: Var) -> Result<Var, EngineError> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(shape_err("row_mean", format!("matrix expected, got {:?}", t.shape())));
        }
        let c = t.shape()[1];
        let inv = T::one() / T::from_f64(c as f64);
        let out = t.data().chunks_exact(c).map(|r| r.iter().copied().sum::<T>() * inv).collect();
        let ng = self.ng(x);
        Ok(self.push(Tensor::vector(out), Op::RowMean(x), ng))
    }

    /// Mean of each column of a matrix (length = cols).
    pub fn col_mean(&mut self, x: Var) -> Result<Var, EngineError> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(shape_err("col_mean", format!("matrix expected, got {:?}", t.shape())));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![T::zero(); c];
        for row in t.data().chunks_exact(c) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = T::one() / T::from_f64(r as f64);
        for o in &mut out {
            *o *= inv;
        }
        let ng = self.ng(x);
        Ok(self.push(Tensor::vector(out), Op::ColMean(x), ng))
    }

    /// The quadratic form `hᵀ A h`.
    pub fn bilinear(&mut self, h: Var, a: Var) -> Result<Var, EngineError> {
        let (th, ta) = (self.value(h), self.value(a));
        let n = th.len();
        if th.rank() != 1 || ta.shape() != [n, n] {
            return Err(shape_err("bilinear", fmt_shape(th.shape(), ta.shape())));
        }
        let hv = th.data();
        let mut total = T::zero();
        for (i, row) in ta.data().chunks_exact(n).enumerate() {
            total += hv[i] * dot(row, hv);
        }
        let ng = self.ng(h) || self.ng(a);
        Ok(self.push(Tensor::scalar(total), Op::Bilinear(h, a), ng))
    }

    /// `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, EngineError> {
        let t = self.value(logits);
        if t.rank() != 1 || t.is_empty() {
            return Err(EngineError::InvalidShape(format!(
                "cross_entropy needs a non-empty vector, got {:?}",
                t.shape()
            )));
        }
        if target >= t.len() {
            return Err(EngineError::Contract(format!(
                "class index {target} out of range for {} logits",
                t.len()
            )));
        }
        let x = t.data();
        let max = x.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = x.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        let loss = lse - x[target];
        let probs = softmax_into(x);
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                probs,
                target,
            },
            ng,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// Element `i` of a vector as a scalar.
    pub fn index(&mut self, x: Var, i: usize) -> Result<Var, EngineError> {
        let t = self.value(x);
        if t.rank() != 1 || i >= t.len() {
            return Err(shape_err("index", format!("index {i} into {:?}", t.shape())));
        }
        let v = Tensor::scalar(t.data()[i]);
        let ng = self.ng(x);
        Ok(self.push(v, Op::Index(x, i), ng))
    }
}

// ---------------------------------------------------------------------------
// backward

fn slot<'a, T: Scalar>(
    grads: &'a mut [Option<Vec<T>>],
    nodes: &[Node<T>],
    v: Var,
) -> Option<&'a mut [T]> {
    let node = &nodes[v.0];
    if !node.needs_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); node.value.len()]))
}

impl<T: Scalar> Graph<T> {
    /// Reverse pass from a scalar `loss`. Returns one gradient per parameter
    /// leaf; parameters the loss does not depend on get a zero gradient.
    /// Constants are not differentiated through.
    pub fn backward(self, loss: Var) -> Result<GradientMap<T>, EngineError> {
        if self.value(loss).len() != 1 {
            return Err(EngineError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        let mut out = GradientMap::new();

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if let Op::Param(id) = node.op {
                let g = grads[i]
                    .take()
                    .unwrap_or_else(|| vec![T::zero(); node.value.len()]);
                let g = Tensor::new(node.value.shape(), g)?;
                let mut single = GradientMap::new();
                single.insert(id, g);
                out.accumulate(&single)?;
                continue;
            }
            if !node.needs_grad {
                continue;
            }
            let Some(mut g) = grads[i].take() else {
                continue;
            };
            if self.fault.is_some() && node.op.kind() == self.fault {
                for v in &mut g {
                    *v = -*v;
                }
            }
            let val = |v: Var| nodes[v.0].value.data();
            match &node.op {
                Op::Constant | Op::Param(_) => {}
                Op::Add(a, b) => {
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        axpy(T::one(), &g, s);
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        axpy(T::one(), &g, s);
                    }
                }
                Op::Sub(a, b) => {
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        axpy(T::one(), &g, s);
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        axpy(-T::one(), &g, s);
                    }
                }
                Op::Scale(x, c) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        axpy(*c, &g, s);
                    }
                }
                Op::ScaleBy(x, sv) => {
                    let c = val(*sv)[0];
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        axpy(c, &g, s);
                    }
                    let d = dot(&g, val(*x));
                    if let Some(s) = slot(&mut grads, nodes, *sv) {
                        s[0] += d;
                    }
                }
                Op::OneMinus(x) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        axpy(-T::one(), &g, s);
                    }
                }
                Op::Hadamard(a, b) => {
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for ((si, gi), bi) in s.iter_mut().zip(&g).zip(val(*b)) {
                            *si += *gi * *bi;
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        for ((si, gi), ai) in s.iter_mut().zip(&g).zip(val(*a)) {
                            *si += *gi * *ai;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let sa = nodes[a.0].value.shape().to_vec();
                    let sb = nodes[b.0].value.shape().to_vec();
                    let (av, bv) = (val(*a), val(*b));
                    match (sa.len(), sb.len()) {
                        (2, 2) => {
                            let (m, k, n) = (sa[0], sa[1], sb[1]);
                            if let Some(s) = slot(&mut grads, nodes, *a) {
                                for i in 0..m {
                                    let gr = &g[i * n..(i + 1) * n];
                                    for p in 0..k {
                                        s[i * k + p] += dot(gr, &bv[p * n..(p + 1) * n]);
                                    }
                                }
                            }
                            if let Some(s) = slot(&mut grads, nodes, *b) {
                                for i in 0..m {
                                    let gr = &g[i * n..(i + 1) * n];
                                    for p in 0..k {
                                        axpy(av[i * k + p], gr, &mut s[p * n..(p + 1) * n]);
                                    }
                                }
                            }
                        }
                        (2, 1) => {
                            let (m, k) = (sa[0], sa[1]);
                            if let Some(s) = slot(&mut grads, nodes, *a) {
                                for i in 0..m {
                                    axpy(g[i], bv, &mut s[i * k..(i + 1) * k]);
                                }
                            }
                            if let Some(s) = slot(&mut grads, nodes, *b) {
                                for i in 0..m {
                                    axpy(g[i], &av[i * k..(i + 1) * k], s);
                                }
                            }
                        }
                        _ => {
                            let (k, n) = (sb[0], sb[1]);
                            if let Some(s) = slot(&mut grads, nodes, *a) {
                                for p in 0..k {
                                    s[p] += dot(&bv[p * n..(p + 1) * n], &g);
                                }
                            }
                            if let Some(s) = slot(&mut grads, nodes, *b) {
                                for p in 0..k {
                                    axpy(av[p], &g, &mut s[p * n..(p + 1) * n]);
                                }
                            }
                        }
                    }
                }
                Op::Outer(u, v) => {
                    let (uv, vv) = (val(*u), val(*v));
                    let n = vv.len();
                    if let Some(s) = slot(&mut grads, nodes, *u) {
                        for (i, si) in s.iter_mut().enumerate() {
                            *si += dot(&g[i * n..(i + 1) * n], vv);
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *v) {
                        for (i, &ui) in uv.iter().enumerate() {
                            axpy(ui, &g[i * n..(i + 1) * n], s);
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = nodes[p.0].value.len();
                        if let Some(s) = slot(&mut grads, nodes, *p) {
                            axpy(T::one(), &g[off..off + len], s);
                        }
                        off += len;
                    }
                }
                Op::Tanh(x) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for ((si, gi), yi) in s.iter_mut().zip(&g).zip(node.value.data()) {
                            *si += *gi * (T::one() - *yi * *yi);
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for ((si, gi), yi) in s.iter_mut().zip(&g).zip(node.value.data()) {
                            *si += *gi * *yi * (T::one() - *yi);
                        }
                    }
                }
                Op::Softmax(x) => {
                    let y = node.value.data();
                    let gy = dot(&g, y);
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for ((si, gi), yi) in s.iter_mut().zip(&g).zip(y) {
                            *si += *yi * (*gi - gy);
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normed,
                    inv_std,
                } => {
                    let gv = val(*gain);
                    let n = T::from_f64(normed.len() as f64);
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        let dz: Vec<T> = g.iter().zip(gv).map(|(a, b)| *a * *b).collect();
                        let mean_dz = dz.iter().copied().sum::<T>() / n;
                        let mean_dzz = dot(&dz, normed) / n;
                        for ((si, dzi), zi) in s.iter_mut().zip(&dz).zip(normed) {
                            *si += *inv_std * (*dzi - mean_dz - *zi * mean_dzz);
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *gain) {
                        for ((si, gi), zi) in s.iter_mut().zip(&g).zip(normed) {
                            *si += *gi * *zi;
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *bias) {
                        axpy(T::one(), &g, s);
                    }
                }
                Op::RowMean(x) => {
                    let c = nodes[x.0].value.shape()[1];
                    let inv = T::one() / T::from_f64(c as f64);
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for (row, gi) in s.chunks_exact_mut(c).zip(&g) {
                            let d = *gi * inv;
                            for v in row {
                                *v += d;
                            }
                        }
                    }
                }
                Op::ColMean(x) => {
                    let r = nodes[x.0].value.shape()[0];
                    let c = g.len();
                    let inv = T::one() / T::from_f64(r as f64);
                    let scaled: Vec<T> = g.iter().map(|&v| v * inv).collect();
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for row in s.chunks_exact_mut(c) {
                            axpy(T::one(), &scaled, row);
                        }
                    }
                }
                Op::Bilinear(h, a) => {
                    let (hv, av) = (val(*h), val(*a));
                    let n = hv.len();
                    let g0 = g[0];
                    if let Some(s) = slot(&mut grads, nodes, *h) {
                        // (A + Aᵀ) h
                        for i in 0..n {
                            let row = &av[i * n..(i + 1) * n];
                            s[i] += g0 * dot(row, hv);
                            axpy(g0 * hv[i], row, s);
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for i in 0..n {
                            axpy(g0 * hv[i], hv, &mut s[i * n..(i + 1) * n]);
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    probs,
                    target,
                } => {
                    if let Some(s) = slot(&mut grads, nodes, *logits) {
                        axpy(g[0], probs, s);
                        s[*target] -= g[0];
                    }
                }
                Op::Sum(x) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for v in s {
                            *v += g[0];
                        }
                    }
                }
                Op::Index(x, idx) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        s[*idx] += g[0];
                    }
                }
            }
        }
        Ok(out)
    }
}
