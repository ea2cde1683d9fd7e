//! Tape-based reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Operations are recorded in creation order during the forward pass; each
//! record keeps enough state to compute its vector-Jacobian product without
//! re-running forward. `backward` replays the tape in exact reverse order and
//! accumulates (sums) gradients at every fan-out point.

use crate::tensor::Tensor;
use std::fmt;

pub type NodeId = usize;

#[derive(Debug)]
pub enum NumericsError {
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    InvalidAxis { op: &'static str, axis: usize, rank: usize },
    InputTooShort { op: &'static str, needed: usize, got: usize },
    NotScalar { shape: Vec<usize> },
    NonFinite { context: String },
    Contract { msg: String },
}

impl fmt::Display for NumericsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericsError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{}: incompatible shapes {:?} and {:?}", op, lhs, rhs)
            }
            NumericsError::InvalidAxis { op, axis, rank } => {
                write!(f, "{}: axis {} out of range for rank {}", op, axis, rank)
            }
            NumericsError::InputTooShort { op, needed, got } => {
                write!(f, "{}: input length {} below minimum {}", op, got, needed)
            }
            NumericsError::NotScalar { shape } => {
                write!(f, "backward requires a scalar loss, got shape {:?}", shape)
            }
            NumericsError::NonFinite { context } => write!(f, "non-finite value in {}", context),
            NumericsError::Contract { msg } => write!(f, "contract violation: {}", msg),
        }
    }
}

impl std::error::Error for NumericsError {}

#[derive(Debug)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale(f64),
    AddScalar,
    Relu,
    Tanh,
    Sigmoid,
    Log,
    Sqrt,
    Matmul,
    Bmm,
    Permute(Vec<usize>),
    Reshape,
    Concat { axis: usize },
    SliceAxis { axis: usize, start: usize },
    Conv1dStrided,
    ChannelLinear,
    MaxPool1d { argmax: Vec<usize> },
    ExpandLast,
    Softmax { axis: usize },
    LogSoftmax { axis: usize },
    AddBias { axis: usize },
    SumAll,
    SumAxis { axis: usize },
    Select { index: usize },
    Dropout { mask: Vec<f64> },
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    needs_grad: bool,
}

/// The computation graph: ordered op records, topological by construction.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// (outer, len, inner) split of a shape around `axis`.
fn axis_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// C[m,n] = alpha*A·B + beta*C, with optional logical transposes.
/// `at` means `a` holds the [k,m] transpose of the logical [m,k] operand.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    at: bool,
    b: &[f64],
    bt: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if at { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if bt { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, alpha,
            a.as_ptr(), rsa, csa,
            b.as_ptr(), rsb, csb,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    /// Gradient buffer of a node after `backward`, if it participated.
    pub fn grad(&self, id: NodeId) -> Option<Tensor> {
        self.grads.get(id).and_then(|g| {
            g.as_ref()
                .map(|v| Tensor::new(self.nodes[id].value.shape().to_vec(), v.clone()).unwrap())
        })
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node { op, inputs, value, needs_grad });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, inputs: vec![], value, needs_grad: requires_grad });
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    fn binary_same_shape(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
    ) -> Result<(), NumericsError> {
        if self.nodes[a].value.shape() != self.nodes[b].value.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: op_name,
                lhs: self.nodes[a].value.shape().to_vec(),
                rhs: self.nodes[b].value.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.binary_same_shape("add", a, b)?;
        let data = self.nodes[a]
            .value
            .data()
            .iter()
            .zip(self.nodes[b].value.data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.nodes[a].value.shape().to_vec(), data).unwrap();
        Ok(self.push(Op::Add, vec![a, b], t))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.binary_same_shape("sub", a, b)?;
        let data = self.nodes[a]
            .value
            .data()
            .iter()
            .zip(self.nodes[b].value.data())
            .map(|(x, y)| x - y)
            .collect();
        let t = Tensor::new(self.nodes[a].value.shape().to_vec(), data).unwrap();
        Ok(self.push(Op::Sub, vec![a, b], t))
    }

    /// Hadamard (elementwise) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.binary_same_shape("mul", a, b)?;
        let data = self.nodes[a]
            .value
            .data()
            .iter()
            .zip(self.nodes[b].value.data())
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(self.nodes[a].value.shape().to_vec(), data).unwrap();
        Ok(self.push(Op::Mul, vec![a, b], t))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let data = self.nodes[a].value.data().iter().map(|x| x * c).collect();
        let t = Tensor::new(self.nodes[a].value.shape().to_vec(), data).unwrap();
        self.push(Op::Scale(c), vec![a], t)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let data = self.nodes[a].value.data().iter().map(|x| x + c).collect();
        let t = Tensor::new(self.nodes[a].value.shape().to_vec(), data).unwrap();
        self.push(Op::AddScalar, vec![a], t)
    }

    fn unary(&mut self, op: Op, a: NodeId, f: impl Fn(f64) -> f64) -> NodeId {
        let data = self.nodes[a].value.data().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(self.nodes[a].value.shape().to_vec(), data).unwrap();
        self.push(op, vec![a], t)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Relu, a, |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Tanh, a, f64::tanh)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Sigmoid, a, |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Log, a, f64::ln)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Sqrt, a, f64::sqrt)
    }

    /// Matrix product. 2-D × 2-D, or batched with equal leading axes.
    /// A 2-D right operand broadcasts over the left operand's batch axes.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (sa, sb) = (self.nodes[a].value.shape().to_vec(), self.nodes[b].value.shape().to_vec());
        if sa.len() == 2 && sb.len() == 2 {
            if sa[1] != sb[0] {
                return Err(NumericsError::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb });
            }
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let mut out = vec![0.0; m * n];
            gemm(m, k, n, 1.0, self.nodes[a].value.data(), false, self.nodes[b].value.data(), false, 0.0, &mut out);
            let t = Tensor::new(vec![m, n], out).unwrap();
            return Ok(self.push(Op::Matmul, vec![a, b], t));
        }
        if sa.len() == 3 && sb.len() == 3 && sa[0] == sb[0] {
            if sa[2] != sb[1] {
                return Err(NumericsError::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb });
            }
            let (bt, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
            let mut out = vec![0.0; bt * m * n];
            for i in 0..bt {
                gemm(
                    m, k, n, 1.0,
                    &self.nodes[a].value.data()[i * m * k..(i + 1) * m * k], false,
                    &self.nodes[b].value.data()[i * k * n..(i + 1) * k * n], false,
                    0.0,
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
            let t = Tensor::new(vec![bt, m, n], out).unwrap();
            return Ok(self.push(Op::Bmm, vec![a, b], t));
        }
        Err(NumericsError::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb })
    }

    pub fn permute(&mut self, a: NodeId, perm: &[usize]) -> Result<NodeId, NumericsError> {
        let shape = self.nodes[a].value.shape().to_vec();
        let rank = shape.len();
        if perm.len() != rank || {
            let mut seen = vec![false; rank];
            perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true))
        } {
            return Err(NumericsError::Contract { msg: format!("permute: invalid permutation {:?} for rank {}", perm, rank) });
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let data = permute_data(self.nodes[a].value.data(), &shape, perm);
        let t = Tensor::new(out_shape, data).unwrap();
        Ok(self.push(Op::Permute(perm.to_vec()), vec![a], t))
    }

    /// Reinterpret shape; element count must match.
    pub fn reshape(&mut self, a: NodeId, new_shape: &[usize]) -> Result<NodeId, NumericsError> {
        let n: usize = new_shape.iter().product();
        if n != self.nodes[a].value.numel() {
            return Err(NumericsError::ShapeMismatch {
                op: "reshape",
                lhs: self.nodes[a].value.shape().to_vec(),
                rhs: new_shape.to_vec(),
            });
        }
        let t = Tensor::new(new_shape.to_vec(), self.nodes[a].value.data().to_vec()).unwrap();
        Ok(self.push(Op::Reshape, vec![a], t))
    }

    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId, NumericsError> {
        if inputs.is_empty() {
            return Err(NumericsError::Contract { msg: "concat: no inputs".into() });
        }
        let first = self.nodes[inputs[0]].value.shape().to_vec();
        if axis >= first.len() {
            return Err(NumericsError::InvalidAxis { op: "concat", axis, rank: first.len() });
        }
        let mut total_axis = 0;
        for &id in inputs {
            let s = self.nodes[id].value.shape();
            if s.len() != first.len()
                || s.iter().enumerate().any(|(i, &d)| i != axis && d != first[i])
            {
                return Err(NumericsError::ShapeMismatch { op: "concat", lhs: first, rhs: s.to_vec() });
            }
            total_axis += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = total_axis;
        let (outer, _, inner) = axis_dims(&out_shape, axis);
        let mut out = vec![0.0; out_shape.iter().product()];
        for o in 0..outer {
            let mut dst_off = o * total_axis * inner;
            for &id in inputs {
                let len = self.nodes[id].value.shape()[axis];
                let src = self.nodes[id].value.data();
                out[dst_off..dst_off + len * inner]
                    .copy_from_slice(&src[o * len * inner..(o + 1) * len * inner]);
                dst_off += len * inner;
            }
        }
        let t = Tensor::new(out_shape, out).unwrap();
        Ok(self.push(Op::Concat { axis }, inputs.to_vec(), t))
    }

    pub fn slice_axis(
        &mut self,
        a: NodeId,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<NodeId, NumericsError> {
        let shape = self.nodes[a].value.shape().to_vec();
        if axis >= shape.len() {
            return Err(NumericsError::InvalidAxis { op: "slice_axis", axis, rank: shape.len() });
        }
        if start + len > shape[axis] {
            return Err(NumericsError::Contract {
                msg: format!("slice_axis: [{}, {}) exceeds axis length {}", start, start + len, shape[axis]),
            });
        }
        let (outer, alen, inner) = axis_dims(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let mut out = vec![0.0; outer * len * inner];
        let src = self.nodes[a].value.data();
        for o in 0..outer {
            let s = (o * alen + start) * inner;
            out[o * len * inner..(o + 1) * len * inner].copy_from_slice(&src[s..s + len * inner]);
        }
        let t = Tensor::new(out_shape, out).unwrap();
        Ok(self.push(Op::SliceAxis { axis, start }, vec![a], t))
    }

    /// 1-D convolution with kernel 2 and stride 2, no padding.
    /// x: [b, c_in, t], w: [c_out, c_in, 2], bias: [c_out] → [b, c_out, floor(t/2)].
    pub fn conv1d_strided(
        &mut self,
        x: NodeId,
        w: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, NumericsError> {
        let sx = self.nodes[x].value.shape().to_vec();
        let sw = self.nodes[w].value.shape().to_vec();
        let sbias = self.nodes[bias].value.shape().to_vec();
        if sx.len() != 3 || sw.len() != 3 || sw[2] != 2 || sx[1] != sw[1] {
            return Err(NumericsError::ShapeMismatch { op: "conv1d_strided", lhs: sx, rhs: sw });
        }
        if sbias != [sw[0]] {
            return Err(NumericsError::ShapeMismatch { op: "conv1d_strided", lhs: sw, rhs: sbias });
        }
        let (b, ci, t) = (sx[0], sx[1], sx[2]);
        let co = sw[0];
        if t < 2 {
            return Err(NumericsError::InputTooShort { op: "conv1d_strided", needed: 2, got: t });
        }
        let t2 = t / 2;
        let xv = self.nodes[x].value.data();
        let wv = self.nodes[w].value.data();
        let bv = self.nodes[bias].value.data();
        let mut out = vec![0.0; b * co * t2];
        for bi in 0..b {
            for oc in 0..co {
                for j in 0..t2 {
                    let mut acc = bv[oc];
                    for ic in 0..ci {
                        let xo = (bi * ci + ic) * t + 2 * j;
                        let wo = (oc * ci + ic) * 2;
                        acc += wv[wo] * xv[xo] + wv[wo + 1] * xv[xo + 1];
                    }
                    out[(bi * co + oc) * t2 + j] = acc;
                }
            }
        }
        let tout = Tensor::new(vec![b, co, t2], out).unwrap();
        Ok(self.push(Op::Conv1dStrided, vec![x, w, bias], tout))
    }

    /// 1×1 linear over the feature axis in one fused op:
    /// a [N,d,t] × w [o,d] + bias [o] → [N,o,t], gemm per batch entry with
    /// no intermediate permutes.
    pub fn channel_linear(
        &mut self,
        a: NodeId,
        w: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, NumericsError> {
        let sa = self.nodes[a].value.shape().to_vec();
        let sw = self.nodes[w].value.shape().to_vec();
        let sbias = self.nodes[bias].value.shape().to_vec();
        if sa.len() != 3 || sw.len() != 2 || sw[1] != sa[1] {
            return Err(NumericsError::ShapeMismatch { op: "channel_linear", lhs: sa, rhs: sw });
        }
        if sbias != [sw[0]] {
            return Err(NumericsError::ShapeMismatch { op: "channel_linear", lhs: sw, rhs: sbias });
        }
        let (n, d, t) = (sa[0], sa[1], sa[2]);
        let o = sw[0];
        let av = self.nodes[a].value.data();
        let wv = self.nodes[w].value.data();
        let bv = self.nodes[bias].value.data();
        let mut out = vec![0.0; n * o * t];
        for i in 0..n {
            let dst = &mut out[i * o * t..(i + 1) * o * t];
            for (oc, row) in dst.chunks_mut(t).enumerate() {
                row.fill(bv[oc]);
            }
            gemm(o, d, t, 1.0, wv, false, &av[i * d * t..(i + 1) * d * t], false, 1.0, dst);
        }
        let tout = Tensor::new(vec![n, o, t], out).unwrap();
        Ok(self.push(Op::ChannelLinear, vec![a, w, bias], tout))
    }

    /// Max pooling with kernel 2 and stride 2 along the last axis.
    /// Ties break toward the lower index.
    pub fn maxpool1d(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let shape = self.nodes[a].value.shape().to_vec();
        let rank = shape.len();
        if rank == 0 {
            return Err(NumericsError::InvalidAxis { op: "maxpool1d", axis: 0, rank });
        }
        let t = shape[rank - 1];
        if t < 2 {
            return Err(NumericsError::InputTooShort { op: "maxpool1d", needed: 2, got: t });
        }
        let t2 = t / 2;
        let rows: usize = shape[..rank - 1].iter().product();
        let src = self.nodes[a].value.data();
        let mut out = vec![0.0; rows * t2];
        let mut argmax = vec![0usize; rows * t2];
        for r in 0..rows {
            for j in 0..t2 {
                let i0 = r * t + 2 * j;
                let (v, idx) = if src[i0] >= src[i0 + 1] { (src[i0], i0) } else { (src[i0 + 1], i0 + 1) };
                out[r * t2 + j] = v;
                argmax[r * t2 + j] = idx;
            }
        }
        let mut out_shape = shape;
        out_shape[rank - 1] = t2;
        let tout = Tensor::new(out_shape, out).unwrap();
        Ok(self.push(Op::MaxPool1d { argmax }, vec![a], tout))
    }

    /// Append a trailing axis of length `len`, repeating values.
    pub fn expand_last(&mut self, a: NodeId, len: usize) -> Result<NodeId, NumericsError> {
        if len == 0 {
            return Err(NumericsError::Contract { msg: "expand_last: zero length".into() });
        }
        let mut shape = self.nodes[a].value.shape().to_vec();
        let src = self.nodes[a].value.data();
        let mut out = Vec::with_capacity(src.len() * len);
        for &v in src {
            out.extend(std::iter::repeat(v).take(len));
        }
        shape.push(len);
        let t = Tensor::new(shape, out).unwrap();
        Ok(self.push(Op::ExpandLast, vec![a], t))
    }

    /// Numerically stabilized softmax; every slice along `axis` sums to 1.
    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId, NumericsError> {
        let shape = self.nodes[a].value.shape().to_vec();
        if axis >= shape.len() {
            return Err(NumericsError::InvalidAxis { op: "softmax", axis, rank: shape.len() });
        }
        let (outer, len, inner) = axis_dims(&shape, axis);
        let src = self.nodes[a].value.data();
        let mut out = vec![0.0; src.len()];
        // passes run over contiguous inner rows; per-lane state lives in
        // reused buffers so the walk stays cache-friendly for any axis
        let mut mx = vec![0.0; inner];
        let mut sum = vec![0.0; inner];
        for o in 0..outer {
            let base = o * len * inner;
            mx.fill(f64::NEG_INFINITY);
            for j in 0..len {
                let row = &src[base + j * inner..base + (j + 1) * inner];
                for (m, &v) in mx.iter_mut().zip(row) {
                    if v > *m {
                        *m = v;
                    }
                }
            }
            sum.fill(0.0);
            for j in 0..len {
                let off = base + j * inner;
                for i in 0..inner {
                    let e = (src[off + i] - mx[i]).exp();
                    out[off + i] = e;
                    sum[i] += e;
                }
            }
            for j in 0..len {
                let off = base + j * inner;
                for i in 0..inner {
                    out[off + i] /= sum[i];
                }
            }
        }
        let t = Tensor::new(shape, out).unwrap();
        Ok(self.push(Op::Softmax { axis }, vec![a], t))
    }

    pub fn log_softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId, NumericsError> {
        let shape = self.nodes[a].value.shape().to_vec();
        if axis >= shape.len() {
            return Err(NumericsError::InvalidAxis { op: "log_softmax", axis, rank: shape.len() });
        }
        let (outer, len, inner) = axis_dims(&shape, axis);
        let src = self.nodes[a].value.data();
        let mut out = vec![0.0; src.len()];
        let mut mx = vec![0.0; inner];
        let mut sum = vec![0.0; inner];
        for o in 0..outer {
            let base = o * len * inner;
            mx.fill(f64::NEG_INFINITY);
            for j in 0..len {
                let row = &src[base + j * inner..base + (j + 1) * inner];
                for (m, &v) in mx.iter_mut().zip(row) {
                    if v > *m {
                        *m = v;
                    }
                }
            }
            sum.fill(0.0);
            for j in 0..len {
                let off = base + j * inner;
                for i in 0..inner {
                    sum[i] += (src[off + i] - mx[i]).exp();
                }
            }
            for i in 0..inner {
                sum[i] = mx[i] + sum[i].ln(); // now the log-sum-exp per lane
            }
            for j in 0..len {
                let off = base + j * inner;
                for i in 0..inner {
                    out[off + i] = src[off + i] - sum[i];
                }
            }
        }
        let t = Tensor::new(shape, out).unwrap();
        Ok(self.push(Op::LogSoftmax { axis }, vec![a], t))
    }

    /// Broadcast-add a rank-1 bias along `axis`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId, axis: usize) -> Result<NodeId, NumericsError> {
        let shape = self.nodes[a].value.shape().to_vec();
        let bshape = self.nodes[bias].value.shape().to_vec();
        if axis >= shape.len() {
            return Err(NumericsError::InvalidAxis { op: "add_bias", axis, rank: shape.len() });
        }
        if bshape != [shape[axis]] {
            return Err(NumericsError::ShapeMismatch { op: "add_bias", lhs: shape, rhs: bshape });
        }
        let (outer, len, inner) = axis_dims(&shape, axis);
        let src = self.nodes[a].value.data();
        let bv = self.nodes[bias].value.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for j in 0..len {
                let base = (o * len + j) * inner;
                for i in 0..inner {
                    out[base + i] = src[base + i] + bv[j];
                }
            }
        }
        let t = Tensor::new(shape, out).unwrap();
        Ok(self.push(Op::AddBias { axis }, vec![a, bias], t))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a].value.data().iter().sum();
        self.push(Op::SumAll, vec![a], Tensor::scalar(s))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.nodes[a].value.numel() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    pub fn sum_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId, NumericsError> {
        let shape = self.nodes[a].value.shape().to_vec();
        if axis >= shape.len() {
            return Err(NumericsError::InvalidAxis { op: "sum_axis", axis, rank: shape.len() });
        }
        let (outer, len, inner) = axis_dims(&shape, axis);
        let src = self.nodes[a].value.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let base = (o * len + j) * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let t = Tensor::new(out_shape, out).unwrap();
        Ok(self.push(Op::SumAxis { axis }, vec![a], t))
    }

    /// Pick one element (by flat index) as a scalar.
    pub fn select(&mut self, a: NodeId, index: usize) -> Result<NodeId, NumericsError> {
        if index >= self.nodes[a].value.numel() {
            return Err(NumericsError::Contract {
                msg: format!("select: index {} out of range {}", index, self.nodes[a].value.numel()),
            });
        }
        let v = self.nodes[a].value.data()[index];
        Ok(self.push(Op::Select { index }, vec![a], Tensor::scalar(v)))
    }

    /// Inverted dropout with a caller-supplied mask sampler.
    /// `keep` draws a uniform [0,1) value per element.
    pub fn dropout(&mut self, a: NodeId, p: f64, mut draw: impl FnMut() -> f64) -> Result<NodeId, NumericsError> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumericsError::Contract { msg: format!("dropout: rate {} outside [0, 1)", p) });
        }
        if p == 0.0 {
            return Ok(a);
        }
        let scale = 1.0 / (1.0 - p);
        let src = self.nodes[a].value.data();
        let mask: Vec<f64> = (0..src.len()).map(|_| if draw() < p { 0.0 } else { scale }).collect();
        let out: Vec<f64> = src.iter().zip(&mask).map(|(x, m)| x * m).collect();
        let t = Tensor::new(self.nodes[a].value.shape().to_vec(), out).unwrap();
        Ok(self.push(Op::Dropout { mask }, vec![a], t))
    }

    /// Reverse-mode sweep from a scalar loss. Fills gradient buffers on all
    /// nodes reachable from `requires_grad` leaves.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), NumericsError> {
        if self.nodes[loss].value.numel() != 1 {
            return Err(NumericsError::NotScalar { shape: self.nodes[loss].value.shape().to_vec() });
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss] = Some(vec![1.0]);

        for idx in (0..self.nodes.len()).rev() {
            if self.grads[idx].is_none() || !self.nodes[idx].needs_grad {
                continue;
            }
            let g = self.grads[idx].take().unwrap();
            self.propagate(idx, &g);
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn ensure_grad<'a>(grads: &'a mut Vec<Option<Vec<f64>>>, nodes: &[Node], id: NodeId) -> &'a mut Vec<f64> {
        if grads[id].is_none() {
            grads[id] = Some(vec![0.0; nodes[id].value.numel()]);
        }
        grads[id].as_mut().unwrap()
    }

    fn propagate(&mut self, idx: NodeId, g: &[f64]) {
        let Tape { nodes, grads } = self;
        let inputs = nodes[idx].inputs.clone();
        let wants: Vec<bool> = inputs.iter().map(|&i| nodes[i].needs_grad).collect();
        match &nodes[idx].op {
            Op::Leaf => {}
            Op::Add => {
                for (pos, &inp) in inputs.iter().enumerate() {
                    if wants[pos] {
                        let gi = Self::ensure_grad(grads, nodes, inp);
                        for (d, &s) in gi.iter_mut().zip(g) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Sub => {
                if wants[0] {
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for (d, &s) in gi.iter_mut().zip(g) {
                        *d += s;
                    }
                }
                if wants[1] {
                    let gi = Self::ensure_grad(grads, nodes, inputs[1]);
                    for (d, &s) in gi.iter_mut().zip(g) {
                        *d -= s;
                    }
                }
            }
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                if wants[0] {
                    let bv = nodes[b].value.data();
                    let gi = Self::ensure_grad(grads, nodes, a);
                    for ((d, &s), &y) in gi.iter_mut().zip(g).zip(bv) {
                        *d += s * y;
                    }
                }
                if wants[1] {
                    let av = nodes[a].value.data();
                    let gi = Self::ensure_grad(grads, nodes, b);
                    for ((d, &s), &x) in gi.iter_mut().zip(g).zip(av) {
                        *d += s * x;
                    }
                }
            }
            Op::Scale(c) => {
                let c = *c;
                if wants[0] {
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for (d, &s) in gi.iter_mut().zip(g) {
                        *d += s * c;
                    }
                }
            }
            Op::AddScalar => {
                if wants[0] {
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for (d, &s) in gi.iter_mut().zip(g) {
                        *d += s;
                    }
                }
            }
            Op::Relu => {
                if wants[0] {
                    let xv = nodes[inputs[0]].value.data();
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for ((d, &s), &x) in gi.iter_mut().zip(g).zip(xv) {
                        if x > 0.0 {
                            *d += s;
                        }
                    }
                }
            }
            Op::Tanh => {
                if wants[0] {
                    let yv = nodes[idx].value.data();
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for ((d, &s), &y) in gi.iter_mut().zip(g).zip(yv) {
                        *d += s * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid => {
                if wants[0] {
                    let yv = nodes[idx].value.data();
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for ((d, &s), &y) in gi.iter_mut().zip(g).zip(yv) {
                        *d += s * y * (1.0 - y);
                    }
                }
            }
            Op::Log => {
                if wants[0] {
                    let xv = nodes[inputs[0]].value.data();
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for ((d, &s), &x) in gi.iter_mut().zip(g).zip(xv) {
                        *d += s / x;
                    }
                }
            }
            Op::Sqrt => {
                if wants[0] {
                    let yv = nodes[idx].value.data();
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for ((d, &s), &y) in gi.iter_mut().zip(g).zip(yv) {
                        *d += s * 0.5 / y;
                    }
                }
            }
            Op::Matmul => {
                let (a, b) = (inputs[0], inputs[1]);
                let (m, k) = (nodes[a].value.shape()[0], nodes[a].value.shape()[1]);
                let n = nodes[b].value.shape()[1];
                if wants[0] {
                    // dA += g · Bᵀ
                    let bv = nodes[b].value.data();
                    let gi = Self::ensure_grad(grads, nodes, a);
                    gemm(m, n, k, 1.0, g, false, &bv, true, 1.0, gi);
                }
                if wants[1] {
                    // dB += Aᵀ · g
                    let av = nodes[a].value.data();
                    let gi = Self::ensure_grad(grads, nodes, b);
                    gemm(k, m, n, 1.0, &av, true, g, false, 1.0, gi);
                }
            }
            Op::Bmm => {
                let (a, b) = (inputs[0], inputs[1]);
                let sa = nodes[a].value.shape().to_vec();
                let sb = nodes[b].value.shape().to_vec();
                let (bt, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                if wants[0] {
                    let bv = nodes[b].value.data();
                    let gi = Self::ensure_grad(grads, nodes, a);
                    for i in 0..bt {
                        gemm(
                            m, n, k, 1.0,
                            &g[i * m * n..(i + 1) * m * n], false,
                            &bv[i * k * n..(i + 1) * k * n], true,
                            1.0,
                            &mut gi[i * m * k..(i + 1) * m * k],
                        );
                    }
                }
                if wants[1] {
                    let av = nodes[a].value.data();
                    let gi = Self::ensure_grad(grads, nodes, b);
                    for i in 0..bt {
                        gemm(
                            k, m, n, 1.0,
                            &av[i * m * k..(i + 1) * m * k], true,
                            &g[i * m * n..(i + 1) * m * n], false,
                            1.0,
                            &mut gi[i * k * n..(i + 1) * k * n],
                        );
                    }
                }
            }
            Op::Permute(perm) => {
                if wants[0] {
                    // the adjoint of a permutation is the inverse permutation
                    let mut inv = vec![0usize; perm.len()];
                    for (d, &p) in perm.iter().enumerate() {
                        inv[p] = d;
                    }
                    let out_shape = nodes[idx].value.shape().to_vec();
                    let back = permute_data(g, &out_shape, &inv);
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for (d, s) in gi.iter_mut().zip(back) {
                        *d += s;
                    }
                }
            }
            Op::Reshape => {
                if wants[0] {
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for (d, &s) in gi.iter_mut().zip(g) {
                        *d += s;
                    }
                }
            }
            Op::Concat { axis } => {
                let axis = *axis;
                let out_shape = nodes[idx].value.shape().to_vec();
                let (outer, total, inner) = axis_dims(&out_shape, axis);
                let mut start = 0;
                for (pos, &inp) in inputs.iter().enumerate() {
                    let len = nodes[inp].value.shape()[axis];
                    if wants[pos] {
                        let gi = Self::ensure_grad(grads, nodes, inp);
                        for o in 0..outer {
                            let src = (o * total + start) * inner;
                            let dst = o * len * inner;
                            for i in 0..len * inner {
                                gi[dst + i] += g[src + i];
                            }
                        }
                    }
                    start += len;
                }
            }
            Op::SliceAxis { axis, start } => {
                if wants[0] {
                    let (axis, start) = (*axis, *start);
                    let in_shape = nodes[inputs[0]].value.shape().to_vec();
                    let out_shape = nodes[idx].value.shape().to_vec();
                    let (outer, alen, inner) = axis_dims(&in_shape, axis);
                    let len = out_shape[axis];
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for o in 0..outer {
                        let dst = (o * alen + start) * inner;
                        let src = o * len * inner;
                        for i in 0..len * inner {
                            gi[dst + i] += g[src + i];
                        }
                    }
                }
            }
            Op::ChannelLinear => {
                let (a, w, bias) = (inputs[0], inputs[1], inputs[2]);
                let sa = nodes[a].value.shape().to_vec();
                let (n, d, t) = (sa[0], sa[1], sa[2]);
                let o = nodes[w].value.shape()[0];
                if wants[0] {
                    // da[i] += wᵀ · g[i]
                    let wv = nodes[w].value.data();
                    let gi = Self::ensure_grad(grads, nodes, a);
                    for i in 0..n {
                        gemm(
                            d, o, t, 1.0,
                            wv, true,
                            &g[i * o * t..(i + 1) * o * t], false,
                            1.0,
                            &mut gi[i * d * t..(i + 1) * d * t],
                        );
                    }
                }
                if wants[1] {
                    // dw += Σᵢ g[i] · a[i]ᵀ
                    let av = nodes[a].value.data();
                    let gi = Self::ensure_grad(grads, nodes, w);
                    for i in 0..n {
                        gemm(
                            o, t, d, 1.0,
                            &g[i * o * t..(i + 1) * o * t], false,
                            &av[i * d * t..(i + 1) * d * t], true,
                            1.0,
                            gi,
                        );
                    }
                }
                if wants[2] {
                    let gi = Self::ensure_grad(grads, nodes, bias);
                    for i in 0..n {
                        for oc in 0..o {
                            let off = (i * o + oc) * t;
                            gi[oc] += g[off..off + t].iter().sum::<f64>();
                        }
                    }
                }
            }
            Op::Conv1dStrided => {
                let (x, w, bias) = (inputs[0], inputs[1], inputs[2]);
                let sx = nodes[x].value.shape().to_vec();
                let sw = nodes[w].value.shape().to_vec();
                let (b, ci, t) = (sx[0], sx[1], sx[2]);
                let co = sw[0];
                let t2 = t / 2;
                let xv = nodes[x].value.data();
                let wv = nodes[w].value.data();
                if wants[0] {
                    let gi = Self::ensure_grad(grads, nodes, x);
                    for bi in 0..b {
                        for oc in 0..co {
                            for j in 0..t2 {
                                let gv = g[(bi * co + oc) * t2 + j];
                                for ic in 0..ci {
                                    let xo = (bi * ci + ic) * t + 2 * j;
                                    let wo = (oc * ci + ic) * 2;
                                    gi[xo] += gv * wv[wo];
                                    gi[xo + 1] += gv * wv[wo + 1];
                                }
                            }
                        }
                    }
                }
                if wants[1] {
                    let gi = Self::ensure_grad(grads, nodes, w);
                    for bi in 0..b {
                        for oc in 0..co {
                            for j in 0..t2 {
                                let gv = g[(bi * co + oc) * t2 + j];
                                for ic in 0..ci {
                                    let xo = (bi * ci + ic) * t + 2 * j;
                                    let wo = (oc * ci + ic) * 2;
                                    gi[wo] += gv * xv[xo];
                                    gi[wo + 1] += gv * xv[xo + 1];
                                }
                            }
                        }
                    }
                }
                if wants[2] {
                    let gi = Self::ensure_grad(grads, nodes, bias);
                    for bi in 0..b {
                        for oc in 0..co {
                            for j in 0..t2 {
                                gi[oc] += g[(bi * co + oc) * t2 + j];
                            }
                        }
                    }
                }
            }
            Op::MaxPool1d { argmax } => {
                if wants[0] {
                    let argmax = argmax.clone();
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for (out_i, &src_i) in argmax.iter().enumerate() {
                        gi[src_i] += g[out_i];
                    }
                }
            }
            Op::ExpandLast => {
                if wants[0] {
                    let out_shape = nodes[idx].value.shape().to_vec();
                    let len = out_shape[out_shape.len() - 1];
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for (i, d) in gi.iter_mut().enumerate() {
                        for r in 0..len {
                            *d += g[i * len + r];
                        }
                    }
                }
            }
            Op::Softmax { axis } => {
                if wants[0] {
                    let axis = *axis;
                    let shape = nodes[idx].value.shape().to_vec();
                    let yv = nodes[idx].value.data();
                    let (outer, len, inner) = axis_dims(&shape, axis);
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    let mut dot = vec![0.0; inner];
                    for o in 0..outer {
                        let base = o * len * inner;
                        dot.fill(0.0);
                        for j in 0..len {
                            let off = base + j * inner;
                            for i in 0..inner {
                                dot[i] += g[off + i] * yv[off + i];
                            }
                        }
                        for j in 0..len {
                            let off = base + j * inner;
                            for i in 0..inner {
                                gi[off + i] += yv[off + i] * (g[off + i] - dot[i]);
                            }
                        }
                    }
                }
            }
            Op::LogSoftmax { axis } => {
                if wants[0] {
                    let axis = *axis;
                    let shape = nodes[idx].value.shape().to_vec();
                    let yv = nodes[idx].value.data();
                    let (outer, len, inner) = axis_dims(&shape, axis);
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    let mut gsum = vec![0.0; inner];
                    for o in 0..outer {
                        let base = o * len * inner;
                        gsum.fill(0.0);
                        for j in 0..len {
                            let off = base + j * inner;
                            for i in 0..inner {
                                gsum[i] += g[off + i];
                            }
                        }
                        for j in 0..len {
                            let off = base + j * inner;
                            for i in 0..inner {
                                gi[off + i] += g[off + i] - yv[off + i].exp() * gsum[i];
                            }
                        }
                    }
                }
            }
            Op::AddBias { axis } => {
                let axis = *axis;
                let shape = nodes[idx].value.shape().to_vec();
                let (outer, len, inner) = axis_dims(&shape, axis);
                if wants[0] {
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for (d, &s) in gi.iter_mut().zip(g) {
                        *d += s;
                    }
                }
                if wants[1] {
                    let gi = Self::ensure_grad(grads, nodes, inputs[1]);
                    for o in 0..outer {
                        for j in 0..len {
                            let base = (o * len + j) * inner;
                            for i in 0..inner {
                                gi[j] += g[base + i];
                            }
                        }
                    }
                }
            }
            Op::SumAll => {
                if wants[0] {
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for d in gi.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::SumAxis { axis } => {
                if wants[0] {
                    let axis = *axis;
                    let in_shape = nodes[inputs[0]].value.shape().to_vec();
                    let (outer, len, inner) = axis_dims(&in_shape, axis);
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for o in 0..outer {
                        for j in 0..len {
                            let base = (o * len + j) * inner;
                            for i in 0..inner {
                                gi[base + i] += g[o * inner + i];
                            }
                        }
                    }
                }
            }
            Op::Select { index } => {
                if wants[0] {
                    let index = *index;
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    gi[index] += g[0];
                }
            }
            Op::Dropout { mask } => {
                if wants[0] {
                    let mask = mask.clone();
                    let gi = Self::ensure_grad(grads, nodes, inputs[0]);
                    for ((d, &s), &m) in gi.iter_mut().zip(g).zip(&mask) {
                        *d += s * m;
                    }
                }
            }
        }
    }
}

fn permute_data(src: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let rank = shape.len();
    let in_strides = row_major_strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    // source stride to advance when the d-th *output* index ticks
    let step: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = src.len();
    let mut out = vec![0.0; n];
    if rank == 0 || n == 0 {
        out.copy_from_slice(src);
        return out;
    }
    // Odometer over the output index; the source offset is maintained
    // incrementally so the inner loop has no div/mod.
    let mut idx = vec![0usize; rank];
    let mut s = 0usize;
    for slot in out.iter_mut() {
        *slot = src[s];
        for d in (0..rank).rev() {
            idx[d] += 1;
            s += step[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            s -= step[d] * out_shape[d];
        }
    }
    out
}

/// Central-difference gradient check for a scalar-valued tensor function.
///
/// Returns the max over coordinates of
/// |analytic − numeric| / max(|analytic_i|, |numeric_i|, ‖gradient‖∞, 1e-12).
/// The ∞-norm floor keeps structurally tiny components from drowning the
/// check in finite-difference truncation noise.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, NumericsError>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId, NumericsError>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(NumericsError::Contract { msg: format!("grad_check: eps {} outside [1e-7, 1e-3]", eps) });
    }
    let eval = |t: &Tensor| -> Result<f64, NumericsError> {
        let mut tape = Tape::new();
        let id = tape.leaf(t.clone(), false);
        let out = f(&mut tape, id)?;
        if tape.value(out).numel() != 1 {
            return Err(NumericsError::NotScalar { shape: tape.value(out).shape().to_vec() });
        }
        let v = tape.value(out).data()[0];
        if !v.is_finite() {
            return Err(NumericsError::NonFinite { context: "grad_check evaluation".into() });
        }
        Ok(v)
    };

    // Analytic gradient.
    let mut tape = Tape::new();
    let id = tape.leaf(x.clone(), true);
    let out = f(&mut tape, id)?;
    if tape.value(out).numel() != 1 {
        return Err(NumericsError::NotScalar { shape: tape.value(out).shape().to_vec() });
    }
    tape.backward(out)?;
    let analytic = tape
        .grad(id)
        .unwrap_or_else(|| Tensor::zeros(x.shape()));

    let mut numeric = vec![0.0; x.numel()];
    let mut xp = x.clone();
    for (i, slot) in numeric.iter_mut().enumerate() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + eps;
        let fp = eval(&xp)?;
        xp.data_mut()[i] = orig - eps;
        let fm = eval(&xp)?;
        xp.data_mut()[i] = orig;
        *slot = (fp - fm) / (2.0 * eps);
    }
    let scale = analytic
        .data()
        .iter()
        .chain(&numeric)
        .fold(1e-12f64, |m, v| m.max(v.abs()));
    let mut max_rel = 0.0f64;
    for (a, n) in analytic.data().iter().zip(&numeric) {
        let denom = a.abs().max(n.abs()).max(scale);
        max_rel = max_rel.max((a - n).abs() / denom);
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::new(vec![rows, cols], v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::eye(2));
        let a = tape.constant(t2(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let out = tape.matmul(i2, a).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_hand_value() {
        let mut tape = Tape::new();
        let a = tape.constant(t2(1, 2, &[1.0, 2.0]));
        let b = tape.constant(t2(2, 1, &[3.0, 4.0]));
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).data(), &[11.0]);
    }

    #[test]
    fn matmul_zeros() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::filled(&[3, 4], 7.5));
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).shape(), &[2, 4]);
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[4, 2]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{}", msg);
    }

    #[test]
    fn conv_selector_kernel_picks_even_entries() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let w = tape.constant(Tensor::new(vec![1, 1, 2], vec![1.0, 0.0]).unwrap());
        let b = tape.constant(Tensor::zeros(&[1]));
        let out = tape.conv1d_strided(x, w, b).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 3.0]);
    }

    #[test]
    fn conv_pairwise_means() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 1, 4], vec![1.0, 3.0, 5.0, 7.0]).unwrap());
        let w = tape.constant(Tensor::new(vec![1, 1, 2], vec![0.5, 0.5]).unwrap());
        let b = tape.constant(Tensor::zeros(&[1]));
        let out = tape.conv1d_strided(x, w, b).unwrap();
        assert_eq!(tape.value(out).data(), &[2.0, 6.0]);
    }

    #[test]
    fn conv_odd_length_drops_last() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 1, 5], vec![1.0; 5]).unwrap());
        let w = tape.constant(Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap());
        let b = tape.constant(Tensor::zeros(&[1]));
        let out = tape.conv1d_strided(x, w, b).unwrap();
        assert_eq!(tape.value(out).shape(), &[1, 1, 2]);
    }

    #[test]
    fn conv_too_short_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
        let w = tape.constant(Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap());
        let b = tape.constant(Tensor::zeros(&[1]));
        assert!(matches!(tape.conv1d_strided(x, w, b), Err(NumericsError::InputTooShort { .. })));
    }

    #[test]
    fn softmax_uniform_on_zeros() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[5]));
        let out = tape.softmax(x, 0).unwrap();
        for &v in tape.value(out).data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_hand_value() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![2], vec![0.0, 3.0f64.ln()]).unwrap());
        let out = tape.softmax(x, 0).unwrap();
        let v = tape.value(out).data();
        assert!((v[0] - 0.25).abs() < 1e-14);
        assert!((v[1] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn softmax_shift_invariant_and_normalized() {
        let mut tape = Tape::new();
        let base = [0.3, -1.2, 2.5, 0.0];
        let x = tape.constant(Tensor::new(vec![4], base.to_vec()).unwrap());
        let shifted = tape.constant(Tensor::new(vec![4], base.iter().map(|v| v + 123.0).collect()).unwrap());
        let a = tape.softmax(x, 0).unwrap();
        let b = tape.softmax(shifted, 0).unwrap();
        let sum: f64 = tape.value(a).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(tape.value(a).data().iter().all(|&v| v > 0.0));
        for (x, y) in tape.value(a).data().iter().zip(tape.value(b).data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 4.0, 3.0, -1.0]).unwrap(), true);
        let s = tape.sum_all(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn backward_sum_of_squares() {
        let mut tape = Tape::new();
        let vals = vec![1.0, -2.0, 0.5];
        let x = tape.leaf(Tensor::new(vec![3], vals.clone()).unwrap(), true);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum_all(sq);
        tape.backward(s).unwrap();
        let g = tape.grad(x).unwrap();
        for (gv, v) in g.data().iter().zip(&vals) {
            assert!((gv - 2.0 * v).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[3]), true);
        assert!(matches!(tape.backward(x), Err(NumericsError::NotScalar { .. })));
    }

    #[test]
    fn fan_out_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap(), true);
        let y = tape.add(x, x).unwrap();
        let z = tape.add(y, x).unwrap();
        let s = tape.sum_all(z);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn grad_check_linear_is_exact() {
        let x = Tensor::new(vec![4], vec![0.3, -0.7, 1.5, 2.0]).unwrap();
        let err = grad_check(|tape, x| Ok(tape.sum_all(x)), &x, 1e-5).unwrap();
        assert!(err <= 1e-9, "err = {}", err);
    }

    #[test]
    fn grad_check_tanh_sigmoid_chain() {
        let x = Tensor::new(vec![5], vec![0.3, -0.7, 1.5, 2.0, -0.1]).unwrap();
        let err = grad_check(
            |tape, x| {
                let s = tape.sigmoid(x);
                let t = tape.tanh(s);
                Ok(tape.sum_all(t))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "err = {}", err);
    }

    #[test]
    fn grad_check_rejects_bad_eps() {
        let x = Tensor::zeros(&[2]);
        assert!(grad_check(|tape, x| Ok(tape.sum_all(x)), &x, 1e-2).is_err());
    }

    #[test]
    fn maxpool_ties_break_low() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![4], vec![2.0, 2.0, 1.0, 3.0]).unwrap(), true);
        let p = tape.maxpool1d(x).unwrap();
        assert_eq!(tape.value(p).data(), &[2.0, 3.0]);
        let s = tape.sum_all(p);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn channel_linear_matches_unfused_path() {
        // fused op vs permute → flatten → matmul → bias, same inputs
        let (n, d, t, o) = (3, 4, 5, 2);
        let h = Tensor::new(
            vec![n, d, t],
            (0..n * d * t).map(|i| ((i * 31) % 17) as f64 * 0.1 - 0.8).collect(),
        )
        .unwrap();
        let w = Tensor::new(vec![o, d], (0..o * d).map(|i| 0.2 * i as f64 - 0.7).collect()).unwrap();
        let b = Tensor::new(vec![o], vec![0.3, -0.6]).unwrap();

        let mut tape = Tape::new();
        let hid = tape.leaf(h.clone(), false);
        let wid = tape.leaf(w.clone(), false);
        let bid = tape.leaf(b.clone(), false);
        let fused = tape.channel_linear(hid, wid, bid).unwrap();

        let ht = tape.permute(hid, &[0, 2, 1]).unwrap();
        let flat = tape.reshape(ht, &[n * t, d]).unwrap();
        let wt = tape.permute(wid, &[1, 0]).unwrap();
        let y = tape.matmul(flat, wt).unwrap();
        let y = tape.reshape(y, &[n, t, o]).unwrap();
        let y = tape.permute(y, &[0, 2, 1]).unwrap();
        let unfused = tape.add_bias(y, bid, 1).unwrap();

        assert_eq!(tape.value(fused).shape(), &[n, o, t]);
        for (p, q) in tape.value(fused).data().iter().zip(tape.value(unfused).data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_linear_rejects_bad_shapes() {
        let mut tape = Tape::new();
        let h = tape.leaf(Tensor::zeros(&[2, 3, 4]), false);
        let w_bad = tape.leaf(Tensor::zeros(&[2, 5]), false);
        let b = tape.leaf(Tensor::zeros(&[2]), false);
        assert!(tape.channel_linear(h, w_bad, b).is_err());
        let w = tape.leaf(Tensor::zeros(&[2, 3]), false);
        let b_bad = tape.leaf(Tensor::zeros(&[3]), false);
        assert!(tape.channel_linear(h, w, b_bad).is_err());
    }

    #[test]
    fn log_softmax_matches_softmax_log() {
        let mut tape = Tape::new();
        let vals = vec![0.5, -1.0, 2.0];
        let x = tape.constant(Tensor::new(vec![3], vals.clone()).unwrap());
        let sm = tape.softmax(x, 0).unwrap();
        let lg = tape.log(sm);
        let x2 = tape.constant(Tensor::new(vec![3], vals).unwrap());
        let lsm = tape.log_softmax(x2, 0).unwrap();
        for (a, b) in tape.value(lg).data().iter().zip(tape.value(lsm).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
