use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{DiffError, Tensor};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// Operation that produced a node.
///
/// The public primitive basis is {add, sub, mul, div, neg, matmul, sum,
/// mean, broadcast, exp, log, tanh, sigmoid, square, logsumexp, concat,
/// slice}. `Transpose`, `SumTo` and `Reshape` are additional linear
/// primitives the backward pass is expressed with; they follow the same
/// rules (cached value, differentiable adjoint) as the public ones.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    /// Input node; holds a value and no operands.
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    MatMul,
    Transpose,
    /// Reduce all elements to a scalar.
    Sum,
    /// Reduce all elements to their arithmetic mean.
    Mean,
    /// Expand to the target shape (trailing-aligned, 1-extents repeat).
    Broadcast(Vec<usize>),
    /// Sum-reduce to the target shape; adjoint of `Broadcast`.
    SumTo(Vec<usize>),
    Reshape(Vec<usize>),
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Square,
    /// log-sum-exp reduction over one axis (the axis is squeezed).
    LogSumExp(usize),
    Concat(usize),
    Slice {
        axis: usize,
        start: usize,
        stop: usize,
    },
}

impl OpKind {
    fn name(&self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Neg => "neg",
            OpKind::MatMul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Broadcast(_) => "broadcast",
            OpKind::SumTo(_) => "sum_to",
            OpKind::Reshape(_) => "reshape",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Square => "square",
            OpKind::LogSumExp(_) => "logsumexp",
            OpKind::Concat(_) => "concat",
            OpKind::Slice { .. } => "slice",
        }
    }
}

struct NodeInner {
    id: u64,
    kind: OpKind,
    operands: Vec<Node>,
    value: Tensor,
    requires_grad: bool,
}

impl Drop for NodeInner {
    // Graphs from unrolled optimization are long chains; freeing them with
    // the default recursive drop can exhaust the stack. Walk the chain
    // iteratively instead.
    fn drop(&mut self) {
        let mut stack = std::mem::take(&mut self.operands);
        while let Some(node) = stack.pop() {
            if let Some(mut inner) = Rc::into_inner(node.inner) {
                stack.append(&mut inner.operands);
            }
        }
    }
}

/// Handle to an immutable node of the computation graph.
///
/// Cloning is cheap (reference count); two clones refer to the same node.
/// Values are computed eagerly when the node is built and never change.
#[derive(Clone)]
pub struct Node {
    inner: Rc<NodeInner>,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("id", &self.inner.id)
            .field("kind", &self.inner.kind.name())
            .field("shape", &self.inner.value.shape())
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

impl Node {
    fn new(kind: OpKind, operands: Vec<Node>, value: Tensor) -> Node {
        let requires_grad = operands.iter().any(|n| n.requires_grad());
        Node {
            inner: Rc::new(NodeInner {
                id: fresh_id(),
                kind,
                operands,
                value,
                requires_grad,
            }),
        }
    }

    /// Input node that participates in differentiation.
    pub fn leaf(value: Tensor) -> Node {
        Node {
            inner: Rc::new(NodeInner {
                id: fresh_id(),
                kind: OpKind::Leaf,
                operands: vec![],
                value,
                requires_grad: true,
            }),
        }
    }

    /// Input node treated as a constant by differentiation.
    pub fn constant(value: Tensor) -> Node {
        Node {
            inner: Rc::new(NodeInner {
                id: fresh_id(),
                kind: OpKind::Leaf,
                operands: vec![],
                value,
                requires_grad: false,
            }),
        }
    }

    pub fn scalar(value: f64) -> Node {
        Node::constant(Tensor::scalar(value))
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn kind(&self) -> &OpKind {
        &self.inner.kind
    }

    pub fn operands(&self) -> &[Node] {
        &self.inner.operands
    }

    pub fn value(&self) -> &Tensor {
        &self.inner.value
    }

    pub fn shape(&self) -> &[usize] {
        self.inner.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.inner.value.numel()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Same node (pointer) identity.
    pub fn same_node(&self, other: &Node) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    // -- elementwise binary ------------------------------------------------

    pub fn try_add(&self, rhs: &Node) -> Result<Node, DiffError> {
        elementwise_binary(OpKind::Add, self, rhs, |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Node) -> Result<Node, DiffError> {
        elementwise_binary(OpKind::Sub, self, rhs, |a, b| a - b)
    }

    pub fn try_mul(&self, rhs: &Node) -> Result<Node, DiffError> {
        elementwise_binary(OpKind::Mul, self, rhs, |a, b| a * b)
    }

    pub fn try_div(&self, rhs: &Node) -> Result<Node, DiffError> {
        elementwise_binary(OpKind::Div, self, rhs, |a, b| a / b)
    }

    // -- unary ---------------------------------------------------------

    pub fn neg(&self) -> Node {
        Node::new(OpKind::Neg, vec![self.clone()], self.value().map(|v| -v))
    }

    pub fn exp(&self) -> Node {
        Node::new(OpKind::Exp, vec![self.clone()], self.value().map(f64::exp))
    }

    pub fn try_log(&self) -> Result<Node, DiffError> {
        if let Some(v) = self.value().data().iter().find(|v| **v <= 0.0) {
            return Err(DiffError::Domain {
                op: "log",
                reason: format!("operand contains non-positive value {v}"),
            });
        }
        Ok(Node::new(
            OpKind::Log,
            vec![self.clone()],
            self.value().map(f64::ln),
        ))
    }

    pub fn log(&self) -> Node {
        self.try_log().unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn tanh(&self) -> Node {
        Node::new(OpKind::Tanh, vec![self.clone()], self.value().map(f64::tanh))
    }

    pub fn sigmoid(&self) -> Node {
        Node::new(
            OpKind::Sigmoid,
            vec![self.clone()],
            self.value().map(sigmoid),
        )
    }

    pub fn square(&self) -> Node {
        Node::new(
            OpKind::Square,
            vec![self.clone()],
            self.value().map(|v| v * v),
        )
    }

    /// Multiply by a compile-time constant scalar.
    pub fn scale(&self, c: f64) -> Node {
        self.try_mul(&Node::scalar(c)).expect("scalar mul conforms")
    }

    /// Add a compile-time constant scalar.
    pub fn shift(&self, c: f64) -> Node {
        self.try_add(&Node::scalar(c)).expect("scalar add conforms")
    }

    // -- reductions ------------------------------------------------------

    pub fn sum(&self) -> Node {
        let total: f64 = self.value().data().iter().sum();
        Node::new(OpKind::Sum, vec![self.clone()], Tensor::scalar(total))
    }

    pub fn mean(&self) -> Node {
        let n = self.numel().max(1) as f64;
        let total: f64 = self.value().data().iter().sum();
        Node::new(OpKind::Mean, vec![self.clone()], Tensor::scalar(total / n))
    }

    pub fn try_logsumexp(&self, axis: usize) -> Result<Node, DiffError> {
        let shape = self.shape();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(DiffError::InvalidShape {
                op: "logsumexp",
                shape: shape.to_vec(),
                reason: format!("cannot reduce axis {axis}"),
            });
        }
        let value = logsumexp_kernel(self.value(), axis);
        Ok(Node::new(OpKind::LogSumExp(axis), vec![self.clone()], value))
    }

    pub fn logsumexp(&self, axis: usize) -> Node {
        self.try_logsumexp(axis).unwrap_or_else(|e| panic!("{e}"))
    }

    // -- shape ops --------------------------------------------------------

    pub fn try_broadcast(&self, target: impl Into<Vec<usize>>) -> Result<Node, DiffError> {
        let target = target.into();
        if self.shape() == target.as_slice() {
            return Ok(self.clone());
        }
        let strides = broadcast_strides(self.shape(), &target).ok_or_else(|| {
            DiffError::ShapeMismatch {
                op: "broadcast",
                lhs: self.shape().to_vec(),
                rhs: target.clone(),
            }
        })?;
        let value = broadcast_kernel(self.value(), &target, &strides);
        Ok(Node::new(
            OpKind::Broadcast(target),
            vec![self.clone()],
            value,
        ))
    }

    pub fn broadcast(&self, target: impl Into<Vec<usize>>) -> Node {
        self.try_broadcast(target).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn try_sum_to(&self, target: impl Into<Vec<usize>>) -> Result<Node, DiffError> {
        let target = target.into();
        if self.shape() == target.as_slice() {
            return Ok(self.clone());
        }
        let strides = broadcast_strides(&target, self.shape()).ok_or_else(|| {
            DiffError::ShapeMismatch {
                op: "sum_to",
                lhs: self.shape().to_vec(),
                rhs: target.clone(),
            }
        })?;
        let value = sum_to_kernel(self.value(), &target, &strides);
        Ok(Node::new(OpKind::SumTo(target), vec![self.clone()], value))
    }

    pub fn sum_to(&self, target: impl Into<Vec<usize>>) -> Node {
        self.try_sum_to(target).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn try_reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Node, DiffError> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(DiffError::InvalidShape {
                op: "reshape",
                shape: self.shape().to_vec(),
                reason: format!("cannot reshape to {shape:?}"),
            });
        }
        let value = self.value().reshaped(shape.clone());
        Ok(Node::new(OpKind::Reshape(shape), vec![self.clone()], value))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Node {
        self.try_reshape(shape).unwrap_or_else(|e| panic!("{e}"))
    }

    // -- linear algebra ----------------------------------------------------

    pub fn try_matmul(&self, rhs: &Node) -> Result<Node, DiffError> {
        let (a, b) = (self.value(), rhs.value());
        if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let value = matmul_kernel(a, b);
        Ok(Node::new(
            OpKind::MatMul,
            vec![self.clone(), rhs.clone()],
            value,
        ))
    }

    pub fn matmul(&self, rhs: &Node) -> Node {
        self.try_matmul(rhs).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn try_transpose(&self) -> Result<Node, DiffError> {
        let a = self.value();
        if a.rank() != 2 {
            return Err(DiffError::InvalidShape {
                op: "transpose",
                shape: a.shape().to_vec(),
                reason: "expects a 2-D tensor".into(),
            });
        }
        let (r, c) = (a.rows(), a.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = a.data()[i * c + j];
            }
        }
        let value = Tensor::from_vec(vec![c, r], data).expect("transpose length");
        Ok(Node::new(OpKind::Transpose, vec![self.clone()], value))
    }

    pub fn transpose(&self) -> Node {
        self.try_transpose().unwrap_or_else(|e| panic!("{e}"))
    }

    // -- structural --------------------------------------------------------

    pub fn try_concat(parts: &[Node], axis: usize) -> Result<Node, DiffError> {
        if parts.is_empty() {
            return Err(DiffError::InvalidShape {
                op: "concat",
                shape: vec![],
                reason: "needs at least one operand".into(),
            });
        }
        let first = parts[0].shape().to_vec();
        if axis >= first.len() {
            return Err(DiffError::InvalidShape {
                op: "concat",
                shape: first,
                reason: format!("axis {axis} out of range"),
            });
        }
        for p in &parts[1..] {
            let s = p.shape();
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(DiffError::ShapeMismatch {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
        }
        let value = concat_kernel(parts, axis);
        Ok(Node::new(OpKind::Concat(axis), parts.to_vec(), value))
    }

    pub fn concat(parts: &[Node], axis: usize) -> Node {
        Node::try_concat(parts, axis).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn try_slice(&self, axis: usize, start: usize, stop: usize) -> Result<Node, DiffError> {
        let shape = self.shape();
        if axis >= shape.len() || start >= stop || stop > shape[axis] {
            return Err(DiffError::InvalidShape {
                op: "slice",
                shape: shape.to_vec(),
                reason: format!("range {start}..{stop} on axis {axis}"),
            });
        }
        let value = slice_kernel(self.value(), axis, start, stop);
        Ok(Node::new(
            OpKind::Slice { axis, start, stop },
            vec![self.clone()],
            value,
        ))
    }

    pub fn slice(&self, axis: usize, start: usize, stop: usize) -> Node {
        self.try_slice(axis, start, stop)
            .unwrap_or_else(|e| panic!("{e}"))
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn elementwise_binary(
    kind: OpKind,
    lhs: &Node,
    rhs: &Node,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Node, DiffError> {
    let (a, b) = (lhs.value(), rhs.value());
    let value = if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_vec(a.shape().to_vec(), data).expect("same shape")
    } else if b.is_scalar() {
        let y = b.scalar_value();
        a.map(|x| f(x, y))
    } else if a.is_scalar() {
        let x = a.scalar_value();
        b.map(|y| f(x, y))
    } else {
        return Err(DiffError::ShapeMismatch {
            op: kind.name(),
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    };
    Ok(Node::new(kind, vec![lhs.clone(), rhs.clone()], value))
}

// Strides (in elements) that address `src` from indices of `dst`, with 0 on
// axes where `src` repeats. `None` when src cannot broadcast to dst.
fn broadcast_strides(src: &[usize], dst: &[usize]) -> Option<Vec<usize>> {
    if src.len() > dst.len() {
        // A one-element tensor broadcasts anywhere regardless of rank.
        if src.iter().product::<usize>() == 1 {
            return Some(vec![0; dst.len()]);
        }
        return None;
    }
    let offset = dst.len() - src.len();
    let mut src_strides = vec![0usize; src.len()];
    let mut acc = 1;
    for d in (0..src.len()).rev() {
        src_strides[d] = acc;
        acc *= src[d];
    }
    let mut out = vec![0usize; dst.len()];
    for d in 0..dst.len() {
        if d < offset {
            out[d] = 0;
        } else {
            let s = src[d - offset];
            if s == dst[d] {
                out[d] = src_strides[d - offset];
            } else if s == 1 {
                out[d] = 0;
            } else {
                return None;
            }
        }
    }
    Some(out)
}

fn broadcast_kernel(src: &Tensor, target: &[usize], strides: &[usize]) -> Tensor {
    let n: usize = target.iter().product();
    let mut data = vec![0.0; n];
    let mut idx = vec![0usize; target.len()];
    let sd = src.data();
    for slot in data.iter_mut() {
        let off: usize = idx.iter().zip(strides).map(|(i, s)| i * s).sum();
        *slot = sd[off];
        for d in (0..target.len()).rev() {
            idx[d] += 1;
            if idx[d] < target[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::from_vec(target.to_vec(), data).expect("broadcast length")
}

fn sum_to_kernel(src: &Tensor, target: &[usize], strides: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(target.to_vec());
    let shape = src.shape().to_vec();
    let mut idx = vec![0usize; shape.len()];
    let od = out.data_mut();
    for &v in src.data() {
        let off: usize = idx.iter().zip(strides).map(|(i, s)| i * s).sum();
        od[off] += v;
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

fn matmul_kernel(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut c = vec![0.0; m * n];
    if m > 0 && k > 0 && n > 0 {
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data().as_ptr(),
                k as isize,
                1,
                b.data().as_ptr(),
                n as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    Tensor::from_vec(vec![m, n], c).expect("matmul length")
}

fn logsumexp_kernel(a: &Tensor, axis: usize) -> Tensor {
    let shape = a.shape();
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape = shape.to_vec();
    out_shape.remove(axis);
    let mut out = vec![0.0; outer * inner];
    let data = a.data();
    for o in 0..outer {
        for i in 0..inner {
            let mut m = f64::NEG_INFINITY;
            for l in 0..len {
                m = m.max(data[(o * len + l) * inner + i]);
            }
            let mut s = 0.0;
            for l in 0..len {
                s += (data[(o * len + l) * inner + i] - m).exp();
            }
            out[o * inner + i] = m + s.ln();
        }
    }
    Tensor::from_vec(out_shape, out).expect("logsumexp length")
}

fn concat_kernel(parts: &[Node], axis: usize) -> Tensor {
    let first = parts[0].shape();
    let outer: usize = first[..axis].iter().product();
    let inner: usize = first[axis + 1..].iter().product();
    let total_axis: usize = parts.iter().map(|p| p.shape()[axis]).sum();
    let mut shape = first.to_vec();
    shape[axis] = total_axis;
    let mut data = vec![0.0; outer * total_axis * inner];
    let row = total_axis * inner;
    let mut offset = 0;
    for p in parts {
        let len = p.shape()[axis];
        let block = len * inner;
        let pd = p.value().data();
        for o in 0..outer {
            let dst = o * row + offset * inner;
            data[dst..dst + block].copy_from_slice(&pd[o * block..(o + 1) * block]);
        }
        offset += len;
    }
    Tensor::from_vec(shape, data).expect("concat length")
}

fn slice_kernel(a: &Tensor, axis: usize, start: usize, stop: usize) -> Tensor {
    let shape = a.shape();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len = shape[axis];
    let keep = stop - start;
    let mut out_shape = shape.to_vec();
    out_shape[axis] = keep;
    let mut data = vec![0.0; outer * keep * inner];
    let ad = a.data();
    for o in 0..outer {
        let src = (o * len + start) * inner;
        let dst = o * keep * inner;
        data[dst..dst + keep * inner].copy_from_slice(&ad[src..src + keep * inner]);
    }
    Tensor::from_vec(out_shape, data).expect("slice length")
}

macro_rules! binary_operator {
    ($trait:ident, $method:ident, $call:ident) => {
        impl std::ops::$trait<&Node> for &Node {
            type Output = Node;
            fn $method(self, rhs: &Node) -> Node {
                self.$call(rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
    };
}

binary_operator!(Add, add, try_add);
binary_operator!(Sub, sub, try_sub);
binary_operator!(Mul, mul, try_mul);
binary_operator!(Div, div, try_div);

impl std::ops::Neg for &Node {
    type Output = Node;
    fn neg(self) -> Node {
        Node::neg(self)
    }
}
