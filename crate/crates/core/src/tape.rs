//! Reverse-mode differentiation over a linear tape.
//!
//! Every primitive appends one node holding its forward value. Nodes only
//! reference earlier nodes, so the tape is already in topological order and
//! [`Tape::backward_into`] is a single reverse sweep.
//!
//! Trainable tensors enter the tape through [`Tape::param`], which borrows the
//! caller's storage instead of copying it and tags the node with a *slot*.
//! Gradients for slots are accumulated straight into a caller-provided
//! gradient buffer, so many per-instance tapes can share one accumulator.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{mismatch, NumericsError, Tensor};

/// Offset added under the square root of every distance so the derivative
/// stays finite when a distance is exactly zero.
pub const SQRT_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive kinds, used to target fault injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    MatVec,
    MatMul,
    Hadamard,
    Add,
    Sub,
    Scale,
    Concat,
    Sum,
    RowSums,
    Relu,
    Sigmoid,
    Softmax,
    SqrtEps,
    MeanRows,
    RowDistances,
    OuterHadamard,
    Gather,
    Dot,
    Reshape,
    Index,
    LogLoss,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    MatVec(Var, Var),
    MatMul(Var, Var),
    Hadamard(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Sum(Var),
    RowSums(Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    SqrtEps(Var),
    MeanRows(Var),
    RowDistances(Var, Var),
    OuterHadamard(Var, Var),
    Gather(Var, Vec<Vec<usize>>),
    Dot(Var, Var),
    Reshape(Var),
    Index(Var, usize),
    LogLoss { input: Var, label: f64, clip: f64 },
}

impl Op {
    fn kind(&self) -> Option<OpKind> {
        Some(match self {
            Op::Constant | Op::Param(_) => return None,
            Op::MatVec(..) => OpKind::MatVec,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Hadamard(..) => OpKind::Hadamard,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Scale(..) => OpKind::Scale,
            Op::Concat(..) => OpKind::Concat,
            Op::Sum(..) => OpKind::Sum,
            Op::RowSums(..) => OpKind::RowSums,
            Op::Relu(..) => OpKind::Relu,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::Softmax(..) => OpKind::Softmax,
            Op::SqrtEps(..) => OpKind::SqrtEps,
            Op::MeanRows(..) => OpKind::MeanRows,
            Op::RowDistances(..) => OpKind::RowDistances,
            Op::OuterHadamard(..) => OpKind::OuterHadamard,
            Op::Gather(..) => OpKind::Gather,
            Op::Dot(..) => OpKind::Dot,
            Op::Reshape(..) => OpKind::Reshape,
            Op::Index(..) => OpKind::Index,
            Op::LogLoss { .. } => OpKind::LogLoss,
        })
    }

    fn name(&self) -> &'static str {
        match self.kind() {
            None => "leaf",
            Some(k) => match k {
                OpKind::MatVec => "matvec",
                OpKind::MatMul => "matmul",
                OpKind::Hadamard => "hadamard",
                OpKind::Add => "add",
                OpKind::Sub => "sub",
                OpKind::Scale => "scale",
                OpKind::Concat => "concat",
                OpKind::Sum => "sum",
                OpKind::RowSums => "row_sums",
                OpKind::Relu => "relu",
                OpKind::Sigmoid => "sigmoid",
                OpKind::Softmax => "softmax",
                OpKind::SqrtEps => "sqrt_eps",
                OpKind::MeanRows => "mean_rows",
                OpKind::RowDistances => "row_distances",
                OpKind::OuterHadamard => "outer_hadamard",
                OpKind::Gather => "gather",
                OpKind::Dot => "dot",
                OpKind::Reshape => "reshape",
                OpKind::Index => "index",
                OpKind::LogLoss => "log_loss",
            },
        }
    }
}

enum Values<'a> {
    Owned(Vec<f64>),
    Borrowed(&'a [f64]),
}

impl Values<'_> {
    fn as_slice(&self) -> &[f64] {
        match self {
            Values::Owned(v) => v,
            Values::Borrowed(v) => v,
        }
    }
}

struct Node<'a> {
    op: Op,
    shape: Vec<usize>,
    values: Values<'a>,
    needs_grad: bool,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Clipped binary cross-entropy of one prediction.
pub fn clipped_log_loss(p: f64, label: f64, clip: f64) -> f64 {
    let p = p.clamp(clip, 1.0 - clip);
    -(label * libm::log(p) + (1.0 - label) * libm::log(1.0 - p))
}

/// Softmax with the maximum subtracted first.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| libm::exp(x - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    check_finite: bool,
    fault: Option<(OpKind, f64)>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reject any non-finite value as soon as it is recorded.
    pub fn with_finite_checks(mut self) -> Self {
        self.check_finite = true;
        self
    }

    /// Test hook: multiply the gradient leaving every node of `kind` by
    /// `factor` during backward. Used to verify that gradient checks catch
    /// broken backward rules.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, kind: OpKind, factor: f64) {
        self.fault = Some((kind, factor));
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.nodes[v.0].values.as_slice()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec())
            .expect("tape nodes hold consistent shapes")
    }

    /// Smallest |input| seen by any ReLU on the tape, if there is one.
    pub fn relu_margin(&self) -> Option<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(self.value(x).iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))),
                _ => None,
            })
            .reduce(f64::min)
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, values: Values<'a>) -> Result<Var, NumericsError> {
        if self.check_finite && values.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite { op: op.name() });
        }
        let needs_grad = match &op {
            Op::Constant => false,
            Op::Param(_) => true,
            Op::MatVec(a, b)
            | Op::MatMul(a, b)
            | Op::Hadamard(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::RowDistances(a, b)
            | Op::OuterHadamard(a, b)
            | Op::Dot(a, b) => self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad,
            Op::Concat(vs) => vs.iter().any(|v| self.nodes[v.0].needs_grad),
            Op::Scale(a, _)
            | Op::Sum(a)
            | Op::RowSums(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Softmax(a)
            | Op::SqrtEps(a)
            | Op::MeanRows(a)
            | Op::Gather(a, _)
            | Op::Reshape(a)
            | Op::Index(a, _)
            | Op::LogLoss { input: a, .. } => self.nodes[a.0].needs_grad,
        };
        self.nodes.push(Node {
            op,
            shape,
            values,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn owned(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>) -> Result<Var, NumericsError> {
        self.push(op, shape, Values::Owned(data))
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<Var, NumericsError> {
        let shape = t.shape().to_vec();
        self.owned(Op::Constant, shape, t.into_data())
    }

    /// A trainable leaf borrowed from `t`; its gradient is written to `slot`.
    pub fn param(&mut self, slot: usize, t: &'a Tensor) -> Result<Var, NumericsError> {
        self.push(Op::Param(slot), t.shape().to_vec(), Values::Borrowed(t.data()))
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize), NumericsError> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(mismatch(op, alloc::format!("expected a matrix, got {s:?}"))),
        }
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(), NumericsError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(
                op,
                alloc::format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    /// `[r, c] x [c] -> [r]`
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var, NumericsError> {
        let (r, c) = self.dims2(a, "matvec")?;
        if self.value(x).len() != c || self.shape(x).len() != 1 {
            return Err(mismatch("matvec", alloc::format!("[{r}, {c}] x {:?}", self.shape(x))));
        }
        let (av, xv) = (self.value(a), self.value(x));
        let out: Vec<f64> = (0..r)
            .map(|i| av[i * c..(i + 1) * c].iter().zip(xv).map(|(p, q)| p * q).sum())
            .collect();
        self.owned(Op::MatVec(a, x), vec![r], out)
    }

    /// `[r, k] x [k, c] -> [r, c]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (r, k) = self.dims2(a, "matmul")?;
        let (k2, c) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(mismatch("matmul", alloc::format!("[{r}, {k}] x [{k2}, {c}]")));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let orow = &mut out[i * c..(i + 1) * c];
            for p in 0..k {
                let w = av[i * k + p];
                if w == 0.0 {
                    continue;
                }
                for (o, bval) in orow.iter_mut().zip(&bv[p * c..(p + 1) * c]) {
                    *o += w * bval;
                }
            }
        }
        self.owned(Op::MatMul(a, b), vec![r, c], out)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape(a, b, "hadamard")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        self.owned(Op::Hadamard(a, b), shape, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        self.owned(Op::Add(a, b), shape, out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape(a, b, "sub")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let shape = self.shape(a).to_vec();
        self.owned(Op::Sub(a, b), shape, out)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NumericsError> {
        let out = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.owned(Op::Scale(a, c), shape, out)
    }

    /// Concatenates vectors (or scalars) into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        if parts.is_empty() {
            return Err(mismatch("concat", "no inputs"));
        }
        let mut out = Vec::new();
        for &p in parts {
            if self.shape(p).len() > 1 {
                return Err(mismatch("concat", alloc::format!("non-vector input {:?}", self.shape(p))));
            }
            out.extend_from_slice(self.value(p));
        }
        let len = out.len();
        self.owned(Op::Concat(parts.to_vec()), vec![len], out)
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let s = self.value(a).iter().sum();
        self.owned(Op::Sum(a), Vec::new(), vec![s])
    }

    /// `[r, c] -> [r]`, the sum of each row.
    pub fn row_sums(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (r, c) = self.dims2(a, "row_sums")?;
        let av = self.value(a);
        let out = (0..r).map(|i| av[i * c..(i + 1) * c].iter().sum()).collect();
        self.owned(Op::RowSums(a), vec![r], out)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let shape = self.shape(a).to_vec();
        self.owned(Op::Relu(a), shape, out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let shape = self.shape(a).to_vec();
        self.owned(Op::Sigmoid(a), shape, out)
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var, NumericsError> {
        if self.shape(a).len() != 1 {
            return Err(mismatch("softmax", alloc::format!("expected a vector, got {:?}", self.shape(a))));
        }
        let out = softmax(self.value(a));
        let shape = self.shape(a).to_vec();
        self.owned(Op::Softmax(a), shape, out)
    }

    /// `sqrt(x + SQRT_EPS)` element-wise.
    pub fn sqrt_eps(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).iter().map(|&x| libm::sqrt(x + SQRT_EPS)).collect();
        let shape = self.shape(a).to_vec();
        self.owned(Op::SqrtEps(a), shape, out)
    }

    /// `[r, c] -> [c]`, the mean of the rows.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (r, c) = self.dims2(a, "mean_rows")?;
        let av = self.value(a);
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, x) in out.iter_mut().zip(&av[i * c..(i + 1) * c]) {
                *o += x;
            }
        }
        let inv = 1.0 / r as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        self.owned(Op::MeanRows(a), vec![c], out)
    }

    /// `[r, c], [c] -> [r]`: Euclidean distance of every row to `center`,
    /// with [`SQRT_EPS`] under the root.
    pub fn row_distances(&mut self, x: Var, center: Var) -> Result<Var, NumericsError> {
        let (r, c) = self.dims2(x, "row_distances")?;
        if self.shape(center) != [c] {
            return Err(mismatch("row_distances", alloc::format!("[{r}, {c}] vs {:?}", self.shape(center))));
        }
        let (xv, cv) = (self.value(x), self.value(center));
        let out = (0..r)
            .map(|i| {
                let sq: f64 = xv[i * c..(i + 1) * c]
                    .iter()
                    .zip(cv)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                libm::sqrt(sq + SQRT_EPS)
            })
            .collect();
        self.owned(Op::RowDistances(x, center), vec![r], out)
    }

    /// `[r, d], [m, d] -> [r * m, d]`: row `i * m + j` of the output is the
    /// Hadamard product of row `i` of `a` and row `j` of `b`.
    pub fn outer_hadamard(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (r, d) = self.dims2(a, "outer_hadamard")?;
        let (m, d2) = self.dims2(b, "outer_hadamard")?;
        if d != d2 {
            return Err(mismatch("outer_hadamard", alloc::format!("[{r}, {d}] vs [{m}, {d2}]")));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(r * m * d);
        for i in 0..r {
            let arow = &av[i * d..(i + 1) * d];
            for j in 0..m {
                out.extend(arow.iter().zip(&bv[j * d..(j + 1) * d]).map(|(x, y)| x * y));
            }
        }
        self.owned(Op::OuterHadamard(a, b), vec![r * m, d], out)
    }

    /// `[V, d] -> [groups, d]`: each output row is the sum of the listed
    /// rows of `table`.
    pub fn gather(&mut self, table: Var, groups: Vec<Vec<usize>>) -> Result<Var, NumericsError> {
        let (v, d) = self.dims2(table, "gather")?;
        if groups.is_empty() || groups.iter().any(|g| g.is_empty()) {
            return Err(mismatch("gather", "every group needs at least one row"));
        }
        let tv = self.value(table);
        let mut out = vec![0.0; groups.len() * d];
        for (gi, group) in groups.iter().enumerate() {
            for &row in group {
                if row >= v {
                    return Err(NumericsError::IndexOutOfRange { index: row, len: v });
                }
                for (o, x) in out[gi * d..(gi + 1) * d].iter_mut().zip(&tv[row * d..(row + 1) * d]) {
                    *o += x;
                }
            }
        }
        let n = groups.len();
        self.owned(Op::Gather(table, groups), vec![n, d], out)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        if self.value(a).len() != self.value(b).len() {
            return Err(mismatch("dot", alloc::format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let s = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        self.owned(Op::Dot(a, b), Vec::new(), vec![s])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        let len: usize = shape.iter().product();
        if len != self.value(a).len() {
            return Err(mismatch("reshape", alloc::format!("{:?} -> {shape:?}", self.shape(a))));
        }
        let data = self.value(a).to_vec();
        self.owned(Op::Reshape(a), shape.to_vec(), data)
    }

    /// Element `i` of the flattened input as a scalar.
    pub fn index(&mut self, a: Var, i: usize) -> Result<Var, NumericsError> {
        let len = self.value(a).len();
        if i >= len {
            return Err(NumericsError::IndexOutOfRange { index: i, len });
        }
        let x = self.value(a)[i];
        self.owned(Op::Index(a, i), Vec::new(), vec![x])
    }

    /// Binary cross-entropy of a scalar probability, clipped to
    /// `[clip, 1 - clip]`. The clip has zero derivative outside the range.
    pub fn log_loss(&mut self, p: Var, label: f64, clip: f64) -> Result<Var, NumericsError> {
        if self.value(p).len() != 1 {
            return Err(mismatch("log_loss", alloc::format!("expected a scalar, got {:?}", self.shape(p))));
        }
        let l = clipped_log_loss(self.value(p)[0], label, clip);
        self.owned(Op::LogLoss { input: p, label, clip }, Vec::new(), vec![l])
    }

    fn validate_slots(&self, upto: usize, grads: &[Tensor]) -> Result<(), NumericsError> {
        for node in &self.nodes[..=upto] {
            if let Op::Param(slot) = node.op {
                let g = grads.get(slot).ok_or(NumericsError::UnknownSlot(slot))?;
                if g.len() != node.values.as_slice().len() {
                    return Err(mismatch(
                        "backward",
                        alloc::format!("slot {slot}: gradient {:?} vs param {:?}", g.shape(), node.shape),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Back-propagates from the scalar `output`, adding each parameter
    /// gradient into `grads[slot]`.
    pub fn backward_into(&self, output: Var, grads: &mut [Tensor]) -> Result<(), NumericsError> {
        self.backward_scaled(output, 1.0, grads)
    }

    /// As [`Tape::backward_into`] with the output gradient set to `seed`.
    pub fn backward_scaled(&self, output: Var, seed: f64, grads: &mut [Tensor]) -> Result<(), NumericsError> {
        if self.value(output).len() != 1 {
            return Err(NumericsError::SeedNotScalar(self.shape(output).to_vec()));
        }
        self.validate_slots(output.0, grads)?;
        let mut adj: Vec<Option<Vec<f64>>> = Vec::new();
        adj.resize_with(output.0 + 1, || None);
        adj[output.0] = Some(vec![seed]);

        for idx in (0..=output.0).rev() {
            let Some(mut g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if let (Some((kind, factor)), Some(k)) = (self.fault, node.op.kind()) {
                if kind == k {
                    g.iter_mut().for_each(|x| *x *= factor);
                }
            }
            self.propagate(&node.op, &g, idx, &mut adj, grads);
        }
        Ok(())
    }

    /// Convenience wrapper returning a fresh gradient per slot; `slots[i]`
    /// gives the shape of slot `i`.
    pub fn backward(&self, output: Var, slots: &[&[usize]]) -> Result<Vec<Tensor>, NumericsError> {
        let mut grads: Vec<Tensor> = slots.iter().map(|s| Tensor::zeros(s)).collect();
        self.backward_into(output, &mut grads)?;
        Ok(grads)
    }

    fn propagate(
        &self,
        op: &Op,
        g: &[f64],
        idx: usize,
        adj: &mut [Option<Vec<f64>>],
        grads: &mut [Tensor],
    ) {
        let val = |v: Var| self.nodes[v.0].values.as_slice();
        match op {
            Op::Constant => {}
            Op::Param(slot) => {
                for (a, b) in grads[*slot].data_mut().iter_mut().zip(g) {
                    *a += b;
                }
            }
            Op::MatVec(a, x) => {
                let (r, c) = (self.shape(*a)[0], self.shape(*a)[1]);
                let (av, xv) = (val(*a), val(*x));
                if let Some(da) = self.target(*a, adj, grads) {
                    for i in 0..r {
                        for (d, xj) in da[i * c..(i + 1) * c].iter_mut().zip(xv) {
                            *d += g[i] * xj;
                        }
                    }
                }
                if let Some(dx) = self.target(*x, adj, grads) {
                    for i in 0..r {
                        for (d, aij) in dx.iter_mut().zip(&av[i * c..(i + 1) * c]) {
                            *d += g[i] * aij;
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (r, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let c = self.shape(*b)[1];
                let (av, bv) = (val(*a), val(*b));
                if let Some(da) = self.target(*a, adj, grads) {
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        for p in 0..k {
                            let s: f64 = grow.iter().zip(&bv[p * c..(p + 1) * c]).map(|(x, y)| x * y).sum();
                            da[i * k + p] += s;
                        }
                    }
                }
                if let Some(db) = self.target(*b, adj, grads) {
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        for p in 0..k {
                            let w = av[i * k + p];
                            for (d, gv) in db[p * c..(p + 1) * c].iter_mut().zip(grow) {
                                *d += w * gv;
                            }
                        }
                    }
                }
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if let Some(da) = self.target(*a, adj, grads) {
                    for ((d, gi), bi) in da.iter_mut().zip(g).zip(bv) {
                        *d += gi * bi;
                    }
                }
                if let Some(db) = self.target(*b, adj, grads) {
                    for ((d, gi), ai) in db.iter_mut().zip(g).zip(av) {
                        *d += gi * ai;
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(da) = self.target(*a, adj, grads) {
                    da.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
                }
                if let Some(db) = self.target(*b, adj, grads) {
                    db.iter_mut().zip(g).for_each(|(d, gi)| *d += sign * gi);
                }
            }
            Op::Scale(a, c) => {
                if let Some(da) = self.target(*a, adj, grads) {
                    da.iter_mut().zip(g).for_each(|(d, gi)| *d += c * gi);
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = val(*p).len();
                    if let Some(dp) = self.target(*p, adj, grads) {
                        dp.iter_mut().zip(&g[offset..offset + n]).for_each(|(d, gi)| *d += gi);
                    }
                    offset += n;
                }
            }
            Op::Sum(a) => {
                if let Some(da) = self.target(*a, adj, grads) {
                    da.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::RowSums(a) => {
                let c = self.shape(*a)[1];
                if let Some(da) = self.target(*a, adj, grads) {
                    for (i, gi) in g.iter().enumerate() {
                        da[i * c..(i + 1) * c].iter_mut().for_each(|d| *d += gi);
                    }
                }
            }
            Op::Relu(a) => {
                let av = val(*a);
                if let Some(da) = self.target(*a, adj, grads) {
                    for ((d, gi), x) in da.iter_mut().zip(g).zip(av) {
                        if *x > 0.0 {
                            *d += gi;
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[idx].values.as_slice();
                if let Some(da) = self.target(*a, adj, grads) {
                    for ((d, gi), yi) in da.iter_mut().zip(g).zip(y) {
                        *d += gi * yi * (1.0 - yi);
                    }
                }
            }
            Op::Softmax(a) => {
                let y = self.nodes[idx].values.as_slice();
                let gy: f64 = g.iter().zip(y).map(|(x, z)| x * z).sum();
                if let Some(da) = self.target(*a, adj, grads) {
                    for ((d, gi), yi) in da.iter_mut().zip(g).zip(y) {
                        *d += yi * (gi - gy);
                    }
                }
            }
            Op::SqrtEps(a) => {
                let y = self.nodes[idx].values.as_slice();
                if let Some(da) = self.target(*a, adj, grads) {
                    for ((d, gi), yi) in da.iter_mut().zip(g).zip(y) {
                        *d += gi / (2.0 * yi);
                    }
                }
            }
            Op::MeanRows(a) => {
                let (r, c) = (self.shape(*a)[0], self.shape(*a)[1]);
                let inv = 1.0 / r as f64;
                if let Some(da) = self.target(*a, adj, grads) {
                    for i in 0..r {
                        for (d, gj) in da[i * c..(i + 1) * c].iter_mut().zip(g) {
                            *d += gj * inv;
                        }
                    }
                }
            }
            Op::RowDistances(x, center) => {
                let (r, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                let (xv, cv) = (val(*x), val(*center));
                let y = self.nodes[idx].values.as_slice();
                // d y_i / d x_ij = (x_ij - c_j) / y_i
                let coef: Vec<f64> = (0..r).map(|i| g[i] / y[i]).collect();
                if let Some(dx) = self.target(*x, adj, grads) {
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] += coef[i] * (xv[i * c + j] - cv[j]);
                        }
                    }
                }
                if let Some(dc) = self.target(*center, adj, grads) {
                    for i in 0..r {
                        for j in 0..c {
                            dc[j] -= coef[i] * (xv[i * c + j] - cv[j]);
                        }
                    }
                }
            }
            Op::OuterHadamard(a, b) => {
                let (r, d) = (self.shape(*a)[0], self.shape(*a)[1]);
                let m = self.shape(*b)[0];
                let (av, bv) = (val(*a), val(*b));
                if let Some(da) = self.target(*a, adj, grads) {
                    for i in 0..r {
                        for j in 0..m {
                            let grow = &g[(i * m + j) * d..(i * m + j + 1) * d];
                            let brow = &bv[j * d..(j + 1) * d];
                            for t in 0..d {
                                da[i * d + t] += grow[t] * brow[t];
                            }
                        }
                    }
                }
                if let Some(db) = self.target(*b, adj, grads) {
                    for i in 0..r {
                        let arow = &av[i * d..(i + 1) * d];
                        for j in 0..m {
                            let grow = &g[(i * m + j) * d..(i * m + j + 1) * d];
                            for t in 0..d {
                                db[j * d + t] += grow[t] * arow[t];
                            }
                        }
                    }
                }
            }
            Op::Gather(table, groups) => {
                let d = self.shape(*table)[1];
                if let Some(dt) = self.target(*table, adj, grads) {
                    for (gi, group) in groups.iter().enumerate() {
                        for &row in group {
                            for (dv, gv) in dt[row * d..(row + 1) * d].iter_mut().zip(&g[gi * d..(gi + 1) * d]) {
                                *dv += gv;
                            }
                        }
                    }
                }
            }
            Op::Dot(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if let Some(da) = self.target(*a, adj, grads) {
                    da.iter_mut().zip(bv).for_each(|(d, y)| *d += g[0] * y);
                }
                if let Some(db) = self.target(*b, adj, grads) {
                    db.iter_mut().zip(av).for_each(|(d, x)| *d += g[0] * x);
                }
            }
            Op::Reshape(a) => {
                if let Some(da) = self.target(*a, adj, grads) {
                    da.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
                }
            }
            Op::Index(a, i) => {
                if let Some(da) = self.target(*a, adj, grads) {
                    da[*i] += g[0];
                }
            }
            Op::LogLoss { input, label, clip } => {
                let p = val(*input)[0];
                if p > *clip && p < 1.0 - *clip {
                    let dp = -label / p + (1.0 - label) / (1.0 - p);
                    if let Some(di) = self.target(*input, adj, grads) {
                        di[0] += g[0] * dp;
                    }
                }
            }
        }
    }

    /// Where the gradient of `v` accumulates: the caller's buffer for
    /// parameters, a lazily allocated adjoint otherwise, `None` when `v`
    /// does not depend on any parameter.
    fn target<'g>(
        &self,
        v: Var,
        adj: &'g mut [Option<Vec<f64>>],
        grads: &'g mut [Tensor],
    ) -> Option<&'g mut [f64]> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        match node.op {
            Op::Param(slot) => Some(grads[slot].data_mut()),
            _ => {
                let len = node.values.as_slice().len();
                Some(adj[v.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
            }
        }
    }
}
