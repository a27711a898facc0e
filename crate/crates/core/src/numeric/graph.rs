//! Eager computation graph with reverse-mode differentiation.
//!
//! Every op evaluates immediately and appends a node holding its value and
//! the ids of its inputs. [`Graph::backward`] walks the nodes in reverse.
//! Nodes whose inputs all have `requires_grad == false` are treated as
//! constants and skipped during the reverse sweep.

use super::kernels::{self, dot};
use super::{NumericError, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        // per-row (mean, 1/std)
        stats: Vec<(f64, f64)>,
    },
    Gelu(Var),
    Relu(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Reshape(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward sweep, indexed by leaf [`Var`].
#[derive(Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// A single forward computation. Values are retained for backward;
/// [`Graph::backward`] borrows the graph immutably, so the same graph can be
/// differentiated again or inspected after the sweep.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

pub type OpResult = Result<Var, NumericError>;

fn shape_err(op: &'static str, node: usize, detail: String) -> NumericError {
    NumericError::Shape {
        op,
        node: Some(node),
        detail,
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Adds an input tensor. Its `requires_grad` flag decides whether
    /// gradients flow to it.
    pub fn input(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad;
        self.push(t, Op::Leaf, rg)
    }

    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = false;
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn mat_dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> OpResult {
        let (m, k) = self.mat_dims(a);
        let (k2, n) = self.mat_dims(b);
        if k != k2 || self.shape(b).len() != 2 {
            return Err(shape_err(
                "matmul",
                self.nodes.len(),
                format!("{:?} x {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let c = kernels::mm(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], c), Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> OpResult {
        let (m, k) = self.mat_dims(a);
        let (n, k2) = self.mat_dims(b);
        if k != k2 {
            return Err(shape_err(
                "matmul_nt",
                self.nodes.len(),
                format!("{:?} x {:?}^T", self.shape(a), self.shape(b)),
            ));
        }
        let c = kernels::mm_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], c), Op::MatMulNt(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> OpResult {
        let (m, n) = self.mat_dims(a);
        let t = kernels::transpose(self.value(a).data(), m, n);
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(vec![n, m], t), Op::Transpose(a), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> OpResult {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                "add",
                self.nodes.len(),
                format!("{:?} + {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Add(a, b), rg))
    }

    /// Adds `bias` (numel == last dim of `a`) to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> OpResult {
        let cols = self.value(a).cols();
        if self.value(bias).numel() != cols {
            return Err(shape_err(
                "add_bias",
                self.nodes.len(),
                format!("{:?} + bias {:?}", self.shape(a), self.shape(bias)),
            ));
        }
        let b = self.value(bias).data();
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(cols) {
            for (o, bj) in row.iter_mut().zip(b) {
                *o += bj;
            }
        }
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(Tensor::from_parts(shape, out), Op::AddBias(a, bias), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> OpResult {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                "mul",
                self.nodes.len(),
                format!("{:?} * {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> OpResult {
        let out: Vec<f64> = self.value(a).data().iter().map(|x| x * s).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Scale(a, s), rg))
    }

    /// Softmax over the last dimension.
    pub fn softmax(&mut self, a: Var) -> OpResult {
        let cols = self.value(a).cols();
        let out = kernels::softmax_rows(self.value(a).data(), cols);
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Softmax(a), rg))
    }

    pub fn log_softmax(&mut self, a: Var) -> OpResult {
        let cols = self.value(a).cols();
        let out = kernels::log_softmax_rows(self.value(a).data(), cols);
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(shape, out), Op::LogSoftmax(a), rg))
    }

    /// Row-wise layer normalization with learned gain and shift.
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> OpResult {
        let cols = self.value(x).cols();
        if self.value(gamma).numel() != cols || self.value(beta).numel() != cols {
            return Err(shape_err(
                "layernorm",
                self.nodes.len(),
                format!(
                    "x {:?}, gamma {:?}, beta {:?}",
                    self.shape(x),
                    self.shape(gamma),
                    self.shape(beta)
                ),
            ));
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let xs = self.value(x).data();
        let mut out = vec![0.0; xs.len()];
        let mut stats = Vec::with_capacity(xs.len() / cols.max(1));
        for (row, orow) in xs.chunks(cols).zip(out.chunks_mut(cols)) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let rstd = 1.0 / (var + eps).sqrt();
            for j in 0..cols {
                orow[j] = (row[j] - mean) * rstd * g[j] + b[j];
            }
            stats.push((mean, rstd));
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                stats,
            },
            rg,
        ))
    }

    pub fn gelu(&mut self, a: Var) -> OpResult {
        let out: Vec<f64> = self.value(a).data().iter().map(|&x| kernels::gelu(x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Gelu(a), rg))
    }

    pub fn relu(&mut self, a: Var) -> OpResult {
        let out: Vec<f64> = self.value(a).data().iter().map(|&x| x.max(0.0)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Relu(a), rg))
    }

    /// Gathers rows of `table` (shape `[vocab, d]`).
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> OpResult {
        let (v, d) = self.mat_dims(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(shape_err(
                "embedding",
                self.nodes.len(),
                format!("id {} out of range for table {:?}", bad, self.shape(table)),
            ));
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            Tensor::from_parts(vec![ids.len(), d], out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> OpResult {
        let cols = parts.first().map(|&p| self.value(p).cols()).unwrap_or(0);
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(shape_err(
                    "concat_rows",
                    self.nodes.len(),
                    format!("part {:?} has {} cols, expected {}", p, self.value(p).cols(), cols),
                ));
            }
            out.extend_from_slice(self.value(p).data());
            rows += self.value(p).rows();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::from_parts(vec![rows, cols], out),
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> OpResult {
        let rows = parts.first().map(|&p| self.value(p).rows()).unwrap_or(0);
        if let Some(&p) = parts.iter().find(|&&p| self.value(p).rows() != rows) {
            return Err(shape_err(
                "concat_cols",
                self.nodes.len(),
                format!("part {:?} has {} rows, expected {}", p, self.value(p).rows(), rows),
            ));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = vec![0.0; rows * total];
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            let c = t.cols();
            for r in 0..rows {
                out[r * total + off..r * total + off + c].copy_from_slice(t.row_slice(r));
            }
            off += c;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::from_parts(vec![rows, total], out),
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> OpResult {
        let (r, c) = self.mat_dims(x);
        if start + len > r {
            return Err(shape_err(
                "slice_rows",
                self.nodes.len(),
                format!("rows {}..{} of {:?}", start, start + len, self.shape(x)),
            ));
        }
        let out = self.value(x).data()[start * c..(start + len) * c].to_vec();
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::from_parts(vec![len, c], out),
            Op::SliceRows { x, start },
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> OpResult {
        let (r, c) = self.mat_dims(x);
        if start + len > c {
            return Err(shape_err(
                "slice_cols",
                self.nodes.len(),
                format!("cols {}..{} of {:?}", start, start + len, self.shape(x)),
            ));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(r * len);
        for row in 0..r {
            out.extend_from_slice(&src[row * c + start..row * c + start + len]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::from_parts(vec![r, len], out),
            Op::SliceCols { x, start },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> OpResult {
        let t = self.value(x).reshaped(shape.to_vec()).map_err(|_| {
            shape_err(
                "reshape",
                self.nodes.len(),
                format!("{:?} -> {:?}", self.shape(x), shape),
            )
        })?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> OpResult {
        let (n, v) = self.mat_dims(logits);
        if n != targets.len() || n == 0 || targets.iter().any(|&t| t >= v) {
            return Err(shape_err(
                "cross_entropy",
                self.nodes.len(),
                format!("logits {:?} with {} targets", self.shape(logits), targets.len()),
            ));
        }
        let probs = kernels::softmax_rows(self.value(logits).data(), v);
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = self.value(logits).row_slice(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
        }
        loss /= n as f64;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> OpResult {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(s), Op::Sum(a), rg))
    }

    /// Reverse sweep from a scalar output. Returns gradients for every leaf
    /// that requires them; interior gradients are released as the sweep
    /// passes them.
    pub fn backward(&self, out: Var) -> Result<Gradients, NumericError> {
        if self.value(out).numel() != 1 {
            return Err(NumericError::NonScalar {
                shape: self.shape(out).to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(vec![1.0]);
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.rg(v) {
            return;
        }
        let n = self.value(v).numel();
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.mat_dims(*a);
                let n = self.value(*b).cols();
                let bv = self.value(*b).data();
                let av = self.value(*a).data();
                self.accumulate(grads, *a, |ga| kernels::mm_nt_acc(g, bv, ga, m, n, k));
                self.accumulate(grads, *b, |gb| kernels::mm_tn_acc(av, g, gb, m, k, n));
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = self.mat_dims(*a);
                let n = self.value(*b).rows();
                let bv = self.value(*b).data();
                let av = self.value(*a).data();
                self.accumulate(grads, *a, |ga| kernels::mm_acc(g, bv, ga, m, n, k));
                self.accumulate(grads, *b, |gb| kernels::mm_tn_acc(g, av, gb, m, n, k));
            }
            Op::Transpose(a) => {
                let (m, n) = self.mat_dims(*a);
                let t = kernels::transpose(g, n, m);
                self.accumulate(grads, *a, |ga| add_into(ga, &t));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| add_into(ga, g));
                self.accumulate(grads, *b, |gb| add_into(gb, g));
            }
            Op::AddBias(a, bias) => {
                self.accumulate(grads, *a, |ga| add_into(ga, g));
                let cols = self.value(*bias).numel();
                self.accumulate(grads, *bias, |gb| {
                    for row in g.chunks(cols) {
                        add_into(gb, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                self.accumulate(grads, *a, |ga| {
                    for ((o, gi), bi) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gi * bi;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((o, gi), ai) in gb.iter_mut().zip(g).zip(av) {
                        *o += gi * ai;
                    }
                });
            }
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, |ga| {
                    for (o, gi) in ga.iter_mut().zip(g) {
                        *o += gi * s;
                    }
                });
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let cols = node.value.cols();
                self.accumulate(grads, *a, |ga| {
                    for ((orow, grow), yrow) in
                        ga.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols))
                    {
                        let s = dot(grow, yrow);
                        for j in 0..cols {
                            orow[j] += yrow[j] * (grow[j] - s);
                        }
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let y = node.value.data();
                let cols = node.value.cols();
                self.accumulate(grads, *a, |ga| {
                    for ((orow, grow), yrow) in
                        ga.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols))
                    {
                        let s: f64 = grow.iter().sum();
                        for j in 0..cols {
                            orow[j] += grow[j] - yrow[j].exp() * s;
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                stats,
            } => {
                let cols = node.value.cols();
                let xs = self.value(*x).data();
                let gm = self.value(*gamma).data();
                let n = cols as f64;
                self.accumulate(grads, *gamma, |gg| {
                    for ((xrow, grow), &(mean, rstd)) in
                        xs.chunks(cols).zip(g.chunks(cols)).zip(stats)
                    {
                        for j in 0..cols {
                            gg[j] += grow[j] * (xrow[j] - mean) * rstd;
                        }
                    }
                });
                self.accumulate(grads, *beta, |gb| {
                    for grow in g.chunks(cols) {
                        add_into(gb, grow);
                    }
                });
                self.accumulate(grads, *x, |gx| {
                    let mut dxhat = vec![0.0; cols];
                    for (((orow, xrow), grow), &(mean, rstd)) in gx
                        .chunks_mut(cols)
                        .zip(xs.chunks(cols))
                        .zip(g.chunks(cols))
                        .zip(stats)
                    {
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for j in 0..cols {
                            dxhat[j] = grow[j] * gm[j];
                            m1 += dxhat[j];
                            m2 += dxhat[j] * (xrow[j] - mean) * rstd;
                        }
                        m1 /= n;
                        m2 /= n;
                        for j in 0..cols {
                            let xhat = (xrow[j] - mean) * rstd;
                            orow[j] += rstd * (dxhat[j] - m1 - xhat * m2);
                        }
                    }
                });
            }
            Op::Gelu(a) => {
                let xs = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for ((o, gi), &x) in ga.iter_mut().zip(g).zip(xs) {
                        *o += gi * kernels::gelu_grad(x);
                    }
                });
            }
            Op::Relu(a) => {
                let xs = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for ((o, gi), &x) in ga.iter_mut().zip(g).zip(xs) {
                        if x > 0.0 {
                            *o += gi;
                        }
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let d = self.value(*table).cols();
                self.accumulate(grads, *table, |gt| {
                    for (r, &i) in ids.iter().enumerate() {
                        add_into(&mut gt[i * d..(i + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    self.accumulate(grads, p, |gp| add_into(gp, &g[off..off + n]));
                    off += n;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut off = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    self.accumulate(grads, p, |gp| {
                        for r in 0..rows {
                            add_into(
                                &mut gp[r * c..(r + 1) * c],
                                &g[r * total + off..r * total + off + c],
                            );
                        }
                    });
                    off += c;
                }
            }
            Op::SliceRows { x, start } => {
                let c = self.value(*x).cols();
                self.accumulate(grads, *x, |gx| {
                    add_into(&mut gx[start * c..start * c + g.len()], g)
                });
            }
            Op::SliceCols { x, start } => {
                let c = self.value(*x).cols();
                let len = node.value.cols();
                self.accumulate(grads, *x, |gx| {
                    for (r, grow) in g.chunks(len).enumerate() {
                        add_into(&mut gx[r * c + start..r * c + start + len], grow);
                    }
                });
            }
            Op::Reshape(a) => {
                self.accumulate(grads, *a, |ga| add_into(ga, g));
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let v = self.value(*logits).cols();
                let scale = g[0] / targets.len() as f64;
                self.accumulate(grads, *logits, |gl| {
                    for (r, &t) in targets.iter().enumerate() {
                        let row = &mut gl[r * v..(r + 1) * v];
                        for j in 0..v {
                            row[j] += probs[r * v + j] * scale;
                        }
                        row[t] -= scale;
                    }
                });
            }
            Op::Sum(a) => {
                let s = g[0];
                self.accumulate(grads, *a, |ga| {
                    for o in ga.iter_mut() {
                        *o += s;
                    }
                });
            }
        }
    }
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
