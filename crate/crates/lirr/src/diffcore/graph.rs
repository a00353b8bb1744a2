//! Recording tape for reverse-mode differentiation.
//!
//! Operations append nodes to an explicit graph; `backward` replays the
//! tape in reverse and accumulates chain-rule contributions. There is no
//! global state: independent graphs can run on separate threads.

use thiserror::Error;

use super::tensor::Tensor;

/// Index of a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DiffError {
    #[error("{op}: incompatible shapes {lhs_rows}x{lhs_cols} and {rhs_rows}x{rhs_cols}")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("label {label} at row {row} out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },
    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("{op}: coefficient must be nonnegative, got {value}")]
    NegativeCoefficient { op: &'static str, value: f64 },
    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
}

#[derive(Clone, Debug)]
enum Op {
    Param,
    Input,
    Matmul,
    Add,
    /// n x p plus a 1 x p bias row broadcast over rows.
    AddRow,
    Sub,
    Mul,
    Relu,
    Tanh,
    Sigmoid,
    /// Elementwise signum with sign(0) = 0; derivative is zero everywhere.
    Sign,
    SoftmaxRows,
    Transpose,
    ConcatCols,
    RowNormalize {
        eps: f64,
    },
    Scale {
        factor: f64,
    },
    Mean,
    Sum,
    SoftmaxCrossEntropy {
        labels: Vec<usize>,
    },
    L1Loss,
    BceLoss,
    GradReverse {
        lambda: f64,
    },
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
}

/// Append-only computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

/// Gradient map produced by `Graph::backward`.
///
/// Every parameter node has an entry (zeros when no gradient reached it);
/// other nodes have entries only if gradient flowed to them.
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.by_node.get(id.0).and_then(|g| g.as_ref())
    }
}

const BCE_EPS: f64 = 1e-12;

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn param_ids(&self) -> &[NodeId] {
        &self.params
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, value });
        id
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        let id = self.push(Op::Param, vec![], value);
        self.params.push(id);
        id
    }

    /// Registers a non-trainable leaf (data, labels, constants).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, vec![], value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                lhs_rows: ar,
                lhs_cols: ac,
                rhs_rows: br,
                rhs_cols: bc,
            });
        }
        let value = matmul_raw(self.value(a), self.value(b));
        Ok(self.push(Op::Matmul, vec![a, b], value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary_same_shape("add", Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary_same_shape("sub", Op::Sub, a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary_same_shape("mul", Op::Mul, a, b, |x, y| x * y)
    }

    fn binary_same_shape(
        &mut self,
        name: &'static str,
        op: Op,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId, DiffError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if (ar, ac) != (br, bc) {
            return Err(DiffError::ShapeMismatch {
                op: name,
                lhs_rows: ar,
                lhs_cols: ac,
                rhs_rows: br,
                rhs_cols: bc,
            });
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let value = Tensor::from_vec(ar, ac, data);
        Ok(self.push(op, vec![a, b], value))
    }

    /// Adds a 1 x p bias row to every row of an n x p tensor.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, DiffError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(bias).shape();
        if br != 1 || bc != ac {
            return Err(DiffError::ShapeMismatch {
                op: "add_row",
                lhs_rows: ar,
                lhs_cols: ac,
                rhs_rows: br,
                rhs_cols: bc,
            });
        }
        let b = self.value(bias).data().to_vec();
        let mut value = self.value(a).clone();
        for i in 0..ar {
            for j in 0..ac {
                let v = value.get(i, j) + b[j];
                value.set(i, j, v);
            }
        }
        Ok(self.push(Op::AddRow, vec![a, bias], value))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.map_unary(a, |x| x.max(0.0));
        self.push(Op::Relu, vec![a], value)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.map_unary(a, f64::tanh);
        self.push(Op::Tanh, vec![a], value)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.map_unary(a, |x| 1.0 / (1.0 + (-x).exp()));
        self.push(Op::Sigmoid, vec![a], value)
    }

    /// Signum with sign(0) = 0. Piecewise constant, so its derivative is zero.
    pub fn sign(&mut self, a: NodeId) -> NodeId {
        let value = self.map_unary(a, |x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        });
        self.push(Op::Sign, vec![a], value)
    }

    fn map_unary(&self, a: NodeId, f: impl Fn(f64) -> f64) -> Tensor {
        let src = self.value(a);
        let data = src.data().iter().map(|x| f(*x)).collect();
        Tensor::from_vec(src.rows(), src.cols(), data)
    }

    /// Row-wise softmax with the usual max-shift for stability.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let value = softmax_raw(self.value(a));
        self.push(Op::SoftmaxRows, vec![a], value)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let src = self.value(a);
        let value = Tensor::from_fn(src.cols(), src.rows(), |i, j| src.get(j, i));
        self.push(Op::Transpose, vec![a], value)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ar != br {
            return Err(DiffError::ShapeMismatch {
                op: "concat_cols",
                lhs_rows: ar,
                lhs_cols: ac,
                rhs_rows: br,
                rhs_cols: bc,
            });
        }
        let left = self.value(a);
        let right = self.value(b);
        let value = Tensor::from_fn(ar, ac + bc, |i, j| {
            if j < ac {
                left.get(i, j)
            } else {
                right.get(i, j - ac)
            }
        });
        Ok(self.push(Op::ConcatCols, vec![a, b], value))
    }

    /// Rescales every row to unit norm; rows of norm ~0 get an epsilon guard.
    pub fn row_normalize(&mut self, a: NodeId) -> NodeId {
        let eps = 1e-12;
        let src = self.value(a);
        let mut value = src.clone();
        for i in 0..src.rows() {
            let norm = row_norm(src.row(i));
            for j in 0..src.cols() {
                value.set(i, j, src.get(i, j) / (norm + eps));
            }
        }
        self.push(Op::RowNormalize { eps }, vec![a], value)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let value = self.map_unary(a, |x| x * factor);
        self.push(Op::Scale { factor }, vec![a], value)
    }

    /// Mean over all entries, producing a 1x1 tensor.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let src = self.value(a);
        let value = Tensor::scalar(src.data().iter().sum::<f64>() / src.len() as f64);
        self.push(Op::Mean, vec![a], value)
    }

    /// Sum over all entries, producing a 1x1 tensor.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let src = self.value(a);
        let value = Tensor::scalar(src.data().iter().sum::<f64>());
        self.push(Op::Sum, vec![a], value)
    }

    /// Mean over rows of -log softmax(logits)[label].
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
    ) -> Result<NodeId, DiffError> {
        let (n, c) = self.value(logits).shape();
        if labels.len() != n {
            return Err(DiffError::LabelCount { expected: n, got: labels.len() });
        }
        for (row, &label) in labels.iter().enumerate() {
            if label >= c {
                return Err(DiffError::LabelOutOfRange { row, label, classes: c });
            }
        }
        let probs = softmax_raw(self.value(logits));
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            total -= probs.get(i, label).max(f64::MIN_POSITIVE).ln();
        }
        let value = Tensor::scalar(total / n as f64);
        Ok(self.push(Op::SoftmaxCrossEntropy { labels: labels.to_vec() }, vec![logits], value))
    }

    /// Mean absolute error; the subgradient at zero residuals is 0.
    pub fn l1_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, DiffError> {
        let (pr, pc) = self.value(pred).shape();
        let (tr, tc) = self.value(target).shape();
        if (pr, pc) != (tr, tc) {
            return Err(DiffError::ShapeMismatch {
                op: "l1_loss",
                lhs_rows: pr,
                lhs_cols: pc,
                rhs_rows: tr,
                rhs_cols: tc,
            });
        }
        let total: f64 = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .map(|(p, t)| (p - t).abs())
            .sum();
        let value = Tensor::scalar(total / (pr * pc) as f64);
        Ok(self.push(Op::L1Loss, vec![pred, target], value))
    }

    /// Mean binary cross-entropy of probabilities against 0/1 targets.
    /// Probabilities are clamped to [1e-12, 1 - 1e-12] inside the logs.
    pub fn bce_loss(&mut self, probs: NodeId, targets: NodeId) -> Result<NodeId, DiffError> {
        let (pr, pc) = self.value(probs).shape();
        let (tr, tc) = self.value(targets).shape();
        if (pr, pc) != (tr, tc) {
            return Err(DiffError::ShapeMismatch {
                op: "bce_loss",
                lhs_rows: pr,
                lhs_cols: pc,
                rhs_rows: tr,
                rhs_cols: tc,
            });
        }
        let mut total = 0.0;
        for (p, y) in self.value(probs).data().iter().zip(self.value(targets).data()) {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        let value = Tensor::scalar(total / (pr * pc) as f64);
        Ok(self.push(Op::BceLoss, vec![probs, targets], value))
    }

    /// Identity forward; backward multiplies the upstream gradient by -lambda.
    pub fn grad_reverse(&mut self, a: NodeId, lambda: f64) -> Result<NodeId, DiffError> {
        if !(lambda >= 0.0) {
            return Err(DiffError::NegativeCoefficient { op: "grad_reverse", value: lambda });
        }
        let value = self.value(a).clone();
        Ok(self.push(Op::GradReverse { lambda }, vec![a], value))
    }

    /// Reverse pass from a scalar loss. Returns gradients for every node the
    /// loss reaches; parameter nodes always have an entry (zeros if unreached).
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, DiffError> {
        let (lr, lc) = self.value(loss).shape();
        if (lr, lc) != (1, 1) {
            return Err(DiffError::NonScalarLoss { rows: lr, cols: lc });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.backward_node(idx, &upstream, &mut grads);
            grads[idx] = Some(upstream);
        }

        for &pid in &self.params {
            if grads[pid.0].is_none() {
                let (r, c) = self.value(pid).shape();
                grads[pid.0] = Some(Tensor::zeros(r, c));
            }
        }
        Ok(Gradients { by_node: grads })
    }

    fn backward_node(&self, idx: usize, upstream: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let acc = |grads: &mut [Option<Tensor>], target: NodeId, contribution: Tensor| {
            match &mut grads[target.0] {
                Some(existing) => {
                    for (e, c) in existing.data_mut().iter_mut().zip(contribution.data()) {
                        *e += c;
                    }
                }
                slot @ None => *slot = Some(contribution),
            }
        };
        match &node.op {
            Op::Param | Op::Input => {}
            Op::Matmul => {
                let a = node.inputs[0];
                let b = node.inputs[1];
                let da = matmul_nt(upstream, self.value(b));
                let db = matmul_tn(self.value(a), upstream);
                acc(grads, a, da);
                acc(grads, b, db);
            }
            Op::Add => {
                acc(grads, node.inputs[0], upstream.clone());
                acc(grads, node.inputs[1], upstream.clone());
            }
            Op::AddRow => {
                acc(grads, node.inputs[0], upstream.clone());
                let cols = upstream.cols();
                let mut bias = Tensor::zeros(1, cols);
                for i in 0..upstream.rows() {
                    for j in 0..cols {
                        let v = bias.get(0, j) + upstream.get(i, j);
                        bias.set(0, j, v);
                    }
                }
                acc(grads, node.inputs[1], bias);
            }
            Op::Sub => {
                acc(grads, node.inputs[0], upstream.clone());
                let mut neg = upstream.clone();
                for v in neg.data_mut() {
                    *v = -*v;
                }
                acc(grads, node.inputs[1], neg);
            }
            Op::Mul => {
                let a = node.inputs[0];
                let b = node.inputs[1];
                let da = elementwise(upstream, self.value(b), |u, y| u * y);
                let db = elementwise(upstream, self.value(a), |u, x| u * x);
                acc(grads, a, da);
                acc(grads, b, db);
            }
            Op::Relu => {
                let x = self.value(node.inputs[0]);
                let g = elementwise(upstream, x, |u, x| if x > 0.0 { u } else { 0.0 });
                acc(grads, node.inputs[0], g);
            }
            Op::Tanh => {
                let g = elementwise(upstream, &node.value, |u, y| u * (1.0 - y * y));
                acc(grads, node.inputs[0], g);
            }
            Op::Sigmoid => {
                let g = elementwise(upstream, &node.value, |u, s| u * s * (1.0 - s));
                acc(grads, node.inputs[0], g);
            }
            Op::Sign => {}
            Op::SoftmaxRows => {
                let p = &node.value;
                let mut g = Tensor::zeros(p.rows(), p.cols());
                for i in 0..p.rows() {
                    let dot: f64 =
                        (0..p.cols()).map(|j| upstream.get(i, j) * p.get(i, j)).sum();
                    for j in 0..p.cols() {
                        g.set(i, j, p.get(i, j) * (upstream.get(i, j) - dot));
                    }
                }
                acc(grads, node.inputs[0], g);
            }
            Op::Transpose => {
                let g = Tensor::from_fn(upstream.cols(), upstream.rows(), |i, j| {
                    upstream.get(j, i)
                });
                acc(grads, node.inputs[0], g);
            }
            Op::ConcatCols => {
                let a = node.inputs[0];
                let b = node.inputs[1];
                let ac = self.value(a).cols();
                let bc = self.value(b).cols();
                let ga = Tensor::from_fn(upstream.rows(), ac, |i, j| upstream.get(i, j));
                let gb = Tensor::from_fn(upstream.rows(), bc, |i, j| upstream.get(i, j + ac));
                acc(grads, a, ga);
                acc(grads, b, gb);
            }
            Op::RowNormalize { eps } => {
                let x = self.value(node.inputs[0]);
                let mut g = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let row = x.row(i);
                    let norm = row_norm(row);
                    let s = norm + eps;
                    let dot: f64 =
                        (0..x.cols()).map(|j| row[j] * upstream.get(i, j)).sum();
                    for j in 0..x.cols() {
                        let mut v = upstream.get(i, j) / s;
                        if norm > *eps {
                            v -= row[j] * dot / (s * s * norm);
                        }
                        g.set(i, j, v);
                    }
                }
                acc(grads, node.inputs[0], g);
            }
            Op::Scale { factor } => {
                let g = elementwise(upstream, upstream, |u, _| u * factor);
                acc(grads, node.inputs[0], g);
            }
            Op::Mean => {
                let x = self.value(node.inputs[0]);
                let u = upstream.item() / x.len() as f64;
                acc(grads, node.inputs[0], Tensor::filled(x.rows(), x.cols(), u));
            }
            Op::Sum => {
                let x = self.value(node.inputs[0]);
                acc(grads, node.inputs[0], Tensor::filled(x.rows(), x.cols(), upstream.item()));
            }
            Op::SoftmaxCrossEntropy { labels } => {
                let logits = self.value(node.inputs[0]);
                let n = logits.rows() as f64;
                let mut g = softmax_raw(logits);
                for (i, &label) in labels.iter().enumerate() {
                    let v = g.get(i, label) - 1.0;
                    g.set(i, label, v);
                }
                let u = upstream.item();
                for v in g.data_mut() {
                    *v *= u / n;
                }
                acc(grads, node.inputs[0], g);
            }
            Op::L1Loss => {
                let pred = self.value(node.inputs[0]);
                let target = self.value(node.inputs[1]);
                let n = pred.len() as f64;
                let u = upstream.item();
                let gp = elementwise(pred, target, |p, t| {
                    let r = p - t;
                    if r > 0.0 {
                        u / n
                    } else if r < 0.0 {
                        -u / n
                    } else {
                        0.0
                    }
                });
                let mut gt = gp.clone();
                for v in gt.data_mut() {
                    *v = -*v;
                }
                acc(grads, node.inputs[0], gp);
                acc(grads, node.inputs[1], gt);
            }
            Op::BceLoss => {
                let probs = self.value(node.inputs[0]);
                let targets = self.value(node.inputs[1]);
                let n = probs.len() as f64;
                let u = upstream.item();
                let gp = elementwise(probs, targets, |p, y| {
                    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                    u * (p - y) / (p * (1.0 - p) * n)
                });
                let gt = elementwise(probs, targets, |p, _| {
                    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                    u * ((1.0 - p).ln() - p.ln()) / n
                });
                acc(grads, node.inputs[0], gp);
                acc(grads, node.inputs[1], gt);
            }
            Op::GradReverse { lambda } => {
                let mut g = upstream.clone();
                for v in g.data_mut() {
                    *v *= -lambda;
                }
                acc(grads, node.inputs[0], g);
            }
        }
    }
}

fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

pub(crate) fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.cols(), b.rows());
    let m = a.rows();
    let n = b.cols();
    let mut out = Tensor::zeros(m, n);
    let bd = b.data();
    for i in 0..m {
        let arow = a.row(i);
        let orow = &mut out.data_mut()[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let brow = &bd[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// a . b^T
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.cols(), b.cols());
    let m = a.rows();
    let n = b.rows();
    let mut out = Tensor::zeros(m, n);
    for i in 0..m {
        let arow = a.row(i);
        let orow = &mut out.data_mut()[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = b.row(j);
            *o = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// a^T . b
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.rows(), b.rows());
    let (k, m) = a.shape();
    let n = b.cols();
    let mut out = Tensor::zeros(m, n);
    let bd = b.data();
    for l in 0..k {
        let arow = a.row(l);
        let brow = &bd[l * n..(l + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out.data_mut()[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn softmax_raw(logits: &Tensor) -> Tensor {
    let (n, c) = logits.shape();
    let mut out = Tensor::zeros(n, c);
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..c {
            let e = (row[j] - max).exp();
            out.set(i, j, e);
            denom += e;
        }
        for j in 0..c {
            let v = out.get(i, j) / denom;
            out.set(i, j, v);
        }
    }
    out
}
