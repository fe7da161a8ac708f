//! Reverse-mode autodiff over a recorded tape of matrix-valued primitives.
//!
//! The tape is define-by-run: each builder computes its forward value
//! immediately and records the operation. [`Tape::backward`] replays the
//! record in reverse, accumulating adjoints. Nodes are appended in
//! topological order by construction (inputs always precede users), and the
//! reverse sweep follows one fixed order, so gradients are bit-reproducible.
//!
//! One tape serves one training step; it is rebuilt per mini-batch.

use super::matrix::{matmul_nn, matmul_nt, matmul_tn, Matrix};
use crate::error::{Error, Result};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf { requires_grad: bool },
    /// A * B
    MatMulNN(NodeId, NodeId),
    /// A * B^T
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Elementwise product.
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Elementwise addition of a constant (the adjoint passes through
    /// unchanged, so the constant is not recorded).
    AddConst(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Clamp(NodeId, f64, f64),
    /// act(input_ij - shift_j) with shift a 1 x n row; slope 0 is ReLU.
    ShiftedActivation {
        input: NodeId,
        shift: NodeId,
        slope: f64,
    },
    /// m x n -> m x 1 row sums.
    RowSum(NodeId),
    /// m x n -> m x 1 stable log-sum-exp per row.
    RowLogSumExp(NodeId),
    /// m x n -> 1 x 1 mean of all entries.
    Mean(NodeId),
    /// Elementwise product with a 1 x 1 node.
    MulScalar(NodeId, NodeId),
    /// Elementwise sum with a 1 x 1 node.
    AddScalar(NodeId, NodeId),
    /// Horizontal concatenation of same-height nodes.
    ConcatCols(Vec<NodeId>),
}

struct Node {
    op: Op,
    value: Matrix,
    adjoint: Option<Matrix>,
}

/// Recorded computation with forward values and reverse accumulators.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            adjoint: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Adjoint accumulated for `id` by the last `backward` call.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.nodes[id.0].adjoint.as_ref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> NodeId {
        self.push(Op::Leaf { requires_grad }, value)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.leaf(value, false)
    }

    /// A * B.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ar, ac) = self.nodes[a.0].value.shape();
        let (br, _bc) = self.nodes[b.0].value.shape();
        assert_eq!(ac, br, "matmul: {ar}x{ac} * {br}x{_bc}");
        let v = matmul_nn(&self.nodes[a.0].value, &self.nodes[b.0].value);
        self.push(Op::MatMulNN(a, b), v)
    }

    /// A * B^T.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (_, ac) = self.nodes[a.0].value.shape();
        let (_, bc) = self.nodes[b.0].value.shape();
        assert_eq!(ac, bc, "matmul_nt: inner dims {ac} vs {bc}");
        let v = matmul_nt(&self.nodes[a.0].value, &self.nodes[b.0].value);
        self.push(Op::MatMulNT(a, b), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0]
            .value
            .checked_add(&self.nodes[b.0].value)
            .expect("tape add: shape mismatch");
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0]
            .value
            .checked_sub(&self.nodes[b.0].value)
            .expect("tape sub: shape mismatch");
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0]
            .value
            .hadamard(&self.nodes[b.0].value)
            .expect("tape mul: shape mismatch");
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.scale(c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let mut v = self.nodes[a.0].value.clone();
        for x in v.data_mut() {
            *x += c;
        }
        self.push(Op::AddConst(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let mut v = self.nodes[a.0].value.clone();
        for x in v.data_mut() {
            *x = x.exp();
        }
        self.push(Op::Exp(a), v)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let mut v = self.nodes[a.0].value.clone();
        for x in v.data_mut() {
            *x *= *x;
        }
        self.push(Op::Square(a), v)
    }

    /// Clamp to `[lo, hi]`; gradient passes only strictly inside the interval.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let mut v = self.nodes[a.0].value.clone();
        for x in v.data_mut() {
            *x = x.clamp(lo, hi);
        }
        self.push(Op::Clamp(a, lo, hi), v)
    }

    /// act(input_ij - shift_j), shift broadcast across rows. slope=0 is ReLU;
    /// the non-positive branch uses the slope, including at exactly zero.
    pub fn shifted_activation(&mut self, input: NodeId, shift: NodeId, slope: f64) -> NodeId {
        let (m, n) = self.nodes[input.0].value.shape();
        let (sr, sc) = self.nodes[shift.0].value.shape();
        assert_eq!((sr, sc), (1, n), "shifted_activation: shift must be 1x{n}");
        let mut v = Matrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let t = self.nodes[input.0].value.get(i, j) - self.nodes[shift.0].value.get(0, j);
                v.set(i, j, if t > 0.0 { t } else { slope * t });
            }
        }
        self.push(
            Op::ShiftedActivation {
                input,
                shift,
                slope,
            },
            v,
        )
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let (m, _) = self.nodes[a.0].value.shape();
        let mut v = Matrix::zeros(m, 1);
        for i in 0..m {
            v.set(i, 0, self.nodes[a.0].value.row(i).iter().sum());
        }
        self.push(Op::RowSum(a), v)
    }

    /// Stable per-row log-sum-exp. Rows may contain -inf entries; a row of
    /// all -inf yields -inf (callers decide whether that is an error).
    pub fn row_logsumexp(&mut self, a: NodeId) -> NodeId {
        let (m, _) = self.nodes[a.0].value.shape();
        let mut v = Matrix::zeros(m, 1);
        for i in 0..m {
            let row = self.nodes[a.0].value.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let val = if max == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
            };
            v.set(i, 0, val);
        }
        self.push(Op::RowLogSumExp(a), v)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.nodes[a.0].value.shape();
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        let v = Matrix::scalar(s / (m * n) as f64);
        self.push(Op::Mean(a), v)
    }

    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> NodeId {
        assert_eq!(self.nodes[s.0].value.shape(), (1, 1), "mul_scalar: s must be 1x1");
        let c = self.nodes[s.0].value.get(0, 0);
        let v = self.nodes[a.0].value.scale(c);
        self.push(Op::MulScalar(a, s), v)
    }

    pub fn add_scalar(&mut self, a: NodeId, s: NodeId) -> NodeId {
        assert_eq!(self.nodes[s.0].value.shape(), (1, 1), "add_scalar: s must be 1x1");
        let c = self.nodes[s.0].value.get(0, 0);
        let mut v = self.nodes[a.0].value.clone();
        for x in v.data_mut() {
            *x += c;
        }
        self.push(Op::AddScalar(a, s), v)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let m = self.nodes[parts[0].0].value.rows();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut v = Matrix::zeros(m, total);
        let mut off = 0;
        for p in parts {
            let pv = &self.nodes[p.0].value;
            assert_eq!(pv.rows(), m, "concat_cols: row mismatch");
            for i in 0..m {
                let dst = v.row_mut(i);
                dst[off..off + pv.cols()].copy_from_slice(pv.row(i));
            }
            off += pv.cols();
        }
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    // True when a reverse sweep must propagate into this node.
    fn needs_grad(&self, id: NodeId) -> bool {
        !matches!(self.nodes[id.0].op, Op::Leaf {
            requires_grad: false
        })
    }

    fn accumulate(&mut self, id: NodeId, delta: Matrix) {
        if !self.needs_grad(id) {
            return;
        }
        match &mut self.nodes[id.0].adjoint {
            Some(adj) => {
                for (a, d) in adj.data_mut().iter_mut().zip(delta.data()) {
                    *a += d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    /// Reverse sweep from a scalar (1x1) output node.
    ///
    /// After it returns, `grad` holds d(output)/d(node) for every node that
    /// influences the output; the output's own adjoint is exactly 1.
    pub fn backward(&mut self, output: NodeId) -> Result<()> {
        if self.nodes[output.0].value.shape() != (1, 1) {
            let (r, c) = self.nodes[output.0].value.shape();
            return Err(Error::shape("backward", "1x1 scalar output", format!("{r}x{c}")));
        }
        for node in &mut self.nodes {
            node.adjoint = None;
        }
        self.nodes[output.0].adjoint = Some(Matrix::scalar(1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = self.nodes[i].adjoint.take() else {
                continue;
            };
            match &self.nodes[i].op {
                Op::Leaf { .. } => {}
                &Op::MatMulNN(a, b) => {
                    if self.needs_grad(a) {
                        let da = matmul_nt(&g, &self.nodes[b.0].value);
                        self.accumulate(a, da);
                    }
                    if self.needs_grad(b) {
                        let db = matmul_tn(&self.nodes[a.0].value, &g);
                        self.accumulate(b, db);
                    }
                }
                &Op::MatMulNT(a, b) => {
                    if self.needs_grad(a) {
                        let da = matmul_nn(&g, &self.nodes[b.0].value);
                        self.accumulate(a, da);
                    }
                    if self.needs_grad(b) {
                        let db = matmul_tn(&g, &self.nodes[a.0].value);
                        self.accumulate(b, db);
                    }
                }
                &Op::Add(a, b) => {
                    self.accumulate(a, g.clone());
                    self.accumulate(b, g.clone());
                }
                &Op::Sub(a, b) => {
                    self.accumulate(a, g.clone());
                    self.accumulate(b, g.scale(-1.0));
                }
                &Op::Mul(a, b) => {
                    let da = g.hadamard(&self.nodes[b.0].value).unwrap();
                    let db = g.hadamard(&self.nodes[a.0].value).unwrap();
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                &Op::Scale(a, c) => self.accumulate(a, g.scale(c)),
                &Op::AddConst(a) => self.accumulate(a, g.clone()),
                &Op::Exp(a) => {
                    let da = g.hadamard(&self.nodes[i].value).unwrap();
                    self.accumulate(a, da);
                }
                &Op::Square(a) => {
                    let da = g.hadamard(&self.nodes[a.0].value).unwrap().scale(2.0);
                    self.accumulate(a, da);
                }
                &Op::Clamp(a, lo, hi) => {
                    let mut da = g.clone();
                    for (d, &x) in da.data_mut().iter_mut().zip(self.nodes[a.0].value.data()) {
                        if !(x > lo && x < hi) {
                            *d = 0.0;
                        }
                    }
                    self.accumulate(a, da);
                }
                &Op::ShiftedActivation {
                    input,
                    shift,
                    slope,
                } => {
                    let (m, n) = g.shape();
                    let mut dinput = Matrix::zeros(m, n);
                    let mut dshift = Matrix::zeros(1, n);
                    for r in 0..m {
                        for c in 0..n {
                            let t = self.nodes[input.0].value.get(r, c) - self.nodes[shift.0].value.get(0, c);
                            let factor = if t > 0.0 { 1.0 } else { slope };
                            let gd = g.get(r, c) * factor;
                            dinput.set(r, c, gd);
                            dshift.set(0, c, dshift.get(0, c) - gd);
                        }
                    }
                    self.accumulate(input, dinput);
                    self.accumulate(shift, dshift);
                }
                &Op::RowSum(a) => {
                    let (m, n) = self.nodes[a.0].value.shape();
                    let mut da = Matrix::zeros(m, n);
                    for r in 0..m {
                        let gr = g.get(r, 0);
                        for c in 0..n {
                            da.set(r, c, gr);
                        }
                    }
                    self.accumulate(a, da);
                }
                &Op::RowLogSumExp(a) => {
                    let (m, n) = self.nodes[a.0].value.shape();
                    let mut da = Matrix::zeros(m, n);
                    for r in 0..m {
                        let gr = g.get(r, 0);
                        let lse = self.nodes[i].value.get(r, 0);
                        if lse == f64::NEG_INFINITY {
                            continue;
                        }
                        for c in 0..n {
                            let x = self.nodes[a.0].value.get(r, c);
                            if x == f64::NEG_INFINITY {
                                continue;
                            }
                            da.set(r, c, gr * (x - lse).exp());
                        }
                    }
                    self.accumulate(a, da);
                }
                &Op::Mean(a) => {
                    let (m, n) = self.nodes[a.0].value.shape();
                    let gd = g.get(0, 0) / (m * n) as f64;
                    let mut da = Matrix::zeros(m, n);
                    for x in da.data_mut() {
                        *x = gd;
                    }
                    self.accumulate(a, da);
                }
                &Op::MulScalar(a, s) => {
                    let c = self.nodes[s.0].value.get(0, 0);
                    let da = g.scale(c);
                    let ds: f64 = g
                        .data()
                        .iter()
                        .zip(self.nodes[a.0].value.data())
                        .map(|(&gv, &av)| gv * av)
                        .sum();
                    self.accumulate(a, da);
                    self.accumulate(s, Matrix::scalar(ds));
                }
                &Op::AddScalar(a, s) => {
                    let ds: f64 = g.data().iter().sum();
                    self.accumulate(a, g.clone());
                    self.accumulate(s, Matrix::scalar(ds));
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let m = g.rows();
                    let mut off = 0;
                    for p in parts {
                        let pc = self.nodes[p.0].value.cols();
                        let mut dp = Matrix::zeros(m, pc);
                        for r in 0..m {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[off..off + pc]);
                        }
                        off += pc;
                        self.accumulate(p, dp);
                    }
                }
            }
            self.nodes[i].adjoint = Some(g);
        }
        Ok(())
    }
}
