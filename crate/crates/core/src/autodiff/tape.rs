use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{matmul_into, matmul_nt_into, matmul_tn_into, Matrix};

/// Denominators below this are clamped in [`Tape::broadcast_div`].
pub const DIV_GUARD: f64 = 1e-12;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which dimension a broadcast vector runs along.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Denominator is `rows x 1`; row `i` is divided by entry `i`.
    Rows,
    /// Denominator is `1 x cols`; column `j` is divided by entry `j`.
    Cols,
}

/// Every primitive the tape can record. Each has a finite-difference test.
pub const PRIMITIVES: &[&str] = &[
    "matmul",
    "transpose",
    "add",
    "sub",
    "scalar_mul",
    "hadamard",
    "row_softmax",
    "row_sum",
    "col_sum",
    "broadcast_div",
    "exp",
    "log",
    "relu_hinge",
    "l2_norm_sq",
    "cosine_similarity",
    "mask_assign",
    "constant_view",
    "gather_rows",
    "softmax_cross_entropy",
];

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Hadamard(Var, Var),
    RowSoftmax(Var),
    RowSum(Var),
    ColSum(Var),
    BroadcastDiv {
        input: Var,
        denom: Var,
        axis: Axis,
    },
    Exp(Var),
    Log(Var),
    ReluHinge(Var),
    L2NormSq(Var),
    Cosine {
        a: Var,
        b: Var,
        a_norms: Vec<f64>,
        b_norms: Vec<f64>,
    },
    MaskAssign {
        input: Var,
        rows: Vec<bool>,
        cols: Vec<bool>,
    },
    ConstantView,
    GatherRows {
        table: Var,
        index: Vec<Option<usize>>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Matrix,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scalar_mul",
            Op::Hadamard(..) => "hadamard",
            Op::RowSoftmax(_) => "row_softmax",
            Op::RowSum(_) => "row_sum",
            Op::ColSum(_) => "col_sum",
            Op::BroadcastDiv { .. } => "broadcast_div",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::ReluHinge(_) => "relu_hinge",
            Op::L2NormSq(_) => "l2_norm_sq",
            Op::Cosine { .. } => "cosine_similarity",
            Op::MaskAssign { .. } => "mask_assign",
            Op::ConstantView => "constant_view",
            Op::GatherRows { .. } => "gather_rows",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Append-only log of a forward pass; nodes are stored in creation order,
/// which is a topological order of the graph.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

fn dim_err(op: &'static str, lhs: &Matrix, rhs: &Matrix) -> Error {
    Error::Dimension {
        op,
        lhs: lhs.shape(),
        rhs: rhs.shape(),
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

    /// Drops every node; all previously issued [`Var`]s become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
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

    /// A differentiable input.
    /// Drops every node recorded after the first `len`, along with all
    /// gradients. Handles to dropped nodes must not be used again.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.grads.clear();
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    /// Gradient accumulated by the last backward pass, if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// First node (in creation order) holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<(Var, &'static str)> {
        self.nodes
            .iter()
            .position(|n| !n.value.is_finite())
            .map(|i| (Var(i), self.nodes[i].op.name()))
    }

    /// Overwrites the forward value of `v` without touching its backward rule.
    /// Shapes must agree.
    pub(crate) fn overwrite_value(&mut self, v: Var, value: Matrix) {
        debug_assert_eq!(self.nodes[v.0].value.shape(), value.shape());
        self.nodes[v.0].value = value;
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        Ok(self.push(value, Op::Transpose(a), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(dim_err(op, va, vb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn scalar_mul(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        Ok(self.push(value, Op::Scale(a, s), rg))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Hadamard(a, b), rg))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        self.softmax_impl(a, None)
    }

    /// Softmax over the entries of each row where `mask` is true; masked-out
    /// entries get probability 0 and a row with no allowed entry becomes zero.
    /// `mask` is row-major with the input's shape.
    pub fn row_softmax_masked(&mut self, a: Var, mask: Vec<bool>) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        if mask.len() != r * c {
            return Err(Error::Dimension {
                op: "row_softmax",
                lhs: (r, c),
                rhs: (mask.len(), 1),
            });
        }
        self.softmax_impl(a, Some(mask))
    }

    fn softmax_impl(&mut self, a: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let xr = x.row(r);
            let allowed = |c: usize| mask.as_ref().map_or(true, |m| m[r * cols + c]);
            let mut max = f64::NEG_INFINITY;
            for (c, &v) in xr.iter().enumerate() {
                if allowed(c) && v > max {
                    max = v;
                }
            }
            if max == f64::NEG_INFINITY {
                continue;
            }
            let orow = out.row_mut(r);
            let mut total = 0.0;
            for (c, &v) in xr.iter().enumerate() {
                if allowed(c) {
                    let e = libm::exp(v - max);
                    orow[c] = e;
                    total += e;
                }
            }
            for o in orow.iter_mut() {
                *o /= total;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::RowSoftmax(a), rg))
    }

    /// `rows x cols -> rows x 1`.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let value = Matrix::from_vec(x.rows(), 1, x.row_sums());
        let rg = self.rg(a);
        Ok(self.push(value, Op::RowSum(a), rg))
    }

    /// `rows x cols -> 1 x cols`.
    pub fn col_sum(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let value = Matrix::from_vec(1, x.cols(), x.col_sums());
        let rg = self.rg(a);
        Ok(self.push(value, Op::ColSum(a), rg))
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let r = self.row_sum(a)?;
        self.col_sum(r)
    }

    /// Divides each row (or column) of `a` by the matching entry of `denom`,
    /// clamping the divisor to at least [`DIV_GUARD`]. The clamped value is
    /// also used in the backward pass, so all-zero rows yield zero gradients.
    pub fn broadcast_div(&mut self, a: Var, denom: Var, axis: Axis) -> Result<Var> {
        let x = self.value(a);
        let d = self.value(denom);
        let (rows, cols) = x.shape();
        let ok = match axis {
            Axis::Rows => d.shape() == (rows, 1),
            Axis::Cols => d.shape() == (1, cols),
        };
        if !ok {
            return Err(dim_err("broadcast_div", x, d));
        }
        let guarded: Vec<f64> = d.as_slice().iter().map(|v| v.max(DIV_GUARD)).collect();
        let value = divide(x, &guarded, axis);
        let rg = self.rg(a) || self.rg(denom);
        Ok(self.push(value, Op::BroadcastDiv { input: a, denom, axis }, rg))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(libm::exp);
        let rg = self.rg(a);
        Ok(self.push(value, Op::Exp(a), rg))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(libm::log);
        let rg = self.rg(a);
        Ok(self.push(value, Op::Log(a), rg))
    }

    /// Elementwise `max(0, x)`.
    pub fn relu_hinge(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        Ok(self.push(value, Op::ReluHinge(a), rg))
    }

    /// Entrywise squared Frobenius norm, `1 x 1`.
    pub fn l2_norm_sq(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).as_slice().iter().map(|x| x * x).sum();
        let rg = self.rg(a);
        Ok(self.push(Matrix::filled(1, 1, s), Op::L2NormSq(a), rg))
    }

    /// Pairwise cosine similarity between the rows of `a` (`p x d`) and the
    /// rows of `b` (`q x d`), giving `p x q`. Two row vectors give `1 x 1`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(dim_err("cosine_similarity", va, vb));
        }
        let norms = |m: &Matrix| -> Vec<f64> {
            (0..m.rows())
                .map(|r| libm::sqrt(m.row(r).iter().map(|x| x * x).sum()))
                .collect()
        };
        let (a_norms, b_norms) = (norms(va), norms(vb));
        if a_norms.iter().chain(&b_norms).any(|&n| n == 0.0) {
            return Err(Error::DegenerateVector {
                op: "cosine_similarity",
            });
        }
        let mut value = Matrix::zeros(va.rows(), vb.rows());
        matmul_nt_into(va, vb, &mut value);
        for i in 0..value.rows() {
            for j in 0..value.cols() {
                value[(i, j)] /= a_norms[i] * b_norms[j];
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            value,
            Op::Cosine {
                a,
                b,
                a_norms,
                b_norms,
            },
            rg,
        ))
    }

    /// Overwrites the selected rows and columns with zeros; no gradient flows
    /// through the overwritten entries.
    pub fn mask_assign(&mut self, a: Var, rows: Vec<bool>, cols: Vec<bool>) -> Result<Var> {
        let x = self.value(a);
        if rows.len() != x.rows() || cols.len() != x.cols() {
            return Err(Error::Dimension {
                op: "mask_assign",
                lhs: x.shape(),
                rhs: (rows.len(), cols.len()),
            });
        }
        let mut value = x.clone();
        zero_masked(&mut value, &rows, &cols);
        let rg = self.rg(a);
        Ok(self.push(value, Op::MaskAssign { input: a, rows, cols }, rg))
    }

    /// Forwards the value of `a` but contributes nothing to its gradient.
    pub fn constant_view(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).clone();
        Ok(self.push(value, Op::ConstantView, false))
    }

    /// Row `r` of the output is `table[index[r]]`, or zeros for `None`.
    pub fn gather_rows(&mut self, table: Var, index: Vec<Option<usize>>) -> Result<Var> {
        let t = self.value(table);
        let cols = t.cols();
        let mut value = Matrix::zeros(index.len(), cols);
        for (r, idx) in index.iter().enumerate() {
            if let Some(i) = *idx {
                if i >= t.rows() {
                    return Err(Error::Dimension {
                        op: "gather_rows",
                        lhs: t.shape(),
                        rhs: (i, cols),
                    });
                }
                value.row_mut(r).copy_from_slice(t.row(i));
            }
        }
        let rg = self.rg(table);
        Ok(self.push(value, Op::GatherRows { table, index }, rg))
    }

    /// Per-row negative log-likelihood `-log softmax(logits[r])[targets[r]]`
    /// as a `rows x 1` column; rows without a target yield 0.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: Vec<Option<usize>>,
    ) -> Result<Var> {
        let x = self.value(logits);
        let (rows, cols) = x.shape();
        if targets.len() != rows || targets.iter().flatten().any(|&t| t >= cols) {
            return Err(Error::Dimension {
                op: "softmax_cross_entropy",
                lhs: (rows, cols),
                rhs: (targets.len(), 1),
            });
        }
        let mut probs = Matrix::zeros(rows, cols);
        let mut nll = Matrix::zeros(rows, 1);
        for (r, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            let xr = x.row(r);
            let max = xr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pr = probs.row_mut(r);
            let mut total = 0.0;
            for (p, &v) in pr.iter_mut().zip(xr) {
                *p = libm::exp(v - max);
                total += *p;
            }
            for p in pr.iter_mut() {
                *p /= total;
            }
            nll[(r, 0)] = libm::log(total) + max - xr[t];
        }
        let rg = self.rg(logits);
        Ok(self.push(
            nll,
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            },
            rg,
        ))
    }

    /// Reverse pass from a `1 x 1` root seeded with 1.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(Error::Dimension {
                op: "backward",
                lhs: shape,
                rhs: (1, 1),
            });
        }
        self.backward_with_seed(root, Matrix::filled(1, 1, 1.0))
    }

    /// Reverse pass from `root` with an explicit upstream gradient.
    /// Gradients are reset before the pass and accumulate across consumers.
    pub fn backward_with_seed(&mut self, root: Var, seed: Matrix) -> Result<()> {
        if seed.shape() != self.value(root).shape() {
            return Err(dim_err("backward", self.value(root), &seed));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        if self.rg(root) {
            grads[root.0] = Some(seed);
        }
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf | Op::Constant | Op::ConstantView => {}
            Op::MatMul(a, b) => {
                if rg(*a) {
                    let (ar, ac) = val(*a).shape();
                    let mut ga = Matrix::zeros(ar, ac);
                    matmul_nt_into(g, val(*b), &mut ga);
                    accumulate(grads, *a, ga);
                }
                if rg(*b) {
                    let (br, bc) = val(*b).shape();
                    let mut gb = Matrix::zeros(br, bc);
                    matmul_tn_into(val(*a), g, &mut gb);
                    accumulate(grads, *b, gb);
                }
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::Add(a, b) => {
                if rg(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if rg(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if rg(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if rg(*b) {
                    accumulate(grads, *b, g.map(|x| -x));
                }
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.map(|x| x * s)),
            Op::Hadamard(a, b) => {
                if rg(*a) {
                    accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y));
                }
                if rg(*b) {
                    accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y));
                }
            }
            Op::RowSoftmax(input) => {
                let y = &node.value;
                let mut gx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &gv) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - dot);
                    }
                }
                accumulate(grads, *input, gx);
            }
            Op::RowSum(a) => {
                let (r, c) = val(*a).shape();
                let mut gx = Matrix::zeros(r, c);
                for i in 0..r {
                    gx.row_mut(i).fill(g[(i, 0)]);
                }
                accumulate(grads, *a, gx);
            }
            Op::ColSum(a) => {
                let (r, c) = val(*a).shape();
                let mut gx = Matrix::zeros(r, c);
                for i in 0..r {
                    gx.row_mut(i).copy_from_slice(g.as_slice());
                }
                accumulate(grads, *a, gx);
            }
            Op::BroadcastDiv { input, denom, axis } => {
                let x = val(*input);
                let d = val(*denom).as_slice();
                let pick = |r: usize, c: usize| match axis {
                    Axis::Rows => r,
                    Axis::Cols => c,
                };
                if rg(*input) {
                    let guarded: Vec<f64> = d.iter().map(|v| v.max(DIV_GUARD)).collect();
                    accumulate(grads, *input, divide(g, &guarded, *axis));
                }
                if rg(*denom) {
                    let mut gd = vec![0.0; d.len()];
                    for r in 0..x.rows() {
                        for (c, (&gv, &xv)) in g.row(r).iter().zip(x.row(r)).enumerate() {
                            let k = pick(r, c);
                            if d[k] > DIV_GUARD {
                                gd[k] -= gv * xv / (d[k] * d[k]);
                            }
                        }
                    }
                    let (dr, dc) = val(*denom).shape();
                    accumulate(grads, *denom, Matrix::from_vec(dr, dc, gd));
                }
            }
            Op::Exp(a) => accumulate(grads, *a, g.zip_map(&node.value, |x, y| x * y)),
            Op::Log(a) => accumulate(grads, *a, g.zip_map(val(*a), |x, y| x / y)),
            Op::ReluHinge(a) => accumulate(
                grads,
                *a,
                g.zip_map(val(*a), |x, y| if y > 0.0 { x } else { 0.0 }),
            ),
            Op::L2NormSq(a) => {
                let s = g[(0, 0)];
                accumulate(grads, *a, val(*a).map(|x| 2.0 * x * s));
            }
            Op::Cosine {
                a,
                b,
                a_norms,
                b_norms,
            } => {
                let unit = |m: &Matrix, norms: &[f64]| {
                    Matrix::from_fn(m.rows(), m.cols(), |r, k| m[(r, k)] / norms[r])
                };
                let (va, vb) = (val(*a), val(*b));
                let (ua, ub) = (unit(va, a_norms), unit(vb, b_norms));
                if rg(*a) {
                    let mut dua = Matrix::zeros(ua.rows(), ua.cols());
                    matmul_into(g, &ub, &mut dua);
                    accumulate(grads, *a, cosine_input_grad(&dua, &ua, a_norms));
                }
                if rg(*b) {
                    let mut dub = Matrix::zeros(ub.rows(), ub.cols());
                    matmul_tn_into(g, &ua, &mut dub);
                    accumulate(grads, *b, cosine_input_grad(&dub, &ub, b_norms));
                }
            }
            Op::MaskAssign { input, rows, cols } => {
                let mut gx = g.clone();
                zero_masked(&mut gx, rows, cols);
                accumulate(grads, *input, gx);
            }
            Op::GatherRows { table, index } => {
                let (tr, tc) = val(*table).shape();
                let mut gt = Matrix::zeros(tr, tc);
                for (r, idx) in index.iter().enumerate() {
                    if let Some(t) = *idx {
                        for (o, &gv) in gt.row_mut(t).iter_mut().zip(g.row(r)) {
                            *o += gv;
                        }
                    }
                }
                accumulate(grads, *table, gt);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let mut gx = Matrix::zeros(probs.rows(), probs.cols());
                for (r, t) in targets.iter().enumerate() {
                    let Some(t) = *t else { continue };
                    let gr = g[(r, 0)];
                    for (o, &p) in gx.row_mut(r).iter_mut().zip(probs.row(r)) {
                        *o = gr * p;
                    }
                    gx[(r, t)] -= gr;
                }
                accumulate(grads, *logits, gx);
            }
        }
    }
}

/// Gradient w.r.t. raw rows given the gradient `du` w.r.t. their unit-normalised
/// versions `u`: `(du - (du . u) u) / |x|`.
fn cosine_input_grad(du: &Matrix, u: &Matrix, norms: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(u.rows(), u.cols());
    for r in 0..u.rows() {
        let dot: f64 = du.row(r).iter().zip(u.row(r)).map(|(a, b)| a * b).sum();
        for ((o, &d), &uv) in out.row_mut(r).iter_mut().zip(du.row(r)).zip(u.row(r)) {
            *o = (d - dot * uv) / norms[r];
        }
    }
    out
}

/// Divides row `r` (or column `c`) of `x` by `den[r]` (or `den[c]`).
fn divide(x: &Matrix, den: &[f64], axis: Axis) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        match axis {
            Axis::Rows => row.iter_mut().for_each(|v| *v /= den[r]),
            Axis::Cols => row.iter_mut().zip(den).for_each(|(v, d)| *v /= d),
        }
    }
    out
}

fn zero_masked(m: &mut Matrix, rows: &[bool], cols: &[bool]) {
    for r in 0..m.rows() {
        let whole = rows[r];
        for (c, v) in m.row_mut(r).iter_mut().enumerate() {
            if whole || cols[c] {
                *v = 0.0;
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
