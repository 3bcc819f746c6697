use crate::error::{shape_mismatch, Error, Result};
use crate::matrix::{gemm, Matrix};

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Scale(NodeId, f64),
    SoftmaxRows(NodeId),
    RmsNorm { input: NodeId, inv_rms: Vec<f64> },
    Silu(NodeId),
    Sigmoid(NodeId),
    Log(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows { input: NodeId, start: usize },
    SliceCols { input: NodeId, start: usize },
    Transpose(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    CosineRows { a: NodeId, b: NodeId, a_norm: Vec<f64>, b_norm: Vec<f64> },
    Rope { input: NodeId, positions: Vec<usize>, base: f64 },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MulRow(..) => "mul_row",
            Op::Scale(..) => "scale",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::RmsNorm { .. } => "rms_norm",
            Op::Silu(..) => "silu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Log(..) => "log",
            Op::ConcatRows(..) => "concat_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::Transpose(..) => "transpose",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::CosineRows { .. } => "cosine_rows",
            Op::Rope { .. } => "rope",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    tracked: bool,
}

/// Computation tape. Single-threaded; build one per forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
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

    /// Adds a trainable leaf.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.leaf(value, true)
    }

    /// Adds a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Matrix, tracked: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Gradient of the last [`Graph::backward`] root w.r.t. `id`, if any
    /// flowed into it.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn tracked(&self, id: NodeId) -> bool {
        self.nodes[id.0].tracked
    }

    fn push(&mut self, value: Matrix, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let tracked = inputs.iter().any(|&i| self.tracked(i));
        self.nodes.push(Node { value, op, tracked });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn same_shape(&self, ctx: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_mismatch(ctx, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(value, Op::Sub(a, b), &[a, b])
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(value, Op::Mul(a, b), &[a, b])
    }

    /// Multiplies every row of `x` element-wise by the `1 × cols` vector `row`.
    pub fn mul_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if self.shape(row) != (1, c) {
            return Err(shape_mismatch(
                "mul_row",
                format!("(1, {c})"),
                format!("{:?}", self.shape(row)),
            ));
        }
        let g = self.value(row).as_slice();
        let xv = self.value(x);
        let value = Matrix::from_fn(r, c, |i, j| xv.get(i, j) * g[j]);
        self.push(value, Op::MulRow(x, row), &[x, row])
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        let value = self.value(x).map(|v| v * factor);
        self.push(value, Op::Scale(x, factor), &[x])
    }

    /// Softmax over each row, with max-subtraction.
    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let mut value = self.value(x).clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        self.push(value, Op::SoftmaxRows(x), &[x])
    }

    /// Row-wise `x / sqrt(mean(x^2) + eps)`; the learnable gain is applied
    /// separately with [`Graph::mul_row`].
    pub fn rms_norm(&mut self, x: NodeId, eps: f64) -> Result<NodeId> {
        let mut value = self.value(x).clone();
        let cols = value.cols() as f64;
        let mut inv_rms = Vec::with_capacity(value.rows());
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let ms = row.iter().map(|v| v * v).sum::<f64>() / cols;
            let inv = 1.0 / (ms + eps).sqrt();
            row.iter_mut().for_each(|v| *v *= inv);
            inv_rms.push(inv);
        }
        self.push(value, Op::RmsNorm { input: x, inv_rms }, &[x])
    }

    pub fn silu(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).map(|v| v * sigmoid(v));
        self.push(value, Op::Silu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x), &[x])
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).map(f64::ln);
        self.push(value, Op::Log(x), &[x])
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::Empty("concat_rows"));
        };
        let cols = self.shape(first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(shape_mismatch("concat_rows", cols, v.cols()));
            }
            rows += v.rows();
            data.extend_from_slice(v.as_slice());
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        self.push(value, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::Empty("concat_cols"));
        };
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(shape_mismatch("concat_cols", rows, r));
            }
            cols += c;
        }
        let mut value = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            for r in 0..rows {
                value.row_mut(r)[offset..offset + v.cols()].copy_from_slice(v.row(r));
            }
            offset += v.cols();
        }
        self.push(value, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if start + len > r {
            return Err(shape_mismatch("slice_rows", format!("end <= {r}"), start + len));
        }
        let value = Matrix::from_vec(
            len,
            c,
            self.value(x).as_slice()[start * c..(start + len) * c].to_vec(),
        )?;
        self.push(value, Op::SliceRows { input: x, start }, &[x])
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if start + len > c {
            return Err(shape_mismatch("slice_cols", format!("end <= {c}"), start + len));
        }
        let xv = self.value(x);
        let value = Matrix::from_fn(r, len, |i, j| xv.get(i, start + j));
        self.push(value, Op::SliceCols { input: x, start }, &[x])
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).transpose();
        self.push(value, Op::Transpose(x), &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let value = Matrix::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::Empty("mean"));
        }
        let value = Matrix::scalar(v.sum() / v.len() as f64);
        self.push(value, Op::Mean(x), &[x])
    }

    /// Pairwise cosine similarity between the rows of `a` (`n × d`) and the
    /// rows of `b` (`m × d`), giving an `n × m` matrix.
    pub fn cosine_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(shape_mismatch("cosine_rows", av.cols(), bv.cols()));
        }
        let a_norm = row_norms(av, "cosine_rows lhs")?;
        let b_norm = row_norms(bv, "cosine_rows rhs")?;
        let mut value = Matrix::zeros(av.rows(), bv.rows());
        gemm(1.0, av, false, bv, true, 0.0, &mut value);
        for i in 0..value.rows() {
            for (j, v) in value.row_mut(i).iter_mut().enumerate() {
                *v /= a_norm[i] * b_norm[j];
            }
        }
        self.push(value, Op::CosineRows { a, b, a_norm, b_norm }, &[a, b])
    }

    /// Rotary position rotation of each row (see [`rotate_pairs`]).
    pub fn rope(&mut self, x: NodeId, positions: &[usize], base: f64) -> Result<NodeId> {
        let value = rotate_pairs(self.value(x), positions, base, false)?;
        self.push(
            value,
            Op::Rope {
                input: x,
                positions: positions.to_vec(),
                base,
            },
            &[x],
        )
    }

    fn accumulate(&mut self, id: NodeId, contribution: Matrix) {
        if !self.tracked(id) {
            return;
        }
        match &mut self.grads[id.0] {
            Some(g) => g.add_scaled(&contribution, 1.0),
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Back-propagates from a scalar `root`. Previously computed gradients
    /// are discarded first, so repeated calls give identical results.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.shape(root) != (1, 1) {
            return Err(shape_mismatch(
                "backward root",
                "(1, 1)",
                format!("{:?}", self.shape(root)),
            ));
        }
        self.grads = vec![None; self.nodes.len()];
        if !self.tracked(root) {
            return Ok(());
        }
        self.grads[root.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g)?;
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn backprop_node(&mut self, idx: usize, g: &Matrix) -> Result<()> {
        // The op is moved out so `self` can be borrowed mutably while
        // accumulating; it is restored before returning.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        let result = self.backprop_op(idx, &op, g);
        self.nodes[idx].op = op;
        result
    }

    fn backprop_op(&mut self, idx: usize, op: &Op, g: &Matrix) -> Result<()> {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.tracked(a) {
                    let bv = self.value(b);
                    let mut da = Matrix::zeros(g.rows(), bv.rows());
                    gemm(1.0, g, false, bv, true, 0.0, &mut da);
                    self.accumulate(a, da);
                }
                if self.tracked(b) {
                    let av = self.value(a);
                    let mut db = Matrix::zeros(av.cols(), g.cols());
                    gemm(1.0, av, true, g, false, 0.0, &mut db);
                    self.accumulate(b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let da = g.zip_map(self.value(b), |x, y| x * y);
                let db = g.zip_map(self.value(a), |x, y| x * y);
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::MulRow(x, row) => {
                let (xv, rv) = (self.value(x), self.value(row));
                let gain = rv.as_slice();
                let dx = Matrix::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) * gain[j]);
                let mut drow = Matrix::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for ((d, gv), xv) in drow.as_mut_slice().iter_mut().zip(g.row(i)).zip(xv.row(i)) {
                        *d += gv * xv;
                    }
                }
                self.accumulate(x, dx);
                self.accumulate(row, drow);
            }
            Op::Scale(x, factor) => self.accumulate(x, g.map(|v| v * factor)),
            Op::SoftmaxRows(x) => {
                let y = &self.nodes[idx].value;
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for ((d, gv), yv) in dx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *d = yv * (gv - dot);
                    }
                }
                self.accumulate(x, dx);
            }
            Op::RmsNorm { input, ref inv_rms } => {
                let y = &self.nodes[idx].value;
                let cols = y.cols() as f64;
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    let inv = inv_rms[r];
                    for ((d, gv), yv) in dx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *d = inv * (gv - yv * dot / cols);
                    }
                }
                self.accumulate(input, dx);
            }
            Op::Silu(x) => {
                let dx = g.zip_map(self.value(x), |gv, xv| {
                    let s = sigmoid(xv);
                    gv * s * (1.0 + xv * (1.0 - s))
                });
                self.accumulate(x, dx);
            }
            Op::Sigmoid(x) => {
                let dx = g.zip_map(&self.nodes[idx].value, |gv, y| gv * y * (1.0 - y));
                self.accumulate(x, dx);
            }
            Op::Log(x) => {
                let dx = g.zip_map(self.value(x), |gv, xv| gv / xv);
                self.accumulate(x, dx);
            }
            Op::ConcatRows(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    let slice = g.as_slice()[offset * c..(offset + r) * c].to_vec();
                    self.accumulate(p, Matrix::from_vec(r, c, slice)?);
                    offset += r;
                }
            }
            Op::ConcatCols(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    let part = Matrix::from_fn(r, c, |i, j| g.get(i, offset + j));
                    self.accumulate(p, part);
                    offset += c;
                }
            }
            Op::SliceRows { input, start } => {
                let (r, c) = self.shape(input);
                let mut dx = Matrix::zeros(r, c);
                dx.as_mut_slice()[start * c..start * c + g.len()].copy_from_slice(g.as_slice());
                self.accumulate(input, dx);
            }
            Op::SliceCols { input, start } => {
                let (r, c) = self.shape(input);
                let mut dx = Matrix::zeros(r, c);
                for i in 0..r {
                    dx.row_mut(i)[start..start + g.cols()].copy_from_slice(g.row(i));
                }
                self.accumulate(input, dx);
            }
            Op::Transpose(x) => self.accumulate(x, g.transpose()),
            Op::Sum(x) => {
                let (r, c) = self.shape(x);
                self.accumulate(x, Matrix::filled(r, c, g.get(0, 0)));
            }
            Op::Mean(x) => {
                let (r, c) = self.shape(x);
                self.accumulate(x, Matrix::filled(r, c, g.get(0, 0) / (r * c) as f64));
            }
            Op::CosineRows {
                a,
                b,
                ref a_norm,
                ref b_norm,
            } => {
                let a_hat = normalize_rows(self.value(a), a_norm);
                let b_hat = normalize_rows(self.value(b), b_norm);
                if self.tracked(a) {
                    let mut d_hat = Matrix::zeros(a_hat.rows(), a_hat.cols());
                    gemm(1.0, g, false, &b_hat, false, 0.0, &mut d_hat);
                    self.accumulate(a, project_out(&a_hat, d_hat, a_norm));
                }
                if self.tracked(b) {
                    let mut d_hat = Matrix::zeros(b_hat.rows(), b_hat.cols());
                    gemm(1.0, g, true, &a_hat, false, 0.0, &mut d_hat);
                    self.accumulate(b, project_out(&b_hat, d_hat, b_norm));
                }
            }
            Op::Rope {
                input,
                ref positions,
                base,
            } => {
                let dx = rotate_pairs(g, positions, base, true)?;
                self.accumulate(input, dx);
            }
        }
        Ok(())
    }
}

fn row_norms(m: &Matrix, context: &'static str) -> Result<Vec<f64>> {
    m.row_iter()
        .enumerate()
        .map(|(row, r)| {
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                Ok(n)
            } else {
                Err(Error::ZeroNormRow { context, row })
            }
        })
        .collect()
}

fn normalize_rows(m: &Matrix, norms: &[f64]) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) / norms[i])
}

/// Gradient through `x -> x / |x|`: `(d - x_hat (x_hat . d)) / |x|` per row.
fn project_out(x_hat: &Matrix, mut d_hat: Matrix, norms: &[f64]) -> Matrix {
    for r in 0..d_hat.rows() {
        let dot: f64 = x_hat.row(r).iter().zip(d_hat.row(r)).map(|(a, b)| a * b).sum();
        for (d, xh) in d_hat.row_mut(r).iter_mut().zip(x_hat.row(r)) {
            *d = (*d - xh * dot) / norms[r];
        }
    }
    d_hat
}

/// Rotates each consecutive column pair `(2k, 2k+1)` of row `r` by the
/// angle `positions[r] * base^(-2k / cols)`; `inverse` rotates the other way.
pub fn rotate_pairs(x: &Matrix, positions: &[usize], base: f64, inverse: bool) -> Result<Matrix> {
    let (rows, cols) = x.shape();
    if cols % 2 != 0 {
        return Err(crate::error::invalid(format!(
            "rotary embedding needs an even width, got {cols}"
        )));
    }
    if positions.len() != rows {
        return Err(shape_mismatch("rope positions", rows, positions.len()));
    }
    let sign = if inverse { -1.0 } else { 1.0 };
    let freqs: Vec<f64> = (0..cols / 2)
        .map(|k| base.powf(-2.0 * k as f64 / cols as f64))
        .collect();
    let mut out = x.clone();
    for (r, &p) in positions.iter().enumerate() {
        let row = out.row_mut(r);
        for (k, &f) in freqs.iter().enumerate() {
            let (sin, cos) = (sign * p as f64 * f).sin_cos();
            let (a, b) = (row[2 * k], row[2 * k + 1]);
            row[2 * k] = a * cos - b * sin;
            row[2 * k + 1] = a * sin + b * cos;
        }
    }
    Ok(out)
}
