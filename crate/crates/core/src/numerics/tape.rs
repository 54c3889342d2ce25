//! Dynamic tape for reverse-mode automatic differentiation.
//!
//! Every forward op evaluates eagerly and appends a node holding its value.
//! Nodes only refer to earlier nodes, so replaying the tape backwards visits
//! a valid reverse topological order. A tape is rebuilt per forward pass.

use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SelectCols(Var, Vec<usize>),
    Gather(Var, Vec<usize>),
    OuterAdd(Var, Var),
    RepeatRows(Var, usize),
    LogAddExp(Var, Var),
    /// Scalar output whose gradient with respect to each input was computed
    /// during the forward pass.
    Fused(Vec<(Var, Tensor)>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed differentiable ops.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `v`; all zeros when `v` has no path to the loss.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match self.grads[v.0].take() {
            Some(g) => Tensor::new(shape, g).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), &[a])
    }

    fn zip(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Var {
        let ta = self.value(a);
        let data = ta
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        self.push(value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("add", a, b)?;
        Ok(self.zip(Op::Add(a, b), a, b, |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("sub", a, b)?;
        Ok(self.zip(Op::Sub(a, b), a, b, |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("mul", a, b)?;
        Ok(self.zip(Op::Mul(a, b), a, b, |x, y| x * y))
    }

    pub fn log_add_exp(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("log_add_exp", a, b)?;
        Ok(self.zip(Op::LogAddExp(a, b), a, b, tensor::log_add_exp))
    }

    /// `a (m x n) + row (1 x n)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.value(row).numel() != n {
            return Err(Error::shape("add_row", self.shape(a), self.shape(row)));
        }
        let r = self.value(row).data();
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (v, b) in chunk.iter_mut().zip(r) {
                *v += b;
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push(value, Op::AddRow(a, row), &[a, row]))
    }

    /// `a (m x n) + col (m x 1)` broadcast over columns.
    pub fn add_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.value(col).numel() != m {
            return Err(Error::shape("add_col", self.shape(a), self.shape(col)));
        }
        let c = self.value(col).data();
        let mut data = self.value(a).data().to_vec();
        for (chunk, b) in data.chunks_mut(n.max(1)).zip(c) {
            for v in chunk.iter_mut() {
                *v += b;
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push(value, Op::AddCol(a, col), &[a, col]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|v| v * s);
        self.push(value, Op::Scale(a, s), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(tensor::sigmoid);
        self.push(value, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.push(value, Op::Log(a), &[a])
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).softmax()?;
        Ok(self.push(value, Op::Softmax(a), &[a]))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).log_softmax()?;
        Ok(self.push(value, Op::LogSoftmax(a), &[a]))
    }

    /// Row-wise softmax where row `i` only sees columns `j <= i + look_ahead`
    /// (all columns when `look_ahead` is `None`). Masked entries are exactly 0.
    pub fn masked_softmax(&mut self, a: Var, look_ahead: Option<usize>) -> Result<Var> {
        let (m, n) = self.dims(a);
        if m * n == 0 {
            return Err(Error::shape("masked_softmax", self.shape(a), &[1]));
        }
        let mut data = vec![0.0; m * n];
        let src = self.value(a).data();
        for i in 0..m {
            let end = match look_ahead {
                Some(l) => (i + l + 1).min(n),
                None => n,
            };
            let row = &mut data[i * n..i * n + end];
            row.copy_from_slice(&src[i * n..i * n + end]);
            tensor::softmax_in_place(row);
        }
        let value = Tensor::matrix(m, n, data)?;
        // the backward of a masked softmax is the plain softmax backward,
        // since masked outputs are zero
        Ok(self.push(value, Op::Softmax(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(value, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if start > end || end > n {
            return Err(Error::shape("slice_cols", self.shape(a), &[start, end]));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(m * (end - start));
        for i in 0..m {
            data.extend_from_slice(&src[i * n + start..i * n + end]);
        }
        let value = Tensor::matrix(m, end - start, data)?;
        Ok(self.push(value, Op::SliceCols(a, start), &[a]))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if start > end || end > m {
            return Err(Error::shape("slice_rows", self.shape(a), &[start, end]));
        }
        let data = self.value(a).data()[start * n..end * n].to_vec();
        let value = Tensor::matrix(end - start, n, data)?;
        Ok(self.push(value, Op::SliceRows(a, start), &[a]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = parts
            .first()
            .map(|&p| self.dims(p).0)
            .ok_or_else(|| Error::Invalid("concat_cols of nothing".into()))?;
        for &p in parts {
            if self.dims(p).0 != m {
                return Err(Error::shape("concat_cols", &[m], self.shape(p)));
            }
        }
        let total: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let value = Tensor::matrix(m, total, data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts
            .first()
            .map(|&p| self.dims(p).1)
            .ok_or_else(|| Error::Invalid("concat_rows of nothing".into()))?;
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            let (pm, pn) = self.dims(p);
            if pn != n {
                return Err(Error::shape("concat_rows", &[n], self.shape(p)));
            }
            data.extend_from_slice(self.value(p).data());
            m += pm;
        }
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Embedding lookup: output row `r` is row `indices[r]` of `table`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(table);
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= m {
                return Err(Error::shape("gather_rows", self.shape(table), &[i]));
            }
            data.extend_from_slice(self.value(table).row_slice(i));
        }
        let value = Tensor::matrix(indices.len(), n, data)?;
        Ok(self.push(value, Op::GatherRows(table, indices.to_vec()), &[table]))
    }

    pub fn select_cols(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(a);
        if let Some(&bad) = cols.iter().find(|&&c| c >= n) {
            return Err(Error::shape("select_cols", self.shape(a), &[bad]));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(m * cols.len());
        for i in 0..m {
            data.extend(cols.iter().map(|&c| src[i * n + c]));
        }
        let value = Tensor::matrix(m, cols.len(), data)?;
        Ok(self.push(value, Op::SelectCols(a, cols.to_vec()), &[a]))
    }

    /// Picks elements by flat row-major index into a `1 x k` row.
    pub fn gather(&mut self, a: Var, flat: &[usize]) -> Result<Var> {
        let src = self.value(a).data();
        if let Some(&bad) = flat.iter().find(|&&i| i >= src.len()) {
            return Err(Error::shape("gather", self.shape(a), &[bad]));
        }
        let value = Tensor::row(flat.iter().map(|&i| src[i]).collect());
        Ok(self.push(value, Op::Gather(a, flat.to_vec()), &[a]))
    }

    /// Pairwise row sums: for `a (m x n)` and `b (p x n)` the output has
    /// `m * p` rows, row `i * p + j` being `a[i] + b[j]`.
    pub fn outer_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let (p, n2) = self.dims(b);
        if n != n2 {
            return Err(Error::shape("outer_add", self.shape(a), self.shape(b)));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let mut data = Vec::with_capacity(m * p * n);
        for i in 0..m {
            let ra = ta.row_slice(i);
            for j in 0..p {
                data.extend(ra.iter().zip(tb.row_slice(j)).map(|(x, y)| x + y));
            }
        }
        let value = Tensor::matrix(m * p, n, data)?;
        Ok(self.push(value, Op::OuterAdd(a, b), &[a, b]))
    }

    /// Repeats each row `times` times consecutively.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        let t = self.value(a);
        let mut data = Vec::with_capacity(m * times * n);
        for i in 0..m {
            for _ in 0..times {
                data.extend_from_slice(t.row_slice(i));
            }
        }
        let value = Tensor::matrix(m * times, n, data)?;
        Ok(self.push(value, Op::RepeatRows(a, times), &[a]))
    }

    /// Records a scalar computed outside the tape together with its gradient
    /// with respect to each input.
    pub fn fused_scalar(&mut self, value: f64, grads: Vec<(Var, Tensor)>) -> Result<Var> {
        for (v, g) in &grads {
            if g.numel() != self.value(*v).numel() {
                return Err(Error::shape("fused_scalar", self.shape(*v), g.shape()));
            }
        }
        let inputs: Vec<Var> = grads.iter().map(|(v, _)| *v).collect();
        Ok(self.push(Tensor::scalar(value), Op::Fused(grads), &inputs))
    }

    /// Backpropagates from a scalar `loss`. Gradients accumulate across
    /// fan-out; nodes with no path to the loss keep a zero gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let seed = &self.nodes[loss.0].value;
        if seed.numel() != 1 {
            return Err(Error::Invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                seed.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if let Some(ga) = self.slot(grads, *a) {
                    // dA = dC * B^T
                    let bd = tb.data();
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            ga[i * k + p] += tensor::dot(gr, &bd[p * n..(p + 1) * n]);
                        }
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    // dB = A^T * dC
                    let ad = ta.data();
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ad[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(gr) {
                                *o += av * gv;
                            }
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    let (m, n) = (y.rows(), y.cols());
                    for i in 0..m {
                        for j in 0..n {
                            ga[j * m + i] += g[i * n + j];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    axpy(ga, 1.0, g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    axpy(gb, 1.0, g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    axpy(ga, 1.0, g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    axpy(gb, -1.0, g);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, gv), bv) in ga.iter_mut().zip(g).zip(tb) {
                        *o += gv * bv;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((o, gv), av) in gb.iter_mut().zip(g).zip(ta) {
                        *o += gv * av;
                    }
                }
            }
            Op::AddRow(a, row) => {
                let n = y.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    axpy(ga, 1.0, g);
                }
                if let Some(gr) = self.slot(grads, *row) {
                    for chunk in g.chunks(n) {
                        axpy(gr, 1.0, chunk);
                    }
                }
            }
            Op::AddCol(a, col) => {
                let n = y.cols().max(1);
                if let Some(ga) = self.slot(grads, *a) {
                    axpy(ga, 1.0, g);
                }
                if let Some(gc) = self.slot(grads, *col) {
                    for (o, chunk) in gc.iter_mut().zip(g.chunks(n)) {
                        *o += chunk.iter().sum::<f64>();
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = self.slot(grads, *a) {
                    axpy(ga, *s, g);
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, gv), yv) in ga.iter_mut().zip(g).zip(y.data()) {
                        *o += gv * yv * (1.0 - yv);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, gv), yv) in ga.iter_mut().zip(g).zip(y.data()) {
                        *o += gv * (1.0 - yv * yv);
                    }
                }
            }
            Op::Exp(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, gv), yv) in ga.iter_mut().zip(g).zip(y.data()) {
                        *o += gv * yv;
                    }
                }
            }
            Op::Log(a) => {
                let x = self.value(*a).data();
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, gv), xv) in ga.iter_mut().zip(g).zip(x) {
                        *o += gv / xv;
                    }
                }
            }
            Op::Softmax(a) => {
                let n = y.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for ((go, gi), yr) in ga.chunks_mut(n).zip(g.chunks(n)).zip(y.data().chunks(n)) {
                        let s = tensor::dot(gi, yr);
                        for ((o, gv), yv) in go.iter_mut().zip(gi).zip(yr) {
                            *o += yv * (gv - s);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let n = y.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for ((go, gi), yr) in ga.chunks_mut(n).zip(g.chunks(n)).zip(y.data().chunks(n)) {
                        let s: f64 = gi.iter().sum();
                        for ((o, gv), yv) in go.iter_mut().zip(gi).zip(yr) {
                            *o += gv - yv.exp() * s;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let n_in = self.value(*a).cols();
                let n = y.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for (i, gr) in g.chunks(n.max(1)).enumerate().take(y.rows()) {
                        axpy(&mut ga[i * n_in + start..i * n_in + start + n], 1.0, gr);
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let n = y.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    axpy(&mut ga[start * n..start * n + g.len()], 1.0, g);
                }
            }
            Op::ConcatCols(parts) => {
                let n = y.cols();
                let mut offset = 0;
                for &p in parts {
                    let pn = self.value(p).cols();
                    if let Some(gp) = self.slot(grads, p) {
                        for i in 0..y.rows() {
                            axpy(
                                &mut gp[i * pn..(i + 1) * pn],
                                1.0,
                                &g[i * n + offset..i * n + offset + pn],
                            );
                        }
                    }
                    offset += pn;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    if let Some(gp) = self.slot(grads, p) {
                        axpy(gp, 1.0, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::GatherRows(table, idx) => {
                let n = y.cols();
                if let Some(gt) = self.slot(grads, *table) {
                    for (r, &i) in idx.iter().enumerate() {
                        axpy(&mut gt[i * n..(i + 1) * n], 1.0, &g[r * n..(r + 1) * n]);
                    }
                }
            }
            Op::SelectCols(a, cols) => {
                let n_in = self.value(*a).cols();
                let n = cols.len();
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..y.rows() {
                        for (c, &col) in cols.iter().enumerate() {
                            ga[i * n_in + col] += g[i * n + c];
                        }
                    }
                }
            }
            Op::Gather(a, flat) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (gv, &i) in g.iter().zip(flat) {
                        ga[i] += gv;
                    }
                }
            }
            Op::OuterAdd(a, b) => {
                let n = y.cols();
                let p = self.value(*b).rows();
                let m = self.value(*a).rows();
                if let Some(ga) = self.slot(grads, *a) {
                    for i in 0..m {
                        for j in 0..p {
                            let r = i * p + j;
                            axpy(&mut ga[i * n..(i + 1) * n], 1.0, &g[r * n..(r + 1) * n]);
                        }
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for i in 0..m {
                        for j in 0..p {
                            let r = i * p + j;
                            axpy(&mut gb[j * n..(j + 1) * n], 1.0, &g[r * n..(r + 1) * n]);
                        }
                    }
                }
            }
            Op::RepeatRows(a, times) => {
                let n = y.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for (r, gr) in g.chunks(n.max(1)).enumerate().take(y.rows()) {
                        let i = r / times;
                        axpy(&mut ga[i * n..(i + 1) * n], 1.0, gr);
                    }
                }
            }
            Op::LogAddExp(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                let weight = |x: f64, yv: f64| {
                    if yv == f64::NEG_INFINITY {
                        0.0
                    } else {
                        (x - yv).exp()
                    }
                };
                if let Some(ga) = self.slot(grads, *a) {
                    for (((o, gv), xv), yv) in ga.iter_mut().zip(g).zip(ta).zip(y.data()) {
                        *o += gv * weight(*xv, *yv);
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for (((o, gv), xv), yv) in gb.iter_mut().zip(g).zip(tb).zip(y.data()) {
                        *o += gv * weight(*xv, *yv);
                    }
                }
            }
            Op::Fused(parts) => {
                for (v, local) in parts {
                    if let Some(gv) = self.slot(grads, *v) {
                        axpy(gv, g[0], local.data());
                    }
                }
            }
        }
    }

    /// Gradient accumulator for `v`, allocated on first use; `None` when `v`
    /// does not require gradients.
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.numel()]))
    }
}

fn axpy(acc: &mut [f64], s: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += s * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::row(vec![1.0, -2.0, 3.0]));
        let loss = tape.sum(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gives_two_x() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).item().unwrap(), 6.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::row(vec![1.0, 2.0]));
        let y = tape.tanh(x);
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn unreachable_params_get_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::row(vec![1.0, 2.0]));
        let unused = tape.param(Tensor::row(vec![5.0]));
        let loss = tape.sum(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(unused).data(), &[0.0]);
    }

    #[test]
    fn fan_out_sums_paths() {
        // y = tanh(x) + x*x uses x twice
        let x0 = Tensor::row(vec![0.3, -0.7]);
        let mut tape = Tape::new();
        let x = tape.param(x0.clone());
        let a = tape.tanh(x);
        let b = tape.mul(x, x).unwrap();
        let s = tape.add(a, b).unwrap();
        let loss = tape.sum(s);
        let joint = tape.backward(loss).unwrap().get(x);

        // the same graph split into two separately differentiated paths
        let mut t1 = Tape::new();
        let x1 = t1.param(x0.clone());
        let a1 = t1.tanh(x1);
        let l1 = t1.sum(a1);
        let g1 = t1.backward(l1).unwrap().get(x1);
        let mut t2 = Tape::new();
        let x2 = t2.param(x0);
        let b2 = t2.mul(x2, x2).unwrap();
        let l2 = t2.sum(b2);
        let g2 = t2.backward(l2).unwrap().get(x2);

        for i in 0..2 {
            assert!((joint.data()[i] - g1.data()[i] - g2.data()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn masked_softmax_zeroes_future() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(3, 3, vec![1.0; 9]).unwrap());
        let y = tape.masked_softmax(x, Some(0)).unwrap();
        let v = tape.value(y);
        assert_eq!(v.row_slice(0), &[1.0, 0.0, 0.0]);
        assert_eq!(v.row_slice(1), &[0.5, 0.5, 0.0]);
        let s: f64 = v.row_slice(2).iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }
}
