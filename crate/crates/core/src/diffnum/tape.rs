//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive applied during a forward pass. Calling
//! [`Tape::backward`] on a `1 x 1` node replays the tape in reverse and
//! returns exact partial derivatives for every recorded node. Reductions run
//! in a fixed order, so identical programs give bit-identical gradients.
//!
//! ```
//! use hypeboy::diffnum::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Matrix::row_vector(&[1.0, 2.0]));
//! let x = tape.constant(Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap());
//! let y = tape.matmul(w, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(tape.value(y)[(0, 0)], 11.0);
//! assert_eq!(grads.get(w).as_slice(), &[3.0, 4.0]);
//! ```

use std::rc::Rc;

use super::matrix::{dot, norm, Matrix};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Row groups for segment reductions: output row `g` aggregates input rows
/// `groups[g]`. Groups may be empty and may repeat indices.
pub type Groups = Rc<Vec<Vec<usize>>>;

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    MatMulTransposed(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Rectify(Var),
    MulMask(Var, Rc<Matrix>),
    RowNormalize(Var, Vec<f64>),
    CosineRows(Var, Var),
    LogSoftmaxRow(Var),
    SegmentMean(Var, Groups),
    SegmentSum(Var, Groups),
    MaskedAssign(Var, Var, Rc<Vec<bool>>),
    GatherRows(Var, Rc<Vec<usize>>),
    PickSum(Var, Rc<Vec<(usize, usize)>>),
    Sum(Var),
    Scale(Var, f64),
    AddScalar(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `var`; zeros when the output does not depend on it.
    pub fn get(&self, var: Var) -> Matrix {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Matrix::zeros(r, c)
            }
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`.
    pub fn matmul_transposed(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_transposed(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMulTransposed(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    /// Adds the `1 x cols` row `bias` to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(bias) != (1, c) {
            return Err(Error::shape(
                "add_bias",
                format!("bias {:?} for input {r}x{c}", self.shape(bias)),
            ));
        }
        let mut value = self.value(a).clone();
        let b = self.value(bias).as_slice().to_vec();
        for i in 0..r {
            for (v, bj) in value.row_mut(i).iter_mut().zip(&b) {
                *v += bj;
            }
        }
        let ng = self.needs(a) || self.needs(bias);
        Ok(self.push(value, Op::AddBias(a, bias), ng))
    }

    /// Elementwise `max(0, x)`.
    pub fn rectify(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        let ng = self.needs(a);
        self.push(value, Op::Rectify(a), ng)
    }

    /// Elementwise product with a fixed mask (dropout, feature masking).
    pub fn mul_mask(&mut self, a: Var, mask: Rc<Matrix>) -> Result<Var> {
        if self.shape(a) != mask.shape() {
            return Err(Error::shape(
                "mul_mask",
                format!("{:?} vs mask {:?}", self.shape(a), mask.shape()),
            ));
        }
        let mut value = self.value(a).clone();
        for (v, m) in value.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *v *= m;
        }
        let ng = self.needs(a);
        Ok(self.push(value, Op::MulMask(a, mask), ng))
    }

    /// Scales each row to unit Euclidean norm. Zero rows are rejected.
    pub fn row_normalize(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let mut norms = Vec::with_capacity(src.rows());
        let mut value = src.clone();
        for i in 0..src.rows() {
            let n = norm(src.row(i));
            if n == 0.0 || !n.is_finite() {
                return Err(Error::ZeroNorm {
                    context: "row_normalize",
                    row: i,
                });
            }
            value.row_mut(i).iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        let ng = self.needs(a);
        Ok(self.push(value, Op::RowNormalize(a, norms), ng))
    }

    /// Per-row cosine similarity as an `n x 1` column. A pair involving a
    /// zero row has cosine 0.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "cosine_rows",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let (va, vb) = (self.value(a), self.value(b));
        let value = Matrix::from_fn(va.rows(), 1, |i, _| cosine(va.row(i), vb.row(i)));
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::CosineRows(a, b), ng))
    }

    /// Row-wise log-softmax with max subtraction.
    pub fn log_softmax_row(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let ng = self.needs(a);
        self.push(value, Op::LogSoftmaxRow(a), ng)
    }

    /// Row `g` of the output is the mean of input rows `groups[g]`; empty
    /// groups give a zero row.
    pub fn segment_mean(&mut self, a: Var, groups: Groups) -> Result<Var> {
        let value = self.segment_reduce(a, &groups, true)?;
        let ng = self.needs(a);
        Ok(self.push(value, Op::SegmentMean(a, groups), ng))
    }

    /// Row `g` of the output is the sum of input rows `groups[g]`.
    pub fn segment_sum(&mut self, a: Var, groups: Groups) -> Result<Var> {
        let value = self.segment_reduce(a, &groups, false)?;
        let ng = self.needs(a);
        Ok(self.push(value, Op::SegmentSum(a, groups), ng))
    }

    fn segment_reduce(&self, a: Var, groups: &[Vec<usize>], mean: bool) -> Result<Matrix> {
        let src = self.value(a);
        let mut out = Matrix::zeros(groups.len(), src.cols());
        for (g, members) in groups.iter().enumerate() {
            let row = out.row_mut(g);
            for &m in members {
                if m >= src.rows() {
                    return Err(Error::shape(
                        "segment",
                        format!("group {g} references row {m} of {}", src.rows()),
                    ));
                }
                for (o, v) in row.iter_mut().zip(src.row(m)) {
                    *o += v;
                }
            }
            if mean && !members.is_empty() {
                let k = members.len() as f64;
                row.iter_mut().for_each(|v| *v /= k);
            }
        }
        Ok(out)
    }

    /// Rows of `a` flagged in `mask` are replaced by the `1 x cols` `token`.
    pub fn masked_assign(&mut self, a: Var, mask: Rc<Vec<bool>>, token: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if mask.len() != r || self.shape(token) != (1, c) {
            return Err(Error::shape(
                "masked_assign",
                format!(
                    "input {r}x{c}, mask {}, token {:?}",
                    mask.len(),
                    self.shape(token)
                ),
            ));
        }
        let mut value = self.value(a).clone();
        let t = self.value(token).as_slice().to_vec();
        for (i, &m) in mask.iter().enumerate() {
            if m {
                value.row_mut(i).copy_from_slice(&t);
            }
        }
        let ng = self.needs(a) || self.needs(token);
        Ok(self.push(value, Op::MaskedAssign(a, token, mask), ng))
    }

    pub fn gather_rows(&mut self, a: Var, indices: Rc<Vec<usize>>) -> Result<Var> {
        let src = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= src.rows()) {
            return Err(Error::shape(
                "gather_rows",
                format!("row {bad} of {}", src.rows()),
            ));
        }
        let value = src.select_rows(&indices);
        let ng = self.needs(a);
        Ok(self.push(value, Op::GatherRows(a, indices), ng))
    }

    /// Sum of the listed `(row, col)` entries, as a `1 x 1` node.
    pub fn pick_sum(&mut self, a: Var, entries: Rc<Vec<(usize, usize)>>) -> Result<Var> {
        let src = self.value(a);
        let mut total = 0.0;
        for &(i, j) in entries.iter() {
            if i >= src.rows() || j >= src.cols() {
                return Err(Error::shape(
                    "pick_sum",
                    format!("entry ({i}, {j}) of {:?}", src.shape()),
                ));
            }
            total += src[(i, j)];
        }
        let ng = self.needs(a);
        Ok(self.push(Matrix::filled(1, 1, total), Op::PickSum(a, entries), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        let ng = self.needs(a);
        self.push(Matrix::filled(1, 1, total), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).as_slice().len();
        if n == 0 {
            return Err(Error::shape("mean", "empty input"));
        }
        let s = self.sum(a);
        Ok(self.scale(s, 1.0 / n as f64))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, factor), ng)
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Var {
        let value = self.value(a).map(|v| v + offset);
        let ng = self.needs(a);
        self.push(value, Op::AddScalar(a), ng)
    }

    /// Reverse pass from the scalar node `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.shape(output) != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("output is {:?}, expected a scalar", self.shape(output)),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads)?;
            }
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let da = g.matmul_transposed(self.value(*b))?;
                    accumulate(grads, *a, da)?;
                }
                if self.needs(*b) {
                    let db = self.value(*a).transposed_matmul(g)?;
                    accumulate(grads, *b, db)?;
                }
            }
            Op::MatMulTransposed(a, b) => {
                if self.needs(*a) {
                    let da = g.matmul(self.value(*b))?;
                    accumulate(grads, *a, da)?;
                }
                if self.needs(*b) {
                    let db = g.transposed_matmul(self.value(*a))?;
                    accumulate(grads, *b, db)?;
                }
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.clone())?;
            }
            Op::AddBias(a, bias) => {
                accumulate(grads, *a, g.clone())?;
                if self.needs(*bias) {
                    accumulate(grads, *bias, column_sums(g))?;
                }
            }
            Op::Rectify(a) => {
                let x = self.value(*a);
                let mut da = g.clone();
                for (d, &v) in da.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                accumulate(grads, *a, da)?;
            }
            Op::MulMask(a, mask) => {
                let mut da = g.clone();
                for (d, m) in da.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *d *= m;
                }
                accumulate(grads, *a, da)?;
            }
            Op::RowNormalize(a, norms) => {
                let y = &node.value;
                let mut da = Matrix::zeros(y.rows(), y.cols());
                for (i, &n) in norms.iter().enumerate() {
                    let (yi, gi) = (y.row(i), g.row(i));
                    let proj = dot(yi, gi);
                    for ((d, &yv), &gv) in da.row_mut(i).iter_mut().zip(yi).zip(gi) {
                        *d = (gv - yv * proj) / n;
                    }
                }
                accumulate(grads, *a, da)?;
            }
            Op::CosineRows(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let mut da = Matrix::zeros(va.rows(), va.cols());
                let mut db = Matrix::zeros(vb.rows(), vb.cols());
                for i in 0..va.rows() {
                    let (ra, rb) = (va.row(i), vb.row(i));
                    let (na, nb) = (norm(ra), norm(rb));
                    if na == 0.0 || nb == 0.0 {
                        continue;
                    }
                    let c = node.value[(i, 0)];
                    let gi = g[(i, 0)];
                    for (j, d) in da.row_mut(i).iter_mut().enumerate() {
                        *d = gi * (rb[j] / (na * nb) - c * ra[j] / (na * na));
                    }
                    for (j, d) in db.row_mut(i).iter_mut().enumerate() {
                        *d = gi * (ra[j] / (na * nb) - c * rb[j] / (nb * nb));
                    }
                }
                if self.needs(*a) {
                    accumulate(grads, *a, da)?;
                }
                if self.needs(*b) {
                    accumulate(grads, *b, db)?;
                }
            }
            Op::LogSoftmaxRow(a) => {
                let y = &node.value;
                let mut da = g.clone();
                for i in 0..y.rows() {
                    let gsum: f64 = g.row(i).iter().sum();
                    for (d, &yv) in da.row_mut(i).iter_mut().zip(y.row(i)) {
                        *d -= yv.exp() * gsum;
                    }
                }
                accumulate(grads, *a, da)?;
            }
            Op::SegmentMean(a, groups) | Op::SegmentSum(a, groups) => {
                let mean = matches!(node.op, Op::SegmentMean(..));
                let (r, c) = self.shape(*a);
                let mut da = Matrix::zeros(r, c);
                for (gi, members) in groups.iter().enumerate() {
                    if members.is_empty() {
                        continue;
                    }
                    let w = if mean { 1.0 / members.len() as f64 } else { 1.0 };
                    let grow = g.row(gi);
                    for &m in members {
                        for (d, gv) in da.row_mut(m).iter_mut().zip(grow) {
                            *d += w * gv;
                        }
                    }
                }
                accumulate(grads, *a, da)?;
            }
            Op::MaskedAssign(a, token, mask) => {
                let mut da = g.clone();
                let mut dt = Matrix::zeros(1, g.cols());
                for (i, &m) in mask.iter().enumerate() {
                    if m {
                        for (t, gv) in dt.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *t += gv;
                        }
                        da.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
                    }
                }
                if self.needs(*a) {
                    accumulate(grads, *a, da)?;
                }
                if self.needs(*token) {
                    accumulate(grads, *token, dt)?;
                }
            }
            Op::GatherRows(a, indices) => {
                let (r, c) = self.shape(*a);
                let mut da = Matrix::zeros(r, c);
                for (k, &i) in indices.iter().enumerate() {
                    for (d, gv) in da.row_mut(i).iter_mut().zip(g.row(k)) {
                        *d += gv;
                    }
                }
                accumulate(grads, *a, da)?;
            }
            Op::PickSum(a, entries) => {
                let (r, c) = self.shape(*a);
                let mut da = Matrix::zeros(r, c);
                let gv = g[(0, 0)];
                for &(i, j) in entries.iter() {
                    da[(i, j)] += gv;
                }
                accumulate(grads, *a, da)?;
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                accumulate(grads, *a, Matrix::filled(r, c, g[(0, 0)]))?;
            }
            Op::Scale(a, f) => accumulate(grads, *a, g.scale(*f))?,
            Op::AddScalar(a) => accumulate(grads, *a, g.clone())?,
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, delta: Matrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => {
            *slot = Some(delta);
            Ok(())
        }
    }
}

fn column_sums(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.cols());
    for r in g.iter_rows() {
        for (o, v) in out.as_mut_slice().iter_mut().zip(r) {
            *o += v;
        }
    }
    out
}

/// Cosine similarity of two slices; 0 when either has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Evaluates `program` on a fresh tape with `inputs` bound as leaves and
/// returns the scalar output together with one gradient per input.
pub fn grad<F>(inputs: &[&Matrix], program: F) -> Result<(f64, Vec<Matrix>)>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf((*m).clone())).collect();
    let out = program(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    Ok((tape.scalar(out), vars.iter().map(|&v| grads.get(v)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_of_constant_row_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::filled(2, 5, 3.7));
        let y = tape.log_softmax_row(x);
        for &v in tape.value(y).as_slice() {
            assert!((v - (1.0f64 / 5.0).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn segment_mean_definition() {
        let mut tape = Tape::new();
        let x = tape.constant(
            Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 8.0]]).unwrap(),
        );
        let groups: Groups = Rc::new(vec![vec![0, 1], vec![1, 2], vec![]]);
        let y = tape.segment_mean(x, groups).unwrap();
        assert_eq!(tape.value(y).row(0), &[2.0, 3.0]);
        assert_eq!(tape.value(y).row(1), &[4.0, 6.0]);
        assert_eq!(tape.value(y).row(2), &[0.0, 0.0]);
    }

    #[test]
    fn sum_of_linear_map_has_rows_equal_to_input() {
        let w = Matrix::from_fn(3, 4, |i, j| (i as f64) - 0.5 * (j as f64));
        let x = Matrix::from_rows(&[vec![0.5], vec![-1.0], vec![2.0], vec![0.25]]).unwrap();
        let (_, g) = grad(&[&w], |t, v| {
            let xc = t.constant(x.clone());
            let y = t.matmul(v[0], xc)?;
            Ok(t.sum(y))
        })
        .unwrap();
        for i in 0..3 {
            assert_eq!(g[0].row(i), &[0.5, -1.0, 2.0, 0.25]);
        }
    }

    #[test]
    fn cosine_gradient_for_orthogonal_unit_vectors_is_other_vector() {
        let h = Matrix::row_vector(&[1.0, 0.0, 0.0]);
        let q = Matrix::row_vector(&[0.0, 0.6, 0.8]);
        let (c, g) = grad(&[&h], |t, v| {
            let qc = t.constant(q.clone());
            let cos = t.cosine_rows(v[0], qc)?;
            Ok(t.sum(cos))
        })
        .unwrap();
        assert_eq!(c, 0.0);
        assert!(g[0].max_abs_diff(&q) < 1e-15);
    }

    #[test]
    fn cosine_with_zero_row_is_zero_with_zero_gradient() {
        let a = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, -1.0]]).unwrap();
        let (c, g) = grad(&[&a, &b], |t, v| {
            let cos = t.cosine_rows(v[0], v[1])?;
            Ok(t.sum(cos))
        })
        .unwrap();
        assert_eq!(c, 0.0);
        assert_eq!(g[0].row(0), &[0.0, 0.0]);
        assert_eq!(g[1].row(0), &[0.0, 0.0]);
    }

    #[test]
    fn row_normalize_rejects_zero_rows() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap());
        assert!(matches!(
            tape.row_normalize(x),
            Err(Error::ZeroNorm { row: 1, .. })
        ));
    }

    #[test]
    fn backward_requires_scalar_output() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::zeros(2, 2));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let a = Matrix::filled(2, 3, 1.0);
        let b = Matrix::filled(1, 4, 2.0);
        let (_, g) = grad(&[&a, &b], |t, v| Ok(t.sum(v[0]))).unwrap();
        assert_eq!(g[1], Matrix::zeros(1, 4));
        assert_eq!(g[0], Matrix::filled(2, 3, 1.0));
    }

    #[test]
    fn masked_assign_routes_gradient_to_token() {
        let x = Matrix::from_fn(3, 2, |i, j| (i + j) as f64);
        let tok = Matrix::row_vector(&[0.5, -0.5]);
        let mask = Rc::new(vec![true, false, true]);
        let (_, g) = grad(&[&x, &tok], |t, v| {
            let y = t.masked_assign(v[0], mask.clone(), v[1])?;
            Ok(t.sum(y))
        })
        .unwrap();
        assert_eq!(g[0].row(0), &[0.0, 0.0]);
        assert_eq!(g[0].row(1), &[1.0, 1.0]);
        assert_eq!(g[1].as_slice(), &[2.0, 2.0]);
    }
}
