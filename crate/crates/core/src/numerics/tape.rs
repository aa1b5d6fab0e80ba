//! Reverse-mode differentiation over a linear record of operations.
//!
//! Every op appends a node holding its forward value; `backward` walks the
//! record from the end and accumulates gradients into each node.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Additive logit offset for disallowed attention entries.
pub const MASK_OFFSET: f64 = -1e30;

/// Variance floor in `layer_norm`.
pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
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
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Relu(Var),
    LayerNorm(Var),
    L1Norm(Var),
    L2Norm(Var),
    MaskedSoftmax(Var),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to every recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn row_shape(x: &Tensor) -> Vec<usize> {
    let s = x.shape();
    s[..s.len().saturating_sub(1)].to_vec()
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input. Parameters and constants are both leaves.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let mut out = self.value(a).clone();
        for (o, y) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o -= y;
        }
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// `x + b` with the vector `b` broadcast over rows of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let bias = self.value(b);
        if bias.shape().len() != 1 || bias.numel() != self.value(x).cols() {
            return Err(Error::Shape(format!(
                "add_row: {:?} + {:?}",
                self.value(x).shape(),
                bias.shape()
            )));
        }
        let mut out = self.value(x).clone();
        let c = out.cols();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += bias.data()[i % c];
        }
        Ok(self.push(out, Op::AddRow(x, b)))
    }

    /// `x * g` elementwise with the vector `g` broadcast over rows of `x`.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Result<Var> {
        let gain = self.value(g);
        if gain.shape().len() != 1 || gain.numel() != self.value(x).cols() {
            return Err(Error::Shape(format!(
                "mul_row: {:?} * {:?}",
                self.value(x).shape(),
                gain.shape()
            )));
        }
        let mut out = self.value(x).clone();
        let c = out.cols();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o *= gain.data()[i % c];
        }
        Ok(self.push(out, Op::MulRow(x, g)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).scaled(c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v += c);
        self.push(out, Op::AddScalar(a))
    }

    /// Concatenates matrices with equal row counts along the last dimension.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let rows = self.value(*first).require_matrix("concat")?.0;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.value(p).require_matrix("concat")?;
            if r != rows {
                return Err(Error::Shape(format!("concat rows {r} vs {rows}")));
            }
            total += c;
        }
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::matrix(rows, total, out)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let cols = self.value(*first).require_matrix("concat_rows")?.1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.value(p).require_matrix("concat_rows")?;
            if c != cols {
                return Err(Error::Shape(format!("concat_rows cols {c} vs {cols}")));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::matrix(rows, cols, out)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = self.value(x).require_matrix("gather_rows")?;
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(Error::IdOutOfRange {
                    kind: "row",
                    id: i,
                    count: r,
                });
            }
            out.extend_from_slice(self.value(x).row(i));
        }
        let out = Tensor::matrix(indices.len(), c, out)?;
        Ok(self.push(out, Op::GatherRows(x, indices.to_vec())))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Normalizes each row to zero mean and unit variance (no affine terms).
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let mut out = v.clone();
        for i in 0..v.rows() {
            let (mean, inv_std) = row_moments(v.row(i));
            for o in out.row_mut(i) {
                *o = (*o - mean) * inv_std;
            }
        }
        self.push(out, Op::LayerNorm(x))
    }

    /// L1 norm over the last dimension. Subgradient at zero is zero.
    pub fn l1_norm(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = (0..v.rows())
            .map(|i| v.row(i).iter().map(|a| a.abs()).sum())
            .collect();
        let out = Tensor::new(&row_shape(v), data).expect("row reduction shape");
        self.push(out, Op::L1Norm(x))
    }

    /// L2 norm over the last dimension.
    pub fn l2_norm(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = (0..v.rows())
            .map(|i| sqrt(v.row(i).iter().map(|a| a * a).sum()))
            .collect();
        let out = Tensor::new(&row_shape(v), data).expect("row reduction shape");
        self.push(out, Op::L2Norm(x))
    }

    /// Row-wise softmax where `mask[k] == false` entries get a large negative
    /// offset before exponentiation and so come out exactly zero. The row
    /// maximum is taken over allowed entries only.
    pub fn masked_softmax(&mut self, scores: Var, mask: &[bool]) -> Result<Var> {
        let out = masked_softmax(self.value(scores), mask)?;
        Ok(self.push(out, Op::MaskedSoftmax(scores)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Gradients of the single-element `output` with respect to all nodes.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).numel() != 1 {
            return Err(Error::Shape(format!(
                "backward from non-scalar {:?}",
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut seed = Tensor::zeros(self.value(output).shape());
        seed.data_mut()[0] = 1.0;
        grads[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    // Only leaf gradients are kept.
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = g.matmul(&bv.transpose()?)?;
                    let gb = av.transpose()?.matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()?),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scaled(-1.0));
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRow(x, b) => {
                    accumulate(&mut grads, *b, column_sums(&g));
                    accumulate(&mut grads, *x, g);
                }
                Op::MulRow(x, gain) => {
                    let xv = self.value(*x);
                    let gv = self.value(*gain);
                    let c = g.cols();
                    let mut gx = g.clone();
                    let mut gg = vec![0.0; c];
                    for (i, d) in gx.data_mut().iter_mut().enumerate() {
                        gg[i % c] += *d * xv.data()[i];
                        *d *= gv.data()[i % c];
                    }
                    accumulate(&mut grads, *gain, Tensor::vector(gg));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.scaled(*c)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::ConcatCols(parts) => {
                    let rows = g.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        let mut part = Vec::with_capacity(rows * c);
                        for i in 0..rows {
                            part.extend_from_slice(&g.row(i)[offset..offset + c]);
                        }
                        offset += c;
                        accumulate(&mut grads, p, Tensor::matrix(rows, c, part)?);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).numel();
                        let part = Tensor::new(self.value(p).shape(), g.data()[offset..offset + n].to_vec())?;
                        offset += n;
                        accumulate(&mut grads, p, part);
                    }
                }
                Op::GatherRows(x, indices) => {
                    let mut gx = Tensor::zeros(self.value(*x).shape());
                    for (k, &i) in indices.iter().enumerate() {
                        for (d, s) in gx.row_mut(i).iter_mut().zip(g.row(k)) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    for (d, &x) in ga.data_mut().iter_mut().zip(self.value(*a).data()) {
                        if x <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LayerNorm(x) => {
                    let xv = self.value(*x);
                    let y = &node.value;
                    let mut gx = Tensor::zeros(xv.shape());
                    let c = xv.cols() as f64;
                    for i in 0..xv.rows() {
                        let (_, inv_std) = row_moments(xv.row(i));
                        let gy = g.row(i);
                        let yr = y.row(i);
                        let mean_g: f64 = gy.iter().sum::<f64>() / c;
                        let mean_gy: f64 = gy.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / c;
                        for ((d, &gv), &yv) in gx.row_mut(i).iter_mut().zip(gy).zip(yr) {
                            *d = inv_std * (gv - mean_g - yv * mean_gy);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::L1Norm(x) => {
                    let xv = self.value(*x);
                    let mut gx = Tensor::zeros(xv.shape());
                    for i in 0..xv.rows() {
                        let gi = g.data()[i];
                        for (d, &v) in gx.row_mut(i).iter_mut().zip(xv.row(i)) {
                            *d = gi * sign(v);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::L2Norm(x) => {
                    let xv = self.value(*x);
                    let mut gx = Tensor::zeros(xv.shape());
                    for i in 0..xv.rows() {
                        let norm = node.value.data()[i];
                        if norm == 0.0 {
                            continue;
                        }
                        let gi = g.data()[i] / norm;
                        for (d, &v) in gx.row_mut(i).iter_mut().zip(xv.row(i)) {
                            *d = gi * v;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::MaskedSoftmax(s) => {
                    let y = &node.value;
                    let mut gs = Tensor::zeros(y.shape());
                    for i in 0..y.rows() {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((d, &yv), &gv) in gs.row_mut(i).iter_mut().zip(yr).zip(gr) {
                            *d = yv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *s, gs);
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).shape();
                    let numel = self.value(*a).numel();
                    accumulate(&mut grads, *a, Tensor::new(shape, vec![g.item(); numel])?);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for (i, v) in g.data().iter().enumerate() {
        out[i % c] += v;
    }
    Tensor::vector(out)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn row_moments(row: &[f64]) -> (f64, f64) {
    let c = row.len() as f64;
    let mean = row.iter().sum::<f64>() / c;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c;
    (mean, 1.0 / sqrt(var + LAYER_NORM_EPS))
}

/// Value-only masked softmax; see [`Tape::masked_softmax`].
pub fn masked_softmax(scores: &Tensor, mask: &[bool]) -> Result<Tensor> {
    if mask.len() != scores.numel() {
        return Err(Error::Shape(format!(
            "mask of {} entries for scores {:?}",
            mask.len(),
            scores.shape()
        )));
    }
    let c = scores.cols();
    let mut out = scores.clone();
    for i in 0..scores.rows() {
        let allowed = &mask[i * c..(i + 1) * c];
        let row = scores.row(i);
        let max = row
            .iter()
            .zip(allowed)
            .filter(|(_, &a)| a)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::AllMaskedRow(i));
        }
        let o = out.row_mut(i);
        let mut total = 0.0;
        for ((o, &s), &a) in o.iter_mut().zip(row).zip(allowed) {
            let offset = if a { 0.0 } else { MASK_OFFSET };
            *o = libm::exp(s + offset - max);
            total += *o;
        }
        o.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}
