//! Reverse-mode differentiation over a linear tape.
//!
//! Every op appends one node; node order is therefore a topological order
//! and `backward` is a single reverse sweep. Parameter leaves borrow their
//! values from a [`ParamSet`] so large tables are never copied per step.

use rand::Rng;

use super::array::{log_sum_exp, softmax_rows, Array, Real};
use super::params::{ParamId, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for [`Tape::custom`]: receives the input values, the output
/// value and the output gradient, returns one gradient per input.
pub type BackwardFn<T> = Box<dyn Fn(&[&Array<T>], &Array<T>, &Array<T>) -> Vec<Array<T>>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    Gather { param: ParamId, rows: Vec<usize> },
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Concat { parts: Vec<Var>, axis: usize },
    SliceCols { src: Var, start: usize },
    Transpose(Var),
    Softmax(Var),
    Sum(Var),
    AddN(Vec<Var>),
    CrossEntropy { logits: Var, target: Array<T> },
    MarginalNll { logits: Var, correct: Vec<usize> },
    Dropout { src: Var, mask: Vec<T> },
    MaskFill { src: Var, keep: Vec<bool> },
    Custom { inputs: Vec<Var>, backward: BackwardFn<T> },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::Gather { .. } => "gather",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Concat { .. } => "concat",
            Op::SliceCols { .. } => "slice",
            Op::Transpose(_) => "transpose",
            Op::Softmax(_) => "softmax",
            Op::Sum(_) => "sum",
            Op::AddN(_) => "add_n",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::MarginalNll { .. } => "marginal_nll",
            Op::Dropout { .. } => "dropout",
            Op::MaskFill { .. } => "mask_fill",
            Op::Custom { .. } => "custom",
        }
    }
}

struct Node<T> {
    value: Option<Array<T>>,
    op: Op<T>,
}

pub struct Tape<'p, T> {
    params: &'p ParamSet<T>,
    nodes: Vec<Node<T>>,
}

/// Gradients produced by one backward sweep.
pub struct Gradients<T> {
    params: Vec<Option<Array<T>>>,
    nodes: Vec<Option<Array<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a parameter, `None` if the loss does not depend on it.
    pub fn param(&self, id: ParamId) -> Option<&Array<T>> {
        self.params[id.0].as_ref()
    }

    pub fn param_mut(&mut self, id: ParamId) -> Option<&mut Array<T>> {
        self.params[id.0].as_mut()
    }

    pub fn wrt(&self, var: Var) -> Option<&Array<T>> {
        self.nodes[var.0].as_ref()
    }

    pub fn iter_params(&self) -> impl Iterator<Item = (ParamId, &Array<T>)> {
        self.params
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn iter_params_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Array<T>)> {
        self.params
            .iter_mut()
            .enumerate()
            .filter_map(|(i, g)| g.as_mut().map(|g| (ParamId(i), g)))
    }
}

fn broadcast_kind(a: &[usize], b: &[usize]) -> Result<Broadcast> {
    let a_len: usize = a.iter().product();
    let b_len: usize = b.iter().product();
    let a_cols = *a.last().unwrap_or(&0);
    if a == b {
        Ok(Broadcast::Same)
    } else if b_len == 1 {
        Ok(Broadcast::Scalar)
    } else if b_len == a_cols && a_len.is_multiple_of(a_cols.max(1)) && (b.len() == 1 || b[0] == 1) {
        Ok(Broadcast::Row)
    } else {
        Err(Error::shape(format!("cannot broadcast {b:?} onto {a:?}")))
    }
}

fn broadcast_get<T: Real>(b: &Array<T>, kind: Broadcast, k: usize, cols: usize) -> T {
    match kind {
        Broadcast::Same => b.data()[k],
        Broadcast::Row => b.data()[k % cols],
        Broadcast::Scalar => b.data()[0],
    }
}

fn reduce_to<T: Real>(g: &Array<T>, kind: Broadcast, shape: &[usize]) -> Array<T> {
    match kind {
        Broadcast::Same => g.clone(),
        Broadcast::Scalar => Array::filled(shape, g.sum()),
        Broadcast::Row => {
            let cols = g.cols();
            let mut out = Array::zeros(shape);
            for (k, &x) in g.data().iter().enumerate() {
                out.data_mut()[k % cols] += x;
            }
            out
        }
    }
}

fn check_finite<T: Real>(value: &Array<T>, op: &'static str) -> Result<()> {
    // -inf is a legal masked logit; NaN and +inf are not.
    if value
        .data()
        .iter()
        .any(|x| x.is_nan() || *x == T::infinity())
    {
        return Err(Error::NonFinite(op.to_string()));
    }
    Ok(())
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn params(&self) -> &'p ParamSet<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Array<T> {
        let node = &self.nodes[var.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("every non-param node stores its value"),
        }
    }

    fn push(&mut self, value: Array<T>, op: Op<T>) -> Result<Var> {
        check_finite(&value, op.name())?;
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Array<T>) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    /// Rows of a parameter matrix stacked into `[rows.len(), cols]`.
    pub fn gather(&mut self, id: ParamId, rows: &[usize]) -> Result<Var> {
        let table = self.params.get(id);
        let cols = table.cols();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r >= table.rows() {
                return Err(Error::shape(format!(
                    "row {r} out of range for {:?}",
                    table.shape()
                )));
            }
            data.extend_from_slice(table.row_slice(r));
        }
        let value = Array::matrix(rows.len(), cols, data)?;
        self.push(
            value,
            Op::Gather {
                param: id,
                rows: rows.to_vec(),
            },
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b))
    }

    /// `a + b` where `b` may be a row or a scalar broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let kind = broadcast_kind(va.shape(), vb.shape())?;
        let cols = va.cols();
        let value = Array::from_fn(va.shape(), |k| {
            va.data()[k] + broadcast_get(vb, kind, k, cols)
        });
        self.push(value, Op::Add(a, b, kind))
    }

    /// `a * b` elementwise, with the same broadcasting as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let kind = broadcast_kind(va.shape(), vb.shape())?;
        let cols = va.cols();
        let value = Array::from_fn(va.shape(), |k| {
            va.data()[k] * broadcast_get(vb, kind, k, cols)
        });
        self.push(value, Op::Mul(a, b, kind))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(T::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    /// Concatenation along `axis`. Rank-1 inputs concatenate end to end;
    /// rank-2 inputs stack rows (`axis == 0`) or join columns (`axis == 1`).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat of nothing"));
        }
        let values: Vec<&Array<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let rank = values[0].shape().len();
        if values.iter().any(|v| v.shape().len() != rank) {
            return Err(Error::shape("concat of mixed ranks"));
        }
        let value = match (rank, axis) {
            (1, 0) => Array::vector(values.iter().flat_map(|v| v.data().iter().copied()).collect()),
            (2, 0) => {
                let cols = values[0].cols();
                if values.iter().any(|v| v.cols() != cols) {
                    return Err(Error::shape("concat axis 0 needs equal column counts"));
                }
                let rows = values.iter().map(|v| v.rows()).sum();
                Array::matrix(
                    rows,
                    cols,
                    values.iter().flat_map(|v| v.data().iter().copied()).collect(),
                )?
            }
            (2, 1) => {
                let rows = values[0].rows();
                if values.iter().any(|v| v.rows() != rows) {
                    return Err(Error::shape("concat axis 1 needs equal row counts"));
                }
                let cols: usize = values.iter().map(|v| v.cols()).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for v in &values {
                        data.extend_from_slice(v.row_slice(r));
                    }
                }
                Array::matrix(rows, cols, data)?
            }
            _ => return Err(Error::shape(format!("concat axis {axis} on rank {rank}"))),
        };
        self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        )
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(src);
        if start + len > v.cols() {
            return Err(Error::shape(format!(
                "slice {start}..{} of {} columns",
                start + len,
                v.cols()
            )));
        }
        let rows = v.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&v.row_slice(r)[start..start + len]);
        }
        let value = Array::matrix(rows, len, data)?;
        self.push(value, Op::SliceCols { src, start })
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    /// Softmax over each row.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.is_empty() {
            return Err(Error::invalid("softmax of an empty array"));
        }
        let value = softmax_rows(v);
        self.push(value, Op::Softmax(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Array::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("add_n of nothing"))?;
        let mut value = self.value(*first).clone();
        for &p in &parts[1..] {
            let v = self.value(p);
            if v.shape() != value.shape() {
                return Err(Error::shape("add_n operands differ in shape"));
            }
            value.accumulate(v);
        }
        self.push(value, Op::AddN(parts.to_vec()))
    }

    /// `-sum(target * log softmax(logits))` over a single row of logits.
    pub fn cross_entropy(&mut self, logits: Var, target: Array<T>) -> Result<Var> {
        let l = self.value(logits);
        if l.rows() != 1 || l.len() != target.len() {
            return Err(Error::shape(format!(
                "cross_entropy logits {:?} vs target {:?}",
                l.shape(),
                target.shape()
            )));
        }
        let total = target.sum().as_f64();
        if target.data().iter().any(|&t| t < T::zero()) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("cross_entropy target is not a distribution"));
        }
        let lse = log_sum_exp(l.data().iter().copied());
        let mut loss = T::zero();
        for (&t, &x) in target.data().iter().zip(l.data()) {
            if t > T::zero() {
                loss += t * (lse - x);
            }
        }
        self.push(Array::scalar(loss), Op::CrossEntropy { logits, target })
    }

    /// `-log(sum of softmax(logits) over the correct indices)`.
    pub fn marginal_nll(&mut self, logits: Var, correct: &[usize]) -> Result<Var> {
        let l = self.value(logits);
        if l.rows() != 1 {
            return Err(Error::shape("marginal_nll expects a single row of logits"));
        }
        if correct.is_empty() || correct.iter().any(|&i| i >= l.len()) {
            return Err(Error::invalid("marginal_nll needs in-range correct indices"));
        }
        let all = log_sum_exp(l.data().iter().copied());
        let good = log_sum_exp(correct.iter().map(|&i| l.data()[i]));
        let loss = all - good;
        if !loss.is_finite() {
            return Err(Error::NonFinite("marginal_nll".into()));
        }
        self.push(
            Array::scalar(loss),
            Op::MarginalNll {
                logits,
                correct: correct.to_vec(),
            },
        )
    }

    /// Inverted dropout. `keep == 1` returns `x` untouched.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, keep: T, rng: &mut R) -> Result<Var> {
        if !(keep > T::zero() && keep <= T::one()) {
            return Err(Error::invalid(format!("keep_prob {keep} outside (0, 1]")));
        }
        if keep == T::one() {
            return Ok(x);
        }
        let scale = T::one() / keep;
        let keep_f = keep.as_f64();
        let n = self.value(x).len();
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if rng.gen::<f64>() < keep_f {
                    scale
                } else {
                    T::zero()
                }
            })
            .collect();
        let v = self.value(x);
        let value = Array::from_fn(v.shape(), |k| v.data()[k] * mask[k]);
        self.push(value, Op::Dropout { src: x, mask })
    }

    /// Replaces entries where `keep[k]` is false with `-inf`.
    pub fn mask_fill(&mut self, src: Var, keep: &[bool]) -> Result<Var> {
        let v = self.value(src);
        if keep.len() != v.len() {
            return Err(Error::shape("mask length differs from input"));
        }
        let value = Array::from_fn(v.shape(), |k| {
            if keep[k] {
                v.data()[k]
            } else {
                T::neg_infinity()
            }
        });
        self.push(
            value,
            Op::MaskFill {
                src,
                keep: keep.to_vec(),
            },
        )
    }

    /// An op with caller-supplied forward value and backward rule.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        forward: impl FnOnce(&[&Array<T>]) -> Result<Array<T>>,
        backward: BackwardFn<T>,
    ) -> Result<Var> {
        let values: Vec<&Array<T>> = inputs.iter().map(|&v| self.value(v)).collect();
        let value = forward(&values)?;
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward,
            },
        )
    }

    /// Reverse sweep from a scalar loss. Each call starts from zeroed
    /// gradients; nothing is carried over from earlier sweeps.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward needs a scalar loss"));
        }
        let mut grads: Vec<Option<Array<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut param_grads: Vec<Option<Array<T>>> = (0..self.params.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array::filled(self.value(loss).shape(), T::one()));

        fn acc<T: Real>(slot: &mut Option<Array<T>>, g: Array<T>) {
            match slot {
                Some(existing) => existing.accumulate(&g),
                None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out = self.value(Var(idx));
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let g = g.clone();
                    acc(&mut param_grads[id.0], g);
                }
                Op::Gather { param, rows } => {
                    let table = self.params.get(*param);
                    let slot = param_grads[param.0].get_or_insert_with(|| Array::zeros(table.shape()));
                    let cols = table.cols();
                    for (k, &r) in rows.iter().enumerate() {
                        let dst = &mut slot.data_mut()[r * cols..(r + 1) * cols];
                        for (d, &s) in dst.iter_mut().zip(g.row_slice(k)) {
                            *d += s;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = g.matmul(&vb.transpose())?.reshape(va.shape())?;
                    let gb = va.transpose().matmul(&g)?.reshape(vb.shape())?;
                    acc(&mut grads[a.0], ga);
                    acc(&mut grads[b.0], gb);
                }
                Op::Add(a, b, kind) => {
                    let gb = reduce_to(&g, *kind, self.value(*b).shape());
                    acc(&mut grads[a.0], g.clone());
                    acc(&mut grads[b.0], gb);
                }
                Op::Mul(a, b, kind) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let cols = va.cols();
                    let ga = Array::from_fn(va.shape(), |k| {
                        g.data()[k] * broadcast_get(vb, *kind, k, cols)
                    });
                    let gab = Array::from_fn(va.shape(), |k| g.data()[k] * va.data()[k]);
                    acc(&mut grads[a.0], ga);
                    acc(&mut grads[b.0], reduce_to(&gab, *kind, vb.shape()));
                }
                Op::Scale(a, c) => acc(&mut grads[a.0], g.map(|x| x * *c)),
                Op::Tanh(a) => {
                    let ga = g.zip_map(out, |gi, y| gi * (T::one() - y * y))?;
                    acc(&mut grads[a.0], ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(out, |gi, y| gi * y * (T::one() - y))?;
                    acc(&mut grads[a.0], ga);
                }
                Op::Concat { parts, axis } => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.value(p).shape().to_vec();
                        let part = if shape.len() == 1 || *axis == 0 {
                            let n: usize = shape.iter().product();
                            let gp = Array::new(shape, g.data()[offset..offset + n].to_vec())?;
                            offset += n;
                            gp
                        } else {
                            let (rows, cols) = (shape[0], shape[1]);
                            let mut data = Vec::with_capacity(rows * cols);
                            for r in 0..rows {
                                data.extend_from_slice(&g.row_slice(r)[offset..offset + cols]);
                            }
                            offset += cols;
                            Array::matrix(rows, cols, data)?
                        };
                        acc(&mut grads[p.0], part);
                    }
                }
                Op::SliceCols { src, start } => {
                    let vs = self.value(*src);
                    let mut gs = Array::zeros(vs.shape());
                    let (cols, len) = (vs.cols(), g.cols());
                    for r in 0..g.rows() {
                        gs.data_mut()[r * cols + start..r * cols + start + len]
                            .copy_from_slice(g.row_slice(r));
                    }
                    acc(&mut grads[src.0], gs);
                }
                Op::Transpose(a) => {
                    let ga = g.transpose().reshape(self.value(*a).shape())?;
                    acc(&mut grads[a.0], ga);
                }
                Op::Softmax(a) => {
                    let cols = out.cols();
                    let mut ga = g.clone();
                    for (r, row) in ga.data_mut().chunks_mut(cols).enumerate() {
                        let y = out.row_slice(r);
                        let dot: T = row.iter().zip(y).map(|(&gi, &yi)| gi * yi).sum();
                        for (gi, &yi) in row.iter_mut().zip(y) {
                            *gi = yi * (*gi - dot);
                        }
                    }
                    acc(&mut grads[a.0], ga);
                }
                Op::Sum(a) => {
                    let ga = Array::filled(self.value(*a).shape(), g.data()[0]);
                    acc(&mut grads[a.0], ga);
                }
                Op::AddN(parts) => {
                    for &p in parts {
                        acc(&mut grads[p.0], g.clone());
                    }
                }
                Op::CrossEntropy { logits, target } => {
                    let p = softmax_rows(self.value(*logits));
                    let scale = g.data()[0];
                    let gl = Array::from_fn(p.shape(), |k| (p.data()[k] - target.data()[k]) * scale);
                    acc(&mut grads[logits.0], gl);
                }
                Op::MarginalNll { logits, correct } => {
                    let l = self.value(*logits);
                    let mut gl = softmax_rows(l);
                    let good = log_sum_exp(correct.iter().map(|&i| l.data()[i]));
                    for &i in correct {
                        gl.data_mut()[i] -= (l.data()[i] - good).exp();
                    }
                    let scale = g.data()[0];
                    acc(&mut grads[logits.0], gl.map(|x| x * scale));
                }
                Op::Dropout { src, mask } => {
                    let gs = Array::from_fn(g.shape(), |k| g.data()[k] * mask[k]);
                    acc(&mut grads[src.0], gs);
                }
                Op::MaskFill { src, keep } => {
                    let gs = Array::from_fn(g.shape(), |k| {
                        if keep[k] {
                            g.data()[k]
                        } else {
                            T::zero()
                        }
                    });
                    acc(&mut grads[src.0], gs);
                }
                Op::Custom { inputs, backward } => {
                    let values: Vec<&Array<T>> = inputs.iter().map(|&v| self.value(v)).collect();
                    let gs = backward(&values, out, &g);
                    if gs.len() != inputs.len() {
                        return Err(Error::shape("custom backward returned wrong arity"));
                    }
                    for (&v, gi) in inputs.iter().zip(gs) {
                        acc(&mut grads[v.0], gi);
                    }
                }
            }
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            params: param_grads,
            nodes: grads,
        })
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
