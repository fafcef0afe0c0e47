//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its forward value and the
//! information its backward rule needs. [`Tape::backward`] walks the nodes
//! in reverse recording order and accumulates gradients into leaves and
//! bound parameters. Intermediate gradients live only for the duration of
//! one backward pass, so calling `backward` twice without
//! [`Tape::zero_grad`] adds the same leaf gradients twice.
//!
//! All matrix operations treat a 1-D tensor of length `n` as a `[1, n]` row.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::params::{ParamId, ParameterStore};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Source {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    ScaleRows(Var, Vec<f64>),
    Blend { new: Var, old: Var, mask: Vec<f64> },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Embedding { table: Var, indices: Vec<usize> },
    PickRows { srcs: Vec<Var>, picks: Vec<(usize, usize)> },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        row_weights: Vec<f64>,
        probs: Vec<f64>,
    },
    Dropout { x: Var, mask: Vec<f64> },
    Sum(Var),
    RowDot(Var, Var),
    SoftmaxRows(Var),
    ColSlice(Var, usize),
}

struct Node {
    value: Source,
    op: Op,
    requires_grad: bool,
}

/// Gradients of bound parameters extracted from a tape.
#[derive(Debug, Clone, Default)]
pub struct ParamGrads(pub Vec<(ParamId, Vec<f64>)>);

impl ParamGrads {
    /// Adds every gradient into the matching parameter's gradient buffer.
    pub fn accumulate_into(&self, store: &mut ParameterStore) -> Result<()> {
        for (id, g) in &self.0 {
            store.get_mut(*id).accumulate_grad(g)?;
        }
        Ok(())
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.0.iter().find(|(p, _)| *p == id).map(|(_, g)| g.as_slice())
    }
}

/// A dynamically recorded computation, rebuilt for every example or batch.
pub struct Tape<'s> {
    store: Option<&'s ParameterStore>,
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
    leaf_grads: HashMap<usize, Vec<f64>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims(t: &Tensor) -> Result<(usize, usize)> {
    t.dims2()
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    // a is logically [m, k]; when a_t it is stored as [k, m]. Same for b.
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: slice lengths match the strides computed above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<'s> Tape<'s> {
    pub fn new() -> Self {
        Self {
            store: None,
            nodes: Vec::new(),
            bound: HashMap::new(),
            leaf_grads: HashMap::new(),
        }
    }

    /// A tape that may bind parameters of `store` without copying them.
    pub fn with_params(store: &'s ParameterStore) -> Self {
        Self {
            store: Some(store),
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, t: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Source::Owned(t),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an input tensor. It receives gradients iff it requires them.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    /// Records an input that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.with_requires_grad(false), Op::Leaf, false)
    }

    /// Binds a parameter of the tape's store; repeated binds return the same var.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(v) = self.bound.get(&id) {
            return Ok(*v);
        }
        let store = self
            .store
            .ok_or_else(|| Error::State("tape has no parameter store".into()))?;
        if id.index() >= store.len() {
            return Err(Error::Index {
                what: "parameter store",
                index: id.index(),
                size: store.len(),
            });
        }
        self.nodes.push(Node {
            value: Source::Param(id),
            op: Op::Leaf,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.bound.insert(id, v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Source::Owned(t) => t,
            Source::Param(id) => self.store.expect("bound params imply a store").get(*id),
        }
    }

    pub fn values(&self, v: Var) -> &[f64] {
        self.value(v).values()
    }

    /// Accumulated gradient of a leaf or bound parameter.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads.get(&v.0).map(Vec::as_slice)
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.clear();
    }

    /// Gradients of every bound parameter (zeros when unreached).
    pub fn param_grads(&self) -> ParamGrads {
        let mut out: Vec<_> = self
            .bound
            .iter()
            .map(|(id, v)| {
                let g = self
                    .leaf_grads
                    .get(&v.0)
                    .cloned()
                    .unwrap_or_else(|| vec![0.0; self.value(*v).len()]);
                (*id, g)
            })
            .collect();
        out.sort_by_key(|(id, _)| *id);
        ParamGrads(out)
    }

    // ---- operations -------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims(self.value(a))?;
        let (k2, n) = dims(self.value(b))?;
        if k != k2 {
            return dim_err(format!(
                "matmul of {:?} by {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.values(a), false, self.values(b), false, &mut out, 0.0);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// Elementwise sum; a `[n]` or `[1, n]` right operand broadcasts over rows.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            let out: Vec<f64> = self
                .values(a)
                .iter()
                .zip(self.values(b))
                .map(|(x, y)| x + y)
                .collect();
            let t = Tensor::new(sa.to_vec(), out)?;
            let rg = self.rg(a) || self.rg(b);
            return Ok(self.push(t, Op::Add(a, b), rg));
        }
        let (m, n) = dims(self.value(a))?;
        let (br, bn) = dims(self.value(b))?;
        if br != 1 || bn != n {
            return dim_err(format!("add of {sa:?} and {sb:?}"));
        }
        let shape = sa.to_vec();
        let bias = self.values(b);
        let mut out = self.values(a).to_vec();
        for r in 0..m {
            out[r * n..(r + 1) * n]
                .iter_mut()
                .zip(bias)
                .for_each(|(o, x)| *o += x);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddRow(a, b), rg))
    }

    /// Elementwise (Hadamard) product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return dim_err(format!("hadamard of {sa:?} and {sb:?}"));
        }
        let out: Vec<f64> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(sa.to_vec(), out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    /// Multiplies every row of `a` elementwise by the vector `v`.
    pub fn mul_row(&mut self, a: Var, v: Var) -> Result<Var> {
        let (m, n) = dims(self.value(a))?;
        let (vr, vn) = dims(self.value(v))?;
        if vr != 1 || vn != n {
            return dim_err(format!(
                "row scaling of {:?} by {:?}",
                self.value(a).shape(),
                self.value(v).shape()
            ));
        }
        let vv = self.values(v);
        let mut out = self.values(a).to_vec();
        for r in 0..m {
            out[r * n..(r + 1) * n]
                .iter_mut()
                .zip(vv)
                .for_each(|(o, x)| *o *= x);
        }
        let t = Tensor::new(self.value(a).shape().to_vec(), out)?;
        let rg = self.rg(a) || self.rg(v);
        Ok(self.push(t, Op::MulRow(a, v), rg))
    }

    /// Scales row `r` of `x` by the single entry `c[r, 0]`.
    pub fn mul_col(&mut self, c: Var, x: Var) -> Result<Var> {
        let (m, one) = dims(self.value(c))?;
        let (mx, n) = dims(self.value(x))?;
        if one != 1 || m != mx {
            return dim_err(format!(
                "column scaling of {:?} by {:?}",
                self.value(x).shape(),
                self.value(c).shape()
            ));
        }
        let cv = self.values(c);
        let mut out = self.values(x).to_vec();
        for r in 0..m {
            out[r * n..(r + 1) * n].iter_mut().for_each(|o| *o *= cv[r]);
        }
        let t = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(c) || self.rg(x);
        Ok(self.push(t, Op::MulCol(c, x), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let out = self.values(x).iter().map(|v| v * s).collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Scale(x, s), rg))
    }

    /// Scales row `r` by the constant `factors[r]`.
    pub fn scale_rows(&mut self, x: Var, factors: Vec<f64>) -> Result<Var> {
        let (m, n) = dims(self.value(x))?;
        if factors.len() != m {
            return dim_err(format!("{} row factors for {m} rows", factors.len()));
        }
        let mut out = self.values(x).to_vec();
        for r in 0..m {
            out[r * n..(r + 1) * n].iter_mut().for_each(|o| *o *= factors[r]);
        }
        let t = Tensor::new(self.value(x).shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::ScaleRows(x, factors), rg))
    }

    /// Per-row select: rows with `mask[r] == 1` come from `new`, others from `old`.
    pub fn blend(&mut self, new: Var, old: Var, mask: Vec<f64>) -> Result<Var> {
        let (m, n) = dims(self.value(new))?;
        if self.value(new).shape() != self.value(old).shape() || mask.len() != m {
            return dim_err(format!(
                "blend of {:?} and {:?} with {} mask rows",
                self.value(new).shape(),
                self.value(old).shape(),
                mask.len()
            ));
        }
        let (nv, ov) = (self.values(new), self.values(old));
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let src = if mask[r] != 0.0 { nv } else { ov };
            out[r * n..(r + 1) * n].copy_from_slice(&src[r * n..(r + 1) * n]);
        }
        let t = Tensor::new(self.value(new).shape().to_vec(), out)?;
        let rg = self.rg(new) || self.rg(old);
        Ok(self.push(t, Op::Blend { new, old, mask }, rg))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let out = self.values(x).iter().map(|&v| f(v)).collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(t, op, rg))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// Concatenation along the last dimension.
    pub fn concat_last(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Dimension("concat of an empty list".into()))?;
        let one_d = xs.iter().all(|v| self.value(*v).shape().len() == 1);
        let (m, _) = dims(self.value(first))?;
        let mut widths = Vec::with_capacity(xs.len());
        for v in xs {
            let (r, c) = dims(self.value(*v))?;
            if r != m {
                let shapes: Vec<_> = xs.iter().map(|v| self.value(*v).shape().to_vec()).collect();
                return dim_err(format!("concat of incompatible shapes {shapes:?}"));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; m * total];
        let mut off = 0;
        for (v, &w) in xs.iter().zip(&widths) {
            let src = self.values(*v);
            for r in 0..m {
                out[r * total + off..r * total + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let shape = if one_d { vec![total] } else { vec![m, total] };
        let rg = xs.iter().any(|v| self.rg(*v));
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat(xs.to_vec()), rg))
    }

    /// Gathers rows of `table` (`[V, d]`) into a `[indices.len(), d]` matrix.
    pub fn embedding(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.shape().len() != 2 {
            return dim_err(format!("embedding table of shape {:?}", t.shape()));
        }
        let (v, d) = (t.shape()[0], t.shape()[1]);
        if indices.is_empty() {
            return Err(Error::EmptySequence("embedding lookup with no indices".into()));
        }
        let tv = t.values();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= v {
                return Err(Error::Index {
                    what: "embedding table",
                    index: i,
                    size: v,
                });
            }
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            Tensor::new(vec![indices.len(), d], out)?,
            Op::Embedding {
                table,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Builds a matrix whose row `i` is row `picks[i].1` of `srcs[picks[i].0]`.
    pub fn pick_rows(&mut self, srcs: &[Var], picks: &[(usize, usize)]) -> Result<Var> {
        if srcs.is_empty() || picks.is_empty() {
            return Err(Error::EmptySequence("row selection with no rows".into()));
        }
        let (_, n) = dims(self.value(srcs[0]))?;
        for v in srcs {
            if dims(self.value(*v))?.1 != n {
                return dim_err("row selection over sources of different widths");
            }
        }
        let mut out = Vec::with_capacity(picks.len() * n);
        for &(s, r) in picks {
            let src = srcs.get(s).ok_or(Error::Index {
                what: "row-selection sources",
                index: s,
                size: srcs.len(),
            })?;
            let (rows, _) = dims(self.value(*src))?;
            if r >= rows {
                return Err(Error::Index {
                    what: "source rows",
                    index: r,
                    size: rows,
                });
            }
            out.extend_from_slice(&self.values(*src)[r * n..(r + 1) * n]);
        }
        let rg = srcs.iter().any(|v| self.rg(*v));
        Ok(self.push(
            Tensor::new(vec![picks.len(), n], out)?,
            Op::PickRows {
                srcs: srcs.to_vec(),
                picks: picks.to_vec(),
            },
            rg,
        ))
    }

    /// Class-weighted mean cross-entropy of row-wise softmax over `logits`.
    ///
    /// The loss is `sum_i w[y_i] * -log softmax(logits_i)[y_i] / sum_i w[y_i]`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        class_weights: &[f64],
    ) -> Result<Var> {
        let (n, c) = dims(self.value(logits))?;
        if class_weights.len() != c {
            return dim_err(format!(
                "{c} logit columns but {} class weights",
                class_weights.len()
            ));
        }
        if targets.len() != n {
            return dim_err(format!("{n} logit rows but {} targets", targets.len()));
        }
        if class_weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::Config("class weights must be positive".into()));
        }
        let lv = self.values(logits);
        let mut probs = vec![0.0; n * c];
        let mut row_weights = Vec::with_capacity(n);
        let mut total = 0.0;
        let mut norm = 0.0;
        for i in 0..n {
            let y = targets[i];
            if y >= c {
                return Err(Error::Index {
                    what: "classes",
                    index: y,
                    size: c,
                });
            }
            let row = &lv[i * c..(i + 1) * c];
            let lse = log_sum_exp(row);
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
            let w = class_weights[y];
            total += w * (lse - row[y]);
            norm += w;
            row_weights.push(w);
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(total / norm),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                row_weights,
                probs,
            },
            rg,
        ))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during
    /// training; evaluation is the identity.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = self
            .values(x)
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Dropout { x, mask }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.values(x).iter().sum();
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(s), Op::Sum(x), rg))
    }

    /// Row-wise dot product of two `[m, n]` matrices, giving `[m, 1]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = dims(self.value(a))?;
        if dims(self.value(b))? != (m, n) {
            return dim_err(format!(
                "row dot of {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        let (av, bv) = (self.values(a), self.values(b));
        let out = (0..m)
            .map(|r| {
                av[r * n..(r + 1) * n]
                    .iter()
                    .zip(&bv[r * n..(r + 1) * n])
                    .map(|(x, y)| x * y)
                    .sum()
            })
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, 1], out)?, Op::RowDot(a, b), rg))
    }

    /// Row-wise softmax. Entries with `mask[r * n + j] == false` get weight 0.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (m, n) = dims(self.value(x))?;
        if let Some(mk) = mask {
            if mk.len() != m * n {
                return dim_err(format!("softmax mask of {} for {m}x{n}", mk.len()));
            }
        }
        let xv = self.values(x);
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let live = |j: usize| mask.is_none_or(|mk| mk[r * n + j]);
            let mx = (0..n)
                .filter(|&j| live(j))
                .map(|j| xv[r * n + j])
                .fold(f64::NEG_INFINITY, f64::max);
            if mx == f64::NEG_INFINITY {
                return Err(Error::EmptySequence(format!("softmax row {r} fully masked")));
            }
            let mut z = 0.0;
            for j in (0..n).filter(|&j| live(j)) {
                let e = (xv[r * n + j] - mx).exp();
                out[r * n + j] = e;
                z += e;
            }
            out[r * n..(r + 1) * n].iter_mut().for_each(|o| *o /= z);
        }
        let t = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::SoftmaxRows(x), rg))
    }

    /// Column `j` of an `[m, n]` matrix as `[m, 1]`.
    pub fn col_slice(&mut self, x: Var, j: usize) -> Result<Var> {
        let (m, n) = dims(self.value(x))?;
        if j >= n {
            return Err(Error::Index {
                what: "columns",
                index: j,
                size: n,
            });
        }
        let xv = self.values(x);
        let out = (0..m).map(|r| xv[r * n + j]).collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![m, 1], out)?, Op::ColSlice(x, j), rg))
    }

    // ---- backward ---------------------------------------------------------

    /// Back-propagates from a single-element `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return dim_err(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape()
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                match self.leaf_grads.get_mut(&i) {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, x)| *a += x),
                    None => {
                        self.leaf_grads.insert(i, g);
                    }
                }
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = self.value(Var(i)).values();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; self.value(v).len()]);
            f(buf);
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(self.value(*a)).unwrap();
                let (_, n) = dims(self.value(*b)).unwrap();
                let (av, bv) = (self.values(*a), self.values(*b));
                acc(*a, &mut |ga| gemm(m, n, k, g, false, bv, true, ga, 1.0));
                acc(*b, &mut |gb| gemm(k, m, n, av, true, g, false, gb, 1.0));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| add_into(gb, g));
            }
            Op::AddRow(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.values(*a), self.values(*b));
                acc(*a, &mut |ga| {
                    ga.iter_mut().zip(g).zip(bv).for_each(|((o, g), y)| *o += g * y)
                });
                acc(*b, &mut |gb| {
                    gb.iter_mut().zip(g).zip(av).for_each(|((o, g), x)| *o += g * x)
                });
            }
            Op::MulRow(a, v) => {
                let (av, vv) = (self.values(*a), self.values(*v));
                let n = vv.len();
                acc(*a, &mut |ga| {
                    for (k, o) in ga.iter_mut().enumerate() {
                        *o += g[k] * vv[k % n];
                    }
                });
                acc(*v, &mut |gv| {
                    for (k, (gk, ak)) in g.iter().zip(av).enumerate() {
                        gv[k % n] += gk * ak;
                    }
                });
            }
            Op::MulCol(c, x) => {
                let (cv, xv) = (self.values(*c), self.values(*x));
                let n = xv.len() / cv.len();
                acc(*c, &mut |gc| {
                    for (r, o) in gc.iter_mut().enumerate() {
                        *o += (0..n).map(|j| g[r * n + j] * xv[r * n + j]).sum::<f64>();
                    }
                });
                acc(*x, &mut |gx| {
                    for (k, o) in gx.iter_mut().enumerate() {
                        *o += g[k] * cv[k / n];
                    }
                });
            }
            Op::Scale(x, s) => acc(*x, &mut |gx| {
                gx.iter_mut().zip(g).for_each(|(o, g)| *o += g * s)
            }),
            Op::ScaleRows(x, f) => {
                let n = g.len() / f.len();
                acc(*x, &mut |gx| {
                    for (k, o) in gx.iter_mut().enumerate() {
                        *o += g[k] * f[k / n];
                    }
                })
            }
            Op::Blend { new, old, mask } => {
                let n = g.len() / mask.len();
                acc(*new, &mut |gn| {
                    for (k, o) in gn.iter_mut().enumerate() {
                        if mask[k / n] != 0.0 {
                            *o += g[k];
                        }
                    }
                });
                acc(*old, &mut |go| {
                    for (k, o) in go.iter_mut().enumerate() {
                        if mask[k / n] == 0.0 {
                            *o += g[k];
                        }
                    }
                });
            }
            Op::Sigmoid(x) => acc(*x, &mut |gx| {
                for ((o, g), y) in gx.iter_mut().zip(g).zip(out) {
                    *o += g * y * (1.0 - y);
                }
            }),
            Op::Tanh(x) => acc(*x, &mut |gx| {
                for ((o, g), y) in gx.iter_mut().zip(g).zip(out) {
                    *o += g * (1.0 - y * y);
                }
            }),
            Op::Relu(x) => acc(*x, &mut |gx| {
                for ((o, g), y) in gx.iter_mut().zip(g).zip(out) {
                    if *y > 0.0 {
                        *o += g;
                    }
                }
            }),
            Op::Concat(xs) => {
                let (m, total) = dims(self.value(Var(i))).unwrap();
                let mut off = 0;
                for v in xs {
                    let w = dims(self.value(*v)).unwrap().1;
                    acc(*v, &mut |gv| {
                        for r in 0..m {
                            add_into(
                                &mut gv[r * w..(r + 1) * w],
                                &g[r * total + off..r * total + off + w],
                            );
                        }
                    });
                    off += w;
                }
            }
            Op::Embedding { table, indices } => {
                let d = self.value(*table).shape()[1];
                acc(*table, &mut |gt| {
                    for (row, &ix) in indices.iter().enumerate() {
                        add_into(&mut gt[ix * d..(ix + 1) * d], &g[row * d..(row + 1) * d]);
                    }
                });
            }
            Op::PickRows { srcs, picks } => {
                let n = g.len() / picks.len();
                for (s, src) in srcs.iter().enumerate() {
                    acc(*src, &mut |gs| {
                        for (row, &(ps, pr)) in picks.iter().enumerate() {
                            if ps == s {
                                add_into(&mut gs[pr * n..(pr + 1) * n], &g[row * n..(row + 1) * n]);
                            }
                        }
                    });
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                row_weights,
                probs,
            } => {
                let c = probs.len() / targets.len();
                let norm: f64 = row_weights.iter().sum();
                acc(*logits, &mut |gl| {
                    for (r, (&y, &w)) in targets.iter().zip(row_weights).enumerate() {
                        let s = g[0] * w / norm;
                        for j in 0..c {
                            let onehot = if j == y { 1.0 } else { 0.0 };
                            gl[r * c + j] += s * (probs[r * c + j] - onehot);
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => acc(*x, &mut |gx| {
                for ((o, g), m) in gx.iter_mut().zip(g).zip(mask) {
                    *o += g * m;
                }
            }),
            Op::Sum(x) => acc(*x, &mut |gx| gx.iter_mut().for_each(|o| *o += g[0])),
            Op::RowDot(a, b) => {
                let (av, bv) = (self.values(*a), self.values(*b));
                let n = av.len() / g.len();
                acc(*a, &mut |ga| {
                    for (k, o) in ga.iter_mut().enumerate() {
                        *o += g[k / n] * bv[k];
                    }
                });
                acc(*b, &mut |gb| {
                    for (k, o) in gb.iter_mut().enumerate() {
                        *o += g[k / n] * av[k];
                    }
                });
            }
            Op::SoftmaxRows(x) => {
                let (m, n) = dims(self.value(Var(i))).unwrap();
                acc(*x, &mut |gx| {
                    for r in 0..m {
                        let y = &out[r * n..(r + 1) * n];
                        let gr = &g[r * n..(r + 1) * n];
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            gx[r * n + j] += y[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::ColSlice(x, j) => {
                let n = self.value(*x).len() / g.len();
                acc(*x, &mut |gx| {
                    for (r, gr) in g.iter().enumerate() {
                        gx[r * n + j] += gr;
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(row);
    row.iter().map(|v| (v - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let i = tape.constant(m(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let b = tape.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let c = tape.matmul(i, b).unwrap();
        assert_eq!(tape.values(c), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn row_by_column() {
        let mut tape = Tape::new();
        let a = tape.constant(m(&[&[1.0, 2.0]]));
        let b = tape.constant(m(&[&[3.0], &[4.0]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[1, 1]);
        assert_eq!(tape.values(c), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.matches("[2, 3]").count() == 2, "{err}");
    }

    #[test]
    fn activations_at_zero() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[1]));
        let s = tape.sigmoid(z).unwrap();
        let t = tape.tanh(z).unwrap();
        assert_eq!(tape.values(s), &[0.5]);
        assert_eq!(tape.values(t), &[0.0]);
    }

    #[test]
    fn concat_values_and_errors() {
        let mut tape = Tape::new();
        let a = tape.constant(m(&[&[1.0]]));
        let b = tape.constant(m(&[&[2.0]]));
        let c = tape.concat_last(&[a, b]).unwrap();
        assert_eq!(tape.values(c), &[1.0, 2.0]);
        assert!(tape.concat_last(&[]).is_err());
        let d = tape.constant(Tensor::zeros(&[2, 1]));
        assert!(tape.concat_last(&[a, d]).is_err());
    }

    #[test]
    fn concat_of_feature_widths() {
        let mut tape = Tape::new();
        let xs: Vec<_> = [200, 20, 20]
            .iter()
            .map(|&w| tape.constant(Tensor::zeros(&[5, w])))
            .collect();
        let c = tape.concat_last(&xs).unwrap();
        assert_eq!(tape.value(c).shape(), &[5, 240]);
    }

    #[test]
    fn concat_gradient_routes_ones() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 2]).with_requires_grad(true));
        let b = tape.leaf(Tensor::zeros(&[2, 3]).with_requires_grad(true));
        let c = tape.concat_last(&[a, b]).unwrap();
        let s = tape.sum(c).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[1.0; 4]);
        assert_eq!(tape.grad(b).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn embedding_gather_and_scatter() {
        let mut tape = Tape::new();
        let table = tape.leaf(m(&[&[1.0, 1.0], &[2.0, 2.0]]).with_requires_grad(true));
        let e = tape.embedding(table, &[1, 0, 1]).unwrap();
        assert_eq!(tape.values(e), &[2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
        let e2 = tape.embedding(table, &[0, 0]).unwrap();
        let s = tape.sum(e2).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(table).unwrap(), &[2.0, 2.0, 0.0, 0.0]);
        let err = tape.embedding(table, &[2]).unwrap_err();
        assert!(matches!(err, Error::Index { index: 2, .. }));
    }

    #[test]
    fn cross_entropy_uniform_and_saturated() {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::zeros(&[1, 6]));
        let loss = tape.softmax_cross_entropy(l, &[3], &[1.0; 6]).unwrap();
        assert!((tape.values(loss)[0] - 6f64.ln()).abs() < 1e-12);
        let mut row = vec![0.0; 6];
        row[2] = 50.0;
        let l = tape.constant(Tensor::new(vec![1, 6], row).unwrap());
        let loss = tape.softmax_cross_entropy(l, &[2], &[1.0; 6]).unwrap();
        assert!(tape.values(loss)[0] < 1e-20);
        assert!(tape.softmax_cross_entropy(l, &[2], &[1.0; 5]).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[4], 3.0));
        assert_eq!(tape.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(tape.dropout(x, 0.2, false, &mut rng).unwrap(), x);
        assert!(matches!(
            tape.dropout(x, 1.0, true, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dropout_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tape = Tape::new();
        let n = 100_000;
        let x = tape.constant(Tensor::full(&[n], 1.0));
        let y = tape.dropout(x, 0.2, true, &mut rng).unwrap();
        let vals = tape.values(y);
        let survivors = vals.iter().filter(|v| **v != 0.0).count() as f64 / n as f64;
        let mean = vals.iter().sum::<f64>() / n as f64;
        assert!((survivors - 0.8).abs() < 0.01, "{survivors}");
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn double_backward_accumulates_and_reset_reproduces() {
        let mut tape = Tape::new();
        let a = tape.leaf(m(&[&[0.3, -0.2]]).with_requires_grad(true));
        let s = tape.sigmoid(a).unwrap();
        let l = tape.sum(s).unwrap();
        tape.backward(l).unwrap();
        let first = tape.grad(a).unwrap().to_vec();
        tape.backward(l).unwrap();
        let twice: Vec<f64> = first.iter().map(|g| 2.0 * g).collect();
        assert_eq!(tape.grad(a).unwrap(), twice.as_slice());
        tape.zero_grad();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(a).unwrap(), first.as_slice());
    }

    #[test]
    fn masked_softmax_rows() {
        let mut tape = Tape::new();
        let x = tape.constant(m(&[&[1.0, 2.0, 3.0], &[0.5, 0.5, 9.0]]));
        let mask = [true, true, true, true, true, false];
        let y = tape.softmax_rows(x, Some(&mask)).unwrap();
        let v = tape.values(y);
        assert!((v[0] + v[1] + v[2] - 1.0).abs() < 1e-12);
        assert_eq!(v[5], 0.0);
        assert!((v[3] - 0.5).abs() < 1e-12);
    }
}
