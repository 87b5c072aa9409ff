//! Minimal reverse-mode automatic differentiation over `f64` matrices.
//!
//! A [`Graph`] is built fresh for every forward pass (define-by-run). Every
//! value is a 2-D matrix; sequences are stored row-major as `(batch * len, channels)`
//! so that the sequence helpers ([`Graph::seq_shift`], [`Graph::seq_step`],
//! [`Graph::seq_mean`]) can address position `t` of sample `b` at row `b * len + t`.
//!
//! Parameters live in a [`ParamStore`] and enter a graph through
//! [`Graph::param`]; after [`Graph::backward`] their gradients can be read back
//! by [`ParamId`].

use ndarray::{s, Array2, Axis};

pub type Matrix = Array2<f64>;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Handle to a trainable tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable matrices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn fill(&mut self, value: f64) {
        for v in &mut self.values {
            v.fill(value);
        }
    }
}

enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    ClampedLn { x: Var, lo: f64, hi: f64 },
    Mean(Var),
    Cols { x: Var, start: usize },
    Concat(Vec<Var>),
    SeqShift { x: Var, len: usize, offset: isize },
    SeqStep { x: Var, len: usize, step: usize },
    SeqMean { x: Var, len: usize },
    StackSteps(Vec<Var>),
    Reshape(Var),
    SoftmaxPair(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        len: usize,
        heads: usize,
        probs: Vec<Matrix>,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Matrix,
        inv_std: Vec<f64>,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Gradients produced by [`Graph::backward`].
pub struct Grads {
    nodes: Vec<Option<Matrix>>,
    params: Vec<(ParamId, Var)>,
}

impl Grads {
    /// Gradient with respect to a node; zeros if the loss does not depend on it.
    pub fn wrt(&self, var: Var, shape: (usize, usize)) -> Matrix {
        self.nodes[var.0]
            .clone()
            .unwrap_or_else(|| Matrix::zeros(shape))
    }

    /// Gradient for a parameter, or `None` if the parameter never entered the graph.
    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.nodes[v.0].as_ref())
    }

    /// Gradients aligned with `store`, zero-filled where a parameter was unused.
    pub fn for_store(&self, store: &ParamStore) -> Vec<Matrix> {
        store
            .ids()
            .map(|id| {
                self.param(id)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(store.get(id).raw_dim()))
            })
            .collect()
    }
}

/// Computation graph recorded during a forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; gradients are still tracked so callers may inspect them.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Var {
        self.input(Matrix::from_elem((1, 1), value))
    }

    /// Registers a parameter, reusing the node if it is already in the graph.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some((_, v)) = self.params.iter().find(|(p, _)| *p == id) {
            return *v;
        }
        let v = self.push(store.get(id).clone(), Op::Param);
        self.params.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a (m, n) + row (1, n)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + self.value(row);
        self.push(value, Op::AddRow(a, row))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).mapv(|v| scale * v + shift);
        self.push(value, Op::Affine { x, scale })
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(f64::exp);
        self.push(value, Op::Exp(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v * v);
        self.push(value, Op::Square(x))
    }

    /// `ln(clamp(x, lo, hi))`; the gradient is zero where clamping is active.
    pub fn clamped_ln(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(x).mapv(|v| v.clamp(lo, hi).ln());
        self.push(value, Op::ClampedLn { x, lo, hi })
    }

    /// Mean of all entries as a `1 x 1` node.
    pub fn mean(&mut self, x: Var) -> Var {
        let m = self.value(x).mean().unwrap_or(0.0);
        self.push(Matrix::from_elem((1, 1), m), Op::Mean(x))
    }

    /// Column block `[start, start + len)`.
    pub fn cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(value, Op::Cols { x, start })
    }

    /// Column-wise concatenation of nodes with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat: row counts differ");
        self.push(value, Op::Concat(parts.to_vec()))
    }

    /// Shifts every length-`len` sequence so output position `t` reads input
    /// position `t + offset`, with zeros outside the sequence.
    pub fn seq_shift(&mut self, x: Var, len: usize, offset: isize) -> Var {
        let src = self.value(x);
        let (rows, cols) = src.dim();
        let mut value = Matrix::zeros((rows, cols));
        for b in 0..rows / len {
            for t in 0..len {
                let from = t as isize + offset;
                if from >= 0 && (from as usize) < len {
                    value
                        .row_mut(b * len + t)
                        .assign(&src.row(b * len + from as usize));
                }
            }
        }
        self.push(value, Op::SeqShift { x, len, offset })
    }

    /// Rows at position `step` of every sequence, as a `(batch, channels)` node.
    pub fn seq_step(&mut self, x: Var, len: usize, step: usize) -> Var {
        let src = self.value(x);
        let batch = src.nrows() / len;
        let mut value = Matrix::zeros((batch, src.ncols()));
        for b in 0..batch {
            value.row_mut(b).assign(&src.row(b * len + step));
        }
        self.push(value, Op::SeqStep { x, len, step })
    }

    /// Mean over the positions of every sequence.
    pub fn seq_mean(&mut self, x: Var, len: usize) -> Var {
        let src = self.value(x);
        let batch = src.nrows() / len;
        let mut value = Matrix::zeros((batch, src.ncols()));
        for b in 0..batch {
            let block = src.slice(s![b * len..(b + 1) * len, ..]);
            value.row_mut(b).assign(&block.mean_axis(Axis(0)).unwrap());
        }
        self.push(value, Op::SeqMean { x, len })
    }

    /// Inverse of [`Graph::seq_step`]: interleaves per-step `(batch, c)` nodes
    /// into a `(batch * steps, c)` sequence node.
    pub fn stack_steps(&mut self, steps: &[Var]) -> Var {
        let len = steps.len();
        let (batch, cols) = self.shape(steps[0]);
        let mut value = Matrix::zeros((batch * len, cols));
        for (t, step) in steps.iter().enumerate() {
            let src = self.value(*step);
            for b in 0..batch {
                value.row_mut(b * len + t).assign(&src.row(b));
            }
        }
        self.push(value, Op::StackSteps(steps.to_vec()))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let flat: Vec<f64> = self.value(x).iter().copied().collect();
        let value = Matrix::from_shape_vec((rows, cols), flat).expect("reshape: size mismatch");
        self.push(value, Op::Reshape(x))
    }

    /// Two-way softmax over logit blocks laid out as `[z_up (K) | z_down (K)]`;
    /// the output uses the same layout `[p_up | p_down]`.
    pub fn softmax_pair(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let k = src.ncols() / 2;
        let mut value = Matrix::zeros(src.raw_dim());
        for r in 0..src.nrows() {
            for c in 0..k {
                let (up, down) = softmax_pair(src[[r, c]], src[[r, c + k]]);
                value[[r, c]] = up;
                value[[r, c + k]] = down;
            }
        }
        self.push(value, Op::SoftmaxPair(x))
    }

    /// Scaled dot-product self-attention with `heads` heads over
    /// `(batch * len, d)` query/key/value nodes.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, len: usize, heads: usize) -> Var {
        let (rows, d) = self.shape(q);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let batch = rows / len;
        let mut out = Matrix::zeros((rows, d));
        let mut probs = Vec::with_capacity(batch * heads);
        {
            let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
            for b in 0..batch {
                for h in 0..heads {
                    let r = s![b * len..(b + 1) * len, h * dh..(h + 1) * dh];
                    let scores = qv.slice(r).dot(&kv.slice(r).t()) * scale;
                    let p = softmax_rows(scores);
                    out.slice_mut(r).assign(&p.dot(&vv.slice(r)));
                    probs.push(p);
                }
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                len,
                heads,
                probs,
            },
        )
    }

    /// Row-wise layer normalisation with learnable `gain` and `bias` rows.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let src = self.value(x);
        let (rows, cols) = src.dim();
        let mut normed = Matrix::zeros((rows, cols));
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = src.row(r);
            let mean = row.mean().unwrap();
            let var = row.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            let is = 1.0 / (var + eps).sqrt();
            normed.row_mut(r).assign(&row.mapv(|v| (v - mean) * is));
            inv_std.push(is);
        }
        let value = &normed * self.value(gain) + self.value(bias);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
        )
    }

    /// Reverse sweep from a `1 x 1` loss node.
    pub fn backward(&self, loss: Var) -> Grads {
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::ones(self.value(loss).raw_dim()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *row, gr);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, -&g);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Affine { x, scale } => accumulate(&mut grads, *x, &g * *scale),
                Op::Relu(x) => {
                    let mask = self.value(*x).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads, *x, &g * &mask);
                }
                Op::Sigmoid(x) => {
                    let d = node.value.mapv(|p| p * (1.0 - p));
                    accumulate(&mut grads, *x, &g * &d);
                }
                Op::Tanh(x) => {
                    let d = node.value.mapv(|t| 1.0 - t * t);
                    accumulate(&mut grads, *x, &g * &d);
                }
                Op::Exp(x) => accumulate(&mut grads, *x, &g * &node.value),
                Op::Square(x) => {
                    let d = self.value(*x) * 2.0;
                    accumulate(&mut grads, *x, &g * &d);
                }
                Op::ClampedLn { x, lo, hi } => {
                    let d = self
                        .value(*x)
                        .mapv(|v| if v >= *lo && v <= *hi { 1.0 / v } else { 0.0 });
                    accumulate(&mut grads, *x, &g * &d);
                }
                Op::Mean(x) => {
                    let shape = self.value(*x).raw_dim();
                    let n = self.value(*x).len().max(1) as f64;
                    accumulate(&mut grads, *x, Matrix::from_elem(shape, g[[0, 0]] / n));
                }
                Op::Cols { x, start } => {
                    let w = g.ncols();
                    let gx = slot(&mut grads, *x, self.value(*x).raw_dim());
                    let mut dst = gx.slice_mut(s![.., *start..*start + w]);
                    dst += &g;
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        accumulate(&mut grads, *p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::SeqShift { x, len, offset } => {
                    let (rows, cols) = g.dim();
                    let mut gx = Matrix::zeros((rows, cols));
                    for b in 0..rows / len {
                        for t in 0..*len {
                            let from = t as isize + offset;
                            if from >= 0 && (from as usize) < *len {
                                let mut dst = gx.row_mut(b * len + from as usize);
                                dst += &g.row(b * len + t);
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::SeqStep { x, len, step } => {
                    let gx = slot(&mut grads, *x, self.value(*x).raw_dim());
                    for b in 0..g.nrows() {
                        let mut dst = gx.row_mut(b * len + step);
                        dst += &g.row(b);
                    }
                }
                Op::SeqMean { x, len } => {
                    let mut gx = Matrix::zeros(self.value(*x).raw_dim());
                    let inv = 1.0 / *len as f64;
                    for b in 0..g.nrows() {
                        let row = g.row(b).mapv(|v| v * inv);
                        for t in 0..*len {
                            gx.row_mut(b * len + t).assign(&row);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::StackSteps(steps) => {
                    let len = steps.len();
                    for (t, step) in steps.iter().enumerate() {
                        let (batch, cols) = self.shape(*step);
                        let mut gs = Matrix::zeros((batch, cols));
                        for b in 0..batch {
                            gs.row_mut(b).assign(&g.row(b * len + t));
                        }
                        accumulate(&mut grads, *step, gs);
                    }
                }
                Op::Reshape(x) => {
                    let flat: Vec<f64> = g.iter().copied().collect();
                    let gx = Matrix::from_shape_vec(self.value(*x).raw_dim(), flat).unwrap();
                    accumulate(&mut grads, *x, gx);
                }
                Op::SoftmaxPair(x) => {
                    let k = g.ncols() / 2;
                    let mut gx = Matrix::zeros(g.raw_dim());
                    for r in 0..g.nrows() {
                        for c in 0..k {
                            let (up, down) = (node.value[[r, c]], node.value[[r, c + k]]);
                            let d = (g[[r, c]] - g[[r, c + k]]) * up * down;
                            gx[[r, c]] = d;
                            gx[[r, c + k]] = -d;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    len,
                    heads,
                    probs,
                } => {
                    let (rows, d) = g.dim();
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let mut gq = Matrix::zeros((rows, d));
                    let mut gk = Matrix::zeros((rows, d));
                    let mut gv = Matrix::zeros((rows, d));
                    for b in 0..rows / len {
                        for h in 0..*heads {
                            let r = s![b * len..(b + 1) * len, h * dh..(h + 1) * dh];
                            let p = &probs[b * heads + h];
                            let go = g.slice(r);
                            gv.slice_mut(r).assign(&p.t().dot(&go));
                            let gp = go.dot(&vv.slice(r).t());
                            let row_dot = (&gp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
                            let gs = p * &(&gp - &row_dot) * scale;
                            gq.slice_mut(r).assign(&gs.dot(&kv.slice(r)));
                            gk.slice_mut(r).assign(&gs.t().dot(&qv.slice(r)));
                        }
                    }
                    accumulate(&mut grads, *q, gq);
                    accumulate(&mut grads, *k, gk);
                    accumulate(&mut grads, *v, gv);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normed,
                    inv_std,
                } => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gg = (&g * normed).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gn = &g * self.value(*gain);
                    let n = g.ncols() as f64;
                    let mut gx = Matrix::zeros(g.raw_dim());
                    for r in 0..g.nrows() {
                        let gr = gn.row(r);
                        let xr = normed.row(r);
                        let sum_g = gr.sum();
                        let sum_gx = (&gr * &xr).sum();
                        let is = inv_std[r];
                        for c in 0..g.ncols() {
                            gx[[r, c]] = is / n * (n * gr[c] - sum_g - xr[c] * sum_gx);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *gain, gg);
                    accumulate(&mut grads, *bias, gb);
                }
            }
            grads[idx] = Some(g);
        }

        Grads {
            nodes: grads,
            params: self.params.clone(),
        }
    }
}

/// Gradient buffer of `v`, zero-initialised on first touch.
fn slot(grads: &mut [Option<Matrix>], v: Var, dim: ndarray::Ix2) -> &mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(dim))
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted two-way softmax.
pub fn softmax_pair(z_up: f64, z_down: f64) -> (f64, f64) {
    let m = z_up.max(z_down);
    let eu = (z_up - m).exp();
    let ed = (z_down - m).exp();
    let up = eu / (eu + ed);
    (up, 1.0 - up)
}

fn softmax_rows(mut m: Matrix) -> Matrix {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    m
}
