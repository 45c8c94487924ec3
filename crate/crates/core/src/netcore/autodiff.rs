//! Tape-based reverse-mode differentiation over small dense matrices.
//!
//! A [`Tape`] borrows a [`ParamStore`] and records every operation applied
//! to parameter leaves and constant inputs. [`Tape::backward`] walks the
//! record in reverse and returns one gradient buffer per parameter slot.
//! Nodes that do not depend on any parameter carry no gradient, so constant
//! inputs (clips) never allocate gradient storage.

use super::params::ParamStore;
use crate::error::{Error, Result};

/// Row-major matrix. Vectors are `1 x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::precondition(format!(
                "matrix {rows}x{cols} given {} values",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }
}

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    /// `x (r x i) . w (i x o) + b (1 x o)`
    Linear { x: NodeId, w: NodeId, b: NodeId },
    /// Temporal convolution, kernel 3, zero "same" padding. `w` is
    /// `(3 * c_in) x c_out` with row `k * c_in + c` for tap `k`.
    Conv3 { x: NodeId, w: NodeId, b: NodeId },
    Softplus(NodeId),
    MeanRows(NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    /// `logsumexp(z) - z[target]` for a `1 x K` logit row.
    SoftmaxXent { logits: NodeId, target: usize },
}

#[derive(Debug)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    /// `None` for parameter leaves, whose values live in the store.
    value: Option<Vec<f64>>,
    needs_grad: bool,
}

/// Per-slot gradients produced by [`Tape::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub slots: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Gradients { slots: params.values().iter().map(|v| vec![0.0; v.len()]).collect() }
    }

    /// `self += weight * other`
    pub fn add_scaled(&mut self, other: &Gradients, weight: f64) {
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += weight * y;
            }
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slots.concat()
    }
}

/// Recording of one forward computation.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Option<Vec<f64>>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, rows, cols, value, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| Error::Usage(format!("node {} is not on this tape", id.0)))
    }

    /// Value of a node as a flat row-major slice.
    pub fn value(&self, id: NodeId) -> Result<&[f64]> {
        let node = self.node(id)?;
        Ok(match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(slot)) => &self.params.values()[*slot],
            (None, _) => unreachable!("only parameter leaves borrow their value"),
        })
    }

    pub fn shape(&self, id: NodeId) -> Result<(usize, usize)> {
        let n = self.node(id)?;
        Ok((n.rows, n.cols))
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        match self.shape(id)? {
            (1, 1) => Ok(self.value(id)?[0]),
            (r, c) => Err(Error::precondition(format!("node is {r}x{c}, not a scalar"))),
        }
    }

    pub fn input(&mut self, m: Matrix) -> NodeId {
        self.push(Op::Input, m.rows, m.cols, Some(m.data), false)
    }

    pub fn param(&mut self, name: &str) -> Result<NodeId> {
        let slot = self
            .params
            .slot(name)
            .ok_or_else(|| Error::precondition(format!("unknown parameter {name}")))?;
        let (rows, cols) = self.params.shapes()[slot];
        Ok(self.push(Op::Param(slot), rows, cols, None, true))
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, i) = self.shape(x)?;
        let (wi, o) = self.shape(w)?;
        let (br, bo) = self.shape(b)?;
        if wi != i || br != 1 || bo != o {
            return Err(Error::precondition(format!(
                "linear shapes: x {r}x{i}, w {wi}x{o}, b {br}x{bo}"
            )));
        }
        let (xv, wv, bv) = (self.value(x)?, self.value(w)?, self.value(b)?);
        let mut out = Vec::with_capacity(r * o);
        for row in 0..r {
            out.extend_from_slice(bv);
            let acc = &mut out[row * o..(row + 1) * o];
            for (k, &xk) in xv[row * i..(row + 1) * i].iter().enumerate() {
                if xk != 0.0 {
                    for (a, &wk) in acc.iter_mut().zip(&wv[k * o..(k + 1) * o]) {
                        *a += xk * wk;
                    }
                }
            }
        }
        let g = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Op::Linear { x, w, b }, r, o, Some(out), g))
    }

    pub fn conv3(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (t_len, c_in) = self.shape(x)?;
        let (wr, c_out) = self.shape(w)?;
        let (br, bo) = self.shape(b)?;
        if wr != 3 * c_in || br != 1 || bo != c_out {
            return Err(Error::precondition(format!(
                "conv shapes: x {t_len}x{c_in}, w {wr}x{c_out}, b {br}x{bo}"
            )));
        }
        let (xv, wv, bv) = (self.value(x)?, self.value(w)?, self.value(b)?);
        let mut out = Vec::with_capacity(t_len * c_out);
        for t in 0..t_len {
            out.extend_from_slice(bv);
            let acc = &mut out[t * c_out..(t + 1) * c_out];
            for k in 0..3 {
                let Some(src) = (t + k).checked_sub(1).filter(|&s| s < t_len) else {
                    continue;
                };
                for (c, &xc) in xv[src * c_in..(src + 1) * c_in].iter().enumerate() {
                    let row = (k * c_in + c) * c_out;
                    for (a, &wk) in acc.iter_mut().zip(&wv[row..row + c_out]) {
                        *a += xc * wk;
                    }
                }
            }
        }
        let g = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Op::Conv3 { x, w, b }, t_len, c_out, Some(out), g))
    }

    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(x)?;
        let out = self.value(x)?.iter().map(|&v| softplus(v)).collect();
        let g = self.needs(x);
        Ok(self.push(Op::Softplus(x), r, c, Some(out), g))
    }

    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(x)?;
        if r == 0 {
            return Err(Error::precondition("mean over zero rows"));
        }
        let xv = self.value(x)?;
        let mut out = vec![0.0; c];
        for row in xv.chunks_exact(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= r as f64);
        let g = self.needs(x);
        Ok(self.push(Op::MeanRows(x), 1, c, Some(out), g))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.shape(a)?;
        if sa != self.shape(b)? {
            return Err(Error::precondition("add of mismatched shapes"));
        }
        let out = self.value(a)?.iter().zip(self.value(b)?).map(|(x, y)| x + y).collect();
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), sa.0, sa.1, Some(out), g))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let (r, c) = self.shape(a)?;
        let out = self.value(a)?.iter().map(|x| x * factor).collect();
        let g = self.needs(a);
        Ok(self.push(Op::Scale(a, factor), r, c, Some(out), g))
    }

    /// Cross-entropy of a `1 x K` logit row against a class index.
    pub fn softmax_xent(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let (r, k) = self.shape(logits)?;
        if r != 1 {
            return Err(Error::precondition("cross-entropy expects a single logit row"));
        }
        if target >= k {
            return Err(Error::precondition(format!("target {target} outside 0..{k}")));
        }
        let loss = super::cross_entropy_from_logits(self.value(logits)?, target)?;
        let g = self.needs(logits);
        Ok(self.push(Op::SoftmaxXent { logits, target }, 1, 1, Some(vec![loss]), g))
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Gradient of the scalar node `root` with respect to every parameter.
    /// Parameters the root does not depend on get exact zeros.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Usage("backward called before any forward pass".into()));
        }
        if self.shape(root)? != (1, 1) {
            return Err(Error::Usage("backward root must be a scalar".into()));
        }
        let mut grads = Gradients::zeros_like(self.params);
        let mut adj: Vec<Option<Vec<f64>>> = (0..=root.0).map(|_| None).collect();
        adj[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match node.op {
                Op::Input => {}
                Op::Param(slot) => {
                    for (a, v) in grads.slots[slot].iter_mut().zip(&g) {
                        *a += v;
                    }
                }
                Op::Linear { x, w, b } => {
                    let (r, i) = self.shape(x)?;
                    let o = node.cols;
                    let (xv, wv) = (self.value(x)?, self.value(w)?);
                    if self.needs(x) {
                        let mut dx = vec![0.0; r * i];
                        for row in 0..r {
                            let gr = &g[row * o..(row + 1) * o];
                            for (k, d) in dx[row * i..(row + 1) * i].iter_mut().enumerate() {
                                *d = dot(gr, &wv[k * o..(k + 1) * o]);
                            }
                        }
                        accumulate(&mut adj, x, dx);
                    }
                    if self.needs(w) {
                        let mut dw = vec![0.0; i * o];
                        for row in 0..r {
                            let gr = &g[row * o..(row + 1) * o];
                            for (k, &xk) in xv[row * i..(row + 1) * i].iter().enumerate() {
                                if xk != 0.0 {
                                    for (d, &gv) in dw[k * o..(k + 1) * o].iter_mut().zip(gr) {
                                        *d += xk * gv;
                                    }
                                }
                            }
                        }
                        accumulate(&mut adj, w, dw);
                    }
                    if self.needs(b) {
                        accumulate(&mut adj, b, column_sums(&g, o));
                    }
                }
                Op::Conv3 { x, w, b } => {
                    let (t_len, c_in) = self.shape(x)?;
                    let c_out = node.cols;
                    let (xv, wv) = (self.value(x)?, self.value(w)?);
                    let mut dx = self.needs(x).then(|| vec![0.0; t_len * c_in]);
                    let mut dw = self.needs(w).then(|| vec![0.0; 3 * c_in * c_out]);
                    for t in 0..t_len {
                        let gt = &g[t * c_out..(t + 1) * c_out];
                        for k in 0..3 {
                            let Some(src) = (t + k).checked_sub(1).filter(|&s| s < t_len) else {
                                continue;
                            };
                            for c in 0..c_in {
                                let row = (k * c_in + c) * c_out;
                                if let Some(dx) = dx.as_mut() {
                                    dx[src * c_in + c] += dot(gt, &wv[row..row + c_out]);
                                }
                                if let Some(dw) = dw.as_mut() {
                                    let xc = xv[src * c_in + c];
                                    for (d, &gv) in dw[row..row + c_out].iter_mut().zip(gt) {
                                        *d += xc * gv;
                                    }
                                }
                            }
                        }
                    }
                    if let Some(dx) = dx {
                        accumulate(&mut adj, x, dx);
                    }
                    if let Some(dw) = dw {
                        accumulate(&mut adj, w, dw);
                    }
                    if self.needs(b) {
                        accumulate(&mut adj, b, column_sums(&g, c_out));
                    }
                }
                Op::Softplus(x) => {
                    let dx = self.value(x)?.iter().zip(&g).map(|(&v, gv)| gv * sigmoid(v)).collect();
                    accumulate(&mut adj, x, dx);
                }
                Op::MeanRows(x) => {
                    let (r, _) = self.shape(x)?;
                    let scale = 1.0 / r as f64;
                    let row: Vec<f64> = g.iter().map(|v| v * scale).collect();
                    accumulate(&mut adj, x, row.repeat(r));
                }
                Op::Add(a, b) => {
                    if self.needs(a) {
                        accumulate(&mut adj, a, g.clone());
                    }
                    if self.needs(b) {
                        accumulate(&mut adj, b, g);
                    }
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut adj, a, g.iter().map(|v| v * factor).collect());
                }
                Op::SoftmaxXent { logits, target } => {
                    let p = super::softmax(self.value(logits)?)?;
                    let mut d: Vec<f64> = p.probs().iter().map(|pi| pi * g[0]).collect();
                    d[target] -= g[0];
                    accumulate(&mut adj, logits, d);
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: NodeId, delta: Vec<f64>) {
    match &mut adj[id.0] {
        Some(existing) => existing.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
        slot @ None => *slot = Some(delta),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn column_sums(g: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for row in g.chunks_exact(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
