//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a scalar (`1 × 1`) node walks the tape in reverse and
//! returns the gradient of that scalar with respect to every node that
//! requires one. Parameters enter the tape through [`Tape::param`], which binds
//! each [`ParamId`] at most once so that repeated use accumulates gradient in a
//! single leaf.

use std::collections::HashMap;
use std::ops::Range;

use ndarray::{s, Array2, Axis, Zip};

use crate::params::{ParamId, ParamStore};

pub type Mat = Array2<f64>;

const LAYER_NORM_EPS: f64 = 1e-5;
const NORM_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Mat),
    Scale(Var, f64),
    Gelu(Var),
    Tanh(Var),
    Sigmoid(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Gather {
        src: Var,
        rows: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        cols: Range<usize>,
    },
    SegmentMean {
        x: Var,
        segments: Vec<Range<usize>>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        q_segments: Vec<Range<usize>>,
        kv_segments: Vec<Range<usize>>,
        heads: usize,
        probs: Vec<Mat>,
    },
    NormalizeRows {
        x: Var,
        norms: Vec<f64>,
    },
    DiagNll {
        scores: Var,
        probs: Mat,
        mean: bool,
    },
}

struct Node {
    value: Mat,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Mat> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
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

    pub fn value(&self, var: Var) -> &Mat {
        &self.nodes[var.0].value
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, var: Var) -> f64 {
        let v = self.value(var);
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }

    fn push(&mut self, value: Mat, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Binds a parameter. Binding the same id twice returns the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, true);
        self.bound.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.needs(&[a, b]);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        let rg = self.needs(&[a, b]);
        self.push(value, Op::MatMulT(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let rg = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), rg)
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + self.value(row);
        let rg = self.needs(&[a, row]);
        self.push(value, Op::AddRow(a, row), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let rg = self.needs(&[a, b]);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// Elementwise product with a constant mask (dropout, cutoff).
    pub fn mul_const(&mut self, a: Var, mask: Mat) -> Var {
        let value = self.value(a) * &mask;
        let rg = self.needs(&[a]);
        self.push(value, Op::MulConst(a, mask), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a) * factor;
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(gelu);
        let rg = self.needs(&[a]);
        self.push(value, Op::Gelu(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        let rg = self.needs(&[a]);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        let rg = self.needs(&[a]);
        self.push(value, Op::Sigmoid(a), rg)
    }

    /// Row-wise layer normalisation with learned `1 × n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        let value = &xhat * self.value(gamma) + self.value(beta);
        let rg = self.needs(&[x, gamma, beta]);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    /// Selects rows of `src` (indices may repeat).
    pub fn gather(&mut self, src: Var, rows: Vec<usize>) -> Var {
        let value = self.value(src).select(Axis(0), &rows);
        let rg = self.needs(&[src]);
        self.push(value, Op::Gather { src, rows }, rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows: column mismatch");
        let rg = self.needs(parts);
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        let rg = self.needs(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, x: Var, cols: Range<usize>) -> Var {
        let value = self.value(x).slice(s![.., cols.clone()]).to_owned();
        let rg = self.needs(&[x]);
        self.push(value, Op::SliceCols { x, cols }, rg)
    }

    /// Mean of each row segment; output has one row per segment.
    pub fn segment_mean(&mut self, x: Var, segments: Vec<Range<usize>>) -> Var {
        let xv = self.value(x);
        let mut value = Mat::zeros((segments.len(), xv.ncols()));
        for (i, seg) in segments.iter().enumerate() {
            assert!(!seg.is_empty(), "segment_mean: empty segment");
            let mean = xv
                .slice(s![seg.clone(), ..])
                .sum_axis(Axis(0))
                .mapv(|v| v / seg.len() as f64);
            value.row_mut(i).assign(&mean);
        }
        let rg = self.needs(&[x]);
        self.push(value, Op::SegmentMean { x, segments }, rg)
    }

    /// Multi-head scaled dot-product attention. Query rows in
    /// `q_segments[i]` attend only over key/value rows in `kv_segments[i]`.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        q_segments: Vec<Range<usize>>,
        kv_segments: Vec<Range<usize>>,
        heads: usize,
    ) -> Var {
        assert_eq!(q_segments.len(), kv_segments.len());
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.ncols();
        assert!(heads > 0 && d % heads == 0 && kv.ncols() == d && vv.ncols() == d);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Mat::zeros((qv.nrows(), d));
        let mut probs = Vec::with_capacity(q_segments.len() * heads);
        for (qs, ks) in q_segments.iter().zip(&kv_segments) {
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = qv.slice(s![qs.clone(), cols.clone()]);
                let kh = kv.slice(s![ks.clone(), cols.clone()]);
                let vh = vv.slice(s![ks.clone(), cols.clone()]);
                let mut p = qh.dot(&kh.t()) * scale;
                softmax_rows(&mut p);
                out.slice_mut(s![qs.clone(), cols]).assign(&p.dot(&vh));
                probs.push(p);
            }
        }
        let rg = self.needs(&[q, k, v]);
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                q_segments,
                kv_segments,
                heads,
                probs,
            },
            rg,
        )
    }

    /// Scales every row to unit L2 norm.
    pub fn normalize_rows(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        let mut norms = Vec::with_capacity(value.nrows());
        for mut row in value.rows_mut() {
            let n = row.dot(&row).sqrt().max(NORM_FLOOR);
            row.mapv_inplace(|v| v / n);
            norms.push(n);
        }
        let rg = self.needs(&[x]);
        self.push(value, Op::NormalizeRows { x, norms }, rg)
    }

    /// `-Σᵢ log softmax(scoresᵢ)ᵢ`, the cross-entropy of a square score matrix
    /// against diagonal targets. Summed, or averaged when `mean`.
    pub fn diag_nll(&mut self, scores: Var, mean: bool) -> Var {
        let sv = self.value(scores);
        let n = sv.nrows();
        assert_eq!(n, sv.ncols(), "diag_nll: scores must be square");
        let mut probs = sv.clone();
        let mut total = 0.0;
        for (i, mut row) in probs.rows_mut().into_iter().enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[i];
            row.mapv_inplace(|v| (v - lse).exp());
        }
        if mean && n > 0 {
            total /= n as f64;
        }
        let rg = self.needs(&[scores]);
        self.push(
            Mat::from_elem((1, 1), total),
            Op::DiagNll {
                scores,
                probs,
                mean,
            },
            rg,
        )
    }

    /// Gradient of the scalar `root` with respect to every node on the tape.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).dim(), (1, 1), "backward: root must be scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::ones((1, 1)));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    /// Gradients of bound parameters, keyed by id.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<(ParamId, Mat)> {
        let mut out: Vec<_> = self
            .bound
            .iter()
            .filter_map(|(id, var)| grads.get(*var).map(|g| (*id, g.clone())))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }

    fn propagate(&self, node: &Node, g: &Mat, grads: &mut [Option<Mat>]) {
        let wants = |v: &Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                if wants(a) {
                    accumulate(grads, *a, g.dot(&self.value(*b).t()));
                }
                if wants(b) {
                    accumulate(grads, *b, self.value(*a).t().dot(g));
                }
            }
            Op::MatMulT(a, b) => {
                if wants(a) {
                    accumulate(grads, *a, g.dot(self.value(*b)));
                }
                if wants(b) {
                    accumulate(grads, *b, g.t().dot(self.value(*a)));
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    accumulate(grads, *a, g.clone());
                }
                if wants(b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::AddRow(a, row) => {
                if wants(a) {
                    accumulate(grads, *a, g.clone());
                }
                if wants(row) {
                    accumulate(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    accumulate(grads, *a, g * self.value(*b));
                }
                if wants(b) {
                    accumulate(grads, *b, g * self.value(*a));
                }
            }
            Op::MulConst(a, mask) => accumulate(grads, *a, g * mask),
            Op::Scale(a, f) => accumulate(grads, *a, g * *f),
            Op::Gelu(a) => {
                let mut d = self.value(*a).mapv(gelu_grad);
                d *= g;
                accumulate(grads, *a, d);
            }
            Op::Tanh(a) => {
                let mut d = node.value.mapv(|y| 1.0 - y * y);
                d *= g;
                accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = node.value.mapv(|y| y * (1.0 - y));
                d *= g;
                accumulate(grads, *a, d);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                if wants(beta) {
                    accumulate(grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if wants(gamma) {
                    accumulate(grads, *gamma, (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if wants(x) {
                    let n = xhat.ncols() as f64;
                    let mut dx = g * self.value(*gamma);
                    for ((mut row, xh), inv) in dx.rows_mut().into_iter().zip(xhat.rows()).zip(inv_std) {
                        let sum = row.sum();
                        let dot = row.dot(&xh);
                        Zip::from(&mut row).and(&xh).for_each(|d, &h| {
                            *d = inv / n * (n * *d - sum - h * dot);
                        });
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::Gather { src, rows } => {
                let mut d = Mat::zeros(self.value(*src).dim());
                for (i, &r) in rows.iter().enumerate() {
                    let mut dst = d.row_mut(r);
                    dst += &g.row(i);
                }
                accumulate(grads, *src, d);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.value(*p).nrows();
                    if wants(p) {
                        accumulate(grads, *p, g.slice(s![offset..offset + n, ..]).to_owned());
                    }
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.value(*p).ncols();
                    if wants(p) {
                        accumulate(grads, *p, g.slice(s![.., offset..offset + n]).to_owned());
                    }
                    offset += n;
                }
            }
            Op::SliceCols { x, cols } => {
                let mut d = Mat::zeros(self.value(*x).dim());
                d.slice_mut(s![.., cols.clone()]).assign(g);
                accumulate(grads, *x, d);
            }
            Op::SegmentMean { x, segments } => {
                let mut d = Mat::zeros(self.value(*x).dim());
                for (i, seg) in segments.iter().enumerate() {
                    let share = g.row(i).mapv(|v| v / seg.len() as f64);
                    for r in seg.clone() {
                        d.row_mut(r).assign(&share);
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::Attention {
                q,
                k,
                v,
                q_segments,
                kv_segments,
                heads,
                probs,
            } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let d = qv.ncols();
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let mut dq = Mat::zeros(qv.dim());
                let mut dk = Mat::zeros(kv.dim());
                let mut dv = Mat::zeros(vv.dim());
                let mut idx = 0;
                for (qs, ks) in q_segments.iter().zip(kv_segments) {
                    for h in 0..*heads {
                        let cols = h * dh..(h + 1) * dh;
                        let p = &probs[idx];
                        idx += 1;
                        let go = g.slice(s![qs.clone(), cols.clone()]);
                        let qh = qv.slice(s![qs.clone(), cols.clone()]);
                        let kh = kv.slice(s![ks.clone(), cols.clone()]);
                        let vh = vv.slice(s![ks.clone(), cols.clone()]);
                        let mut dvh = dv.slice_mut(s![ks.clone(), cols.clone()]);
                        dvh += &p.t().dot(&go);
                        let dp = go.dot(&vh.t());
                        let mut ds = p * &dp;
                        for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                            let sum = row.sum();
                            Zip::from(&mut row).and(&prow).for_each(|d, &pp| *d -= pp * sum);
                        }
                        ds *= scale;
                        let mut dqh = dq.slice_mut(s![qs.clone(), cols.clone()]);
                        dqh += &ds.dot(&kh);
                        let mut dkh = dk.slice_mut(s![ks.clone(), cols]);
                        dkh += &ds.t().dot(&qh);
                    }
                }
                if wants(q) {
                    accumulate(grads, *q, dq);
                }
                if wants(k) {
                    accumulate(grads, *k, dk);
                }
                if wants(v) {
                    accumulate(grads, *v, dv);
                }
            }
            Op::NormalizeRows { x, norms } => {
                let y = &node.value;
                let mut d = g.clone();
                for ((mut row, yr), n) in d.rows_mut().into_iter().zip(y.rows()).zip(norms) {
                    let dot = row.dot(&yr);
                    Zip::from(&mut row).and(&yr).for_each(|d, &yy| *d = (*d - yy * dot) / n);
                }
                accumulate(grads, *x, d);
            }
            Op::DiagNll {
                scores,
                probs,
                mean,
            } => {
                let n = probs.nrows();
                let mut factor = g[[0, 0]];
                if *mean && n > 0 {
                    factor /= n as f64;
                }
                let mut d = probs.clone();
                for i in 0..n {
                    d[[i, i]] -= 1.0;
                }
                d *= factor;
                accumulate(grads, *scores, d);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Mat>], var: Var, delta: Mat) {
    match &mut grads[var.0] {
        Some(g) => *g += &delta,
        slot @ None => *slot = Some(delta),
    }
}

pub(crate) fn softmax_rows(m: &mut Mat) {
    for mut row in m.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
