//! Reverse-mode automatic differentiation over [`Mat`] values.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter
//! through [`Tape::param`] and their gradients are collected by
//! [`Tape::backward`].

use crate::mat::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const LN_EPS: f64 = 1e-5;

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Mat),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Mat, inv_std: Vec<f64> },
    Softmax(Var),
    ColsSlice(Var, usize),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    CrossEntropy { logits: Var, targets: Vec<usize>, smoothing: f64, probs: Mat },
}

struct Entry {
    value: Mat,
    op: Op,
    param: Option<usize>,
}

#[derive(Default)]
pub struct Tape {
    entries: Vec<Entry>,
}

/// Gradients indexed like the parameter list passed to [`Tape::param`].
pub struct Grads(pub Vec<Option<Mat>>);

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.entries.push(Entry { value, op, param: None });
        Var(self.entries.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.entries[v.0].value
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A trainable leaf; its gradient is reported under `index`.
    pub fn param(&mut self, index: usize, value: &Mat) -> Var {
        let v = self.push(value.clone(), Op::Leaf);
        self.entries[v.0].param = Some(index);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds the `1×c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!((1, self.value(a).cols), b.shape(), "bias shape");
        let b = b.data.clone();
        let mut v = self.value(a).clone();
        for r in 0..v.rows {
            for (x, y) in v.row_mut(r).iter_mut().zip(&b) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut v = self.value(a).clone();
        v.scale(s);
        self.push(v, Op::Scale(a, s))
    }

    /// Elementwise product with a constant, e.g. a dropout mask.
    pub fn mul_const(&mut self, a: Var, m: Mat) -> Var {
        let mut v = self.value(a).clone();
        for (x, y) in v.data.iter_mut().zip(&m.data) {
            *x *= y;
        }
        self.push(v, Op::MulConst(a, m))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x = gelu(*x));
        self.push(v, Op::Gelu(a))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut xhat = Mat::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        let (g, b) = (&self.value(gamma).data, &self.value(beta).data);
        let mut out = xhat.clone();
        for r in 0..rows {
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = *o * g[c] + b[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    /// Row-wise softmax. Callers add masks beforehand; every row must keep
    /// at least one finite entry.
    pub fn softmax(&mut self, a: Var) -> Var {
        let v = crate::mat::masked_softmax_rows(self.value(a), None).expect("softmax row has a finite entry");
        self.push(v, Op::Softmax(a))
    }

    pub fn cols_slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).cols_slice(start, len);
        self.push(v, Op::ColsSlice(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut v = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for p in parts {
                let src = self.value(*p);
                v.row_mut(r)[c0..c0 + src.cols].copy_from_slice(src.row(r));
                c0 += src.cols;
            }
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut v = Mat::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            v.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(v, Op::GatherRows(table, ids.to_vec()))
    }

    /// Summed label-smoothed cross-entropy of each row against its target;
    /// the target distribution is `(1-ε)·onehot + ε/V`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], smoothing: f64) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows, targets.len(), "one target per row");
        let probs = crate::mat::masked_softmax_rows(l, None).expect("finite logits");
        let vocab = l.cols as f64;
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = l.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for (c, x) in row.iter().enumerate() {
                let q = smoothing / vocab + if c == t { 1.0 - smoothing } else { 0.0 };
                if q > 0.0 {
                    total -= q * (x - lse);
                }
            }
        }
        self.push(
            Mat::from_vec(1, 1, vec![total]),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                smoothing,
                probs,
            },
        )
    }

    /// Backpropagates from the scalar `out`; `n_params` sizes the result.
    pub fn backward(&self, out: Var, n_params: usize) -> Grads {
        assert_eq!(self.value(out).shape(), (1, 1), "backward from a scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.entries.len()).map(|_| None).collect();
        grads[out.0] = Some(Mat::filled(1, 1, 1.0));

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let entry = &self.entries[i];
            match &entry.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.matmul_t(self.value(*b)));
                    acc(&mut grads, *b, self.value(*a).t_matmul(&g));
                }
                Op::MatMulT(a, b) => {
                    acc(&mut grads, *a, g.matmul(self.value(*b)));
                    acc(&mut grads, *b, g.t_matmul(self.value(*a)));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Mat::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (x, y) in gb.data.iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                    acc(&mut grads, *bias, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Scale(a, s) => {
                    let mut g = g;
                    g.scale(*s);
                    acc(&mut grads, *a, g);
                }
                Op::MulConst(a, m) => {
                    let mut g = g;
                    for (x, y) in g.data.iter_mut().zip(&m.data) {
                        *x *= y;
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Gelu(a) => {
                    let mut g = g;
                    for (x, v) in g.data.iter_mut().zip(&self.value(*a).data) {
                        *x *= gelu_grad(*v);
                    }
                    acc(&mut grads, *a, g);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let (rows, cols) = g.shape();
                    let gam = &self.value(*gamma).data;
                    let mut gg = Mat::zeros(1, cols);
                    let mut gbeta = Mat::zeros(1, cols);
                    let mut gx = Mat::zeros(rows, cols);
                    for r in 0..rows {
                        let (dy, xh) = (g.row(r), xhat.row(r));
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for c in 0..cols {
                            gg.data[c] += dy[c] * xh[c];
                            gbeta.data[c] += dy[c];
                            let d = dy[c] * gam[c];
                            sum_d += d;
                            sum_dx += d * xh[c];
                        }
                        let n = cols as f64;
                        for c in 0..cols {
                            let d = dy[c] * gam[c];
                            gx.row_mut(r)[c] = inv_std[r] / n * (n * d - sum_d - xh[c] * sum_dx);
                        }
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *gamma, gg);
                    acc(&mut grads, *beta, gbeta);
                }
                Op::Softmax(a) => {
                    let p = &entry.value;
                    let mut gx = Mat::zeros(p.rows, p.cols);
                    for r in 0..p.rows {
                        let dot: f64 = g.row(r).iter().zip(p.row(r)).map(|(x, y)| x * y).sum();
                        for ((o, dy), pv) in gx.row_mut(r).iter_mut().zip(g.row(r)).zip(p.row(r)) {
                            *o = pv * (dy - dot);
                        }
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::ColsSlice(a, start) => {
                    let src = self.value(*a);
                    let mut gx = Mat::zeros(src.rows, src.cols);
                    for r in 0..g.rows {
                        gx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let w = self.value(*p).cols;
                        acc(&mut grads, *p, g.cols_slice(c0, w));
                        c0 += w;
                    }
                }
                Op::GatherRows(table, ids) => {
                    let t = self.value(*table);
                    let mut gt = Mat::zeros(t.rows, t.cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for (x, y) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::CrossEntropy { logits, targets, smoothing, probs } => {
                    let scale = g.data[0];
                    let vocab = probs.cols as f64;
                    let mut gx = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        for (c, x) in gx.row_mut(r).iter_mut().enumerate() {
                            let q = smoothing / vocab + if c == t { 1.0 - smoothing } else { 0.0 };
                            *x = (*x - q) * scale;
                        }
                    }
                    acc(&mut grads, *logits, gx);
                }
            }
        }

        let mut out = vec![None; n_params];
        for (i, e) in self.entries.iter().enumerate() {
            if let (Some(p), Some(g)) = (e.param, grads[i].take()) {
                match &mut out[p] {
                    Some(existing) => Mat::add_assign(existing, &g),
                    slot => *slot = Some(g),
                }
            }
        }
        Grads(out)
    }
}
