use super::{Node, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Probability clamp applied inside [`Tape::bce`].
pub const BCE_EPSILON: f64 = 1e-7;

// Largest f64 strictly below 1, so sigmoid stays inside (0, 1).
const SIGMOID_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

pub(super) enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias {
        x: Var,
        bias: Var,
        mask: Option<Vec<bool>>,
    },
    Sigmoid(Var),
    Relu(Var),
    Tanh(Var),
    Sum(Var),
    Mean(Var),
    SumSquares(Var),
    SumAbs(Var),
    Reshape(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    TemporalConv {
        x: Var,
        w: Var,
    },
    GraphPropagate {
        adj: Tensor,
        importance: Option<Var>,
        x: Var,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
    },
    MeanPool2(Var),
    Bce {
        p: Var,
        y: f64,
        clamped: f64,
    },
}

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::shape(op, s, &[0, 0])),
    }
}

impl Tape {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = self.value(x);
        let data = src.data.iter().map(|&v| f(v)).collect();
        let value = Tensor {
            shape: src.shape.clone(),
            data,
        };
        self.push(value, op)
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self.value(a), "matmul")?;
        let (k2, n) = dims2(self.value(b), "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let av = &self.value(a).data;
        let bv = &self.value(b).data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &bj) in row.iter_mut().zip(brow) {
                    *o += aip * bj;
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![m, n],
                data: out,
            },
            Op::MatMul(a, b),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = zip_with(&self.value(a).data, &self.value(b).data, |x, y| x + y);
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor { shape, data }, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = zip_with(&self.value(a).data, &self.value(b).data, |x, y| x - y);
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor { shape, data }, Op::Sub(a, b)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = zip_with(&self.value(a).data, &self.value(b).data, |x, y| x * y);
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor { shape, data }, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.map(x, |v| v * factor, Op::Scale(x, factor))
    }

    /// Adds `bias[c]` to every row of `x: [rows, c]`. When `mask` is given,
    /// rows with `mask[r] == false` are left untouched.
    pub fn add_bias(&mut self, x: Var, bias: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (rows, cols) = dims2(self.value(x), "add_bias")?;
        if self.value(bias).numel() != cols {
            return Err(Error::shape("add_bias", self.shape(x), self.shape(bias)));
        }
        if let Some(m) = mask {
            if m.len() != rows {
                return Err(Error::shape("add_bias mask", self.shape(x), &[m.len()]));
            }
        }
        let mut data = self.value(x).data.clone();
        let b = &self.value(bias).data;
        for r in 0..rows {
            if mask.is_some_and(|m| !m[r]) {
                continue;
            }
            for (o, &bc) in data[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *o += bc;
            }
        }
        let mask = mask.map(<[bool]>::to_vec);
        Ok(self.push(
            Tensor {
                shape: vec![rows, cols],
                data,
            },
            Op::AddBias { x, bias, mask },
        ))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data.iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().map(|v| v * v).sum();
        self.push(Tensor::scalar(s), Op::SumSquares(x))
    }

    /// Sum of absolute values; subgradient at 0 is 0.
    pub fn sum_abs(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().map(|v| v.abs()).sum();
        self.push(Tensor::scalar(s), Op::SumAbs(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if self.shape(x) == shape {
            return Ok(x);
        }
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = dims2(self.value(x), "transpose")?;
        let src = &self.value(x).data;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![c, r],
                data,
            },
            Op::Transpose(x),
        ))
    }

    /// Concatenates 2-D tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Param("concat of zero tensors".into()))?;
        let (rows, _) = dims2(self.value(first), "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = dims2(self.value(p), "concat_cols")?;
            if r != rows {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data[r * w..(r + 1) * w]);
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![rows, total],
                data,
            },
            Op::ConcatCols(parts.to_vec()),
        ))
    }

    /// Stacks 2-D tensors with equal column counts along rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Param("concat of zero tensors".into()))?;
        let (_, cols) = dims2(self.value(first), "concat_rows")?;
        let mut rows = 0;
        for &p in parts {
            let (r, c) = dims2(self.value(p), "concat_rows")?;
            if c != cols {
                return Err(Error::shape("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += r;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(&self.value(p).data);
        }
        Ok(self.push(
            Tensor {
                shape: vec![rows, cols],
                data,
            },
            Op::ConcatRows(parts.to_vec()),
        ))
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = dims2(self.value(x), "slice_cols")?;
        if start + len > cols {
            return Err(Error::shape("slice_cols", self.shape(x), &[start, len]));
        }
        let src = &self.value(x).data;
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        Ok(self.push(
            Tensor {
                shape: vec![rows, len],
                data,
            },
            Op::SliceCols { x, start },
        ))
    }

    /// Gathers the listed rows of a 2-D tensor (repeats allowed).
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (n, cols) = dims2(self.value(x), "select_rows")?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::shape("select_rows", self.shape(x), &[bad]));
        }
        let src = &self.value(x).data;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            data.extend_from_slice(&src[r * cols..(r + 1) * cols]);
        }
        Ok(self.push(
            Tensor {
                shape: vec![rows.len(), cols],
                data,
            },
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Causal convolution along the leading time axis of `x: [T, M, C]` with
    /// kernel `w: [k, C_out, C]`. Output `[T, M, C_out]`:
    /// `y[t, m] = sum_{tau < k} w[tau] * x[t - tau, m]`, frames before 0 read as zero.
    pub fn temporal_conv(&mut self, x: Var, w: Var) -> Result<Var> {
        let (t_len, m_len, c_in) = match self.shape(x) {
            &[t, m, c] => (t, m, c),
            s => return Err(Error::shape("temporal_conv", s, self.shape(w))),
        };
        let (k, c_out) = match self.shape(w) {
            &[k, o, c] if c == c_in && k >= 1 => (k, o),
            s => return Err(Error::shape("temporal_conv", self.shape(x), s)),
        };
        let xv = &self.value(x).data;
        let wv = &self.value(w).data;
        let mut out = vec![0.0; t_len * m_len * c_out];
        for t in 0..t_len {
            for tau in 0..k.min(t + 1) {
                let src_t = t - tau;
                let wk = &wv[tau * c_out * c_in..(tau + 1) * c_out * c_in];
                for m in 0..m_len {
                    let xs = &xv[(src_t * m_len + m) * c_in..(src_t * m_len + m + 1) * c_in];
                    let ys = &mut out[(t * m_len + m) * c_out..(t * m_len + m + 1) * c_out];
                    for (o, y) in ys.iter_mut().enumerate() {
                        let wrow = &wk[o * c_in..(o + 1) * c_in];
                        *y += dot(wrow, xs);
                    }
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![t_len, m_len, c_out],
                data: out,
            },
            Op::TemporalConv { x, w },
        ))
    }

    /// Causal convolution of one multichannel series `x: [C, T]` with
    /// `w: [k, C_out, C]`, returning `[C_out, T]`. Activation is left to the caller.
    pub fn conv1d_time(&mut self, x: Var, w: Var, k: usize) -> Result<Var> {
        if k == 0 {
            return Err(Error::Param("temporal kernel size must be >= 1".into()));
        }
        let (c, t) = dims2(self.value(x), "conv1d_time")?;
        if self.shape(w).len() != 3 || self.shape(w)[0] != k || self.shape(w)[2] != c {
            return Err(Error::shape("conv1d_time", self.shape(x), self.shape(w)));
        }
        let c_out = self.shape(w)[1];
        let xt = self.transpose(x)?;
        let series = self.reshape(xt, &[t, 1, c])?;
        let y = self.temporal_conv(series, w)?;
        let y = self.reshape(y, &[t, c_out])?;
        self.transpose(y)
    }

    /// Per-frame graph propagation `y[t] = (importance ⊙ adj[t]) · x[t]` for
    /// `x: [T, N, C]` and constant `adj: [T, N, N]`. With `importance = None`
    /// the plain adjacency is used.
    pub fn graph_propagate(&mut self, adj: &Tensor, importance: Option<Var>, x: Var) -> Result<Var> {
        let (t_len, n, c) = match self.shape(x) {
            &[t, n, c] => (t, n, c),
            s => return Err(Error::shape("graph_propagate", s, adj.shape())),
        };
        if adj.shape() != [t_len, n, n] {
            return Err(Error::shape("graph_propagate", self.shape(x), adj.shape()));
        }
        if let Some(imp) = importance {
            if self.shape(imp) != [n, n] {
                return Err(Error::shape("graph_propagate", self.shape(imp), &[n, n]));
            }
        }
        let eff = effective_adjacency(adj, importance.map(|v| &self.value(v).data[..]), n);
        let xv = &self.value(x).data;
        let mut out = vec![0.0; t_len * n * c];
        for t in 0..t_len {
            for v in 0..n {
                let ys = &mut out[(t * n + v) * c..(t * n + v + 1) * c];
                for u in 0..n {
                    let a = eff[(t * n + v) * n + u];
                    if a == 0.0 {
                        continue;
                    }
                    let xs = &xv[(t * n + u) * c..(t * n + u + 1) * c];
                    for (y, &xu) in ys.iter_mut().zip(xs) {
                        *y += a * xu;
                    }
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![t_len, n, c],
                data: out,
            },
            Op::GraphPropagate {
                adj: adj.clone(),
                importance,
                x,
            },
        ))
    }

    /// Valid 2-D convolution of `x: [C_in, H, W]` with `w: [C_out, C_in, kh, kw]`
    /// plus per-channel bias `b: [C_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (ci, h, wd) = match self.shape(x) {
            &[c, h, w] => (c, h, w),
            s => return Err(Error::shape("conv2d", s, self.shape(w))),
        };
        let (co, kh, kw) = match self.shape(w) {
            &[o, c, kh, kw] if c == ci && kh <= h && kw <= wd => (o, kh, kw),
            s => return Err(Error::shape("conv2d", self.shape(x), s)),
        };
        if self.value(b).numel() != co {
            return Err(Error::shape("conv2d bias", self.shape(w), self.shape(b)));
        }
        let (oh, ow) = (h - kh + 1, wd - kw + 1);
        let xv = &self.value(x).data;
        let wv = &self.value(w).data;
        let bv = &self.value(b).data;
        let mut out = vec![0.0; co * oh * ow];
        for o in 0..co {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = bv[o]);
            for c in 0..ci {
                for dy in 0..kh {
                    for dx in 0..kw {
                        let wgt = wv[((o * ci + c) * kh + dy) * kw + dx];
                        for i in 0..oh {
                            let xrow = &xv[(c * h + i + dy) * wd + dx..(c * h + i + dy) * wd + dx + ow];
                            for (y, &xs) in plane[i * ow..(i + 1) * ow].iter_mut().zip(xrow) {
                                *y += wgt * xs;
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![co, oh, ow],
                data: out,
            },
            Op::Conv2d { x, w, b },
        ))
    }

    /// 2x2 mean pooling of `[C, H, W]`; a trailing odd row/column is dropped.
    pub fn mean_pool2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = match self.shape(x) {
            &[c, h, w] if h >= 2 && w >= 2 => (c, h, w),
            s => return Err(Error::shape("mean_pool2", s, &[1, 2, 2])),
        };
        let (oh, ow) = (h / 2, w / 2);
        let xv = &self.value(x).data;
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let base = ch * h * w;
                    let s = xv[base + 2 * i * w + 2 * j]
                        + xv[base + 2 * i * w + 2 * j + 1]
                        + xv[base + (2 * i + 1) * w + 2 * j]
                        + xv[base + (2 * i + 1) * w + 2 * j + 1];
                    out[(ch * oh + i) * ow + j] = 0.25 * s;
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![c, oh, ow],
                data: out,
            },
            Op::MeanPool2(x),
        ))
    }

    /// Binary cross-entropy of a probability `p` (single element) against a
    /// label in {0, 1}. The probability is clamped to `[ε, 1 − ε]`.
    pub fn bce(&mut self, p: Var, y: f64) -> Result<Var> {
        if y != 0.0 && y != 1.0 {
            return Err(Error::Label(y));
        }
        if self.value(p).numel() != 1 {
            return Err(Error::shape("bce", self.shape(p), &[1]));
        }
        let clamped = self.value(p).data[0].clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        let loss = bce_value(clamped, y);
        Ok(self.push(Tensor::scalar(loss), Op::Bce { p, y, clamped }))
    }

    /// Mean squared error between equally shaped tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let n = self.value(d).numel() as f64;
        let s = self.sum_squares(d);
        Ok(self.scale(s, 1.0 / n))
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    let s = if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, SIGMOID_MAX)
}

pub(crate) fn bce_value(p: f64, y: f64) -> f64 {
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn effective_adjacency(adj: &Tensor, importance: Option<&[f64]>, n: usize) -> Vec<f64> {
    match importance {
        None => adj.data.clone(),
        Some(imp) => adj
            .data
            .chunks(n * n)
            .flat_map(|frame| frame.iter().zip(imp).map(|(a, w)| w * a))
            .collect(),
    }
}

fn acc<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'g mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()])
}

/// Accumulates the vector-Jacobian product of node `id` into its inputs.
pub(super) fn backprop(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &nodes[id].value;
    let val = |v: Var| &nodes[v.0].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = (val(*a).shape[0], val(*a).shape[1]);
            let n = val(*b).shape[1];
            let (av, bv) = (&val(*a).data, &val(*b).data);
            {
                let ga = acc(grads, nodes, *a);
                for i in 0..m {
                    let gi = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        ga[i * k + p] += dot(gi, &bv[p * n..(p + 1) * n]);
                    }
                }
            }
            let gb = acc(grads, nodes, *b);
            for i in 0..m {
                let gi = &g[i * n..(i + 1) * n];
                for p in 0..k {
                    let aip = av[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    for (o, &gj) in gb[p * n..(p + 1) * n].iter_mut().zip(gi) {
                        *o += aip * gj;
                    }
                }
            }
        }
        Op::Add(a, b) => {
            add_into(acc(grads, nodes, *a), g, 1.0);
            add_into(acc(grads, nodes, *b), g, 1.0);
        }
        Op::Sub(a, b) => {
            add_into(acc(grads, nodes, *a), g, 1.0);
            add_into(acc(grads, nodes, *b), g, -1.0);
        }
        Op::Mul(a, b) => {
            let (av, bv) = (&val(*a).data, &val(*b).data);
            for ((o, &gi), &bi) in acc(grads, nodes, *a).iter_mut().zip(g).zip(bv) {
                *o += gi * bi;
            }
            for ((o, &gi), &ai) in acc(grads, nodes, *b).iter_mut().zip(g).zip(av) {
                *o += gi * ai;
            }
        }
        Op::Scale(x, f) => add_into(acc(grads, nodes, *x), g, *f),
        Op::AddBias { x, bias, mask } => {
            add_into(acc(grads, nodes, *x), g, 1.0);
            let cols = val(*bias).numel();
            let gb = acc(grads, nodes, *bias);
            for (r, row) in g.chunks(cols).enumerate() {
                if mask.as_ref().is_some_and(|m| !m[r]) {
                    continue;
                }
                add_into(gb, row, 1.0);
            }
        }
        Op::Sigmoid(x) => {
            for ((o, &gi), &s) in acc(grads, nodes, *x).iter_mut().zip(g).zip(&out.data) {
                *o += gi * s * (1.0 - s);
            }
        }
        Op::Relu(x) => {
            let xv = &val(*x).data;
            for ((o, &gi), &xi) in acc(grads, nodes, *x).iter_mut().zip(g).zip(xv) {
                if xi > 0.0 {
                    *o += gi;
                }
            }
        }
        Op::Tanh(x) => {
            for ((o, &gi), &t) in acc(grads, nodes, *x).iter_mut().zip(g).zip(&out.data) {
                *o += gi * (1.0 - t * t);
            }
        }
        Op::Sum(x) => acc(grads, nodes, *x).iter_mut().for_each(|o| *o += g[0]),
        Op::Mean(x) => {
            let n = val(*x).numel() as f64;
            acc(grads, nodes, *x).iter_mut().for_each(|o| *o += g[0] / n);
        }
        Op::SumSquares(x) => {
            let xv = &val(*x).data;
            for (o, &xi) in acc(grads, nodes, *x).iter_mut().zip(xv) {
                *o += 2.0 * xi * g[0];
            }
        }
        Op::SumAbs(x) => {
            let xv = &val(*x).data;
            for (o, &xi) in acc(grads, nodes, *x).iter_mut().zip(xv) {
                if xi > 0.0 {
                    *o += g[0];
                } else if xi < 0.0 {
                    *o -= g[0];
                }
            }
        }
        Op::Reshape(x) => add_into(acc(grads, nodes, *x), g, 1.0),
        Op::Transpose(x) => {
            let (r, c) = (val(*x).shape[0], val(*x).shape[1]);
            let gx = acc(grads, nodes, *x);
            for i in 0..r {
                for j in 0..c {
                    gx[i * c + j] += g[j * r + i];
                }
            }
        }
        Op::ConcatCols(parts) => {
            let rows = out.shape[0];
            let total = out.shape[1];
            let mut offset = 0;
            for &p in parts {
                let w = val(p).shape[1];
                let gp = acc(grads, nodes, p);
                for r in 0..rows {
                    add_into(
                        &mut gp[r * w..(r + 1) * w],
                        &g[r * total + offset..r * total + offset + w],
                        1.0,
                    );
                }
                offset += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let n = val(p).numel();
                add_into(acc(grads, nodes, p), &g[offset..offset + n], 1.0);
                offset += n;
            }
        }
        Op::SliceCols { x, start } => {
            let cols = val(*x).shape[1];
            let (rows, len) = (out.shape[0], out.shape[1]);
            let gx = acc(grads, nodes, *x);
            for r in 0..rows {
                add_into(
                    &mut gx[r * cols + start..r * cols + start + len],
                    &g[r * len..(r + 1) * len],
                    1.0,
                );
            }
        }
        Op::SelectRows { x, rows } => {
            let cols = val(*x).shape[1];
            let gx = acc(grads, nodes, *x);
            for (i, &r) in rows.iter().enumerate() {
                add_into(&mut gx[r * cols..(r + 1) * cols], &g[i * cols..(i + 1) * cols], 1.0);
            }
        }
        Op::TemporalConv { x, w } => {
            let (t_len, m_len, c_in) = (val(*x).shape[0], val(*x).shape[1], val(*x).shape[2]);
            let (k, c_out) = (val(*w).shape[0], val(*w).shape[1]);
            let (xv, wv) = (&val(*x).data, &val(*w).data);
            {
                let gx = acc(grads, nodes, *x);
                for t in 0..t_len {
                    for tau in 0..k.min(t + 1) {
                        let src_t = t - tau;
                        for m in 0..m_len {
                            let gy = &g[(t * m_len + m) * c_out..(t * m_len + m + 1) * c_out];
                            let gxs = &mut gx[(src_t * m_len + m) * c_in..(src_t * m_len + m + 1) * c_in];
                            for (o, &go) in gy.iter().enumerate() {
                                if go == 0.0 {
                                    continue;
                                }
                                let wrow = &wv[(tau * c_out + o) * c_in..(tau * c_out + o + 1) * c_in];
                                add_into(gxs, wrow, go);
                            }
                        }
                    }
                }
            }
            let gw = acc(grads, nodes, *w);
            for t in 0..t_len {
                for tau in 0..k.min(t + 1) {
                    let src_t = t - tau;
                    for m in 0..m_len {
                        let gy = &g[(t * m_len + m) * c_out..(t * m_len + m + 1) * c_out];
                        let xs = &xv[(src_t * m_len + m) * c_in..(src_t * m_len + m + 1) * c_in];
                        for (o, &go) in gy.iter().enumerate() {
                            if go == 0.0 {
                                continue;
                            }
                            add_into(&mut gw[(tau * c_out + o) * c_in..(tau * c_out + o + 1) * c_in], xs, go);
                        }
                    }
                }
            }
        }
        Op::GraphPropagate { adj, importance, x } => {
            let (t_len, n, c) = (val(*x).shape[0], val(*x).shape[1], val(*x).shape[2]);
            let eff = effective_adjacency(adj, importance.map(|v| &val(v).data[..]), n);
            let xv = &val(*x).data;
            {
                let gx = acc(grads, nodes, *x);
                for t in 0..t_len {
                    for v in 0..n {
                        let gy = &g[(t * n + v) * c..(t * n + v + 1) * c];
                        for u in 0..n {
                            let a = eff[(t * n + v) * n + u];
                            if a != 0.0 {
                                add_into(&mut gx[(t * n + u) * c..(t * n + u + 1) * c], gy, a);
                            }
                        }
                    }
                }
            }
            if let Some(imp) = importance {
                let gi = acc(grads, nodes, *imp);
                for t in 0..t_len {
                    for v in 0..n {
                        let gy = &g[(t * n + v) * c..(t * n + v + 1) * c];
                        for u in 0..n {
                            let a = adj.data[(t * n + v) * n + u];
                            if a != 0.0 {
                                gi[v * n + u] += a * dot(gy, &xv[(t * n + u) * c..(t * n + u + 1) * c]);
                            }
                        }
                    }
                }
            }
        }
        Op::Conv2d { x, w, b } => {
            let (ci, h, wd) = (val(*x).shape[0], val(*x).shape[1], val(*x).shape[2]);
            let (co, kh, kw) = (val(*w).shape[0], val(*w).shape[2], val(*w).shape[3]);
            let (oh, ow) = (out.shape[1], out.shape[2]);
            let (xv, wv) = (&val(*x).data, &val(*w).data);
            {
                let gb = acc(grads, nodes, *b);
                for o in 0..co {
                    gb[o] += g[o * oh * ow..(o + 1) * oh * ow].iter().sum::<f64>();
                }
            }
            {
                let gw = acc(grads, nodes, *w);
                for o in 0..co {
                    let gp = &g[o * oh * ow..(o + 1) * oh * ow];
                    for c in 0..ci {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let mut s = 0.0;
                                for i in 0..oh {
                                    let base = (c * h + i + dy) * wd + dx;
                                    s += dot(&gp[i * ow..(i + 1) * ow], &xv[base..base + ow]);
                                }
                                gw[((o * ci + c) * kh + dy) * kw + dx] += s;
                            }
                        }
                    }
                }
            }
            let gx = acc(grads, nodes, *x);
            for o in 0..co {
                let gp = &g[o * oh * ow..(o + 1) * oh * ow];
                for c in 0..ci {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let wgt = wv[((o * ci + c) * kh + dy) * kw + dx];
                            for i in 0..oh {
                                let base = (c * h + i + dy) * wd + dx;
                                add_into(&mut gx[base..base + ow], &gp[i * ow..(i + 1) * ow], wgt);
                            }
                        }
                    }
                }
            }
        }
        Op::MeanPool2(x) => {
            let (c, h, w) = (val(*x).shape[0], val(*x).shape[1], val(*x).shape[2]);
            let (oh, ow) = (h / 2, w / 2);
            let gx = acc(grads, nodes, *x);
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let gv = 0.25 * g[(ch * oh + i) * ow + j];
                        let base = ch * h * w;
                        gx[base + 2 * i * w + 2 * j] += gv;
                        gx[base + 2 * i * w + 2 * j + 1] += gv;
                        gx[base + (2 * i + 1) * w + 2 * j] += gv;
                        gx[base + (2 * i + 1) * w + 2 * j + 1] += gv;
                    }
                }
            }
        }
        Op::Bce { p, y, clamped } => {
            let d = (clamped - y) / (clamped * (1.0 - clamped));
            acc(grads, nodes, *p)[0] += g[0] * d;
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

impl Op {
    pub(super) fn kink_signature(&self, nodes: &[Node], sig: &mut Vec<u8>) {
        match self {
            Op::Relu(x) | Op::SumAbs(x) => {
                sig.extend(nodes[x.0].value.data.iter().map(|&v| {
                    if v > 0.0 {
                        2
                    } else if v < 0.0 {
                        0
                    } else {
                        1
                    }
                }));
            }
            Op::Bce { p, .. } => {
                let v = nodes[p.0].value.data[0];
                sig.push(u8::from(v < BCE_EPSILON) + 2 * u8::from(v > 1.0 - BCE_EPSILON));
            }
            _ => {}
        }
    }
}
