//! Minimal reverse-mode automatic differentiation over 2-D tensors.
//!
//! Forward ops execute eagerly and record themselves; `backward` walks the
//! record in reverse and accumulates exact gradients. The op set is exactly
//! what the graph layers, batch norm and the loss need.

use super::scalar::Scalar;
use super::tensor::Tensor;
use super::NnError;
use std::rc::Rc;

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    /// matrix (n,d) + row (1,d)
    AddRow(usize, usize),
    Mul(usize, usize),
    /// matrix (n,d) * row (1,d)
    MulRow(usize, usize),
    /// matrix (n,d) * column (n,1)
    MulCol(usize, usize),
    /// alpha * x + beta; only alpha matters for the gradient
    Affine(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Clamp(usize, f64, f64),
    Ln(usize),
    /// out[i] = input[idx[i]]
    Gather(usize, Rc<Vec<u32>>),
    /// out[idx[i]] += input[i]
    ScatterAdd(usize, Rc<Vec<u32>>),
    /// column-wise concatenation
    Concat(Vec<usize>),
    /// softmax within row groups given by seg ids, independently per column
    SegmentSoftmax(usize, Rc<Vec<u32>>, usize),
    /// saved: normalized input and 1/sqrt(var+eps) per column
    BatchNorm { x: usize, gamma: usize, beta: usize, xhat: Tensor<T>, inv_std: Vec<T> },
    SumAll(usize),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::with_capacity(256) }
    }

    pub fn value(&self, id: usize) -> &Tensor<T> {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> usize {
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes[id].needs_grad
    }

    /// Register an input tensor. Gradients flow only through leaves with
    /// `requires_grad`.
    pub fn leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> usize {
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn matmul(&mut self, a: usize, b: usize) -> usize {
        let v = self.nodes[a].value.matmul(&self.nodes[b].value);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Matmul(a, b), ng)
    }

    pub fn add(&mut self, a: usize, b: usize) -> usize {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        debug_assert_eq!((va.rows, va.cols), (vb.rows, vb.cols));
        let data = va.data.iter().zip(&vb.data).map(|(&x, &y)| x + y).collect();
        let v = Tensor::from_vec(va.rows, va.cols, data);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn add_row(&mut self, a: usize, row: usize) -> usize {
        let (va, vr) = (&self.nodes[a].value, &self.nodes[row].value);
        debug_assert_eq!(vr.rows, 1);
        debug_assert_eq!(va.cols, vr.cols);
        let mut v = va.clone();
        for r in 0..v.rows {
            for (o, &b) in v.row_mut(r).iter_mut().zip(&vr.data) {
                *o += b;
            }
        }
        let ng = self.needs(a) || self.needs(row);
        self.push(v, Op::AddRow(a, row), ng)
    }

    pub fn mul(&mut self, a: usize, b: usize) -> usize {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        debug_assert_eq!((va.rows, va.cols), (vb.rows, vb.cols));
        let data = va.data.iter().zip(&vb.data).map(|(&x, &y)| x * y).collect();
        let v = Tensor::from_vec(va.rows, va.cols, data);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn mul_row(&mut self, a: usize, row: usize) -> usize {
        let (va, vr) = (&self.nodes[a].value, &self.nodes[row].value);
        debug_assert_eq!(vr.rows, 1);
        let mut v = va.clone();
        for r in 0..v.rows {
            for (o, &b) in v.row_mut(r).iter_mut().zip(&vr.data) {
                *o *= b;
            }
        }
        let ng = self.needs(a) || self.needs(row);
        self.push(v, Op::MulRow(a, row), ng)
    }

    pub fn mul_col(&mut self, a: usize, col: usize) -> usize {
        let (va, vc) = (&self.nodes[a].value, &self.nodes[col].value);
        debug_assert_eq!(vc.cols, 1);
        debug_assert_eq!(va.rows, vc.rows);
        let mut v = va.clone();
        for r in 0..v.rows {
            let c = vc.data[r];
            for o in v.row_mut(r) {
                *o *= c;
            }
        }
        let ng = self.needs(a) || self.needs(col);
        self.push(v, Op::MulCol(a, col), ng)
    }

    pub fn affine(&mut self, a: usize, alpha: f64, beta: f64) -> usize {
        let (al, be) = (T::from_f64(alpha), T::from_f64(beta));
        let v = self.nodes[a].value.map(|x| al * x + be);
        let ng = self.needs(a);
        let _ = beta;
        self.push(v, Op::Affine(a, alpha), ng)
    }

    pub fn sigmoid(&mut self, a: usize) -> usize {
        let v = self.nodes[a].value.map(|x| T::ONE / (T::ONE + (-x).exp()));
        let ng = self.needs(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: usize) -> usize {
        let v = self.nodes[a].value.map(|x| x.tanh());
        let ng = self.needs(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn relu(&mut self, a: usize) -> usize {
        let v = self.nodes[a].value.map(|x| x.maxs(T::ZERO));
        let ng = self.needs(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn leaky_relu(&mut self, a: usize, slope: f64) -> usize {
        let s = T::from_f64(slope);
        let v = self.nodes[a].value.map(|x| if x > T::ZERO { x } else { s * x });
        let ng = self.needs(a);
        self.push(v, Op::LeakyRelu(a, slope), ng)
    }

    pub fn clamp(&mut self, a: usize, lo: f64, hi: f64) -> usize {
        let (l, h) = (T::from_f64(lo), T::from_f64(hi));
        let v = self.nodes[a].value.map(|x| x.maxs(l).mins(h));
        let ng = self.needs(a);
        self.push(v, Op::Clamp(a, lo, hi), ng)
    }

    pub fn ln(&mut self, a: usize) -> usize {
        let v = self.nodes[a].value.map(|x| x.ln());
        let ng = self.needs(a);
        self.push(v, Op::Ln(a), ng)
    }

    pub fn gather(&mut self, a: usize, idx: Rc<Vec<u32>>) -> usize {
        let va = &self.nodes[a].value;
        let mut v = Tensor::zeros(idx.len(), va.cols);
        for (r, &i) in idx.iter().enumerate() {
            v.row_mut(r).copy_from_slice(va.row(i as usize));
        }
        let ng = self.needs(a);
        self.push(v, Op::Gather(a, idx), ng)
    }

    pub fn scatter_add(&mut self, a: usize, idx: Rc<Vec<u32>>, n_out: usize) -> usize {
        let va = &self.nodes[a].value;
        debug_assert_eq!(va.rows, idx.len());
        let mut v = Tensor::zeros(n_out, va.cols);
        for (r, &i) in idx.iter().enumerate() {
            let src = va.row(r);
            for (o, &s) in v.row_mut(i as usize).iter_mut().zip(src) {
                *o += s;
            }
        }
        let ng = self.needs(a);
        self.push(v, Op::ScatterAdd(a, idx), ng)
    }

    pub fn concat_cols(&mut self, parts: &[usize]) -> usize {
        let rows = self.nodes[parts[0]].value.rows;
        let cols: usize = parts.iter().map(|&p| self.nodes[p].value.cols).sum();
        let mut v = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pv = &self.nodes[p].value;
                v.data[r * cols + off..r * cols + off + pv.cols].copy_from_slice(pv.row(r));
                off += pv.cols;
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(v, Op::Concat(parts.to_vec()), ng)
    }

    /// Softmax over row groups (per column). `seg[i]` is the group of row i.
    pub fn segment_softmax(&mut self, a: usize, seg: Rc<Vec<u32>>, n_seg: usize) -> usize {
        let va = &self.nodes[a].value;
        debug_assert_eq!(va.rows, seg.len());
        let cols = va.cols;
        let groups = group_rows(&seg, n_seg);
        let mut v = va.clone();
        for rows in groups.iter().filter(|g| !g.is_empty()) {
            for c in 0..cols {
                let mut max = T::from_f64(f64::NEG_INFINITY);
                for &r in rows {
                    max = max.maxs(va.data[r as usize * cols + c]);
                }
                let mut total = T::ZERO;
                for &r in rows {
                    let e = (va.data[r as usize * cols + c] - max).exp();
                    v.data[r as usize * cols + c] = e;
                    total += e;
                }
                for &r in rows {
                    v.data[r as usize * cols + c] = v.data[r as usize * cols + c] / total;
                }
            }
        }
        let ng = self.needs(a);
        self.push(v, Op::SegmentSoftmax(a, seg, n_seg), ng)
    }

    /// Batch normalization over rows (training mode: batch statistics).
    /// Returns (output id, batch mean, batch var) so callers can maintain
    /// running statistics.
    pub fn batch_norm(
        &mut self,
        x: usize,
        gamma: usize,
        beta: usize,
        eps: f64,
    ) -> (usize, Vec<T>, Vec<T>) {
        let vx = &self.nodes[x].value;
        let (n, d) = (vx.rows, vx.cols);
        let inv_n = T::from_f64(1.0 / n as f64);
        let mut mean = vec![T::ZERO; d];
        for r in 0..n {
            for (m, &v) in mean.iter_mut().zip(vx.row(r)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m *= inv_n;
        }
        let mut var = vec![T::ZERO; d];
        for r in 0..n {
            for ((va, &v), &m) in var.iter_mut().zip(vx.row(r)).zip(&mean) {
                let dlt = v - m;
                *va += dlt * dlt;
            }
        }
        for v in &mut var {
            *v *= inv_n;
        }
        let e = T::from_f64(eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + e).sqrt()).collect();
        let mut xhat = Tensor::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                xhat.data[r * d + c] = (vx.data[r * d + c] - mean[c]) * inv_std[c];
            }
        }
        let g = &self.nodes[gamma].value;
        let b = &self.nodes[beta].value;
        let mut out = Tensor::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                out.data[r * d + c] = g.data[c] * xhat.data[r * d + c] + b.data[c];
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let id = self.push(
            out,
            Op::BatchNorm { x, gamma, beta, xhat, inv_std: inv_std.clone() },
            ng,
        );
        (id, mean, var)
    }

    pub fn sum_all(&mut self, a: usize) -> usize {
        let s: T = self.nodes[a].value.data.iter().copied().sum();
        let ng = self.needs(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), ng)
    }

    /// Reverse pass from a scalar output. Returns per-node gradients (only
    /// nodes on a grad path are populated). Non-finite gradients are a
    /// numerical error.
    pub fn backward(&mut self, output: usize) -> Result<Vec<Option<Tensor<T>>>, NnError> {
        debug_assert_eq!(self.nodes[output].value.len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output] = Some(Tensor::scalar(T::ONE));

        for id in (0..=output).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.apply_backward(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        for g in grads.iter().flatten() {
            if !g.all_finite() {
                return Err(NnError::Numerical("non-finite gradient".into()));
            }
        }
        Ok(grads)
    }

    fn accumulate(grads: &mut [Option<Tensor<T>>], id: usize, delta: Tensor<T>) {
        match &mut grads[id] {
            Some(g) => g.add_inplace(&delta),
            slot => *slot = Some(delta),
        }
    }

    fn apply_backward(&self, id: usize, g: &Tensor<T>, grads: &mut Vec<Option<Tensor<T>>>) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                if self.needs(*a) {
                    let da = g.matmul_nt(&self.nodes[*b].value);
                    Self::accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let db = self.nodes[*a].value.matmul_tn(g);
                    Self::accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    Self::accumulate(grads, *b, g.clone());
                }
            }
            Op::AddRow(a, row) => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, g.clone());
                }
                if self.needs(*row) {
                    let mut db = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, &v) in db.data.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    Self::accumulate(grads, *row, db);
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let vb = &self.nodes[*b].value;
                    let da = Tensor::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&vb.data).map(|(&x, &y)| x * y).collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let va = &self.nodes[*a].value;
                    let db = Tensor::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&va.data).map(|(&x, &y)| x * y).collect(),
                    );
                    Self::accumulate(grads, *b, db);
                }
            }
            Op::MulRow(a, row) => {
                let vr = &self.nodes[*row].value;
                if self.needs(*a) {
                    let mut da = g.clone();
                    for r in 0..da.rows {
                        for (o, &b) in da.row_mut(r).iter_mut().zip(&vr.data) {
                            *o *= b;
                        }
                    }
                    Self::accumulate(grads, *a, da);
                }
                if self.needs(*row) {
                    let va = &self.nodes[*a].value;
                    let mut db = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            db.data[c] += g.data[r * g.cols + c] * va.data[r * g.cols + c];
                        }
                    }
                    Self::accumulate(grads, *row, db);
                }
            }
            Op::MulCol(a, col) => {
                let vc = &self.nodes[*col].value;
                if self.needs(*a) {
                    let mut da = g.clone();
                    for r in 0..da.rows {
                        let c = vc.data[r];
                        for o in da.row_mut(r) {
                            *o *= c;
                        }
                    }
                    Self::accumulate(grads, *a, da);
                }
                if self.needs(*col) {
                    let va = &self.nodes[*a].value;
                    let mut dc = Tensor::zeros(g.rows, 1);
                    for r in 0..g.rows {
                        let mut s = T::ZERO;
                        for (gg, aa) in g.row(r).iter().zip(va.row(r)) {
                            s += *gg * *aa;
                        }
                        dc.data[r] = s;
                    }
                    Self::accumulate(grads, *col, dc);
                }
            }
            Op::Affine(a, alpha) => {
                if self.needs(*a) {
                    let al = T::from_f64(*alpha);
                    Self::accumulate(grads, *a, g.map(|x| al * x));
                }
            }
            Op::Sigmoid(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[id].value;
                    let da = Tensor::from_vec(
                        g.rows,
                        g.cols,
                        g.data
                            .iter()
                            .zip(&y.data)
                            .map(|(&gg, &yy)| gg * yy * (T::ONE - yy))
                            .collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[id].value;
                    let da = Tensor::from_vec(
                        g.rows,
                        g.cols,
                        g.data
                            .iter()
                            .zip(&y.data)
                            .map(|(&gg, &yy)| gg * (T::ONE - yy * yy))
                            .collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    let x = &self.nodes[*a].value;
                    let da = Tensor::from_vec(
                        g.rows,
                        g.cols,
                        g.data
                            .iter()
                            .zip(&x.data)
                            .map(|(&gg, &xx)| if xx > T::ZERO { gg } else { T::ZERO })
                            .collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::LeakyRelu(a, slope) => {
                if self.needs(*a) {
                    let s = T::from_f64(*slope);
                    let x = &self.nodes[*a].value;
                    let da = Tensor::from_vec(
                        g.rows,
                        g.cols,
                        g.data
                            .iter()
                            .zip(&x.data)
                            .map(|(&gg, &xx)| if xx > T::ZERO { gg } else { gg * s })
                            .collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Clamp(a, lo, hi) => {
                if self.needs(*a) {
                    let (l, h) = (T::from_f64(*lo), T::from_f64(*hi));
                    let x = &self.nodes[*a].value;
                    let da = Tensor::from_vec(
                        g.rows,
                        g.cols,
                        g.data
                            .iter()
                            .zip(&x.data)
                            .map(|(&gg, &xx)| if xx >= l && xx <= h { gg } else { T::ZERO })
                            .collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Ln(a) => {
                if self.needs(*a) {
                    let x = &self.nodes[*a].value;
                    let da = Tensor::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&x.data).map(|(&gg, &xx)| gg / xx).collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Gather(a, idx) => {
                if self.needs(*a) {
                    let va = &self.nodes[*a].value;
                    let mut da = Tensor::zeros(va.rows, va.cols);
                    for (r, &i) in idx.iter().enumerate() {
                        let src = g.row(r);
                        for (o, &s) in da.row_mut(i as usize).iter_mut().zip(src) {
                            *o += s;
                        }
                    }
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::ScatterAdd(a, idx) => {
                if self.needs(*a) {
                    let mut da = Tensor::zeros(idx.len(), g.cols);
                    for (r, &i) in idx.iter().enumerate() {
                        da.row_mut(r).copy_from_slice(g.row(i as usize));
                    }
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let cols = self.nodes[p].value.cols;
                    if self.needs(p) {
                        let mut dp = Tensor::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        Self::accumulate(grads, p, dp);
                    }
                    off += cols;
                }
            }
            Op::SegmentSoftmax(a, seg, n_seg) => {
                if self.needs(*a) {
                    let alpha = &self.nodes[id].value;
                    let cols = alpha.cols;
                    let groups = group_rows(seg, *n_seg);
                    let mut da = Tensor::zeros(alpha.rows, cols);
                    for rows in groups.iter().filter(|gr| !gr.is_empty()) {
                        for c in 0..cols {
                            let mut dot = T::ZERO;
                            for &r in rows {
                                let i = r as usize * cols + c;
                                dot += alpha.data[i] * g.data[i];
                            }
                            for &r in rows {
                                let i = r as usize * cols + c;
                                da.data[i] = alpha.data[i] * (g.data[i] - dot);
                            }
                        }
                    }
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std } => {
                let (n, d) = (xhat.rows, xhat.cols);
                let gv = &self.nodes[*gamma].value;
                if self.needs(*beta) {
                    let mut db = Tensor::zeros(1, d);
                    for r in 0..n {
                        for (o, &v) in db.data.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    Self::accumulate(grads, *beta, db);
                }
                if self.needs(*gamma) {
                    let mut dg = Tensor::zeros(1, d);
                    for r in 0..n {
                        for c in 0..d {
                            dg.data[c] += g.data[r * d + c] * xhat.data[r * d + c];
                        }
                    }
                    Self::accumulate(grads, *gamma, dg);
                }
                if self.needs(*x) {
                    // dx = gamma*inv_std/N * (N*g - sum(g) - xhat * sum(g*xhat))
                    let inv_n = T::from_f64(1.0 / n as f64);
                    let mut sum_g = vec![T::ZERO; d];
                    let mut sum_gx = vec![T::ZERO; d];
                    for r in 0..n {
                        for c in 0..d {
                            let i = r * d + c;
                            sum_g[c] += g.data[i];
                            sum_gx[c] += g.data[i] * xhat.data[i];
                        }
                    }
                    let nn = T::from_f64(n as f64);
                    let mut dx = Tensor::zeros(n, d);
                    for r in 0..n {
                        for c in 0..d {
                            let i = r * d + c;
                            dx.data[i] = gv.data[c] * inv_std[c] * inv_n
                                * (nn * g.data[i] - sum_g[c] - xhat.data[i] * sum_gx[c]);
                        }
                    }
                    Self::accumulate(grads, *x, dx);
                }
            }
            Op::SumAll(a) => {
                if self.needs(*a) {
                    let va = &self.nodes[*a].value;
                    let s = g.item();
                    let da = Tensor::from_vec(va.rows, va.cols, vec![s; va.len()]);
                    Self::accumulate(grads, *a, da);
                }
            }
        }
    }
}

fn group_rows(seg: &[u32], n_seg: usize) -> Vec<Vec<u32>> {
    let mut groups: Vec<Vec<u32>> = vec![Vec::new(); n_seg];
    for (r, &s) in seg.iter().enumerate() {
        groups[s as usize].push(r as u32);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences against the tape on a composite function.
    fn fd_check<F>(build: F, inputs: &[Tensor<f64>])
    where
        F: Fn(&mut Tape<f64>, &[usize]) -> usize,
    {
        let mut tape = Tape::new();
        let ids: Vec<usize> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = build(&mut tape, &ids);
        let grads = tape.backward(out).unwrap();

        let eps = 1e-6;
        for (which, input) in inputs.iter().enumerate() {
            let g = grads[ids[which]].as_ref().expect("missing grad");
            for k in 0..input.len() {
                let eval = |delta: f64| {
                    let mut t2 = Tape::new();
                    let ids2: Vec<usize> = inputs
                        .iter()
                        .enumerate()
                        .map(|(i, t)| {
                            let mut t = t.clone();
                            if i == which {
                                t.data[k] += delta;
                            }
                            t2.leaf(t, true)
                        })
                        .collect();
                    let o = build(&mut t2, &ids2);
                    t2.value(o).item()
                };
                let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let an = g.data[k];
                let denom = an.abs().max(fd.abs()).max(1e-8);
                assert!(
                    ((an - fd) / denom).abs() < 1e-5,
                    "input {which} elem {k}: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn square_function_gradient() {
        // f(x) = sum(x*x), df/dx = 2x; at x=3 -> 6
        let x = Tensor::from_vec(1, 1, vec![3.0]);
        let mut tape = Tape::new();
        let xid = tape.leaf(x, true);
        let sq = tape.mul(xid, xid);
        let out = tape.sum_all(sq);
        let grads = tape.backward(out).unwrap();
        assert_eq!(grads[xid].as_ref().unwrap().data[0], 6.0);
    }

    #[test]
    fn matmul_chain_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = Tensor::from_vec(3, 4, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let b = Tensor::from_vec(4, 2, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        fd_check(
            |t, ids| {
                let m = t.matmul(ids[0], ids[1]);
                let s = t.sigmoid(m);
                t.sum_all(s)
            },
            &[a, b],
        );
    }

    #[test]
    fn gather_scatter_softmax_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let h = Tensor::from_vec(4, 3, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let idx = Rc::new(vec![0u32, 2, 1, 3, 2]);
        let seg = Rc::new(vec![0u32, 0, 1, 1, 1]);
        fd_check(
            |t, ids| {
                let gathered = t.gather(ids[0], idx.clone());
                let scores = t.tanh(gathered);
                let alpha = t.segment_softmax(scores, seg.clone(), 2);
                let weighted = t.mul(gathered, alpha);
                let pooled = t.scatter_add(weighted, idx.clone(), 4);
                t.sum_all(pooled)
            },
            &[h],
        );
    }

    #[test]
    fn batch_norm_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let x = Tensor::from_vec(5, 3, (0..15).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let gamma = Tensor::from_vec(1, 3, vec![1.1, 0.9, 1.3]);
        let beta = Tensor::from_vec(1, 3, vec![0.1, -0.2, 0.0]);
        fd_check(
            |t, ids| {
                let (bn, _, _) = t.batch_norm(ids[0], ids[1], ids[2], 1e-5);
                let s = t.tanh(bn);
                t.sum_all(s)
            },
            &[x, gamma, beta],
        );
    }

    #[test]
    fn broadcast_ops_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let a = Tensor::from_vec(4, 3, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let row = Tensor::from_vec(1, 3, (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let col = Tensor::from_vec(4, 1, (0..4).map(|_| rng.gen_range(0.2..1.0)).collect());
        fd_check(
            |t, ids| {
                let x = t.add_row(ids[0], ids[1]);
                let x = t.mul_col(x, ids[2]);
                let x = t.mul_row(x, ids[1]);
                let x = t.leaky_relu(x, 0.2);
                t.sum_all(x)
            },
            &[a, row, col],
        );
    }

    #[test]
    fn unused_parameter_gets_no_gradient_path() {
        let x = Tensor::from_vec(1, 1, vec![2.0]);
        let unused = Tensor::from_vec(1, 1, vec![5.0]);
        let mut tape: Tape<f64> = Tape::new();
        let xid = tape.leaf(x, true);
        let uid = tape.leaf(unused, true);
        let y = tape.mul(xid, xid);
        let out = tape.sum_all(y);
        let grads = tape.backward(out).unwrap();
        assert!(grads[uid].is_none());
        assert!(grads[xid].is_some());
    }

    #[test]
    fn ln_clamp_loss_shape() {
        // -[2*ln 0.5] = 1.38629 for p=0.5, y=1, w=2
        let p = Tensor::from_vec(1, 1, vec![0.5f64]);
        let mut tape = Tape::new();
        let pid = tape.leaf(p, true);
        let pc = tape.clamp(pid, 1e-7, 1.0 - 1e-7);
        let lnp = tape.ln(pc);
        let weighted = tape.affine(lnp, 2.0, 0.0);
        let s = tape.sum_all(weighted);
        let loss = tape.affine(s, -1.0, 0.0);
        assert!((tape.value(loss).item() - 1.3862943611198906).abs() < 1e-12);
    }
}
