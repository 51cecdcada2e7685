//! Reverse-mode automatic differentiation over the handful of operations the
//! predictors need.
//!
//! A [`Tape`] borrows a [`Params`] set, records every forward operation as a
//! node holding its output value, and [`Tape::backward`] walks the nodes in
//! reverse to produce [`Grads`] for every parameter. Parameters that never
//! appear on the tape receive zero gradient.

use crate::error::{Error, Result};
use crate::nn::tensor::{Grads, ParamId, Params, Tensor};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param(ParamId),
    /// Embedding lookup: table `[rows, dim]` -> `[dim, len]`.
    Gather { table: Var, rows: Vec<usize> },
    Concat { a: Var, b: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, c: T },
    Relu { x: Var },
    /// Same-length 1-D convolution; `cols` is the im2col buffer `[in*kernel, len]`.
    Conv1d { x: Var, w: Var, b: Var, kernel: usize, cols: Vec<T> },
    Mse { pred: Var, target: Vec<T>, mask: Option<Vec<bool>>, count: usize },
    Bce { logits: Var, labels: Vec<T> },
    GroupSum { x: Var, size: usize },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Tape<'p, T: Scalar> {
    params: &'p Params<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p Params<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p Params<T> {
        self.params
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Constant)
    }

    /// Node for a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let e = self.params.get(id);
        let value = Tensor {
            rows: e.rows(),
            cols: e.cols(),
            data: e.data.clone(),
        };
        let v = self.push(value, Op::Param(id));
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Looks up `rows` in an embedding table, producing `[dim, rows.len()]`.
    pub fn gather(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (n, dim) = t.shape();
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::shape(format!("embedding index {bad} out of range for {n} rows")));
        }
        let len = rows.len();
        let mut out = vec![T::zero(); dim * len];
        for (i, &r) in rows.iter().enumerate() {
            for (d, &v) in t.row(r).iter().enumerate() {
                out[d * len + i] = v;
            }
        }
        let value = Tensor { rows: dim, cols: len, data: out };
        Ok(self.push(value, Op::Gather { table, rows: rows.to_vec() }))
    }

    /// Stacks `a` on top of `b` along the channel axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols != vb.cols {
            return Err(Error::shape(format!(
                "concat length mismatch: {} vs {}",
                va.cols, vb.cols
            )));
        }
        let mut data = Vec::with_capacity(va.data.len() + vb.data.len());
        data.extend_from_slice(&va.data);
        data.extend_from_slice(&vb.data);
        let value = Tensor {
            rows: va.rows + vb.rows,
            cols: va.cols,
            data,
        };
        Ok(self.push(value, Op::Concat { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(format!(
                "add shape mismatch: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data = va.data.iter().zip(&vb.data).map(|(&x, &y)| x + y).collect();
        let value = Tensor { rows: va.rows, cols: va.cols, data };
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let vx = self.value(x);
        let data = vx.data.iter().map(|&v| v * c).collect();
        let value = Tensor { rows: vx.rows, cols: vx.cols, data };
        self.push(value, Op::Scale { x, c })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let data = vx.data.iter().map(|&v| v.max(T::zero())).collect();
        let value = Tensor { rows: vx.rows, cols: vx.cols, data };
        self.push(value, Op::Relu { x })
    }

    /// Convolves `x: [in, len]` with weights `w: [out, in*kernel]` and bias
    /// `b: [out, 1]`, zero padding `(kernel-1)/2` on each side so the output
    /// keeps length `len`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, kernel: usize) -> Result<Var> {
        if kernel.is_multiple_of(2) {
            return Err(Error::shape(format!("kernel width {kernel} is not odd")));
        }
        let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
        let (cin, len) = vx.shape();
        let (cout, ik) = vw.shape();
        if ik != cin * kernel {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {cin}",
                ik / kernel
            )));
        }
        if vb.data.len() != cout {
            return Err(Error::shape(format!("bias has {} entries for {cout} outputs", vb.data.len())));
        }
        let pad = (kernel - 1) / 2;
        let cols = im2col(&vx.data, cin, len, kernel, pad);
        let mut out = Vec::with_capacity(cout * len);
        for &bias in &vb.data {
            out.extend(std::iter::repeat_n(bias, len));
        }
        T::gemm(
            cout, ik, len, T::one(),
            &vw.data, ik as isize, 1,
            &cols, len as isize, 1,
            T::one(),
            &mut out, len as isize, 1,
        );
        let value = Tensor { rows: cout, cols: len, data: out };
        Ok(self.push(value, Op::Conv1d { x, w, b, kernel, cols }))
    }

    /// Mean squared error over the positions selected by `mask` (all when
    /// `None`). Selecting nothing yields exactly zero.
    pub fn mse(&mut self, pred: Var, target: &[T], mask: Option<&[bool]>) -> Result<Var> {
        let vp = self.value(pred);
        if vp.data.len() != target.len() {
            return Err(Error::shape(format!(
                "mse: {} predictions for {} targets",
                vp.data.len(),
                target.len()
            )));
        }
        if let Some(m) = mask {
            if m.len() != target.len() {
                return Err(Error::shape(format!(
                    "mse: mask length {} for {} targets",
                    m.len(),
                    target.len()
                )));
            }
        }
        let selected = |i: usize| mask.is_none_or(|m| m[i]);
        let mut count = 0usize;
        let mut sum = T::zero();
        for (i, (&p, &t)) in vp.data.iter().zip(target).enumerate() {
            if selected(i) {
                count += 1;
                sum += (p - t) * (p - t);
            }
        }
        let loss = if count == 0 {
            T::zero()
        } else {
            sum / T::from_usize(count).expect("count fits")
        };
        let value = Tensor { rows: 1, cols: 1, data: vec![loss] };
        Ok(self.push(
            value,
            Op::Mse {
                pred,
                target: target.to_vec(),
                mask: mask.map(<[bool]>::to_vec),
                count,
            },
        ))
    }

    /// Mean binary cross-entropy on logits, stable for arbitrarily large `|logit|`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[T]) -> Result<Var> {
        let vl = self.value(logits);
        if vl.data.len() != labels.len() {
            return Err(Error::shape(format!(
                "bce: {} logits for {} labels",
                vl.data.len(),
                labels.len()
            )));
        }
        let loss = if labels.is_empty() {
            T::zero()
        } else {
            let total: T = vl.data.iter().zip(labels).map(|(&z, &y)| bce_term(z, y)).sum();
            total / T::from_usize(labels.len()).expect("count fits")
        };
        let value = Tensor { rows: 1, cols: 1, data: vec![loss] };
        Ok(self.push(value, Op::Bce { logits, labels: labels.to_vec() }))
    }

    /// Sums consecutive non-overlapping groups of `size` elements of a
    /// `[1, len]` row; a trailing partial group is summed as well.
    pub fn group_sum(&mut self, x: Var, size: usize) -> Result<Var> {
        if size == 0 {
            return Err(Error::invalid("group size must be at least 1"));
        }
        let vx = self.value(x);
        if vx.rows != 1 {
            return Err(Error::shape(format!("group_sum expects one row, got {}", vx.rows)));
        }
        let data: Vec<T> = vx.data.chunks(size).map(|c| c.iter().copied().sum()).collect();
        let value = Tensor { rows: 1, cols: data.len(), data };
        Ok(self.push(value, Op::GroupSum { x, size }))
    }

    /// Sign pattern of every ReLU input on the tape, in recording order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Relu { x } = n.op {
                out.extend(self.nodes[x.0].value.data.iter().map(|&v| v > T::zero()));
            }
        }
        out
    }

    /// Reverse pass from a `1x1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        if self.value(loss).data.len() != 1 {
            return Err(Error::shape("backward needs a scalar loss node"));
        }
        let mut grads = Grads::zeros_like(self.params);
        let mut adj: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    for (a, &b) in grads.get_mut(*id).iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                Op::Gather { table, rows } => {
                    let t = self.value(*table);
                    let (dim, len) = (t.cols, rows.len());
                    let dt = slot(&mut adj, *table, t.data.len());
                    for (i, &r) in rows.iter().enumerate() {
                        for d in 0..dim {
                            dt[r * dim + d] += g[d * len + i];
                        }
                    }
                }
                Op::Concat { a, b } => {
                    let na = self.value(*a).data.len();
                    add_into(slot(&mut adj, *a, na), &g[..na]);
                    add_into(slot(&mut adj, *b, g.len() - na), &g[na..]);
                }
                Op::Add { a, b } => {
                    add_into(slot(&mut adj, *a, g.len()), &g);
                    add_into(slot(&mut adj, *b, g.len()), &g);
                }
                Op::Scale { x, c } => {
                    let dx = slot(&mut adj, *x, g.len());
                    for (d, &gi) in dx.iter_mut().zip(&g) {
                        *d += gi * *c;
                    }
                }
                Op::Relu { x } => {
                    let vx = &self.value(*x).data;
                    let dx = slot(&mut adj, *x, g.len());
                    for ((d, &gi), &xi) in dx.iter_mut().zip(&g).zip(vx) {
                        if xi > T::zero() {
                            *d += gi;
                        }
                    }
                }
                Op::Conv1d { x, w, b, kernel, cols } => {
                    let vx = self.value(*x);
                    let vw = self.value(*w);
                    let (cin, len) = vx.shape();
                    let (cout, ik) = vw.shape();
                    let pad = (kernel - 1) / 2;

                    let dw = slot(&mut adj, *w, cout * ik);
                    // dW += G * cols^T
                    T::gemm(
                        cout, len, ik, T::one(),
                        &g, len as isize, 1,
                        cols, 1, len as isize,
                        T::one(),
                        dw, ik as isize, 1,
                    );
                    let db = slot(&mut adj, *b, cout);
                    for (o, d) in db.iter_mut().enumerate() {
                        *d += g[o * len..(o + 1) * len].iter().copied().sum::<T>();
                    }
                    // dcols = W^T * G, then scatter back onto x.
                    let mut dcols = vec![T::zero(); ik * len];
                    T::gemm(
                        ik, cout, len, T::one(),
                        &vw.data, 1, ik as isize,
                        &g, len as isize, 1,
                        T::zero(),
                        &mut dcols, len as isize, 1,
                    );
                    let dx = slot(&mut adj, *x, cin * len);
                    col2im_add(&dcols, dx, cin, len, *kernel, pad);
                }
                Op::Mse { pred, target, mask, count } => {
                    if *count > 0 {
                        let vp = &self.value(*pred).data;
                        let k = g[0] * T::lit(2.0) / T::from_usize(*count).expect("count fits");
                        let dp = slot(&mut adj, *pred, vp.len());
                        for (i, (d, (&p, &t))) in dp.iter_mut().zip(vp.iter().zip(target)).enumerate() {
                            if mask.as_ref().is_none_or(|m| m[i]) {
                                *d += k * (p - t);
                            }
                        }
                    }
                }
                Op::Bce { logits, labels } => {
                    if !labels.is_empty() {
                        let vl = &self.value(*logits).data;
                        let k = g[0] / T::from_usize(labels.len()).expect("count fits");
                        let dl = slot(&mut adj, *logits, vl.len());
                        for (d, (&z, &y)) in dl.iter_mut().zip(vl.iter().zip(labels)) {
                            *d += k * (sigmoid(z) - y);
                        }
                    }
                }
                Op::GroupSum { x, size } => {
                    let n = self.value(*x).data.len();
                    let dx = slot(&mut adj, *x, n);
                    for (i, d) in dx.iter_mut().enumerate() {
                        *d += g[i / size];
                    }
                }
            }
        }
        Ok(grads)
    }
}

fn slot<T: Scalar>(adj: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    adj[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn im2col<T: Scalar>(x: &[T], cin: usize, len: usize, kernel: usize, pad: usize) -> Vec<T> {
    let mut cols = vec![T::zero(); cin * kernel * len];
    for i in 0..cin {
        let xr = &x[i * len..(i + 1) * len];
        for k in 0..kernel {
            let row = &mut cols[(i * kernel + k) * len..(i * kernel + k + 1) * len];
            // out position t reads x[t + k - pad]
            let lo = pad.saturating_sub(k);
            let hi = (len + pad).saturating_sub(k).min(len);
            for t in lo..hi {
                row[t] = xr[t + k - pad];
            }
        }
    }
    cols
}

fn col2im_add<T: Scalar>(dcols: &[T], dx: &mut [T], cin: usize, len: usize, kernel: usize, pad: usize) {
    for i in 0..cin {
        for k in 0..kernel {
            let row = &dcols[(i * kernel + k) * len..(i * kernel + k + 1) * len];
            let lo = pad.saturating_sub(k);
            let hi = (len + pad).saturating_sub(k).min(len);
            for t in lo..hi {
                dx[i * len + t + k - pad] += row[t];
            }
        }
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn bce_term<T: Scalar>(z: T, y: T) -> T {
    z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()
}
