//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node to the tape, so insertion order is a
//! topological order and backward is a single reverse sweep.

use super::fft::RealFft;
use super::kernels::{layer_norm_rows, masked_softmax_rows, sigmoid};
use super::tensor::{matmul_kernel, matmul_tn_kernel};
use super::{Rng, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Lower clamp on probabilities inside the logistic loss.
pub const LOG_CLAMP: f64 = 1e-12;

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Affine(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Bmm {
        a: Var,
        b: Var,
        b_transposed: bool,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    MaskedSoftmax(Var),
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    GatherRows {
        x: Var,
        idx: Vec<usize>,
    },
    Reshape(Var),
    ConcatLast(Vec<Var>),
    SliceLast {
        x: Var,
        start: usize,
    },
    SelectRows {
        take_a: Vec<bool>,
        a: Var,
        b: Var,
    },
    SpectralFilter {
        x: Var,
        w_re: Var,
        w_im: Var,
        spec_re: Vec<f64>,
        spec_im: Vec<f64>,
    },
    Sum(Var),
    Mean(Var),
    Bce {
        scores: Var,
        labels: Vec<i8>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Computation tape.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    dropout_rng: Option<Rng>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of `v`; zeros when `v` was not reached from the loss.
    pub fn get(&self, v: Var) -> Tensor<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[v.0].clone()),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor<T> {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => Tensor::zeros(self.shapes[v.0].clone()),
        }
    }

    pub fn reached(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl<T: Scalar> Graph<T> {
    /// Evaluation-mode tape: dropout is the identity.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            dropout_rng: None,
        }
    }

    /// Training-mode tape: dropout draws masks from `rng`.
    pub fn training(rng: Rng) -> Self {
        Self {
            nodes: Vec::new(),
            dropout_rng: Some(rng),
        }
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(op, va, vb)?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    /// `x + b` with `b` broadcast over every row of the trailing dimension.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(b));
        let d = vx.last_dim();
        if vb.len() != d {
            return Err(Error::shape(
                "add_bias",
                format!("bias of {} for trailing dim {d}", vb.len()),
            ));
        }
        let bias = vb.data();
        let data = vx.data().iter().enumerate().map(|(i, &v)| v + bias[i % d]).collect();
        let t = Tensor::new(vx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::AddBias(x, b), &[x, b]))
    }

    /// `a·x + c` with scalar constants.
    pub fn affine(&mut self, x: Var, a: f64, c: f64) -> Var {
        let (ta, tc) = (T::from_f64(a), T::from_f64(c));
        let t = self.value(x).map(|v| ta * v + tc);
        self.push(t, Op::Affine(x, ta), &[x])
    }

    pub fn scale(&mut self, x: Var, a: f64) -> Var {
        self.affine(x, a, 0.0)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(t, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(sigmoid);
        self.push(t, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.tanh());
        self.push(t, Op::Tanh(x), &[x])
    }

    /// `x[.., k] · w[k, n]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (vx, vw) = (self.value(x), self.value(w));
        let k = vx.last_dim();
        let [wk, n] = *vw.shape() else {
            return Err(Error::shape("matmul", "weight must be a matrix"));
        };
        if wk != k {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", vx.shape(), vw.shape())));
        }
        let m = vx.rows();
        let data = matmul_kernel(vx.data(), vw.data(), m, k, n, false);
        let mut shape = vx.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::MatMul(x, w), &[x, w]))
    }

    /// `x[.., k] · w[n, k]ᵀ`.
    pub fn matmul_nt(&mut self, x: Var, w: Var) -> Result<Var> {
        let (vx, vw) = (self.value(x), self.value(w));
        let k = vx.last_dim();
        let [n, wk] = *vw.shape() else {
            return Err(Error::shape("matmul_nt", "weight must be a matrix"));
        };
        if wk != k {
            return Err(Error::shape(
                "matmul_nt",
                format!("{:?} x {:?}ᵀ", vx.shape(), vw.shape()),
            ));
        }
        let m = vx.rows();
        let data = matmul_kernel(vx.data(), vw.data(), m, k, n, true);
        let mut shape = vx.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::MatMulNt(x, w), &[x, w]))
    }

    /// Batched product of `[B, M, K]` with `[B, K, N]`, or with `[B, N, K]ᵀ`
    /// when `b_transposed`.
    pub fn bmm(&mut self, a: Var, b: Var, b_transposed: bool) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let [ba, m, k] = <[usize; 3]>::try_from(va.shape()).map_err(|_| Error::shape("bmm", "lhs must be 3-d"))?;
        let [bb, p, q] = <[usize; 3]>::try_from(vb.shape()).map_err(|_| Error::shape("bmm", "rhs must be 3-d"))?;
        let (kb, n) = if b_transposed { (q, p) } else { (p, q) };
        if ba != bb || kb != k {
            return Err(Error::shape("bmm", format!("{:?} x {:?}", va.shape(), vb.shape())));
        }
        let mut out = Vec::with_capacity(ba * m * n);
        for i in 0..ba {
            out.extend(matmul_kernel(
                &va.data()[i * m * k..(i + 1) * m * k],
                &vb.data()[i * k * n..(i + 1) * k * n],
                m,
                k,
                n,
                b_transposed,
            ));
        }
        let t = Tensor::new([ba, m, n], out)?;
        Ok(self.push(t, Op::Bmm { a, b, b_transposed }, &[a, b]))
    }

    /// Normalizes each row of the trailing dimension, then applies the affine.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (vx, vg, vb) = (self.value(x), self.value(gamma), self.value(beta));
        let d = vx.last_dim();
        if d == 0 || vg.len() != d || vb.len() != d {
            return Err(Error::shape(
                "layer_norm",
                format!("input {:?}, gamma {}, beta {}", vx.shape(), vg.len(), vb.len()),
            ));
        }
        let (y, xhat, rstd) = layer_norm_rows(vx.data(), d, vg.data(), vb.data(), T::from_f64(eps));
        let t = Tensor::new(vx.shape().to_vec(), y)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        ))
    }

    /// Softmax over the trailing dimension limited to `mask == true` entries.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let vx = self.value(x);
        if mask.len() != vx.len() {
            return Err(Error::shape("masked_softmax", "mask size differs from input"));
        }
        let y = masked_softmax_rows(vx.data(), vx.last_dim(), mask)?;
        let t = Tensor::new(vx.shape().to_vec(), y)?;
        Ok(self.push(t, Op::MaskedSoftmax(x), &[x]))
    }

    /// Inverted dropout: identity outside training or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::DropoutProbability(p));
        }
        let Some(rng) = self.dropout_rng.as_mut() else {
            return Ok(x);
        };
        if p == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64(1.0 / (1.0 - p));
        let n = self.nodes[x.0].value.len();
        let mask: Vec<T> = (0..n).map(|_| if rng.unit() < p { T::zero() } else { keep }).collect();
        let vx = self.value(x);
        let data = vx.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let t = Tensor::new(vx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Dropout { x, mask }, &[x]))
    }

    /// Rows of `x` (viewed as `[rows, d]`) picked by `idx`, shaped
    /// `out_prefix ++ [d]`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize], out_prefix: &[usize]) -> Result<Var> {
        let vx = self.value(x);
        let (rows, d) = (vx.rows(), vx.last_dim());
        if out_prefix.iter().product::<usize>() != idx.len() {
            return Err(Error::shape("gather_rows", "index count differs from output shape"));
        }
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            if i >= rows {
                return Err(Error::shape("gather_rows", format!("row {i} of {rows}")));
            }
            data.extend_from_slice(vx.row(i));
        }
        let mut shape = out_prefix.to_vec();
        shape.push(d);
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::GatherRows { x, idx: idx.to_vec() }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Concatenation along the trailing dimension.
    pub fn concat_last(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::shape("concat_last", "no inputs"))?;
        let rows = self.value(*first).rows();
        let lead = self.value(*first).shape()[..self.value(*first).shape().len() - 1].to_vec();
        let dims: Vec<usize> = xs.iter().map(|&x| self.value(x).last_dim()).collect();
        for &x in xs {
            let s = self.value(x).shape();
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat_last", format!("{lead:?} vs {s:?}")));
            }
        }
        let total: usize = dims.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &x in xs {
                data.extend_from_slice(self.value(x).row(r));
            }
        }
        let mut shape = lead;
        shape.push(total);
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::ConcatLast(xs.to_vec()), xs))
    }

    /// `x[.., start..start + len]`.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let vx = self.value(x);
        let d = vx.last_dim();
        if start + len > d {
            return Err(Error::shape("slice_last", format!("{start}+{len} > {d}")));
        }
        let mut data = Vec::with_capacity(vx.rows() * len);
        for r in 0..vx.rows() {
            data.extend_from_slice(&vx.row(r)[start..start + len]);
        }
        let mut shape = vx.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::SliceLast { x, start }, &[x]))
    }

    /// Row `r` of the output is row `r` of `a` when `take_a[r]`, else of `b`.
    pub fn select_rows(&mut self, take_a: &[bool], a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("select_rows", va, vb)?;
        if take_a.len() != va.rows() {
            return Err(Error::shape("select_rows", "mask length differs from row count"));
        }
        let mut data = Vec::with_capacity(va.len());
        for (r, &t) in take_a.iter().enumerate() {
            data.extend_from_slice(if t { va.row(r) } else { vb.row(r) });
        }
        let t = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(
            t,
            Op::SelectRows {
                take_a: take_a.to_vec(),
                a,
                b,
            },
            &[a, b],
        ))
    }

    /// Per feature column of `x: [B, L, d]`: real FFT along the `L` axis,
    /// multiply by the complex filter `(w_re, w_im)` of shape `[L/2+1, d]`,
    /// inverse FFT back to length `L`.
    pub fn spectral_filter(&mut self, x: Var, w_re: Var, w_im: Var) -> Result<Var> {
        let vx = self.value(x);
        let [b, l, d] = <[usize; 3]>::try_from(vx.shape())
            .map_err(|_| Error::shape("spectral_filter", "input must be [B, L, d]"))?;
        let plan = RealFft::new(l)?;
        let nb = plan.bins();
        let (wr, wi) = (self.value(w_re), self.value(w_im));
        if wr.shape() != [nb, d] || wi.shape() != [nb, d] {
            return Err(Error::shape(
                "spectral_filter",
                format!("filter {:?} for {nb} bins x {d}", wr.shape()),
            ));
        }
        let wr: Vec<f64> = wr.to_f64_vec();
        let wi: Vec<f64> = wi.to_f64_vec();
        let mut spec_re = vec![0.0; b * nb * d];
        let mut spec_im = vec![0.0; b * nb * d];
        let mut out = vec![T::zero(); b * l * d];
        let mut col = vec![0.0; l];
        let (mut re, mut im) = (vec![0.0; nb], vec![0.0; nb]);
        let (mut yr, mut yi) = (vec![0.0; nb], vec![0.0; nb]);
        let xd = vx.data();
        for bi in 0..b {
            for j in 0..d {
                for (t, c) in col.iter_mut().enumerate() {
                    *c = xd[(bi * l + t) * d + j].as_f64();
                }
                plan.forward(&col, &mut re, &mut im);
                for k in 0..nb {
                    let s = (bi * nb + k) * d + j;
                    spec_re[s] = re[k];
                    spec_im[s] = im[k];
                    let (a, c) = (wr[k * d + j], wi[k * d + j]);
                    yr[k] = re[k] * a - im[k] * c;
                    yi[k] = re[k] * c + im[k] * a;
                }
                plan.inverse(&yr, &yi, &mut col);
                for (t, &v) in col.iter().enumerate() {
                    out[(bi * l + t) * d + j] = T::from_f64(v);
                }
            }
        }
        let t = Tensor::new([b, l, d], out)?;
        Ok(self.push(
            t,
            Op::SpectralFilter {
                x,
                w_re,
                w_im,
                spec_re,
                spec_im,
            },
            &[x, w_re, w_im],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().copied().sum::<T>() / T::from_usize(v.len().max(1));
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Logistic cross-entropy over `scores: [B, M]`, averaged over rows.
    ///
    /// `labels` is row-major `[B, M]`: `1` positive, `0` negative, `-1`
    /// ignored. Log arguments are clamped below at [`LOG_CLAMP`].
    pub fn bce(&mut self, scores: Var, labels: &[i8]) -> Result<Var> {
        let vs = self.value(scores);
        if labels.len() != vs.len() || vs.shape().len() != 2 {
            return Err(Error::shape("bce", "labels must match a [B, M] score matrix"));
        }
        let rows = vs.shape()[0].max(1);
        let clamp = LOG_CLAMP;
        let mut total = 0.0f64;
        for (&s, &y) in vs.data().iter().zip(labels) {
            let s = s.as_f64();
            match y {
                1 => total -= sigmoid(s).max(clamp).ln(),
                0 => total -= sigmoid(-s).max(clamp).ln(),
                _ => {}
            }
        }
        let loss = T::from_f64(total / rows as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                scores,
                labels: labels.to_vec(),
            },
            &[scores],
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn accumulate_with(&self, grads: &mut [Option<Tensor<T>>], v: Var, f: impl FnOnce() -> Vec<T>) {
        if self.needs(v) {
            let shape = self.shape(v).to_vec();
            let t = Tensor::new(shape, f()).expect("gradient shape");
            self.accumulate(grads, v, t);
        }
    }

    fn backprop_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate_with(grads, *a, || gd.iter().zip(vb).map(|(&g, &y)| g * y).collect());
                self.accumulate_with(grads, *b, || gd.iter().zip(va).map(|(&g, &x)| g * x).collect());
            }
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, g.clone());
                self.accumulate_with(grads, *b, || {
                    let d = g.last_dim();
                    let mut acc = vec![T::zero(); d];
                    for (k, &v) in gd.iter().enumerate() {
                        acc[k % d] = acc[k % d] + v;
                    }
                    acc
                });
            }
            Op::Affine(x, a) => {
                let a = *a;
                self.accumulate(grads, *x, g.map(|v| v * a));
            }
            Op::Relu(x) => {
                let vx = self.value(*x).data();
                self.accumulate_with(grads, *x, || {
                    gd.iter()
                        .zip(vx)
                        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                        .collect()
                });
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                self.accumulate_with(grads, *x, || {
                    gd.iter().zip(y).map(|(&g, &y)| g * y * (T::one() - y)).collect()
                });
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                self.accumulate_with(grads, *x, || {
                    gd.iter().zip(y).map(|(&g, &y)| g * (T::one() - y * y)).collect()
                });
            }
            Op::MatMul(x, w) => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                let (m, k) = (vx.rows(), vx.last_dim());
                let n = vw.shape()[1];
                self.accumulate_with(grads, *x, || matmul_kernel(gd, vw.data(), m, n, k, true));
                self.accumulate_with(grads, *w, || matmul_tn_kernel(vx.data(), gd, m, k, n));
            }
            Op::MatMulNt(x, w) => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                let (m, k) = (vx.rows(), vx.last_dim());
                let n = vw.shape()[0];
                self.accumulate_with(grads, *x, || matmul_kernel(gd, vw.data(), m, n, k, false));
                self.accumulate_with(grads, *w, || matmul_tn_kernel(gd, vx.data(), m, n, k));
            }
            Op::Bmm { a, b, b_transposed } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let [bs, m, k] = <[usize; 3]>::try_from(va.shape()).unwrap();
                let n = node.value.shape()[2];
                let (ad, bd) = (va.data(), vb.data());
                self.accumulate_with(grads, *a, || {
                    let mut out = Vec::with_capacity(bs * m * k);
                    for i in 0..bs {
                        let gi = &gd[i * m * n..(i + 1) * m * n];
                        let bi = &bd[i * k * n..(i + 1) * k * n];
                        out.extend(matmul_kernel(gi, bi, m, n, k, !*b_transposed));
                    }
                    out
                });
                self.accumulate_with(grads, *b, || {
                    let mut out = Vec::with_capacity(bs * k * n);
                    for i in 0..bs {
                        let gi = &gd[i * m * n..(i + 1) * m * n];
                        let ai = &ad[i * m * k..(i + 1) * m * k];
                        if *b_transposed {
                            out.extend(matmul_tn_kernel(gi, ai, m, n, k));
                        } else {
                            out.extend(matmul_tn_kernel(ai, gi, m, k, n));
                        }
                    }
                    out
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = g.last_dim();
                let rows = g.rows();
                let gam = self.value(*gamma).data();
                self.accumulate_with(grads, *x, || {
                    let mut dx = vec![T::zero(); gd.len()];
                    let n = T::from_usize(d);
                    for r in 0..rows {
                        let gr = &gd[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for c in 0..d {
                            let dh = gr[c] * gam[c];
                            mean_dh = mean_dh + dh;
                            mean_dh_h = mean_dh_h + dh * hr[c];
                        }
                        mean_dh = mean_dh / n;
                        mean_dh_h = mean_dh_h / n;
                        for c in 0..d {
                            let dh = gr[c] * gam[c];
                            dx[r * d + c] = rstd[r] * (dh - mean_dh - hr[c] * mean_dh_h);
                        }
                    }
                    dx
                });
                self.accumulate_with(grads, *gamma, || {
                    let mut acc = vec![T::zero(); d];
                    for (k, (&g, &h)) in gd.iter().zip(xhat).enumerate() {
                        acc[k % d] = acc[k % d] + g * h;
                    }
                    acc
                });
                self.accumulate_with(grads, *beta, || {
                    let mut acc = vec![T::zero(); d];
                    for (k, &g) in gd.iter().enumerate() {
                        acc[k % d] = acc[k % d] + g;
                    }
                    acc
                });
            }
            Op::MaskedSoftmax(x) => {
                let y = node.value.data();
                let d = g.last_dim();
                self.accumulate_with(grads, *x, || {
                    let mut dx = vec![T::zero(); gd.len()];
                    for r in 0..g.rows() {
                        let s = (0..d).map(|c| y[r * d + c] * gd[r * d + c]).sum::<T>();
                        for c in 0..d {
                            let k = r * d + c;
                            dx[k] = y[k] * (gd[k] - s);
                        }
                    }
                    dx
                });
            }
            Op::Dropout { x, mask } => {
                self.accumulate_with(grads, *x, || gd.iter().zip(mask).map(|(&g, &m)| g * m).collect());
            }
            Op::GatherRows { x, idx } => {
                self.accumulate_with(grads, *x, || {
                    let vx = self.value(*x);
                    let d = vx.last_dim();
                    let mut acc = vec![T::zero(); vx.len()];
                    for (r, &src) in idx.iter().enumerate() {
                        for c in 0..d {
                            acc[src * d + c] = acc[src * d + c] + gd[r * d + c];
                        }
                    }
                    acc
                });
            }
            Op::Reshape(x) => {
                self.accumulate_with(grads, *x, || gd.to_vec());
            }
            Op::ConcatLast(xs) => {
                let total = g.last_dim();
                let mut offset = 0;
                for &x in xs {
                    let d = self.value(x).last_dim();
                    self.accumulate_with(grads, x, || {
                        let mut out = Vec::with_capacity(g.rows() * d);
                        for r in 0..g.rows() {
                            out.extend_from_slice(&gd[r * total + offset..r * total + offset + d]);
                        }
                        out
                    });
                    offset += d;
                }
            }
            Op::SliceLast { x, start } => {
                self.accumulate_with(grads, *x, || {
                    let vx = self.value(*x);
                    let d = vx.last_dim();
                    let len = g.last_dim();
                    let mut out = vec![T::zero(); vx.len()];
                    for r in 0..g.rows() {
                        out[r * d + start..r * d + start + len].copy_from_slice(&gd[r * len..(r + 1) * len]);
                    }
                    out
                });
            }
            Op::SelectRows { take_a, a, b } => {
                let d = g.last_dim();
                let route = |want: bool| {
                    let mut out = gd.to_vec();
                    for (r, &t) in take_a.iter().enumerate() {
                        if t != want {
                            out[r * d..(r + 1) * d].fill(T::zero());
                        }
                    }
                    out
                };
                self.accumulate_with(grads, *a, || route(true));
                self.accumulate_with(grads, *b, || route(false));
            }
            Op::SpectralFilter {
                x,
                w_re,
                w_im,
                spec_re,
                spec_im,
            } => self.backprop_spectral(g, *x, *w_re, *w_im, spec_re, spec_im, grads),
            Op::Sum(x) => {
                let gv = gd[0];
                let shape = self.shape(*x).to_vec();
                self.accumulate(grads, *x, Tensor::full(shape, gv));
            }
            Op::Mean(x) => {
                let shape = self.shape(*x).to_vec();
                let n = T::from_usize(self.value(*x).len().max(1));
                self.accumulate(grads, *x, Tensor::full(shape, gd[0] / n));
            }
            Op::Bce { scores, labels } => {
                let vs = self.value(*scores);
                let rows = T::from_usize(vs.shape()[0].max(1));
                let clamp = LOG_CLAMP;
                let gv = gd[0];
                self.accumulate_with(grads, *scores, || {
                    vs.data()
                        .iter()
                        .zip(labels)
                        .map(|(&s, &y)| {
                            let sf = s.as_f64();
                            let d = match y {
                                1 if sigmoid(sf) >= clamp => -sigmoid(-sf),
                                0 if sigmoid(-sf) >= clamp => sigmoid(sf),
                                _ => 0.0,
                            };
                            gv * T::from_f64(d) / rows
                        })
                        .collect()
                });
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_spectral(
        &self,
        g: &Tensor<T>,
        x: Var,
        w_re: Var,
        w_im: Var,
        spec_re: &[f64],
        spec_im: &[f64],
        grads: &mut [Option<Tensor<T>>],
    ) {
        let [b, l, d] = <[usize; 3]>::try_from(g.shape()).unwrap();
        let plan = RealFft::new(l).expect("non-empty");
        let nb = plan.bins();
        let wr = self.value(w_re).to_f64_vec();
        let wi = self.value(w_im).to_f64_vec();
        let gd = g.data();
        let mut dwr = vec![0.0; nb * d];
        let mut dwi = vec![0.0; nb * d];
        let mut dx = vec![T::zero(); b * l * d];
        let mut col = vec![0.0; l];
        let (mut gr, mut gi) = (vec![0.0; nb], vec![0.0; nb]);
        let (mut xr, mut xi) = (vec![0.0; nb], vec![0.0; nb]);
        let lf = l as f64;
        for bi in 0..b {
            for j in 0..d {
                for (t, c) in col.iter_mut().enumerate() {
                    *c = gd[(bi * l + t) * d + j].as_f64();
                }
                plan.forward(&col, &mut gr, &mut gi);
                for k in 0..nb {
                    let c = if k == 0 || 2 * k == l { 1.0 } else { 2.0 };
                    // gradient with respect to the filtered spectrum
                    let (yr, yi) = (c / lf * gr[k], c / lf * gi[k]);
                    let s = (bi * nb + k) * d + j;
                    let (sr, si) = (spec_re[s], spec_im[s]);
                    dwr[k * d + j] += yr * sr + yi * si;
                    dwi[k * d + j] += -yr * si + yi * sr;
                    let (a, w) = (wr[k * d + j], wi[k * d + j]);
                    // gradient with respect to the input spectrum, rescaled for the inverse
                    xr[k] = (yr * a + yi * w) * lf / c;
                    xi[k] = (-yr * w + yi * a) * lf / c;
                }
                plan.inverse(&xr, &xi, &mut col);
                for (t, &v) in col.iter().enumerate() {
                    dx[(bi * l + t) * d + j] = T::from_f64(v);
                }
            }
        }
        self.accumulate_with(grads, x, || dx);
        self.accumulate_with(grads, w_re, || dwr.into_iter().map(T::from_f64).collect());
        self.accumulate_with(grads, w_im, || dwi.into_iter().map(T::from_f64).collect());
    }
}
