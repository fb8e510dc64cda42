//! Plain tensor versions of the layer primitives, plus the recurrent cell
//! expressed on the tape.

use super::kernels::{layer_norm_rows, masked_softmax_rows};
use super::tensor::matmul_kernel;
use super::{Graph, Rng, Scalar, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_LN_EPS: f64 = 1e-12;

/// Evaluation or training behaviour of stochastic layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Normalizes each row to zero mean and unit variance, then applies
/// `gamma`/`beta`.
pub fn layer_norm<T: Scalar>(x: &Tensor<T>, gamma: &[T], beta: &[T], eps: f64) -> Result<Tensor<T>> {
    let d = x.last_dim();
    if d == 0 || gamma.len() != d || beta.len() != d {
        return Err(Error::shape(
            "layer_norm",
            format!("{:?} with affine {}", x.shape(), gamma.len()),
        ));
    }
    let (y, _, _) = layer_norm_rows(x.data(), d, gamma, beta, T::from_f64(eps));
    Tensor::new(x.shape().to_vec(), y)
}

pub fn masked_softmax<T: Scalar>(scores: &Tensor<T>, mask: &[bool]) -> Result<Tensor<T>> {
    if mask.len() != scores.len() {
        return Err(Error::shape("masked_softmax", "mask size differs from scores"));
    }
    let y = masked_softmax_rows(scores.data(), scores.last_dim(), mask)?;
    Tensor::new(scores.shape().to_vec(), y)
}

/// `x · w + b` for `x: [rows, in]`, `w: [in, out]`, `b: [out]`.
pub fn dense<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &[T]) -> Result<Tensor<T>> {
    let k = x.last_dim();
    let [wk, n] = *w.shape() else {
        return Err(Error::shape("dense", "weight must be a matrix"));
    };
    if wk != k || b.len() != n {
        return Err(Error::shape(
            "dense",
            format!("{:?} x {:?} + [{}]", x.shape(), w.shape(), b.len()),
        ));
    }
    let mut y = matmul_kernel(x.data(), w.data(), x.rows(), k, n, false);
    for (i, v) in y.iter_mut().enumerate() {
        *v = *v + b[i % n];
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = n;
    Tensor::new(shape, y)
}

/// `A · Bᵀ` for `a: [m, k]`, `b: [n, k]`, flattened `[m, n]`.
pub(crate) fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Vec<T> {
    matmul_kernel(a.data(), b.data(), a.rows(), a.last_dim(), b.rows(), true)
}

/// Inverted dropout on a plain tensor.
pub fn dropout<T: Scalar>(x: &Tensor<T>, p: f64, mode: Mode, rng: &mut Rng) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::DropoutProbability(p));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x.clone());
    }
    let keep = T::from_f64(1.0 / (1.0 - p));
    let data = x
        .data()
        .iter()
        .map(|&v| if rng.unit() < p { T::zero() } else { v * keep })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Gate weights of a GRU with gate order `[reset, update, candidate]`.
///
/// `w_ih: [in, 3h]`, `w_hh: [h, 3h]`, `b_ih: [3h]`, `b_hh: [3h]`.
#[derive(Debug, Clone)]
pub struct GruWeights<V> {
    pub w_ih: V,
    pub w_hh: V,
    pub b_ih: V,
    pub b_hh: V,
}

impl<T: Scalar> GruWeights<Tensor<T>> {
    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[0]
    }

    pub fn input(&self) -> usize {
        self.w_ih.shape()[0]
    }

    fn check(&self) -> Result<()> {
        let h = self.w_hh.shape().first().copied().unwrap_or(0);
        let ok = self.w_hh.shape() == [h, 3 * h]
            && self.w_ih.shape().len() == 2
            && self.w_ih.shape()[1] == 3 * h
            && self.b_ih.len() == 3 * h
            && self.b_hh.len() == 3 * h;
        if !ok {
            return Err(Error::shape("gru", "inconsistent gate weight shapes"));
        }
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> GruWeights<Var> {
        let mut leaf = |t: &Tensor<T>| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        GruWeights {
            w_ih: leaf(&self.w_ih),
            w_hh: leaf(&self.w_hh),
            b_ih: leaf(&self.b_ih),
            b_hh: leaf(&self.b_hh),
        }
    }
}

/// One recurrence step given the input projection `xp = x·w_ih + b_ih`.
pub fn gru_step<T: Scalar>(g: &mut Graph<T>, xp: Var, h: Var, w: &GruWeights<Var>) -> Result<Var> {
    let hd = g.shape(h)[g.shape(h).len() - 1];
    let hp = g.matmul(h, w.w_hh)?;
    let hp = g.add_bias(hp, w.b_hh)?;
    let xr = g.slice_last(xp, 0, hd)?;
    let xz = g.slice_last(xp, hd, hd)?;
    let xn = g.slice_last(xp, 2 * hd, hd)?;
    let hr = g.slice_last(hp, 0, hd)?;
    let hz = g.slice_last(hp, hd, hd)?;
    let hn = g.slice_last(hp, 2 * hd, hd)?;
    let r = g.add(xr, hr)?;
    let r = g.sigmoid(r);
    let z = g.add(xz, hz)?;
    let z = g.sigmoid(z);
    let rn = g.mul(r, hn)?;
    let n = g.add(xn, rn)?;
    let n = g.tanh(n);
    // h' = n + z ⊙ (h − n)
    let diff = g.sub(h, n)?;
    let zd = g.mul(z, diff)?;
    g.add(n, zd)
}

/// Runs the recurrence over `inputs: [B, L, in]` from `h0: [B, h]`.
///
/// When `active` is given (row-major `[B, L]`), inactive steps carry the
/// previous hidden state through unchanged. Returns every hidden state and
/// the final one.
pub fn gru_unroll<T: Scalar>(
    g: &mut Graph<T>,
    inputs: Var,
    h0: Var,
    w: &GruWeights<Var>,
    active: Option<&[bool]>,
) -> Result<(Vec<Var>, Var)> {
    let [b, l, _] =
        <[usize; 3]>::try_from(g.shape(inputs)).map_err(|_| Error::shape("gru", "inputs must be [B, L, in]"))?;
    if let Some(a) = active {
        if a.len() != b * l {
            return Err(Error::shape("gru", "activity mask must be [B, L]"));
        }
    }
    let xp = g.matmul(inputs, w.w_ih)?;
    let xp = g.add_bias(xp, w.b_ih)?;
    let mut h = h0;
    let mut states = Vec::with_capacity(l);
    for t in 0..l {
        let idx: Vec<usize> = (0..b).map(|r| r * l + t).collect();
        let xt = g.gather_rows(xp, &idx, &[b])?;
        let next = gru_step(g, xt, h, w)?;
        h = match active {
            Some(a) => {
                let take: Vec<bool> = (0..b).map(|r| a[r * l + t]).collect();
                if take.iter().all(|&x| x) {
                    next
                } else {
                    g.select_rows(&take, next, h)?
                }
            }
            None => next,
        };
        states.push(h);
    }
    Ok((states, h))
}

/// GRU over a single sequence `inputs: [seq_len, in]` from `h0: [h]`.
///
/// Returns all hidden states `[seq_len, h]` and the final hidden state.
/// An empty sequence returns `h0` unchanged.
pub fn gru_sequence<T: Scalar>(
    inputs: &Tensor<T>,
    h0: &[T],
    params: &GruWeights<Tensor<T>>,
) -> Result<(Tensor<T>, Vec<T>)> {
    params.check()?;
    let hd = params.hidden();
    let [len, din] = *inputs.shape() else {
        return Err(Error::shape("gru_sequence", "inputs must be [seq_len, in]"));
    };
    if din != params.input() || h0.len() != hd {
        return Err(Error::shape(
            "gru_sequence",
            format!("input dim {din}, h0 {} vs weights {}x{hd}", h0.len(), params.input()),
        ));
    }
    if len == 0 {
        return Ok((Tensor::zeros([0, hd]), h0.to_vec()));
    }
    let mut g = Graph::new();
    let w = params.bind(&mut g, false);
    let x = g.constant(inputs.clone().reshape([1, len, din])?);
    let h = g.constant(Tensor::new([1, hd], h0.to_vec())?);
    let (states, last) = gru_unroll(&mut g, x, h, &w, None)?;
    let mut all = Vec::with_capacity(len * hd);
    for s in states {
        all.extend_from_slice(g.value(s).data());
    }
    Ok((Tensor::new([len, hd], all)?, g.value(last).data().to_vec()))
}
