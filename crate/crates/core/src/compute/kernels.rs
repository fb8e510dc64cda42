//! Forward kernels shared by the tape ops and the plain tensor functions.

use super::Scalar;
use crate::error::{Error, Result};

/// Row-wise normalization over the trailing dimension `d`.
///
/// Returns `(y, xhat, rstd)` where `xhat` is the pre-affine output.
pub(crate) fn layer_norm_rows<T: Scalar>(
    x: &[T],
    d: usize,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = x.len() / d;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let n = T::from_usize(d);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().copied().sum::<T>() / n;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for c in 0..d {
            let h = (xr[c] - mean) * rs;
            xhat[r * d + c] = h;
            y[r * d + c] = gamma[c] * h + beta[c];
        }
    }
    (y, xhat, rstd)
}

/// Softmax over each row of length `d`, restricted to `mask == true`.
/// Masked positions come out exactly zero.
pub(crate) fn masked_softmax_rows<T: Scalar>(x: &[T], d: usize, mask: &[bool]) -> Result<Vec<T>> {
    let rows = x.len().checked_div(d).unwrap_or(0);
    let mut out = vec![T::zero(); x.len()];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mr = &mask[r * d..(r + 1) * d];
        let mut max = T::neg_infinity();
        for (v, &m) in xr.iter().zip(mr) {
            if m && *v > max {
                max = *v;
            }
        }
        if !mr.iter().any(|&m| m) {
            return Err(Error::NoAttentionTargets { row: r });
        }
        let o = &mut out[r * d..(r + 1) * d];
        let mut s = T::zero();
        for c in 0..d {
            if mr[c] {
                let e = (xr[c] - max).exp();
                o[c] = e;
                s = s + e;
            }
        }
        for v in o.iter_mut() {
            *v = *v / s;
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
