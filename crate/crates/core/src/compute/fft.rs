//! Real-input discrete Fourier transforms.
//!
//! Spectra use the half-spectrum layout: a length-`L` real signal maps to
//! `L/2 + 1` complex bins (frequencies `0..=L/2`). Power-of-two lengths go
//! through an iterative radix-2 Cooley–Tukey transform; any other length
//! uses direct summation with a precomputed twiddle table. Arithmetic is
//! carried out in `f64` regardless of the tensor element type.

use std::f64::consts::TAU;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Number of half-spectrum bins for a real signal of length `len`.
pub fn bins_for(len: usize) -> usize {
    len / 2 + 1
}

/// Complex half-spectrum, `bins × cols`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum<T> {
    bins: usize,
    cols: usize,
    pub re: Vec<T>,
    pub im: Vec<T>,
}

impl<T: Scalar> ComplexSpectrum<T> {
    pub fn new(bins: usize, cols: usize, re: Vec<T>, im: Vec<T>) -> Result<Self> {
        if re.len() != bins * cols || im.len() != bins * cols {
            return Err(Error::shape(
                "spectrum",
                format!("{bins}x{cols} needs {} values per part", bins * cols),
            ));
        }
        Ok(Self { bins, cols, re, im })
    }

    pub fn zeros(bins: usize, cols: usize) -> Self {
        Self {
            bins,
            cols,
            re: vec![T::zero(); bins * cols],
            im: vec![T::zero(); bins * cols],
        }
    }

    /// Multiplicative identity `1 + 0i` everywhere.
    pub fn identity(bins: usize, cols: usize) -> Self {
        Self {
            bins,
            cols,
            re: vec![T::one(); bins * cols],
            im: vec![T::zero(); bins * cols],
        }
    }

    /// Single-column spectrum from `(re, im)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self {
            bins: pairs.len(),
            cols: 1,
            re: pairs.iter().map(|p| T::from_f64(p.0)).collect(),
            im: pairs.iter().map(|p| T::from_f64(p.1)).collect(),
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, bin: usize, col: usize) -> (T, T) {
        let i = bin * self.cols + col;
        (self.re[i], self.im[i])
    }
}

/// Precomputed transform for one signal length.
#[derive(Debug, Clone)]
pub struct RealFft {
    len: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    radix2: bool,
}

impl RealFft {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptySignal);
        }
        let (cos, sin) = (0..len)
            .map(|m| {
                let a = TAU * m as f64 / len as f64;
                (a.cos(), a.sin())
            })
            .unzip();
        Ok(Self {
            len,
            cos,
            sin,
            radix2: len.is_power_of_two(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bins(&self) -> usize {
        bins_for(self.len)
    }

    /// Forward transform of one real signal into `re`/`im` (each `bins` long).
    pub fn forward(&self, x: &[f64], re: &mut [f64], im: &mut [f64]) {
        let n = self.len;
        let nb = self.bins();
        debug_assert_eq!(x.len(), n);
        if self.radix2 {
            let mut zr = x.to_vec();
            let mut zi = vec![0.0; n];
            self.radix2_in_place(&mut zr, &mut zi, false);
            re[..nb].copy_from_slice(&zr[..nb]);
            im[..nb].copy_from_slice(&zi[..nb]);
        } else {
            for k in 0..nb {
                let (mut sr, mut si) = (0.0, 0.0);
                for (t, &v) in x.iter().enumerate() {
                    let m = (k * t) % n;
                    sr += v * self.cos[m];
                    si -= v * self.sin[m];
                }
                re[k] = sr;
                im[k] = si;
            }
        }
    }

    /// Inverse transform of a half spectrum into a real signal of length `len`.
    ///
    /// The imaginary parts of the DC bin (and of the Nyquist bin for even
    /// lengths) do not contribute, matching the Hermitian-symmetric reading.
    pub fn inverse(&self, re: &[f64], im: &[f64], out: &mut [f64]) {
        let n = self.len;
        let nb = self.bins();
        let scale = 1.0 / n as f64;
        if self.radix2 {
            let mut zr = vec![0.0; n];
            let mut zi = vec![0.0; n];
            zr[0] = re[0];
            for k in 1..nb {
                zr[k] = re[k];
                zi[k] = im[k];
                if k != n - k {
                    zr[n - k] = re[k];
                    zi[n - k] = -im[k];
                }
            }
            if n.is_multiple_of(2) && n > 1 {
                zi[n / 2] = 0.0;
            }
            self.radix2_in_place(&mut zr, &mut zi, true);
            for (o, z) in out.iter_mut().zip(&zr) {
                *o = z * scale;
            }
        } else {
            for (t, o) in out.iter_mut().enumerate().take(n) {
                let mut s = re[0];
                for k in 1..nb {
                    let m = (k * t) % n;
                    let c = if 2 * k == n { 1.0 } else { 2.0 };
                    s += c * (re[k] * self.cos[m] - im[k] * self.sin[m]);
                }
                *o = s * scale;
            }
        }
    }

    fn radix2_in_place(&self, re: &mut [f64], im: &mut [f64], inverse: bool) {
        let n = self.len;
        let mut j = 0usize;
        for i in 1..n {
            let mut bit = n >> 1;
            while j & bit != 0 {
                j ^= bit;
                bit >>= 1;
            }
            j |= bit;
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let sign = if inverse { 1.0 } else { -1.0 };
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let wr = self.cos[k * stride];
                    let wi = sign * self.sin[k * stride];
                    let (a, b) = (start + k, start + k + half);
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            size <<= 1;
        }
    }
}

/// DFT coefficients for frequencies `0..=L/2` of a real signal.
pub fn fft_real_forward<T: Scalar>(x: &[T]) -> Result<ComplexSpectrum<T>> {
    let plan = RealFft::new(x.len())?;
    let xs: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    let nb = plan.bins();
    let mut re = vec![0.0; nb];
    let mut im = vec![0.0; nb];
    plan.forward(&xs, &mut re, &mut im);
    Ok(ComplexSpectrum {
        bins: nb,
        cols: 1,
        re: re.into_iter().map(T::from_f64).collect(),
        im: im.into_iter().map(T::from_f64).collect(),
    })
}

/// Column-wise forward transform of an `[L, d]` matrix.
pub fn fft_real_forward_cols<T: Scalar>(x: &Tensor<T>) -> Result<ComplexSpectrum<T>> {
    let [len, cols] = *x.shape() else {
        return Err(Error::shape("fft_real_forward_cols", "expected a matrix"));
    };
    let plan = RealFft::new(len)?;
    let nb = plan.bins();
    let mut spec = ComplexSpectrum::zeros(nb, cols);
    let mut col = vec![0.0; len];
    let mut re = vec![0.0; nb];
    let mut im = vec![0.0; nb];
    for j in 0..cols {
        for (t, c) in col.iter_mut().enumerate() {
            *c = x.data()[t * cols + j].as_f64();
        }
        plan.forward(&col, &mut re, &mut im);
        for k in 0..nb {
            spec.re[k * cols + j] = T::from_f64(re[k]);
            spec.im[k * cols + j] = T::from_f64(im[k]);
        }
    }
    Ok(spec)
}

/// Real signal of length `len` from its half spectrum.
pub fn fft_real_inverse<T: Scalar>(spec: &ComplexSpectrum<T>, len: usize) -> Result<Vec<T>> {
    Ok(fft_real_inverse_cols(spec, len)?.into_data())
}

/// Column-wise inverse transform, giving an `[len, cols]` matrix.
pub fn fft_real_inverse_cols<T: Scalar>(spec: &ComplexSpectrum<T>, len: usize) -> Result<Tensor<T>> {
    if len == 0 {
        return Err(Error::EmptySignal);
    }
    let plan = RealFft::new(len)?;
    let nb = plan.bins();
    if spec.bins != nb {
        return Err(Error::BinCount {
            bins: spec.bins,
            len,
            expected: nb,
        });
    }
    let cols = spec.cols;
    let mut out = vec![T::zero(); len * cols];
    let mut re = vec![0.0; nb];
    let mut im = vec![0.0; nb];
    let mut col = vec![0.0; len];
    for j in 0..cols {
        for k in 0..nb {
            re[k] = spec.re[k * cols + j].as_f64();
            im[k] = spec.im[k * cols + j].as_f64();
        }
        plan.inverse(&re, &im, &mut col);
        for (t, &v) in col.iter().enumerate() {
            out[t * cols + j] = T::from_f64(v);
        }
    }
    Tensor::new([len, cols], out)
}

/// Elementwise complex product.
pub fn complex_elementwise_mul<T: Scalar>(
    a: &ComplexSpectrum<T>,
    w: &ComplexSpectrum<T>,
) -> Result<ComplexSpectrum<T>> {
    if a.bins != w.bins || a.cols != w.cols {
        return Err(Error::shape(
            "complex_elementwise_mul",
            format!("{}x{} vs {}x{}", a.bins, a.cols, w.bins, w.cols),
        ));
    }
    let n = a.re.len();
    let mut out = ComplexSpectrum::zeros(a.bins, a.cols);
    for i in 0..n {
        let (ar, ai, wr, wi) = (a.re[i], a.im[i], w.re[i], w.im[i]);
        out.re[i] = ar * wr - ai * wi;
        out.im[i] = ar * wi + ai * wr;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::Rng;

    fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                x.iter().enumerate().fold((0.0, 0.0), |(r, i), (t, &v)| {
                    let a = TAU * (k * t) as f64 / n as f64;
                    (r + v * a.cos(), i - v * a.sin())
                })
            })
            .collect()
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let s = fft_real_forward(&[4.0f64, 4.0, 4.0, 4.0]).unwrap();
        assert_eq!(s.bins(), 3);
        let expect = [(16.0, 0.0), (0.0, 0.0), (0.0, 0.0)];
        for (k, e) in expect.iter().enumerate() {
            let (r, i) = s.get(k, 0);
            assert!((r - e.0).abs() < 1e-12 && (i - e.1).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let s = fft_real_forward(&[1.0f64, 0.0, 0.0, 0.0]).unwrap();
        for k in 0..3 {
            let (r, i) = s.get(k, 0);
            assert!((r - 1.0).abs() < 1e-12 && i.abs() < 1e-12);
        }
    }

    #[test]
    fn empty_signal_errors() {
        assert!(matches!(fft_real_forward::<f64>(&[]), Err(Error::EmptySignal)));
    }

    #[test]
    fn length_seven_matches_direct_sum() {
        let mut rng = Rng::new(3);
        let x: Vec<f64> = (0..7).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let s = fft_real_forward(&x).unwrap();
        for (k, (r, i)) in naive_dft(&x).into_iter().enumerate() {
            let (a, b) = s.get(k, 0);
            assert!((a - r).abs() < 1e-6 && (b - i).abs() < 1e-6);
        }
    }

    #[test]
    fn radix2_matches_direct_sum() {
        let mut rng = Rng::new(4);
        let x: Vec<f64> = (0..16).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let s = fft_real_forward(&x).unwrap();
        for (k, (r, i)) in naive_dft(&x).into_iter().enumerate() {
            let (a, b) = s.get(k, 0);
            assert!((a - r).abs() < 1e-9 && (b - i).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_of_constant_and_zero() {
        let s = ComplexSpectrum::<f64>::from_pairs(&[(16.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        let x = fft_real_inverse(&s, 4).unwrap();
        assert!(x.iter().all(|v| (v - 4.0).abs() < 1e-12));
        let z = ComplexSpectrum::<f64>::from_pairs(&[(0.0, 0.0); 3]);
        assert_eq!(fft_real_inverse(&z, 4).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn inverse_rejects_wrong_bin_count() {
        let s = ComplexSpectrum::<f64>::zeros(3, 1);
        assert!(matches!(
            fft_real_inverse(&s, 6),
            Err(Error::BinCount { expected: 4, .. })
        ));
    }

    #[test]
    fn round_trip_length_fifty() {
        let mut rng = Rng::new(5);
        let x: Vec<f32> = (0..50).map(|_| rng.uniform(-3.0, 3.0) as f32).collect();
        let back = fft_real_inverse(&fft_real_forward(&x).unwrap(), 50).unwrap();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn complex_products() {
        let a = ComplexSpectrum::<f64>::from_pairs(&[(1.0, 1.0), (2.0, -3.0)]);
        let one = ComplexSpectrum::identity(2, 1);
        assert_eq!(complex_elementwise_mul(&a, &one).unwrap(), a);
        let zero = ComplexSpectrum::zeros(2, 1);
        assert_eq!(complex_elementwise_mul(&a, &zero).unwrap(), zero);
        let w = ComplexSpectrum::<f64>::from_pairs(&[(1.0, -1.0), (0.0, 0.0)]);
        let p = complex_elementwise_mul(&a, &w).unwrap();
        assert_eq!(p.get(0, 0), (2.0, 0.0));
        assert!(complex_elementwise_mul(&a, &ComplexSpectrum::zeros(3, 1)).is_err());
    }

    #[test]
    fn column_transform_is_per_column() {
        let mut rng = Rng::new(6);
        let x = Tensor::<f64>::new([6, 3], (0..18).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let s = fft_real_forward_cols(&x).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = (0..6).map(|t| x.data()[t * 3 + j]).collect();
            for (k, (r, i)) in naive_dft(&col).into_iter().enumerate() {
                let (a, b) = s.get(k, j);
                assert!((a - r).abs() < 1e-9 && (b - i).abs() < 1e-9);
            }
        }
        let back = fft_real_inverse_cols(&s, 6).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-12);
    }
}
