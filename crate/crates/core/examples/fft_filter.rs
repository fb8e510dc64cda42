//! Real FFT round trip and a learnable frequency filter on a short signal.

use multiround::compute::{complex_elementwise_mul, fft_real_forward, fft_real_inverse, ComplexSpectrum};

fn main() -> multiround::Result<()> {
    let x = [1.0f64, 2.0, 0.0, -1.0, 3.0, 0.5];
    let spec = fft_real_forward(&x)?;
    println!("{} bins for length {}", spec.bins(), x.len());
    for b in 0..spec.bins() {
        let (re, im) = spec.get(b, 0);
        println!("  bin {b}: {re:+.4} {im:+.4}i");
    }
    let back = fft_real_inverse(&spec, x.len())?;
    let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("round-trip error {err:.2e}");

    // keep only the two lowest frequencies
    let pairs: Vec<(f64, f64)> = (0..spec.bins())
        .map(|b| if b < 2 { (1.0, 0.0) } else { (0.0, 0.0) })
        .collect();
    let low = complex_elementwise_mul(&spec, &ComplexSpectrum::from_pairs(&pairs))?;
    let smooth = fft_real_inverse(&low, x.len())?;
    println!("low-pass: {smooth:.3?}");
    Ok(())
}
