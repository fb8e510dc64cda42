use super::{Rng, Scalar, Tensor};

/// Zero-mean uniform with bound `1/sqrt(fan_in)`.
pub fn uniform_fan_in<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.uniform(-bound, bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}
