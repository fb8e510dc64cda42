//! Numerical core: tensors, the autodiff tape, real FFT, layer primitives,
//! Adam and finite-difference gradient checking.

mod adam;
pub mod fft;
mod gradcheck;
mod graph;
mod init;
mod kernels;
pub mod ops;
mod params;
mod rng;
mod scalar;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use fft::{
    complex_elementwise_mul, fft_real_forward, fft_real_forward_cols, fft_real_inverse, fft_real_inverse_cols,
    ComplexSpectrum,
};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var, LOG_CLAMP};
pub use init::uniform_fan_in;
pub use ops::{
    dense, dropout, gru_sequence, gru_step, gru_unroll, layer_norm, masked_softmax, GruWeights, Mode, DEFAULT_LN_EPS,
};
pub use params::{Bound, ParamSet};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;
