//! Minimal f64 tensor kernel: the layer operations the projectors need,
//! their hand-written adjoints, and a central-difference gradient checker.

mod grad;
mod ops;
mod tensor;

pub use grad::{grad_check, Differentiable, GradCheckReport, Gradients};
pub use ops::{
    add_bias, add_bias_backward, conv1d, conv1d_backward, conv1d_with, conv2d, conv2d_backward, elementwise_mul, gelu,
    gelu_backward, matmul, matmul_with, pool2x2, pool2x2_backward, sigmoid, sigmoid_backward, PadPolicy,
};
pub use tensor::Tensor;

/// `sqrt(2/pi)`, the scale inside the tanh form of GELU.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// Cubic coefficient of the tanh GELU approximation.
pub const GELU_CUBIC: f64 = 0.044_715;
