//! Differentiable building blocks, each with a hand-written backward pass.

pub mod activation;
pub mod conv;
pub mod gradcheck;
pub mod init;
pub mod pool;
pub mod spectral;
pub mod tensor;
pub mod vbn;

pub use activation::{leaky_relu, prelu, softmax_rows, LEAKY_SLOPE, PRELU_INIT};
pub use conv::{conv1d, deconv1d, deconv1d_to, same_padding, ConvGrads, ConvParams};
pub use gradcheck::{grad_check, grad_check_at};
pub use pool::maxpool1d;
pub use spectral::{spectral_normalize, SpectralNorm, SpectralState};
pub use tensor::FeatureMap;
pub use vbn::{vbn_apply, VbnMode, VbnState};
