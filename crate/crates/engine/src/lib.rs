//! A minimal, deterministic tensor engine.
//!
//! It provides exactly what a pair of convolutional autoencoders needs:
//! 3D convolution and transposed convolution (2D models use a unit temporal
//! kernel), batch normalization, max pooling, ReLU and sigmoid, a windowed
//! mean-squared reconstruction loss, reverse-mode gradients through a
//! sequential stack and the Adam optimizer.
//!
//! Every tensor is a single sample laid out row-major over
//! `(channels, time, height, width)`; a batch is a `Vec<Tensor<T>>`.
//! Work is spread across samples with rayon, and every cross-sample
//! reduction runs in sample order so results are bitwise reproducible
//! regardless of the worker count.

mod activation;
mod adam;
mod batchnorm;
mod conv;
mod error;
mod geometry;
pub mod gradcheck;
mod init;
mod layer;
mod loss;
mod param;
mod pool;
mod scalar;
mod sequential;
mod spec;
mod tensor;

pub use activation::{Relu, Sigmoid};
pub use adam::{Adam, AdamConfig};
pub use batchnorm::{BatchNorm3d, BN_EPS, BN_MOMENTUM};
pub use conv::{Conv3d, ConvTranspose3d};
pub use error::{EngineError, Result};
pub use init::{seeded_init, LayerParams};
pub use layer::{Layer, Mode};
pub use loss::{batch_mse, mse_loss, mse_loss_grad, LossSpec};
pub use param::Param;
pub use pool::MaxPool3d;
pub use scalar::Scalar;
pub use sequential::Sequential;
pub use spec::{LayerKind, LayerSpec, Triple};
pub use tensor::{Shape, Tensor};
