//! Graph-convolution building blocks for spatio-temporal forecasting with
//! low-rank star-graph adjacency: a small autodiff tensor core, graph and
//! spectral utilities, spatial layers, two recurrent/convolutional models,
//! synthetic data, training and benchmarking.

pub mod bench;
pub mod data;
pub mod error;
pub mod graph;
pub mod models;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod spatial;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{AllocCounter, Csr, Gradients, OpKind, Tape, Tensor, Var};

pub type TensorF32 = Tensor<f32>;
pub type TensorF64 = Tensor<f64>;
pub type TapeF32 = Tape<f32>;
pub type TapeF64 = Tape<f64>;
