//! Dense double-precision kernel: affine stacks, a GRU cell, softmax cross-entropy, Adam,
//! inverted dropout, a seeded generator and finite-difference gradient checks.

pub mod adam;
pub mod dropout;
pub mod embedding;
pub mod gradcheck;
pub mod gru;
pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod params;
pub mod rng;

pub use adam::{AdamConfig, AdamState};
pub use dropout::DropoutMask;
pub use embedding::Embedding;
pub use gradcheck::{grad_check, grad_check_slice, relative_error, GradCheckReport};
pub use gru::{gru_encode, Gru, GruCache, GruTrace};
pub use loss::{softmax, softmax_cross_entropy, CrossEntropy};
pub use matrix::Matrix;
pub use mlp::{Activation, InputGrad, Linear, Mlp, MlpCache, MlpSpec};
pub use params::{ParamBlock, ParamBlockMut, Parameterized};
pub use rng::Rng;
