//! Dense numeric kernels, loss primitives, the Adam optimizer, and a
//! finite-difference gradient checker. Everything trained in this crate is
//! built on these pieces; all math is plain f64 on row-major buffers.

mod gradcheck;
mod loss;
mod matrix;
mod store;

pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{kl_sparsity, sigmoid, softmax_cross_entropy, squared_loss};
pub use matrix::{affine, affine_backward, AffineGrads, Matrix};
pub use store::{AdamConfig, Param, ParamStore};
