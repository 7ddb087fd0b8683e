//! Null-space unlearning on a synthetic key-value associative memory.
//!
//! The crate implements three editors for a single linear layer `W`:
//!
//! * [`multiplicative`]: the few-shot closed form `W <- D* W` with `D*`
//!   confined to the null space of the forgotten outputs;
//! * [`additive`]: `W <- W + D P_m` with `P_m` annihilating the retained
//!   keys, solved either through the Kronecker-vectorized Sylvester system
//!   or by gradient descent;
//! * [`oracle`]: brute-force verifiers used to certify both.
//!
//! [`facts`] generates the memory and its knowledge matrices, [`evaluation`]
//! scores an edit and [`experiment`] wires everything into reproducible runs.

// `!(x <= tol)` is used on purpose so that NaN fails tolerance checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod additive;
pub mod descent;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod facts;
pub mod instance;
pub mod kernel;
pub mod matrix;
pub mod multiplicative;
pub mod oracle;
pub mod rng;
pub mod verify;
pub mod zumx;

pub use error::{Error, Result};
pub use matrix::Matrix;
