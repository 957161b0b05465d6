//! Diagonal linear recurrent sequence models and the tools to probe them:
//! exact and finite-precision forward passes, collapse certificates on cyclic
//! inputs, hand-built constructions for modular counting, parity and offset
//! prediction, PSD product checks, and small-scale gradient training.

pub mod constructions;
pub mod error;
pub mod inputs;
pub mod precision;
pub mod psd;
pub mod ssm;
pub mod train;
pub mod zoo;

pub use error::{Error, Result};
