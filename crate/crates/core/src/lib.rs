//! Haar-random isometric tensor network states: sampling, causal-cone
//! expectations, Riemannian gradients and exact doubled transition channels.

pub mod ansatz;
pub mod basis;
pub mod channels;
pub mod checks;
pub mod cone;
pub mod error;
pub mod expectation;
pub mod experiments;
pub mod gradient;
pub mod register;
pub mod reference;
pub mod tensor;
pub mod unitary;

pub use error::{Error, Result};
