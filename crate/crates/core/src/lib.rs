//! Prior-informed gradient estimation for periodic parametrized circuits.
//!
//! The crate covers trigonometric root finding ([`trigcore`]), Fourier
//! priors ([`priors`]), measurement allocation ([`allocators`]), a QAOA
//! statevector simulator ([`qaoa`]), plan execution ([`estimator`]) and the
//! experiment drivers ([`experiments`]).

pub mod allocators;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod priors;
pub mod qaoa;
pub mod trigcore;

pub use error::{Error, Result};
