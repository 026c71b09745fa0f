//! Deflationary independent component analysis by exact line search of the
//! kurtosis contrast (RobustICA), together with the kurtosis-based FastICA
//! family used as baselines, separation metrics and synthetic scenario
//! generators.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the
//! experiment runner and the command line live in the `robustica` crate.
//!
//! Signal blocks are `L x T` (channels x samples). Real and complex data go
//! through the same code paths, selected by the [`Scalar`] type parameter.

#![no_std]

extern crate alloc;

pub mod baselines;
pub mod benchgen;
pub mod contrast;
pub mod deflation;
mod error;
pub mod metrics;
pub mod quartic;
pub mod rng;
pub mod robustica;
pub mod scalar;
pub mod signal;

pub use error::{Error, Result};
pub use nalgebra::{Complex, DMatrix, DVector};
pub use scalar::{Regime, Scalar};
pub use signal::{MixingModel, SignalBlock};
