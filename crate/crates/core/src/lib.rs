#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod baselines;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod inference;
pub mod linalg;
pub mod repnet;
pub mod rng;
pub mod simgen;

pub use error::{Result, RtlError};
