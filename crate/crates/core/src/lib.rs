#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agents;
pub mod config;
pub mod enn;
pub mod env;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod params;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use params::NamedParams;
pub use rng::Rng;
pub use tensor::Tensor2;
