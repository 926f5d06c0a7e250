#![no_std]
extern crate alloc;

pub mod dynamics;
pub mod error;
pub mod expm;
pub mod fit;
pub mod hum;
pub mod kalman;
pub mod lr;
pub mod poly;
pub mod quadrature;
pub mod spectral;
pub mod system;

pub use error::{Error, Result};
