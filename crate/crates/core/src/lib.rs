pub mod concentration;
pub mod dft;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod operator;
pub mod rng;
pub mod signal;
pub mod solver;

pub use error::{Error, Result};
