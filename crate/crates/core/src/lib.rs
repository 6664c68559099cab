pub mod cli;
pub mod decay;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod nonlinearity;
pub mod rng;
pub mod well;

pub use error::{Error, Result};
