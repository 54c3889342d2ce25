pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod loss;
pub mod model;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
