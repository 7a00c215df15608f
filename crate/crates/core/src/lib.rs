pub mod autodiff;
pub mod batching;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod losses;
pub mod params;
pub mod training;

pub use error::{Error, Result};
