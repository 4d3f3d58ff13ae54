pub mod error;
pub mod fixtures;
pub mod flow;
pub mod pressure;
pub mod spacetime;
pub mod trapped;

pub use error::{Error, Result};
