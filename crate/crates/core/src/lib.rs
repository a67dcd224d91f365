pub mod error;
pub mod harness;
mod serde_util;
pub mod optimizer;
pub mod phantom;
pub mod pipeline;
pub mod probe;
pub mod similarity;
pub mod transform;
pub mod volume;

pub use error::{Error, Result};
