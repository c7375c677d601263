pub mod error;
pub mod backbone;
pub mod tasks;
pub mod analysis;
pub mod data;
pub mod metrics;
pub mod numerics;
pub mod preprocess;

pub use error::{FptError, Result};
