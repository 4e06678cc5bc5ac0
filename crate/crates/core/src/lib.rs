pub mod dataset;
pub mod diagnostics;
pub mod error;
mod float_serde;
pub mod forest;
pub mod linear;
pub mod model;
pub mod selection;
pub mod spatial;
pub mod whatif;

pub use error::{Error, Result};

/// Toolkit version recorded in persisted artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
