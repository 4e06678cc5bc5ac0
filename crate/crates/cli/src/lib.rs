//! Command line and HTTP front end of the car-sharing demand toolkit.

pub mod commands;
pub mod error;
pub mod server;

pub use commands::{run, Cli};
pub use error::{CliError, ErrorKind};
