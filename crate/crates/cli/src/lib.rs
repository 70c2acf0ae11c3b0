//! Library half of the harness binary. Everything the subcommands do lives
//! here so integration tests can drive it without spawning processes.

pub mod config;
pub mod corpus;
pub mod error;
pub mod extract;
pub mod gradsuite;
pub mod metrics;
pub mod probe;
pub mod synth;
pub mod train;
pub mod wav;

pub use error::HarnessError;
