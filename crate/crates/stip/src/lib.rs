//! Three-party permuted Transformer inference on top of `stip-core`:
//! model and key files, the wire protocol, transports, the party state
//! machines, reports, benchmarks and the `stip` command line.

pub mod bench;
mod bytes;
pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod protocol;
pub mod report;
pub mod wire;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use report::ReportBundle;
pub use stip_core as core;
