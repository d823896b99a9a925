//! Files, checkpoints, thread pools and the command-line tool around
//! `dexfm-core`.

pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod config;
pub mod error;
pub mod exec;
pub mod formats;
pub mod report;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{RunConfig, Settings};
pub use error::{Error, Result};
pub use exec::Jobs;
