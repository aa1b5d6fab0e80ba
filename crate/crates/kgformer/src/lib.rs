//! File formats, checkpoints and the command-line front end for
//! [`kgformer_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;

pub use error::{Error, Result};
