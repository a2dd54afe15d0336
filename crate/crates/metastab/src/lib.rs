//! File formats, image sequences and the command-line driver around
//! [`metastab_core`].
//!
//! * [`sequence`]: numbered PNG frame directories.
//! * [`checkpoint`]: `MSTB` parameter tables.
//! * [`flowfile`]: `MSFL` flow dumps.
//! * [`config`], [`manifest`], [`log`]: run configuration and bookkeeping.
//! * [`cli`]: the `metastab` executable.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod flowfile;
pub mod log;
pub mod manifest;
pub mod sequence;

pub use error::{Error, Result};
