//! File formats, WAV decoding, orchestration, the CLI, and the judging service
//! around `singassess-core`.

pub mod cache;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod server;
pub mod session;
pub mod summarizer;
pub mod wav;

pub use error::{Error, Result};
