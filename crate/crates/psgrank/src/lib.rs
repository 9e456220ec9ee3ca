//! File formats, corpus stores, experiment configuration and the
//! leave-one-out experiment runner built on `psgrank-core`.

pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod io;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
