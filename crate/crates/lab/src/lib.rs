//! File formats, configuration and experiment drivers for the retrieval lab.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod formats;
pub mod store;
