//! HTTP search service and command-line front end for `artsearch-core`.

pub mod cli;
pub mod config;
pub mod service;
