//! Provenance service: persistence, ingestion queue, historical loader,
//! HTTP API, client and fixtures on top of `provsvc-core`.

pub mod cli;
pub mod client;
pub mod config;
pub mod fixture;
pub mod ingest;
pub mod loader;
pub mod registry;
pub mod service;
pub mod store;

#[cfg(test)]
mod testutil;

pub use provsvc_core as core;
