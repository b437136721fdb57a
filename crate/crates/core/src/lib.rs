//! Training-free multi-criteria recommendation via graph filtering.
//!
//! The pipeline builds an item-item similarity graph from stacked
//! per-criterion rating matrices, smooths each user's per-criterion
//! rating signal with polynomial low-pass filters, and aggregates the
//! smoothed scores with criteria-preference weights to rank unseen items.

pub mod artifacts;
pub mod baseline;
pub mod cache;
pub mod config;
pub mod error;
pub mod filter;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod prefs;
pub mod sparse;
pub mod spectral;
pub mod tune;

pub use error::{Error, Result};
