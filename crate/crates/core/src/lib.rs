//! Collaborative chunk caching and transcoding across a cluster of edge
//! servers attached to base stations.
//!
//! The crate is organised bottom-up:
//!
//! * [`popularity`] evaluates the viewing model and per-chunk popularity;
//! * [`workload`] generates seedable request streams;
//! * [`cache`] holds node state and the synchronized catalogue;
//! * [`policy`] implements pre-load, popularity-aware replacement and LRU;
//! * [`sim`] routes requests through the serving scenarios and collects metrics;
//! * [`config`] and [`experiment`] load experiment files and run sweeps.

pub mod cache;
pub mod config;
pub mod error;
pub mod experiment;
pub mod policy;
pub mod popularity;
pub mod seed;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
