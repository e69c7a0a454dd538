use std::path::PathBuf;

use thiserror::Error;

use crate::cache::{ChunkVersion, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rank {rank} outside library of {size} videos")]
    RankOutOfRange { rank: usize, size: usize },

    #[error("base station has no users")]
    NoUsers,

    #[error("chunk {index} out of range for video {video} ({count} chunks)")]
    ChunkOutOfRange { video: u32, index: usize, count: usize },

    #[error("invalid Weibull parameters alpha={alpha} beta={beta} gamma={gamma}")]
    InvalidWeibull { alpha: f64, beta: f64, gamma: f64 },

    #[error("invalid preference vector: {0}")]
    InvalidPreference(String),

    #[error("node {node} has {free} free bytes but {needed} are required")]
    InsufficientSpace { node: NodeId, free: u64, needed: u64 },

    #[error("{cv} is already cached at node {node}")]
    AlreadyCached { cv: ChunkVersion, node: NodeId },

    #[error("{cv} is not cached at node {node}")]
    NotCached { cv: ChunkVersion, node: NodeId },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),

    #[error("cannot parse configuration: {0}")]
    ConfigParse(String),

    #[error("refusing to overwrite existing output {0} (pass --overwrite)")]
    OutputExists(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
