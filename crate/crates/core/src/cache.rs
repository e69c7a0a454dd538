//! Per-node cache state and the cluster-wide synchronized catalogue.
//!
//! Every mutation goes through [`insert`], [`evict`] and [`Catalogue::touch`]
//! so that node contents and catalogue entries never drift apart. The
//! catalogue keeps per-node orderings by popularity, by replica status and by
//! recency, which the replacement policies walk directly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::BitrateLadder;

pub type NodeId = usize;

/// One deliverable unit: a chunk of a video at a bitrate level (`1..=M`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChunkVersion {
    pub video: u32,
    pub chunk: usize,
    pub level: u8,
}

impl ChunkVersion {
    pub fn new(video: u32, chunk: usize, level: u8) -> Self {
        Self { video, chunk, level }
    }

    pub fn at_level(self, level: u8) -> Self {
        Self { level, ..self }
    }
}

impl fmt::Display for ChunkVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}/c{}@L{}", self.video, self.chunk, self.level)
    }
}

/// Total order used whenever chunks are ranked by popularity: popularity
/// first, then video id, chunk index and level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RankKey {
    pub popularity: OrderedFloat<f64>,
    pub cv: ChunkVersion,
}

impl RankKey {
    pub fn new(popularity: f64, cv: ChunkVersion) -> Self {
        Self {
            popularity: OrderedFloat(popularity),
            cv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RecencyKey {
    pub last_access: OrderedFloat<f64>,
    pub cv: ChunkVersion,
}

/// Outstanding transcoding reservation on a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[must_use]
pub struct TranscodeGrant {
    pub node: NodeId,
    pub units: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    capacity_bytes: u64,
    free_bytes: u64,
    proc_capacity: u64,
    proc_free: u64,
    cached: BTreeSet<ChunkVersion>,
}

impl NodeState {
    pub fn new(id: NodeId, capacity_bytes: u64, proc_capacity: u64) -> Self {
        Self {
            id,
            capacity_bytes,
            free_bytes: capacity_bytes,
            proc_capacity,
            proc_free: proc_capacity,
            cached: BTreeSet::new(),
        }
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bytes
    }

    pub fn free_bytes(&self) -> u64 {
        self.free_bytes
    }

    pub fn proc_capacity(&self) -> u64 {
        self.proc_capacity
    }

    pub fn proc_free(&self) -> u64 {
        self.proc_free
    }

    pub fn cached(&self) -> &BTreeSet<ChunkVersion> {
        &self.cached
    }

    pub fn contains(&self, cv: &ChunkVersion) -> bool {
        self.cached.contains(cv)
    }

    /// Whether a copy of the same chunk above `cv.level` is cached here.
    pub fn has_higher(&self, cv: &ChunkVersion) -> bool {
        let lo = ChunkVersion::new(cv.video, cv.chunk, cv.level.saturating_add(1));
        let hi = ChunkVersion::new(cv.video, cv.chunk, u8::MAX);
        cv.level < u8::MAX && self.cached.range(lo..=hi).next().is_some()
    }

    pub fn can_transcode(&self, units: u64) -> bool {
        self.proc_free >= units
    }

    pub fn reserve_transcode(&mut self, units: u64) -> Option<TranscodeGrant> {
        if self.proc_free >= units {
            self.proc_free -= units;
            Some(TranscodeGrant { node: self.id, units })
        } else {
            None
        }
    }

    pub fn release(&mut self, grant: TranscodeGrant) {
        debug_assert_eq!(grant.node, self.id);
        self.proc_free = (self.proc_free + grant.units).min(self.proc_capacity);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub cv: ChunkVersion,
    pub node: NodeId,
    pub replica: bool,
    pub popularity: f64,
    pub last_access: f64,
}

impl CatalogEntry {
    pub fn rank_key(&self) -> RankKey {
        RankKey::new(self.popularity, self.cv)
    }

    pub fn recency_key(&self) -> RecencyKey {
        RecencyKey {
            last_access: OrderedFloat(self.last_access),
            cv: self.cv,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct NodeIndex {
    by_popularity: BTreeSet<RankKey>,
    replicas: BTreeSet<RankKey>,
    by_recency: BTreeSet<RecencyKey>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalogue {
    entries: BTreeMap<(ChunkVersion, NodeId), CatalogEntry>,
    by_chunk: BTreeMap<(u32, usize), BTreeSet<(u8, NodeId)>>,
    per_node: Vec<NodeIndex>,
}

impl Catalogue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, cv: &ChunkVersion, node: NodeId) -> Option<&CatalogEntry> {
        self.entries.get(&(*cv, node))
    }

    pub fn entries(&self) -> impl Iterator<Item = &CatalogEntry> {
        self.entries.values()
    }

    /// Nodes holding exactly `cv`, in node order.
    pub fn lookup_exact(&self, cv: &ChunkVersion) -> Vec<NodeId> {
        self.by_chunk
            .get(&(cv.video, cv.chunk))
            .map(|set| {
                set.range((cv.level, 0)..=(cv.level, NodeId::MAX))
                    .map(|&(_, node)| node)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Copies above `level`, lowest sufficient level first, then node id.
    pub fn lookup_higher(&self, video: u32, chunk: usize, level: u8) -> Vec<(NodeId, u8)> {
        if level == u8::MAX {
            return Vec::new();
        }
        self.by_chunk
            .get(&(video, chunk))
            .map(|set| set.range((level + 1, 0)..).map(|&(h, node)| (node, h)).collect())
            .unwrap_or_default()
    }

    /// True if a version of `cv`'s chunk at `cv.level` or above exists on
    /// any entry other than `(cv.level, exclude)`.
    fn has_witness(&self, cv: &ChunkVersion, exclude: Option<NodeId>) -> bool {
        self.by_chunk.get(&(cv.video, cv.chunk)).is_some_and(|set| {
            set.range((cv.level, 0)..)
                .any(|&(h, node)| !(h == cv.level && Some(node) == exclude))
        })
    }

    /// Whether `cv` would count as a replica if it were added now.
    pub fn is_replica_candidate(&self, cv: &ChunkVersion) -> bool {
        self.has_witness(cv, None)
    }

    fn index_mut(&mut self, node: NodeId) -> &mut NodeIndex {
        if self.per_node.len() <= node {
            self.per_node.resize_with(node + 1, NodeIndex::default);
        }
        &mut self.per_node[node]
    }

    pub fn node_len(&self, node: NodeId) -> usize {
        self.per_node.get(node).map_or(0, |i| i.by_popularity.len())
    }

    /// Cached chunks of `node` from least to most popular.
    pub fn by_popularity(&self, node: NodeId) -> impl Iterator<Item = &RankKey> {
        self.per_node.get(node).into_iter().flat_map(|i| i.by_popularity.iter())
    }

    /// Replica-flagged chunks of `node` from least to most popular.
    pub fn replicas_by_popularity(&self, node: NodeId) -> impl Iterator<Item = &RankKey> {
        self.per_node.get(node).into_iter().flat_map(|i| i.replicas.iter())
    }

    /// Cached chunks of `node` from least to most recently accessed.
    pub fn by_recency(&self, node: NodeId) -> impl Iterator<Item = &RecencyKey> {
        self.per_node.get(node).into_iter().flat_map(|i| i.by_recency.iter())
    }

    /// Least popular chunk cached at `node`.
    pub fn least_popular(&self, node: NodeId) -> Option<RankKey> {
        self.per_node.get(node)?.by_popularity.first().copied()
    }

    pub fn touch(&mut self, cv: &ChunkVersion, node: NodeId, now: f64) -> Result<&CatalogEntry> {
        let Some(entry) = self.entries.get_mut(&(*cv, node)) else {
            return Err(Error::NotCached { cv: *cv, node });
        };
        let old = entry.recency_key();
        entry.last_access = entry.last_access.max(now);
        let new = entry.recency_key();
        let index = &mut self.per_node[node];
        index.by_recency.remove(&old);
        index.by_recency.insert(new);
        Ok(&self.entries[&(*cv, node)])
    }

    fn add(&mut self, entry: CatalogEntry) {
        let key = entry.rank_key();
        let recency = entry.recency_key();
        let replica = entry.replica;
        let (cv, node) = (entry.cv, entry.node);
        let index = self.index_mut(node);
        index.by_popularity.insert(key);
        index.by_recency.insert(recency);
        if replica {
            index.replicas.insert(key);
        }
        self.by_chunk
            .entry((cv.video, cv.chunk))
            .or_default()
            .insert((cv.level, node));
        self.entries.insert((cv, node), entry);
    }

    fn remove(&mut self, cv: &ChunkVersion, node: NodeId) -> Option<CatalogEntry> {
        let entry = self.entries.remove(&(*cv, node))?;
        let index = &mut self.per_node[node];
        index.by_popularity.remove(&entry.rank_key());
        index.replicas.remove(&entry.rank_key());
        index.by_recency.remove(&entry.recency_key());
        if let Some(set) = self.by_chunk.get_mut(&(cv.video, cv.chunk)) {
            set.remove(&(cv.level, node));
            if set.is_empty() {
                self.by_chunk.remove(&(cv.video, cv.chunk));
            }
        }
        Some(entry)
    }

    /// Re-evaluates replica flags of `(video, chunk)` entries at or below
    /// `level` after a copy at `level` disappeared.
    fn revalidate(&mut self, video: u32, chunk: usize, level: u8) {
        let Some(set) = self.by_chunk.get(&(video, chunk)) else {
            return;
        };
        let candidates: Vec<(u8, NodeId)> = set.range(..=(level, NodeId::MAX)).copied().collect();
        for (h, node) in candidates {
            let cv = ChunkVersion::new(video, chunk, h);
            let flagged = self.entries.get(&(cv, node)).is_some_and(|e| e.replica);
            if flagged && !self.has_witness(&cv, Some(node)) {
                let entry = self.entries.get_mut(&(cv, node)).expect("indexed entry exists");
                entry.replica = false;
                let key = entry.rank_key();
                self.per_node[node].replicas.remove(&key);
            }
        }
    }

    /// Checks the catalogue against node contents and its own indexes.
    pub fn coherence_violations(&self, nodes: &[NodeState]) -> Vec<String> {
        let mut problems = Vec::new();
        let mut from_nodes: BTreeSet<(ChunkVersion, NodeId)> = BTreeSet::new();
        for node in nodes {
            from_nodes.extend(node.cached.iter().map(|cv| (*cv, node.id)));
        }
        let from_catalogue: BTreeSet<(ChunkVersion, NodeId)> = self.entries.keys().copied().collect();
        for missing in from_nodes.difference(&from_catalogue) {
            problems.push(format!("{} cached at node {} but not catalogued", missing.0, missing.1));
        }
        for extra in from_catalogue.difference(&from_nodes) {
            problems.push(format!("{} catalogued at node {} but not cached", extra.0, extra.1));
        }
        let indexed: usize = self.by_chunk.values().map(BTreeSet::len).sum();
        if indexed != self.entries.len() {
            problems.push(format!(
                "chunk index holds {indexed} copies, catalogue {}",
                self.entries.len()
            ));
        }
        for (node, index) in self.per_node.iter().enumerate() {
            let expected: BTreeSet<RankKey> = self
                .entries
                .values()
                .filter(|e| e.node == node)
                .map(CatalogEntry::rank_key)
                .collect();
            if expected != index.by_popularity {
                problems.push(format!("popularity index of node {node} out of sync"));
            }
            let replicas: BTreeSet<RankKey> = self
                .entries
                .values()
                .filter(|e| e.node == node && e.replica)
                .map(CatalogEntry::rank_key)
                .collect();
            if replicas != index.replicas {
                problems.push(format!("replica index of node {node} out of sync"));
            }
            if index.by_recency.len() != expected.len() {
                problems.push(format!("recency index of node {node} out of sync"));
            }
        }
        problems
    }

    /// Replica-flagged entries with no same-or-higher copy elsewhere.
    pub fn replica_violations(&self) -> Vec<String> {
        self.entries
            .values()
            .filter(|e| e.replica && !self.has_witness(&e.cv, Some(e.node)))
            .map(|e| format!("{} at node {} flagged replica without a witness", e.cv, e.node))
            .collect()
    }

    /// One line per entry: `node video chunk level replica popularity last_access`.
    pub fn dump(&self) -> String {
        let mut rows: Vec<&CatalogEntry> = self.entries.values().collect();
        rows.sort_by_key(|e| (e.node, e.cv));
        let mut out = String::new();
        for e in rows {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {:e} {}",
                e.node,
                e.cv.video,
                e.cv.chunk,
                e.cv.level,
                u8::from(e.replica),
                e.popularity,
                e.last_access
            );
        }
        out
    }
}

/// Caches `cv` at `node` and records it in the catalogue. The replica flag
/// is set if a same-or-higher copy of the chunk is already catalogued.
pub fn insert(
    node: &mut NodeState,
    ctg: &mut Catalogue,
    ladder: &BitrateLadder,
    cv: ChunkVersion,
    popularity: f64,
    now: f64,
) -> Result<()> {
    let size = ladder.chunk_bytes(cv.level);
    if node.free_bytes < size {
        return Err(Error::InsufficientSpace {
            node: node.id,
            free: node.free_bytes,
            needed: size,
        });
    }
    if !node.cached.insert(cv) {
        return Err(Error::AlreadyCached { cv, node: node.id });
    }
    node.free_bytes -= size;
    let replica = ctg.is_replica_candidate(&cv);
    ctg.add(CatalogEntry {
        cv,
        node: node.id,
        replica,
        popularity,
        last_access: now,
    });
    Ok(())
}

/// Removes `cv` from `node` and the catalogue, then revalidates replica
/// flags that may have relied on it.
pub fn evict(
    node: &mut NodeState,
    ctg: &mut Catalogue,
    ladder: &BitrateLadder,
    cv: &ChunkVersion,
) -> Result<CatalogEntry> {
    if !node.cached.remove(cv) {
        return Err(Error::NotCached { cv: *cv, node: node.id });
    }
    node.free_bytes += ladder.chunk_bytes(cv.level);
    let entry = ctg
        .remove(cv, node.id)
        .ok_or(Error::NotCached { cv: *cv, node: node.id })?;
    ctg.revalidate(cv.video, cv.chunk, cv.level);
    Ok(entry)
}

/// Capacity violations of a node: cached bytes must match its accounting
/// and stay within capacity.
pub fn capacity_violations(node: &NodeState, ladder: &BitrateLadder) -> Vec<String> {
    let used: u64 = node.cached.iter().map(|cv| ladder.chunk_bytes(cv.level)).sum();
    let mut problems = Vec::new();
    if used > node.capacity_bytes {
        problems.push(format!(
            "node {} stores {used} bytes over capacity {}",
            node.id, node.capacity_bytes
        ));
    }
    if used + node.free_bytes != node.capacity_bytes {
        problems.push(format!(
            "node {} free-byte accounting off: used {used} + free {} != {}",
            node.id, node.free_bytes, node.capacity_bytes
        ));
    }
    if node.proc_free > node.proc_capacity {
        problems.push(format!("node {} has more free transcoding than capacity", node.id));
    }
    problems
}

/// Line-oriented dump of node states followed by the catalogue.
pub fn dump_state(nodes: &[NodeState], ctg: &Catalogue) -> String {
    let mut out = String::new();
    for n in nodes {
        let _ = writeln!(
            out,
            "# node {} capacity={} free={} proc_capacity={} proc_free={} cached={}",
            n.id,
            n.capacity_bytes,
            n.free_bytes,
            n.proc_capacity,
            n.proc_free,
            n.cached.len()
        );
    }
    out.push_str(&ctg.dump());
    out
}
