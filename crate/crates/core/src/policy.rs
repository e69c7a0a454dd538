//! Cache admission and replacement.
//!
//! * [`pcp_preload`] fills empty caches with the most popular chunks, top
//!   bitrate first, stepping down a level whenever every chunk of the node's
//!   table is already cached at the current level.
//! * [`crp_admit`] is the popularity-aware reactive replacement with the
//!   minimum-replication rule and the popularity threshold `TH`.
//! * [`lru_admit`] is the conventional least-recently-used replacement used
//!   by the comparison systems.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cache::{evict, insert, Catalogue, ChunkVersion, NodeState, RankKey};
use crate::error::Result;
use crate::popularity::PopularityTable;
use crate::workload::BitrateLadder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Pccp,
    CachePro,
    CoCache,
    Jccp,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [Self::Pccp, Self::CachePro, Self::CoCache, Self::Jccp];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pccp => "pccp",
            Self::CachePro => "cachepro",
            Self::CoCache => "cocache",
            Self::Jccp => "jccp",
        }
    }

    pub fn is_baseline(self) -> bool {
        self != Self::Pccp
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown policy {s:?} (expected pccp, cachepro, cocache or jccp)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Popularity threshold `TH` of the replacement policy.
    pub threshold: f64,
    /// Number of chunks fetched ahead of the requested one.
    pub prefetch_window: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Pccp,
            threshold: 0.001,
            prefetch_window: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayReason {
    /// The chunk is larger than the whole cache.
    Oversized,
    /// A replica no more popular than the least popular cached chunk.
    UnpopularReplica,
    /// Not enough chunks within `TH` of the least popular one to free space.
    ThresholdStall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    /// Already cached; only the access time was refreshed.
    Refreshed,
    Cached,
    Relayed(RelayReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmitOutcome {
    pub admission: Admission,
    pub evicted: Vec<ChunkVersion>,
}

impl AdmitOutcome {
    fn simple(admission: Admission) -> Self {
        Self {
            admission,
            evicted: Vec::new(),
        }
    }

    pub fn cached(&self) -> bool {
        self.admission == Admission::Cached
    }
}

/// Least popular chunk cached at `node` and its popularity. An empty cache
/// yields `(None, 0.0)`.
pub fn lpc(ctg: &Catalogue, node: usize) -> (Option<ChunkVersion>, f64) {
    ctg.least_popular(node)
        .map_or((None, 0.0), |k| (Some(k.cv), k.popularity.into_inner()))
}

/// Chunks ordered from most to least popular under the total rank order.
pub fn rank_chunks(entries: impl IntoIterator<Item = (u32, usize, f64)>) -> Vec<(u32, usize, f64)> {
    let mut ranked: Vec<(u32, usize, f64)> = entries.into_iter().collect();
    ranked.sort_by(|a, b| {
        let ka = RankKey::new(a.2, ChunkVersion::new(a.0, a.1, 0));
        let kb = RankKey::new(b.2, ChunkVersion::new(b.0, b.1, 0));
        kb.cmp(&ka)
    });
    ranked
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreloadSummary {
    pub bytes_per_node: Vec<u64>,
    pub chunks_per_node: Vec<usize>,
}

impl PreloadSummary {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_per_node.iter().sum()
    }
}

/// Pre-loads every node from its own popularity table. Nodes are filled
/// independently, so the same chunk may end up on several nodes; later
/// copies are flagged as replicas.
pub fn pcp_preload(
    nodes: &mut [NodeState],
    ctg: &mut Catalogue,
    tables: &[PopularityTable],
    ladder: &BitrateLadder,
) -> Result<PreloadSummary> {
    let mut summary = PreloadSummary::default();
    for (node, table) in nodes.iter_mut().zip(tables) {
        let ranked = rank_chunks(table.iter());
        let mut bytes = 0u64;
        let mut count = 0usize;
        let mut level = ladder.top();
        'fill: while level >= 1 && !ranked.is_empty() {
            let size = ladder.chunk_bytes(level);
            for &(video, chunk, popularity) in &ranked {
                if node.free_bytes() < size {
                    break 'fill;
                }
                let cv = ChunkVersion::new(video, chunk, level);
                insert(node, ctg, ladder, cv, popularity, 0.0)?;
                bytes += size;
                count += 1;
            }
            level -= 1;
        }
        summary.bytes_per_node.push(bytes);
        summary.chunks_per_node.push(count);
    }
    Ok(summary)
}

/// Picks victims from `candidates` (in eviction order) until `needed`
/// bytes would be free. Returns `None` if the candidates run out first.
fn pick_victims(
    node: &NodeState,
    ladder: &BitrateLadder,
    needed: u64,
    candidates: impl Iterator<Item = ChunkVersion>,
) -> Option<Vec<ChunkVersion>> {
    let mut free = node.free_bytes();
    let mut victims = Vec::new();
    if free >= needed {
        return Some(victims);
    }
    for cv in candidates {
        free += ladder.chunk_bytes(cv.level);
        victims.push(cv);
        if free >= needed {
            return Some(victims);
        }
    }
    None
}

/// Replicas from least to most popular, then unique chunks likewise.
fn removal_order<'a>(ctg: &'a Catalogue, node: usize) -> impl Iterator<Item = ChunkVersion> + 'a {
    let replicas = ctg.replicas_by_popularity(node).map(|k| k.cv);
    let uniques = ctg
        .by_popularity(node)
        .filter(move |k| !ctg.entry(&k.cv, node).is_some_and(|e| e.replica))
        .map(|k| k.cv);
    replicas.chain(uniques)
}

fn evict_all(
    node: &mut NodeState,
    ctg: &mut Catalogue,
    ladder: &BitrateLadder,
    victims: &[ChunkVersion],
) -> Result<()> {
    for cv in victims {
        evict(node, ctg, ladder, cv)?;
    }
    Ok(())
}

/// Popularity-aware admission of a chunk that was just delivered to a
/// viewer of `node`.
///
/// With free space the chunk is always cached. Otherwise, against the least
/// popular cached chunk (LPC):
/// * a replica is cached only if it is more popular than LPC, evicting
///   replicas before unique chunks, least popular first;
/// * a unique chunk less popular than LPC displaces chunks whose popularity
///   is within `threshold` of LPC, or is relayed if those do not free
///   enough room;
/// * any other unique chunk evicts in the replica-first order.
pub fn crp_admit(
    node: &mut NodeState,
    ctg: &mut Catalogue,
    ladder: &BitrateLadder,
    cv: ChunkVersion,
    now: f64,
    table: &PopularityTable,
    threshold: f64,
) -> Result<AdmitOutcome> {
    if node.contains(&cv) {
        ctg.touch(&cv, node.id, now)?;
        return Ok(AdmitOutcome::simple(Admission::Refreshed));
    }
    let size = ladder.chunk_bytes(cv.level);
    let popularity = table.get(cv.video, cv.chunk);
    let is_replica = ctg.is_replica_candidate(&cv);

    if node.free_bytes() >= size {
        insert(node, ctg, ladder, cv, popularity, now)?;
        return Ok(AdmitOutcome::simple(Admission::Cached));
    }
    if node.capacity_bytes() < size {
        return Ok(AdmitOutcome::simple(Admission::Relayed(RelayReason::Oversized)));
    }

    let (_, least) = lpc(ctg, node.id);
    let victims = if is_replica {
        if least < popularity {
            pick_victims(node, ladder, size, removal_order(ctg, node.id))
        } else {
            return Ok(AdmitOutcome::simple(Admission::Relayed(RelayReason::UnpopularReplica)));
        }
    } else if least > popularity {
        let near_lpc = ctg
            .by_popularity(node.id)
            .take_while(|k| k.popularity.into_inner() - least < threshold)
            .map(|k| k.cv);
        match pick_victims(node, ladder, size, near_lpc) {
            Some(v) => Some(v),
            None => return Ok(AdmitOutcome::simple(Admission::Relayed(RelayReason::ThresholdStall))),
        }
    } else {
        pick_victims(node, ladder, size, removal_order(ctg, node.id))
    };
    let victims = victims.expect("capacity covers the chunk, so the full cache can be emptied");
    evict_all(node, ctg, ladder, &victims)?;
    insert(node, ctg, ladder, cv, popularity, now)?;
    Ok(AdmitOutcome {
        admission: Admission::Cached,
        evicted: victims,
    })
}

/// Always-admit LRU replacement.
pub fn lru_admit(
    node: &mut NodeState,
    ctg: &mut Catalogue,
    ladder: &BitrateLadder,
    cv: ChunkVersion,
    now: f64,
    popularity: f64,
) -> Result<AdmitOutcome> {
    if node.contains(&cv) {
        ctg.touch(&cv, node.id, now)?;
        return Ok(AdmitOutcome::simple(Admission::Refreshed));
    }
    let size = ladder.chunk_bytes(cv.level);
    if node.capacity_bytes() < size {
        return Ok(AdmitOutcome::simple(Admission::Relayed(RelayReason::Oversized)));
    }
    let victims = pick_victims(node, ladder, size, ctg.by_recency(node.id).map(|k| k.cv))
        .expect("capacity covers the chunk, so the full cache can be emptied");
    evict_all(node, ctg, ladder, &victims)?;
    insert(node, ctg, ladder, cv, popularity, now)?;
    Ok(AdmitOutcome {
        admission: Admission::Cached,
        evicted: victims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::capacity_violations;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ladder() -> BitrateLadder {
        BitrateLadder::default()
    }

    fn table(entries: &[(u32, usize, f64)]) -> PopularityTable {
        PopularityTable::from_entries(0, entries.iter().copied())
    }

    #[test]
    fn preload_with_zero_cache() {
        let l = ladder();
        let mut nodes = vec![NodeState::new(0, 0, 0)];
        let mut ctg = Catalogue::new();
        let t = table(&[(0, 0, 0.5), (0, 1, 0.3)]);
        let summary = pcp_preload(&mut nodes, &mut ctg, &[t], &l).unwrap();
        assert_eq!(summary.total_bytes(), 0);
        assert!(ctg.is_empty());
    }

    #[test]
    fn preload_steps_down_levels() {
        let l = ladder();
        let t = table(&[(0, 0, 0.5), (0, 1, 0.3), (1, 0, 0.2)]);
        // room for all three chunks at the top level plus one at level 3
        let bytes = 3 * l.chunk_bytes(4) + l.chunk_bytes(3);
        let mut nodes = vec![NodeState::new(0, bytes, 0)];
        let mut ctg = Catalogue::new();
        pcp_preload(&mut nodes, &mut ctg, &[t], &l).unwrap();
        let cached: Vec<ChunkVersion> = nodes[0].cached().iter().copied().collect();
        assert!(cached.contains(&ChunkVersion::new(0, 0, 4)));
        assert!(cached.contains(&ChunkVersion::new(0, 1, 4)));
        assert!(cached.contains(&ChunkVersion::new(1, 0, 4)));
        assert!(cached.contains(&ChunkVersion::new(0, 0, 3)));
        assert_eq!(cached.len(), 4);
        assert_eq!(nodes[0].free_bytes(), 0);
    }

    #[test]
    fn preload_keeps_top_two() {
        let l = ladder();
        let t = table(&[(0, 0, 0.1), (1, 0, 0.5), (2, 0, 0.3)]);
        let mut nodes = vec![NodeState::new(0, 2 * l.chunk_bytes(4), 0)];
        let mut ctg = Catalogue::new();
        pcp_preload(&mut nodes, &mut ctg, &[t], &l).unwrap();
        let cached: Vec<ChunkVersion> = nodes[0].cached().iter().copied().collect();
        assert_eq!(cached, vec![ChunkVersion::new(1, 0, 4), ChunkVersion::new(2, 0, 4)]);
    }

    #[test]
    fn preload_flags_cross_node_replicas() {
        let l = ladder();
        let t = table(&[(0, 0, 0.5)]);
        let mut nodes = vec![
            NodeState::new(0, l.chunk_bytes(4), 0),
            NodeState::new(1, l.chunk_bytes(4), 0),
        ];
        let mut ctg = Catalogue::new();
        pcp_preload(&mut nodes, &mut ctg, &[t.clone(), t], &l).unwrap();
        let cv = ChunkVersion::new(0, 0, 4);
        assert!(!ctg.entry(&cv, 0).unwrap().replica);
        assert!(ctg.entry(&cv, 1).unwrap().replica);
    }

    #[test]
    fn ranking_ignores_input_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let entries: Vec<(u32, usize, f64)> = (0..200)
            .map(|i| (i / 10, (i % 10) as usize, f64::from(rng.random_range(0..5u8)) * 0.1))
            .collect();
        let reference = rank_chunks(entries.clone());
        for _ in 0..20 {
            let mut shuffled = entries.clone();
            shuffled.shuffle(&mut rng);
            assert_eq!(rank_chunks(shuffled), reference);
        }
    }

    #[test]
    fn crp_free_space_admits() {
        let l = ladder();
        let mut node = NodeState::new(0, 10 * l.max_chunk_bytes(), 0);
        let mut ctg = Catalogue::new();
        let t = table(&[(0, 0, 0.0)]);
        let out = crp_admit(&mut node, &mut ctg, &l, ChunkVersion::new(0, 0, 1), 1.0, &t, 0.001).unwrap();
        assert_eq!(out.admission, Admission::Cached);
    }

    #[test]
    fn crp_relays_unpopular_replica() {
        let l = ladder();
        let s = l.chunk_bytes(2);
        let t = table(&[(0, 0, 0.5), (1, 0, 0.4), (2, 0, 0.1)]);
        let mut home = NodeState::new(0, 2 * s, 0);
        let mut other = NodeState::new(1, 10 * s, 0);
        let mut ctg = Catalogue::new();
        insert(&mut home, &mut ctg, &l, ChunkVersion::new(0, 0, 2), 0.5, 0.0).unwrap();
        insert(&mut home, &mut ctg, &l, ChunkVersion::new(1, 0, 2), 0.4, 0.0).unwrap();
        insert(&mut other, &mut ctg, &l, ChunkVersion::new(2, 0, 4), 0.1, 0.0).unwrap();
        let out = crp_admit(&mut home, &mut ctg, &l, ChunkVersion::new(2, 0, 2), 1.0, &t, 0.001).unwrap();
        assert_eq!(out.admission, Admission::Relayed(RelayReason::UnpopularReplica));
        assert!(out.evicted.is_empty());
    }

    #[test]
    fn crp_evicts_replica_before_unique() {
        let l = ladder();
        let s = l.chunk_bytes(1);
        let t = table(&[(0, 0, 0.2), (1, 0, 0.1), (2, 0, 0.6)]);
        let mut home = NodeState::new(0, 2 * s, 0);
        let mut other = NodeState::new(1, 10 * s, 0);
        let mut ctg = Catalogue::new();
        // video 0 is a replica (a higher copy lives on node 1), video 1 is unique
        insert(&mut other, &mut ctg, &l, ChunkVersion::new(0, 0, 3), 0.2, 0.0).unwrap();
        insert(&mut home, &mut ctg, &l, ChunkVersion::new(0, 0, 1), 0.2, 0.0).unwrap();
        insert(&mut home, &mut ctg, &l, ChunkVersion::new(1, 0, 1), 0.1, 0.0).unwrap();
        let out = crp_admit(&mut home, &mut ctg, &l, ChunkVersion::new(2, 0, 1), 1.0, &t, 0.001).unwrap();
        assert_eq!(out.admission, Admission::Cached);
        assert_eq!(out.evicted, vec![ChunkVersion::new(0, 0, 1)]);
    }

    #[test]
    fn crp_threshold_branch() {
        let l = ladder();
        let s = l.chunk_bytes(1);
        let t = table(&[(0, 0, 0.0100), (1, 0, 0.0105), (2, 0, 0.5), (3, 0, 0.001)]);
        let mut home = NodeState::new(0, 3 * s, 0);
        let mut ctg = Catalogue::new();
        insert(&mut home, &mut ctg, &l, ChunkVersion::new(2, 0, 1), 0.5, 0.0).unwrap();
        insert(&mut home, &mut ctg, &l, ChunkVersion::new(1, 0, 1), 0.0105, 0.0).unwrap();
        insert(&mut home, &mut ctg, &l, ChunkVersion::new(0, 0, 1), 0.0100, 0.0).unwrap();
        // a level-2 chunk needs two level-1 slots: LPC and its near neighbour go
        let out = crp_admit(&mut home, &mut ctg, &l, ChunkVersion::new(3, 0, 2), 1.0, &t, 0.001).unwrap();
        assert_eq!(out.admission, Admission::Cached);
        assert_eq!(
            out.evicted,
            vec![ChunkVersion::new(0, 0, 1), ChunkVersion::new(1, 0, 1)]
        );

        // with TH = 0 nothing qualifies and the chunk is relayed untouched
        let mut home = NodeState::new(0, s, 0);
        let mut ctg = Catalogue::new();
        insert(&mut home, &mut ctg, &l, ChunkVersion::new(2, 0, 1), 0.5, 0.0).unwrap();
        let out = crp_admit(&mut home, &mut ctg, &l, ChunkVersion::new(3, 0, 1), 1.0, &t, 0.0).unwrap();
        assert_eq!(out.admission, Admission::Relayed(RelayReason::ThresholdStall));
        assert_eq!(home.cached().len(), 1);
    }

    #[test]
    fn crp_oversized_chunk_relayed() {
        let l = ladder();
        let mut home = NodeState::new(0, l.chunk_bytes(1), 0);
        let mut ctg = Catalogue::new();
        let t = table(&[(0, 0, 0.9)]);
        insert(&mut home, &mut ctg, &l, ChunkVersion::new(5, 0, 1), 0.1, 0.0).unwrap();
        let out = crp_admit(&mut home, &mut ctg, &l, ChunkVersion::new(0, 0, 4), 1.0, &t, 0.001).unwrap();
        assert_eq!(out.admission, Admission::Relayed(RelayReason::Oversized));
    }

    #[test]
    fn crp_hit_refreshes_time() {
        let l = ladder();
        let mut home = NodeState::new(0, 10 * l.max_chunk_bytes(), 0);
        let mut ctg = Catalogue::new();
        let t = table(&[(0, 0, 0.9)]);
        let cv = ChunkVersion::new(0, 0, 2);
        crp_admit(&mut home, &mut ctg, &l, cv, 1.0, &t, 0.001).unwrap();
        let out = crp_admit(&mut home, &mut ctg, &l, cv, 7.0, &t, 0.001).unwrap();
        assert_eq!(out.admission, Admission::Refreshed);
        assert_eq!(ctg.entry(&cv, 0).unwrap().last_access, 7.0);
    }

    #[test]
    fn lpc_matches_brute_force() {
        let l = ladder();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut node = NodeState::new(0, 1000 * l.max_chunk_bytes(), 0);
        let mut ctg = Catalogue::new();
        assert_eq!(lpc(&ctg, 0), (None, 0.0));
        for _ in 0..300 {
            let cv = ChunkVersion::new(rng.random_range(0..20), rng.random_range(0..5), rng.random_range(1..=4));
            if !node.contains(&cv) {
                let p = f64::from(rng.random_range(0..6u8)) * 0.01;
                insert(&mut node, &mut ctg, &l, cv, p, 0.0).unwrap();
            }
            let brute = ctg
                .entries()
                .min_by(|a, b| a.popularity.total_cmp(&b.popularity).then(a.cv.cmp(&b.cv)))
                .map(|e| (Some(e.cv), e.popularity))
                .unwrap();
            assert_eq!(lpc(&ctg, 0), brute);
        }
    }

    #[test]
    fn lru_reference_trace() {
        let l = ladder();
        let s = l.chunk_bytes(1);
        let mut node = NodeState::new(0, 3 * s, 0);
        let mut ctg = Catalogue::new();
        let c = |v| ChunkVersion::new(v, 0, 1);
        // (time, video) -> expected evictions, worked out by hand for a 3-slot LRU
        let script: [(f64, u32, &[u32]); 20] = [
            (1.0, 1, &[]),
            (2.0, 2, &[]),
            (3.0, 3, &[]),
            (4.0, 1, &[]),
            (5.0, 4, &[2]),
            (6.0, 3, &[]),
            (7.0, 5, &[1]),
            (8.0, 4, &[]),
            (9.0, 1, &[3]),
            (10.0, 2, &[5]),
            (11.0, 4, &[]),
            (12.0, 6, &[1]),
            (13.0, 2, &[]),
            (14.0, 7, &[4]),
            (15.0, 6, &[]),
            (16.0, 2, &[]),
            (17.0, 8, &[7]),
            (18.0, 6, &[]),
            (19.0, 9, &[2]),
            (20.0, 8, &[]),
        ];
        for (now, video, expected) in script {
            let out = lru_admit(&mut node, &mut ctg, &l, c(video), now, 0.0).unwrap();
            let evicted: Vec<u32> = out.evicted.iter().map(|cv| cv.video).collect();
            assert_eq!(evicted, expected, "at t={now}");
            assert!(capacity_violations(&node, &l).is_empty());
        }
        let left: Vec<u32> = node.cached().iter().map(|cv| cv.video).collect();
        assert_eq!(left, vec![6, 8, 9]);
    }

    #[test]
    fn crp_never_overevicts_and_keeps_minimum_replication() {
        let l = ladder();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let entries: Vec<(u32, usize, f64)> = (0..12)
                .flat_map(|v| (0..3).map(move |c| (v, c, 0.0)))
                .map(|(v, c, _)| (v, c, rng.random_range(0.0..0.02)))
                .collect();
            let t = table(&entries);
            let mut nodes: Vec<NodeState> = (0..3).map(|id| NodeState::new(id, 8 * l.chunk_bytes(2), 0)).collect();
            let mut ctg = Catalogue::new();
            for step in 0..60 {
                let j = rng.random_range(0..3);
                let cv = ChunkVersion::new(rng.random_range(0..12), rng.random_range(0..3), rng.random_range(1..=4));
                let replica = ctg.is_replica_candidate(&cv);
                let replicas_before: Vec<ChunkVersion> = ctg.replicas_by_popularity(j).map(|k| k.cv).collect();
                let out = crp_admit(&mut nodes[j], &mut ctg, &l, cv, f64::from(step), &t, 0.001).unwrap();
                if !out.evicted.is_empty() {
                    let size = l.chunk_bytes(cv.level);
                    let free_before_insert = nodes[j].free_bytes() + size;
                    assert!(free_before_insert - size < l.max_chunk_bytes());
                }
                if replica && out.cached() {
                    // uniques go only after every replica that was cached here
                    let first_unique = out.evicted.iter().position(|e| !replicas_before.contains(e));
                    if let Some(pos) = first_unique {
                        assert_eq!(pos, replicas_before.len());
                    }
                }
                for n in &nodes {
                    assert!(capacity_violations(n, &l).is_empty());
                }
            }
        }
    }

    #[test]
    fn policy_names_round_trip() {
        for kind in PolicyKind::ALL {
            assert_eq!(kind.as_str().parse::<PolicyKind>().unwrap(), kind);
        }
        assert!("lfu".parse::<PolicyKind>().is_err());
    }
}
