//! Discrete-event loop over the request streams of all base stations.
//!
//! Every request is routed through the serving scenarios (home hit, home
//! transcode, neighbour hit, neighbour transcode, neighbour fetch with local
//! transcode, CDN, CDN fetch with local transcode), the delivered chunk is
//! offered to the home cache, and one [`EventRecord`] is logged. The
//! [`MetricsReport`] is accumulated on the fly and can be rebuilt from the log.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ordered_float::OrderedFloat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{capacity_violations, Catalogue, ChunkVersion, NodeId, NodeState, TranscodeGrant};
use crate::config::{CostConfig, ExperimentConfig, LatencyModel, ProcessingMode};
use crate::error::{Error, Result};
use crate::policy::{crp_admit, lru_admit, pcp_preload, Admission, PolicyKind, PreloadSummary};
use crate::popularity::{build_popularity_table, PopularityTable, UserPreference, VideoMeta};
use crate::seed::derive_seed;
use crate::workload::{generate_library, generate_requests, generate_users, BitrateLadder, RequestEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    HomeHit,
    HomeTranscode,
    NeighborHit,
    NeighborTranscode,
    NeighborFetchLocalTranscode,
    CdnDirect,
    CdnFetchLocalTranscode,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::HomeHit,
        Scenario::HomeTranscode,
        Scenario::NeighborHit,
        Scenario::NeighborTranscode,
        Scenario::NeighborFetchLocalTranscode,
        Scenario::CdnDirect,
        Scenario::CdnFetchLocalTranscode,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::HomeHit => "home_hit",
            Scenario::HomeTranscode => "home_transcode",
            Scenario::NeighborHit => "neighbor_hit",
            Scenario::NeighborTranscode => "neighbor_transcode",
            Scenario::NeighborFetchLocalTranscode => "neighbor_fetch_local_transcode",
            Scenario::CdnDirect => "cdn_direct",
            Scenario::CdnFetchLocalTranscode => "cdn_fetch_local_transcode",
        }
    }

    pub fn is_cdn(self) -> bool {
        matches!(self, Scenario::CdnDirect | Scenario::CdnFetchLocalTranscode)
    }

    pub fn transcodes(self) -> bool {
        matches!(
            self,
            Scenario::HomeTranscode
                | Scenario::NeighborTranscode
                | Scenario::NeighborFetchLocalTranscode
                | Scenario::CdnFetchLocalTranscode
        )
    }

    pub fn source_class(self) -> SourceClass {
        match self {
            Scenario::HomeHit | Scenario::HomeTranscode => SourceClass::Home,
            Scenario::NeighborHit | Scenario::NeighborTranscode | Scenario::NeighborFetchLocalTranscode => {
                SourceClass::Neighbor
            }
            Scenario::CdnDirect | Scenario::CdnFetchLocalTranscode => SourceClass::Cloud,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceClass {
    Home,
    Neighbor,
    Cloud,
}

impl SourceClass {
    pub const ALL: [SourceClass; 3] = [SourceClass::Home, SourceClass::Neighbor, SourceClass::Cloud];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl LatencyModel {
    pub fn range(&self, class: SourceClass) -> [f64; 2] {
        match class {
            SourceClass::Home => self.home_ms,
            SourceClass::Neighbor => self.neighbor_ms,
            SourceClass::Cloud => self.cloud_ms,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, scenario: Scenario) -> f64 {
        let [lo, hi] = self.range(scenario.source_class());
        let extra = if scenario.transcodes() {
            self.transcode_extra_ms
        } else {
            0.0
        };
        rng.random_range(lo..hi) + extra
    }
}

/// Where a chunk was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Node(NodeId),
    Cdn,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Node(n) => write!(f, "{n}"),
            Source::Cdn => f.write_str("cdn"),
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "cdn" {
            Ok(Source::Cdn)
        } else {
            s.parse().map(Source::Node).map_err(|_| format!("bad source {s:?}"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServeDecision {
    pub scenario: Scenario,
    pub source: Source,
    /// Level of the copy that is read (the requested one unless transcoding).
    pub source_level: u8,
    pub transcode_node: Option<NodeId>,
    pub cdn_bytes: u64,
}

/// Backhaul cost of fetching level `level` from a neighbour.
pub fn serve_cost_cb(level: u8, ladder: &BitrateLadder, costs: &CostConfig) -> f64 {
    ladder.chunk_bytes(level) as f64 / 1e6 * costs.backhaul_per_mb
}

/// Cost of producing level `level` by transcoding.
pub fn serve_cost_ct(level: u8, ladder: &BitrateLadder, costs: &CostConfig) -> f64 {
    ladder.bitrate_mbps(level) * costs.transcode_per_mbps
}

/// Which scenarios a strategy may use.
#[derive(Debug, Clone, Copy)]
struct Capabilities {
    neighbor_cache: bool,
    neighbor_transcode: bool,
    cdn_transcode: bool,
}

impl Capabilities {
    fn of(kind: PolicyKind) -> Self {
        match kind {
            PolicyKind::Pccp => Self {
                neighbor_cache: true,
                neighbor_transcode: true,
                cdn_transcode: true,
            },
            PolicyKind::CachePro => Self {
                neighbor_cache: false,
                neighbor_transcode: false,
                cdn_transcode: false,
            },
            PolicyKind::CoCache => Self {
                neighbor_cache: true,
                neighbor_transcode: false,
                cdn_transcode: false,
            },
            PolicyKind::Jccp => Self {
                neighbor_cache: true,
                neighbor_transcode: true,
                cdn_transcode: false,
            },
        }
    }
}

/// Node states plus the shared catalogue.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub nodes: Vec<NodeState>,
    pub catalogue: Catalogue,
    pub ladder: BitrateLadder,
    pub mode: ProcessingMode,
}

impl Cluster {
    pub fn new(nodes: usize, cache_bytes: u64, proc_units: u64, ladder: BitrateLadder, mode: ProcessingMode) -> Self {
        Self {
            nodes: (0..nodes)
                .map(|id| NodeState::new(id, cache_bytes, proc_units))
                .collect(),
            catalogue: Catalogue::new(),
            ladder,
            mode,
        }
    }

    /// Processing units held by one transcode to `level`.
    pub fn transcode_units(&self, level: u8) -> u64 {
        match self.mode {
            ProcessingMode::Throughput => self.ladder.bitrate_kbps(level),
            ProcessingMode::Instances => 1,
        }
    }

    fn can_transcode(&self, node: NodeId, level: u8) -> bool {
        self.nodes[node].can_transcode(self.transcode_units(level))
    }
}

/// Processing units of a node: kbps in throughput mode, instances otherwise.
pub fn processing_units(capacity: f64, mode: ProcessingMode) -> u64 {
    match mode {
        ProcessingMode::Throughput => (capacity * 1000.0).round() as u64,
        ProcessingMode::Instances => capacity.floor() as u64,
    }
}

/// Chooses how to serve `cv` to a viewer at `home`. Pure: the cluster is
/// not modified.
pub fn route_request(
    home: NodeId,
    cv: ChunkVersion,
    cluster: &Cluster,
    kind: PolicyKind,
    costs: &CostConfig,
) -> ServeDecision {
    let caps = Capabilities::of(kind);
    let ladder = &cluster.ladder;
    let l = cv.level;
    let local = |scenario, source_level, transcode_node| ServeDecision {
        scenario,
        source: Source::Node(home),
        source_level,
        transcode_node,
        cdn_bytes: 0,
    };

    if cluster.nodes[home].contains(&cv) {
        return local(Scenario::HomeHit, l, None);
    }

    let exact_neighbors: Vec<NodeId> = if caps.neighbor_cache {
        cluster
            .catalogue
            .lookup_exact(&cv)
            .into_iter()
            .filter(|&n| n != home)
            .collect()
    } else {
        Vec::new()
    };
    let mut higher = cluster.catalogue.lookup_higher(cv.video, cv.chunk, l);
    higher.sort_by_key(|&(node, h)| (h, node));
    let home_higher = higher.iter().find(|&&(n, _)| n == home).map(|&(_, h)| h);

    if let Some(h) = home_higher {
        if cluster.can_transcode(home, l) {
            let neighbor_cheaper = exact_neighbors
                .first()
                .is_some_and(|_| serve_cost_cb(l, ladder, costs) <= serve_cost_ct(l, ladder, costs));
            if !neighbor_cheaper {
                return local(Scenario::HomeTranscode, h, Some(home));
            }
        }
    }

    if let Some(&k) = exact_neighbors.first() {
        return ServeDecision {
            scenario: Scenario::NeighborHit,
            source: Source::Node(k),
            source_level: l,
            transcode_node: None,
            cdn_bytes: 0,
        };
    }

    if caps.neighbor_cache {
        let units = cluster.transcode_units(l);
        let home_free = cluster.nodes[home].proc_free();
        for &(k, h) in higher.iter().filter(|&&(n, _)| n != home) {
            let k_free = cluster.nodes[k].proc_free();
            let at_home = home_free >= units && (home_free > k_free || !caps.neighbor_transcode);
            let at_k = caps.neighbor_transcode && k_free >= units;
            if at_home || at_k {
                let (scenario, node) = if at_home {
                    (Scenario::NeighborFetchLocalTranscode, home)
                } else {
                    (Scenario::NeighborTranscode, k)
                };
                return ServeDecision {
                    scenario,
                    source: Source::Node(k),
                    source_level: h,
                    transcode_node: Some(node),
                    cdn_bytes: 0,
                };
            }
        }
    }

    let top = ladder.top();
    if caps.cdn_transcode && l < top && cluster.can_transcode(home, l) {
        return ServeDecision {
            scenario: Scenario::CdnFetchLocalTranscode,
            source: Source::Cdn,
            source_level: top,
            transcode_node: Some(home),
            cdn_bytes: ladder.chunk_bytes(top),
        };
    }
    ServeDecision {
        scenario: Scenario::CdnDirect,
        source: Source::Cdn,
        source_level: l,
        transcode_node: None,
        cdn_bytes: ladder.chunk_bytes(l),
    }
}

/// One served chunk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time_s: f64,
    pub bs: NodeId,
    pub cv: ChunkVersion,
    pub scenario: Scenario,
    pub source: Source,
    pub delay_ms: f64,
    pub cdn_bytes: u64,
    /// The requested version is cached at the home node after serving.
    pub admitted: bool,
    /// Served ahead of the viewer's request (prefetch or whole-video fetch).
    pub prefetch: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    time_s: f64,
    bs_id: NodeId,
    video_id: u32,
    chunk_idx: usize,
    level: u8,
    scenario: String,
    source_node: String,
    delay_ms: f64,
    cdn_bytes: u64,
    admitted: bool,
    prefetch: bool,
}

/// Writes the per-event log as CSV with columns `time_s, bs_id, video_id,
/// chunk_idx, level, scenario, source_node, delay_ms, cdn_bytes, admitted,
/// prefetch`. `source_node` is a node id or `cdn`.
pub fn write_event_log<W: Write>(writer: W, records: &[EventRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for r in records {
        out.serialize(EventRow {
            time_s: r.time_s,
            bs_id: r.bs,
            video_id: r.cv.video,
            chunk_idx: r.cv.chunk,
            level: r.cv.level,
            scenario: r.scenario.as_str().to_string(),
            source_node: r.source.to_string(),
            delay_ms: r.delay_ms,
            cdn_bytes: r.cdn_bytes,
            admitted: r.admitted,
            prefetch: r.prefetch,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_event_log<R: Read>(reader: R) -> Result<Vec<EventRecord>> {
    let mut input = csv::Reader::from_reader(reader);
    input
        .deserialize::<EventRow>()
        .map(|row| {
            let row = row?;
            Ok(EventRecord {
                time_s: row.time_s,
                bs: row.bs_id,
                cv: ChunkVersion::new(row.video_id, row.chunk_idx, row.level),
                scenario: row.scenario.parse().map_err(Error::ConfigParse)?,
                source: row.source_node.parse().map_err(Error::ConfigParse)?,
                delay_ms: row.delay_ms,
                cdn_bytes: row.cdn_bytes,
                admitted: row.admitted,
                prefetch: row.prefetch,
            })
        })
        .collect()
}

pub fn cdn_cost(bytes: u64, price_per_gb: f64) -> f64 {
    bytes as f64 * price_per_gb / 1e9
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Served chunks, prefetches included.
    pub served: u64,
    pub prefetched: u64,
    pub scenario_counts: [u64; 7],
    pub hit_ratio: f64,
    /// Set when nothing was served and `hit_ratio` is reported as 0.
    pub hit_ratio_undefined: bool,
    pub mean_delay_ms: f64,
    pub cdn_bytes: u64,
    pub cdn_cost: f64,
    /// Delivered bytes by home, neighbour and cloud source.
    pub bytes_by_source: [u64; 3],
    /// One-time pre-load traffic, not part of `cdn_cost`.
    pub preload_bytes: u64,
    pub preload_cost: f64,
}

impl MetricsReport {
    pub fn count(&self, scenario: Scenario) -> u64 {
        self.scenario_counts[scenario.index()]
    }

    pub fn cdn_requests(&self) -> u64 {
        self.count(Scenario::CdnDirect) + self.count(Scenario::CdnFetchLocalTranscode)
    }

    /// Rebuilds the report from a per-event log.
    pub fn from_log(records: &[EventRecord], ladder: &BitrateLadder, price_per_gb: f64, preload_bytes: u64) -> Self {
        let mut acc = MetricsAccumulator::default();
        for r in records {
            acc.record(r, ladder);
        }
        acc.finish(price_per_gb, preload_bytes)
    }
}

#[derive(Debug, Clone, Default)]
struct MetricsAccumulator {
    served: u64,
    prefetched: u64,
    counts: [u64; 7],
    delay_sum: f64,
    cdn_bytes: u64,
    by_source: [u64; 3],
}

impl MetricsAccumulator {
    fn record(&mut self, r: &EventRecord, ladder: &BitrateLadder) {
        self.served += 1;
        self.prefetched += u64::from(r.prefetch);
        self.counts[r.scenario.index()] += 1;
        self.delay_sum += r.delay_ms;
        self.cdn_bytes += r.cdn_bytes;
        self.by_source[r.scenario.source_class().index()] += ladder.chunk_bytes(r.cv.level);
    }

    fn finish(self, price_per_gb: f64, preload_bytes: u64) -> MetricsReport {
        let cdn: u64 = self.counts[Scenario::CdnDirect.index()] + self.counts[Scenario::CdnFetchLocalTranscode.index()];
        let empty = self.served == 0;
        MetricsReport {
            served: self.served,
            prefetched: self.prefetched,
            scenario_counts: self.counts,
            hit_ratio: if empty {
                0.0
            } else {
                1.0 - cdn as f64 / self.served as f64
            },
            hit_ratio_undefined: empty,
            mean_delay_ms: if empty {
                0.0
            } else {
                self.delay_sum / self.served as f64
            },
            cdn_bytes: self.cdn_bytes,
            cdn_cost: cdn_cost(self.cdn_bytes, price_per_gb),
            bytes_by_source: self.by_source,
            preload_bytes,
            preload_cost: cdn_cost(preload_bytes, price_per_gb),
        }
    }
}

/// Everything a run needs that does not depend on the strategy.
#[derive(Debug, Clone)]
pub struct Workload {
    pub ladder: BitrateLadder,
    pub library: Vec<VideoMeta>,
    pub prefs: Vec<Vec<UserPreference>>,
    pub tables: Vec<PopularityTable>,
    /// Requests of all base stations in time order; ties keep station order.
    pub requests: Vec<RequestEvent>,
    pub cache_bytes: u64,
    pub proc_units: u64,
}

impl Workload {
    /// Users, library and requests for `seed`, drawn from independent
    /// sub-seeds so that policies can be compared on the same workload.
    pub fn generate(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        let problems = config.validate();
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems));
        }
        let ladder = config.ladder()?;
        let k = config.cluster.nodes;
        let g = config.categories.len();
        let prefs = generate_users(k, config.workload.users_per_bs, g, derive_seed(seed, &[1]));
        let lib = &config.library;
        let library = generate_library(lib.videos, lib.zipf_alpha, g, lib.max_chunks, derive_seed(seed, &[2]));
        let tables = prefs
            .iter()
            .enumerate()
            .map(|(bs, p)| build_popularity_table(bs, p, &library, &config.categories))
            .collect::<Result<Vec<_>>>()?;
        let requests = if config.workload.requests_per_bs == 0 {
            Vec::new()
        } else {
            let streams = generate_requests(
                &prefs,
                &library,
                &config.categories,
                &ladder,
                &config.workload,
                derive_seed(seed, &[3]),
            )?;
            let mut all: Vec<RequestEvent> = streams.into_iter().flatten().collect();
            all.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
            all
        };
        let mut workload = Self {
            ladder,
            library,
            prefs,
            tables,
            requests,
            cache_bytes: 0,
            proc_units: 0,
        };
        workload.size_cluster(config);
        Ok(workload)
    }

    /// Bytes of every chunk of the library at every level.
    pub fn library_bytes(&self) -> u64 {
        self.library.iter().map(|v| v.chunk_count as u64).sum::<u64>() * self.ladder.all_levels_bytes()
    }

    /// Recomputes per-node cache and processing budgets from `config`.
    pub fn size_cluster(&mut self, config: &ExperimentConfig) {
        self.cache_bytes = (config.cluster.cache_fraction * self.library_bytes() as f64).floor() as u64;
        self.proc_units = processing_units(config.cluster.processing_capacity, config.cluster.processing_mode);
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: MetricsReport,
    pub log: Vec<EventRecord>,
    pub preload: PreloadSummary,
}

/// Runs the strategy selected in `config.policy.kind`.
pub fn run_simulation(config: &ExperimentConfig, seed: u64) -> Result<SimOutput> {
    let workload = Workload::generate(config, seed)?;
    run_workload(config, &workload, seed)
}

/// Runs a baseline strategy on the workload of `config` and `seed`.
pub fn run_baseline(config: &ExperimentConfig, kind: PolicyKind, seed: u64) -> Result<SimOutput> {
    if !kind.is_baseline() {
        return Err(Error::InvalidConfig(vec![format!("{kind} is not a baseline")]));
    }
    let mut config = config.clone();
    config.policy.kind = kind;
    run_simulation(&config, seed)
}

/// Runs `config.policy` on a pre-generated workload.
pub fn run_workload(config: &ExperimentConfig, workload: &Workload, seed: u64) -> Result<SimOutput> {
    let mut sim = Simulation::new(config, workload, seed)?;
    for event in &workload.requests {
        sim.handle(event)?;
    }
    Ok(sim.finish())
}

/// Mutable state of one run.
pub struct Simulation<'a> {
    config: &'a ExperimentConfig,
    workload: &'a Workload,
    cluster: Cluster,
    releases: BinaryHeap<Reverse<(OrderedFloat<f64>, usize)>>,
    grants: Vec<Option<TranscodeGrant>>,
    outstanding: Vec<u64>,
    rng: ChaCha8Rng,
    metrics: MetricsAccumulator,
    log: Vec<EventRecord>,
    preload: PreloadSummary,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a ExperimentConfig, workload: &'a Workload, seed: u64) -> Result<Self> {
        let mut cluster = Cluster::new(
            config.cluster.nodes,
            workload.cache_bytes,
            workload.proc_units,
            workload.ladder.clone(),
            config.cluster.processing_mode,
        );
        let preload = if config.policy.kind == PolicyKind::Pccp {
            pcp_preload(
                &mut cluster.nodes,
                &mut cluster.catalogue,
                &workload.tables,
                &workload.ladder,
            )?
        } else {
            PreloadSummary::default()
        };
        Ok(Self {
            config,
            workload,
            outstanding: vec![0; cluster.nodes.len()],
            cluster,
            releases: BinaryHeap::new(),
            grants: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, &[4])),
            metrics: MetricsAccumulator::default(),
            log: Vec::new(),
            preload,
        })
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn log(&self) -> &[EventRecord] {
        &self.log
    }

    /// Serves one viewer request and any chunks fetched along with it.
    pub fn handle(&mut self, event: &RequestEvent) -> Result<()> {
        self.release_until(event.time_s);
        let cv = event.cv;
        let chunk_count = self.workload.library[cv.video as usize].chunk_count;
        if self.config.policy.kind.is_baseline() {
            if cv.chunk == 0 {
                for idx in 0..chunk_count {
                    self.serve(event.time_s, event.bs, ChunkVersion { chunk: idx, ..cv }, idx > 0)?;
                }
            } else {
                self.serve(event.time_s, event.bs, cv, false)?;
            }
        } else {
            for w in 0..=self.config.policy.prefetch_window {
                let idx = cv.chunk + w;
                if idx >= chunk_count {
                    break;
                }
                self.serve(event.time_s, event.bs, ChunkVersion { chunk: idx, ..cv }, w > 0)?;
            }
        }
        if self.config.sim.check_invariants {
            let problems = self.invariant_violations();
            assert!(
                problems.is_empty(),
                "invariants violated at t={}:\n{}",
                event.time_s,
                problems.join("\n")
            );
        }
        Ok(())
    }

    fn release_until(&mut self, now: f64) {
        while let Some(Reverse((t, seq))) = self.releases.peek().copied() {
            if t.into_inner() > now {
                break;
            }
            self.releases.pop();
            let grant = self.grants[seq].take().expect("each grant is released once");
            self.outstanding[grant.node] -= grant.units;
            self.cluster.nodes[grant.node].release(grant);
        }
    }

    fn serve(&mut self, now: f64, home: NodeId, cv: ChunkVersion, prefetch: bool) -> Result<()> {
        let kind = self.config.policy.kind;
        let decision = route_request(home, cv, &self.cluster, kind, &self.config.costs);

        if let Some(node) = decision.transcode_node {
            let units = self.cluster.transcode_units(cv.level);
            let grant = self.cluster.nodes[node]
                .reserve_transcode(units)
                .expect("routing only transcodes where budget is free");
            self.outstanding[node] += units;
            let seq = self.grants.len();
            self.grants.push(Some(grant));
            let until = now + self.cluster.ladder.chunk_duration_s();
            self.releases.push(Reverse((OrderedFloat(until), seq)));
        }
        if let Source::Node(src) = decision.source {
            if src != home || decision.scenario == Scenario::HomeTranscode {
                let read = cv.at_level(decision.source_level);
                self.cluster.catalogue.touch(&read, src, now)?;
            }
        }

        let admitted = self.admit(home, cv, &decision, now)?;
        let delay_ms = self.config.latency.sample(&mut self.rng, decision.scenario);
        let record = EventRecord {
            time_s: now,
            bs: home,
            cv,
            scenario: decision.scenario,
            source: decision.source,
            delay_ms,
            cdn_bytes: decision.cdn_bytes,
            admitted,
            prefetch,
        };
        self.metrics.record(&record, &self.cluster.ladder);
        self.log.push(record);
        Ok(())
    }

    fn admit(&mut self, home: NodeId, cv: ChunkVersion, decision: &ServeDecision, now: f64) -> Result<bool> {
        let Cluster {
            nodes,
            catalogue,
            ladder,
            ..
        } = &mut self.cluster;
        let node = &mut nodes[home];
        let table = &self.workload.tables[home];
        let outcome = if self.config.policy.kind == PolicyKind::Pccp {
            let th = self.config.policy.threshold;
            if matches!(
                decision.scenario,
                Scenario::NeighborFetchLocalTranscode | Scenario::CdnFetchLocalTranscode
            ) {
                let fetched = cv.at_level(decision.source_level);
                crp_admit(node, catalogue, ladder, fetched, now, table, th)?;
            }
            crp_admit(node, catalogue, ladder, cv, now, table, th)?
        } else {
            let popularity = table.get(cv.video, cv.chunk);
            lru_admit(node, catalogue, ladder, cv, now, popularity)?
        };
        Ok(!matches!(outcome.admission, Admission::Relayed(_)))
    }

    /// Every broken invariant of the current state.
    pub fn invariant_violations(&self) -> Vec<String> {
        let c = &self.cluster;
        let mut problems: Vec<String> = c.nodes.iter().flat_map(|n| capacity_violations(n, &c.ladder)).collect();
        problems.extend(c.catalogue.coherence_violations(&c.nodes));
        problems.extend(c.catalogue.replica_violations());
        for (n, held) in c.nodes.iter().zip(&self.outstanding) {
            if n.proc_free() + held != n.proc_capacity() {
                problems.push(format!(
                    "node {} transcode budget leak: free {} + held {held} != {}",
                    n.id,
                    n.proc_free(),
                    n.proc_capacity()
                ));
            }
        }
        let counted: u64 = self.metrics.counts.iter().sum();
        if counted != self.metrics.served || self.metrics.served != self.log.len() as u64 {
            problems.push(format!(
                "scenario counts {counted} != served {} (log {})",
                self.metrics.served,
                self.log.len()
            ));
        }
        problems
    }

    pub fn finish(self) -> SimOutput {
        let report = self
            .metrics
            .finish(self.config.costs.cdn_price_per_gb, self.preload.total_bytes());
        SimOutput {
            report,
            log: self.log,
            preload: self.preload,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::insert;

    fn cluster(nodes: usize, cache: u64, proc_mbps: f64) -> Cluster {
        Cluster::new(
            nodes,
            cache,
            processing_units(proc_mbps, ProcessingMode::Throughput),
            BitrateLadder::default(),
            ProcessingMode::Throughput,
        )
    }

    fn put(c: &mut Cluster, node: NodeId, cv: ChunkVersion) {
        insert(&mut c.nodes[node], &mut c.catalogue, &c.ladder, cv, 0.1, 0.0).unwrap();
    }

    const BIG: u64 = 100_000_000;

    #[test]
    fn default_costs_prefer_transcoding() {
        let ladder = BitrateLadder::default();
        let costs = CostConfig::default();
        // 3,375,000 bytes at 1 per MB against 0.9 Mbps at 1 per Mbps.
        assert!((serve_cost_cb(1, &ladder, &costs) - 3.375).abs() < 1e-12);
        assert!((serve_cost_ct(1, &ladder, &costs) - 0.9).abs() < 1e-12);
        for l in 1..=4 {
            assert!(serve_cost_ct(l, &ladder, &costs) < serve_cost_cb(l, &ladder, &costs));
        }
    }

    #[test]
    fn home_exact_hit() {
        let mut c = cluster(2, BIG, 15.0);
        let cv = ChunkVersion::new(1, 0, 2);
        put(&mut c, 0, cv);
        let d = route_request(0, cv, &c, PolicyKind::Pccp, &CostConfig::default());
        assert_eq!(d.scenario, Scenario::HomeHit);
        assert_eq!(d.source, Source::Node(0));
        assert_eq!(d.cdn_bytes, 0);
    }

    #[test]
    fn empty_cluster_without_budget_goes_direct() {
        let c = cluster(3, BIG, 0.0);
        let cv = ChunkVersion::new(1, 0, 2);
        let d = route_request(0, cv, &c, PolicyKind::Pccp, &CostConfig::default());
        assert_eq!(d.scenario, Scenario::CdnDirect);
        assert_eq!(d.cdn_bytes, c.ladder.chunk_bytes(2));
        assert_eq!(d.transcode_node, None);
    }

    #[test]
    fn empty_cluster_with_budget_fetches_top() {
        let c = cluster(3, BIG, 15.0);
        let cv = ChunkVersion::new(1, 0, 2);
        let d = route_request(0, cv, &c, PolicyKind::Pccp, &CostConfig::default());
        assert_eq!(d.scenario, Scenario::CdnFetchLocalTranscode);
        assert_eq!(d.source_level, 4);
        assert_eq!(d.cdn_bytes, c.ladder.chunk_bytes(4));
        assert_eq!(d.transcode_node, Some(0));
        // Top level needs no transcode.
        let d = route_request(0, cv.at_level(4), &c, PolicyKind::Pccp, &CostConfig::default());
        assert_eq!(d.scenario, Scenario::CdnDirect);
    }

    #[test]
    fn cost_comparison_between_transcode_and_neighbor() {
        let mut c = cluster(2, BIG, 15.0);
        let cv = ChunkVersion::new(1, 0, 1);
        put(&mut c, 0, cv.at_level(3));
        put(&mut c, 1, cv);
        let mut costs = CostConfig::default();
        let d = route_request(0, cv, &c, PolicyKind::Pccp, &costs);
        assert_eq!(d.scenario, Scenario::HomeTranscode);
        assert_eq!(d.source_level, 3);
        costs.backhaul_per_mb = 0.0;
        let d = route_request(0, cv, &c, PolicyKind::Pccp, &costs);
        assert_eq!(d.scenario, Scenario::NeighborHit);
        costs.backhaul_per_mb = 1.0;
        costs.transcode_per_mbps = 0.0;
        let d = route_request(0, cv, &c, PolicyKind::Pccp, &costs);
        assert_eq!(d.scenario, Scenario::HomeTranscode);
    }

    #[test]
    fn neighbor_higher_version_transcodes_where_budget_is_larger() {
        let mut c = cluster(2, BIG, 15.0);
        let cv = ChunkVersion::new(1, 0, 1);
        put(&mut c, 1, cv.at_level(4));
        // Equal budgets: transcode at the neighbour.
        let d = route_request(0, cv, &c, PolicyKind::Pccp, &CostConfig::default());
        assert_eq!(d.scenario, Scenario::NeighborTranscode);
        assert_eq!(d.transcode_node, Some(1));
        // Busy neighbour: fetch and transcode at home.
        let g = c.nodes[1].reserve_transcode(5000).unwrap();
        let d = route_request(0, cv, &c, PolicyKind::Pccp, &CostConfig::default());
        assert_eq!(d.scenario, Scenario::NeighborFetchLocalTranscode);
        assert_eq!(d.transcode_node, Some(0));
        assert_eq!(d.source, Source::Node(1));
        c.nodes[1].release(g);
        // CoCache only transcodes at home.
        let d = route_request(0, cv, &c, PolicyKind::CoCache, &CostConfig::default());
        assert_eq!(d.scenario, Scenario::NeighborFetchLocalTranscode);
    }

    #[test]
    fn cachepro_never_uses_neighbors() {
        let mut c = cluster(2, BIG, 15.0);
        let cv = ChunkVersion::new(1, 0, 1);
        put(&mut c, 1, cv);
        put(&mut c, 1, cv.at_level(4));
        let d = route_request(0, cv, &c, PolicyKind::CachePro, &CostConfig::default());
        assert_eq!(d.scenario, Scenario::CdnDirect);
        let d = route_request(0, cv, &c, PolicyKind::CoCache, &CostConfig::default());
        assert_eq!(d.scenario, Scenario::NeighborHit);
    }

    #[test]
    fn decision_invariants_hold() {
        let mut c = cluster(3, BIG, 15.0);
        put(&mut c, 1, ChunkVersion::new(0, 0, 4));
        put(&mut c, 2, ChunkVersion::new(0, 1, 2));
        put(&mut c, 0, ChunkVersion::new(0, 2, 3));
        for kind in PolicyKind::ALL {
            for chunk in 0..4 {
                for level in 1..=4 {
                    let d = route_request(0, ChunkVersion::new(0, chunk, level), &c, kind, &CostConfig::default());
                    assert_eq!(d.transcode_node.is_some(), d.scenario.transcodes(), "{d:?}");
                    assert_eq!(d.cdn_bytes > 0, d.scenario.is_cdn(), "{d:?}");
                    if d.scenario.transcodes() {
                        assert!(d.source_level > level);
                    } else {
                        assert_eq!(d.source_level, level);
                    }
                }
            }
        }
    }

    #[test]
    fn latency_samples_stay_in_range() {
        let model = LatencyModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for sc in Scenario::ALL {
            let [lo, hi] = model.range(sc.source_class());
            for _ in 0..200 {
                let d = model.sample(&mut rng, sc);
                assert!(d >= lo && d < hi);
            }
        }
    }

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.library.videos = 60;
        c.library.max_chunks = 12;
        c.workload.users_per_bs = 40;
        c.workload.requests_per_bs = 400;
        c.cluster.cache_fraction = 0.05;
        c
    }

    #[test]
    fn zero_requests_flag_undefined_hit_ratio() {
        let mut c = small_config();
        c.workload.requests_per_bs = 0;
        let out = run_simulation(&c, 1).unwrap();
        assert_eq!(out.report.served, 0);
        assert_eq!(out.report.hit_ratio, 0.0);
        assert!(out.report.hit_ratio_undefined);
    }

    #[test]
    fn report_matches_log_and_csv_round_trip() {
        for kind in PolicyKind::ALL {
            let mut c = small_config();
            c.policy.kind = kind;
            c.policy.prefetch_window = 1;
            c.sim.check_invariants = true;
            let out = run_simulation(&c, 9).unwrap();
            let ladder = c.ladder().unwrap();
            let rebuilt = MetricsReport::from_log(&out.log, &ladder, 0.03, out.preload.total_bytes());
            assert_eq!(rebuilt, out.report);

            let mut buf = Vec::new();
            write_event_log(&mut buf, &out.log).unwrap();
            let back = read_event_log(buf.as_slice()).unwrap();
            assert_eq!(back, out.log);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let c = small_config();
        let a = run_simulation(&c, 5).unwrap();
        let b = run_simulation(&c, 5).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.log, b.log);
        let other = run_simulation(&c, 6).unwrap();
        assert_ne!(a.log, other.log);
    }

    #[test]
    fn baseline_rejects_pccp() {
        assert!(run_baseline(&small_config(), PolicyKind::Pccp, 1).is_err());
    }

    #[test]
    fn baselines_fetch_whole_videos() {
        let c = small_config();
        let out = run_baseline(&c, PolicyKind::CachePro, 3).unwrap();
        assert_eq!(out.report.count(Scenario::NeighborHit), 0);
        assert!(out.report.prefetched > 0);
        assert_eq!(out.preload.total_bytes(), 0);
    }
}
