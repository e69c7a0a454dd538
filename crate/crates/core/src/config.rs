//! Experiment configuration.
//!
//! Values are layered: built-in defaults, then the TOML file, then
//! command-line overrides (`section.key=value`). Every struct carries
//! `#[serde(default)]`, so a file only lists what it changes. Unknown keys
//! are rejected with their full dotted path.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::policy::{PolicyConfig, PolicyKind};
use crate::popularity::{default_coefficients, CategoryCoeffs};
use crate::seed::derive_seed;
use crate::workload::{BitrateLadder, WorkloadParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessingMode {
    /// Capacity in Mbps; a transcode to level `l` holds `bitrate(l)`.
    Throughput,
    /// Capacity in concurrent transcoding instances; each transcode holds one.
    Instances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub nodes: usize,
    /// Per-node cache size as a fraction of the library bytes (all chunks
    /// at all bitrate levels).
    pub cache_fraction: f64,
    /// Per-node processing capacity, in Mbps or instances depending on `processing_mode`.
    pub processing_capacity: f64,
    pub processing_mode: ProcessingMode,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            nodes: 3,
            cache_fraction: 0.10,
            processing_capacity: 15.0,
            processing_mode: ProcessingMode::Throughput,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderConfig {
    pub original_bitrate_mbps: f64,
    pub level_factors: Vec<f64>,
    pub chunk_duration_s: f64,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            original_bitrate_mbps: 2.0,
            level_factors: vec![0.45, 0.55, 0.67, 0.82],
            chunk_duration_s: 30.0,
        }
    }
}

impl LadderConfig {
    pub fn build(&self) -> Result<BitrateLadder> {
        BitrateLadder::from_factors(self.original_bitrate_mbps, &self.level_factors, self.chunk_duration_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibraryConfig {
    pub videos: usize,
    pub zipf_alpha: f64,
    pub max_chunks: usize,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self {
            videos: 1000,
            zipf_alpha: 0.5,
            max_chunks: 50,
        }
    }
}

/// Uniform access-latency ranges in milliseconds, per delivery source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub home_ms: [f64; 2],
    pub neighbor_ms: [f64; 2],
    pub cloud_ms: [f64; 2],
    /// Fixed delay added to every transcoded delivery (0 by default).
    pub transcode_extra_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            home_ms: [0.25, 0.5],
            neighbor_ms: [1.0, 2.5],
            cloud_ms: [5.0, 10.0],
            transcode_extra_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub cdn_price_per_gb: f64,
    /// Weight of a neighbour fetch per MB moved over the backhaul.
    pub backhaul_per_mb: f64,
    /// Weight of a transcode per Mbps of output bitrate.
    pub transcode_per_mbps: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            cdn_price_per_gb: 0.03,
            backhaul_per_mb: 1.0,
            transcode_per_mbps: 1.0,
        }
    }
}

/// Sweep axes. An empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub cache_fraction: Vec<f64>,
    pub processing_capacity: Vec<f64>,
    pub zipf_alpha: Vec<f64>,
    pub prefetch_window: Vec<usize>,
    pub policy: Vec<PolicyKind>,
}

impl SweepConfig {
    pub fn is_active(&self) -> bool {
        !(self.cache_fraction.is_empty()
            && self.processing_capacity.is_empty()
            && self.zipf_alpha.is_empty()
            && self.prefetch_window.is_empty()
            && self.policy.is_empty())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    /// Assert every cache invariant after each request (slow).
    pub check_invariants: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Number of replicates when `seed_list` is empty.
    pub seeds: usize,
    /// Explicit per-replicate seeds; overrides `seeds` when non-empty.
    pub seed_list: Vec<u64>,
    pub cluster: ClusterConfig,
    pub ladder: LadderConfig,
    pub library: LibraryConfig,
    pub categories: Vec<CategoryCoeffs>,
    pub workload: WorkloadParams,
    pub policy: PolicyConfig,
    pub latency: LatencyModel,
    pub costs: CostConfig,
    pub sweep: SweepConfig,
    pub sim: SimOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 2019,
            seeds: 10,
            seed_list: Vec::new(),
            cluster: ClusterConfig::default(),
            ladder: LadderConfig::default(),
            library: LibraryConfig::default(),
            categories: default_coefficients(),
            workload: WorkloadParams::default(),
            policy: PolicyConfig::default(),
            latency: LatencyModel::default(),
            costs: CostConfig::default(),
            sweep: SweepConfig::default(),
            sim: SimOptions::default(),
        }
    }
}

/// A `dotted.key=value` override. The value is parsed as a TOML literal,
/// falling back to a bare string.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl Override {
    pub fn new(path: &str, value: Value) -> Self {
        Self {
            path: path.split('.').map(str::to_string).collect(),
            value,
        }
    }

    pub fn parse(arg: &str) -> Result<Self> {
        let (key, raw) = arg
            .split_once('=')
            .ok_or_else(|| Error::ConfigParse(format!("override {arg:?} is not key=value")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::ConfigParse(format!("override {arg:?} has an empty key")));
        }
        Ok(Self::new(key, parse_literal(raw.trim())))
    }
}

pub fn parse_literal(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply_override(root: &mut Table, ov: &Override) -> Result<()> {
    let (last, parents) = ov
        .path
        .split_last()
        .ok_or_else(|| Error::ConfigParse("empty override key".into()))?;
    let mut table = root;
    for part in parents {
        let slot = table.entry(part.clone()).or_insert_with(|| Value::Table(Table::new()));
        table = slot.as_table_mut().ok_or_else(|| {
            Error::ConfigParse(format!("override {} crosses non-table key {part}", ov.path.join(".")))
        })?;
    }
    table.insert(last.clone(), ov.value.clone());
    Ok(())
}

/// Dotted paths present in `value` but absent from `known`.
fn unknown_keys(value: &Table, known: &Table, prefix: &str, out: &mut Vec<String>) {
    for (key, v) in value {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match known.get(key) {
            None => out.push(path),
            Some(Value::Table(k)) => {
                if let Value::Table(t) = v {
                    unknown_keys(t, k, &path, out);
                }
            }
            Some(Value::Array(k)) => {
                if let (Value::Array(items), Some(Value::Table(template))) = (v, k.first()) {
                    for (i, item) in items.iter().enumerate() {
                        if let Value::Table(t) = item {
                            unknown_keys(t, template, &format!("{path}[{i}]"), out);
                        }
                    }
                }
            }
            Some(_) => {}
        }
    }
}

impl ExperimentConfig {
    /// Loads defaults, then `path` (if any), then `overrides`, and validates.
    pub fn load(path: Option<&Path>, overrides: &[Override]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p)?,
            None => String::new(),
        };
        let config = Self::from_toml_str(&text, overrides)?;
        let problems = config.validate();
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    /// Parses without semantic validation. Unknown keys are an error.
    pub fn from_toml_str(text: &str, overrides: &[Override]) -> Result<Self> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let unknown = Self::unknown_keys(&table);
        if !unknown.is_empty() {
            return Err(Error::InvalidConfig(
                unknown.into_iter().map(|k| format!("unknown key `{k}`")).collect(),
            ));
        }
        Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))
    }

    fn unknown_keys(table: &Table) -> Vec<String> {
        let known = Value::try_from(Self::default())
            .ok()
            .and_then(|v| v.as_table().cloned())
            .unwrap_or_default();
        let mut out = Vec::new();
        unknown_keys(table, &known, "", &mut out);
        out
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn ladder(&self) -> Result<BitrateLadder> {
        self.ladder.build()
    }

    /// Seeds of the replicates, in replicate order.
    pub fn replicate_seeds(&self) -> Vec<u64> {
        if self.seed_list.is_empty() {
            (0..self.seeds as u64)
                .map(|r| derive_seed(self.master_seed, &[r]))
                .collect()
        } else {
            self.seed_list.clone()
        }
    }

    /// Schema violations; an empty list means the config can run.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let c = &self.cluster;
        if c.nodes == 0 {
            v.push("cluster.nodes must be at least 1".into());
        }
        if !(c.cache_fraction.is_finite() && c.cache_fraction >= 0.0) {
            v.push(format!("cluster.cache_fraction must be >= 0, got {}", c.cache_fraction));
        }
        if !(c.processing_capacity.is_finite() && c.processing_capacity >= 0.0) {
            v.push(format!(
                "cluster.processing_capacity must be >= 0, got {}",
                c.processing_capacity
            ));
        }
        if let Err(Error::InvalidConfig(problems)) = self.ladder.build() {
            v.extend(problems.into_iter().map(|p| format!("ladder: {p}")));
        }
        let lib = &self.library;
        if lib.videos == 0 {
            v.push("library.videos must be at least 1".into());
        }
        if !(lib.zipf_alpha.is_finite() && lib.zipf_alpha >= 0.0) {
            v.push(format!("library.zipf_alpha must be >= 0, got {}", lib.zipf_alpha));
        }
        if lib.max_chunks == 0 {
            v.push("library.max_chunks must be at least 1".into());
        }
        if self.categories.is_empty() {
            v.push("categories must list at least one category".into());
        }
        for cat in &self.categories {
            if cat.params().validate().is_err() {
                v.push(format!(
                    "category {}: alpha and beta must be > 0, gamma finite",
                    cat.name
                ));
            } else if cat.gamma >= 1.0 {
                v.push(format!("category {}: gamma must be below 1", cat.name));
            }
        }
        let w = &self.workload;
        if w.users_per_bs == 0 {
            v.push("workload.users_per_bs must be at least 1".into());
        }
        for (name, value) in [
            ("playback_interarrival_s", w.playback_interarrival_s),
            ("session_mean_s", w.session_mean_s),
            ("idle_mean_s", w.idle_mean_s),
        ] {
            if !(value.is_finite() && value > 0.0) {
                v.push(format!("workload.{name} must be > 0, got {value}"));
            }
        }
        if !(self.policy.threshold.is_finite() && self.policy.threshold >= 0.0) {
            v.push(format!("policy.threshold must be >= 0, got {}", self.policy.threshold));
        }
        let l = &self.latency;
        for (name, [lo, hi]) in [
            ("home_ms", l.home_ms),
            ("neighbor_ms", l.neighbor_ms),
            ("cloud_ms", l.cloud_ms),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                v.push(format!("latency.{name} must satisfy 0 < low < high, got [{lo}, {hi}]"));
            }
        }
        if !(l.transcode_extra_ms.is_finite() && l.transcode_extra_ms >= 0.0) {
            v.push("latency.transcode_extra_ms must be >= 0".into());
        }
        let k = &self.costs;
        for (name, value) in [
            ("cdn_price_per_gb", k.cdn_price_per_gb),
            ("backhaul_per_mb", k.backhaul_per_mb),
            ("transcode_per_mbps", k.transcode_per_mbps),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                v.push(format!("costs.{name} must be >= 0, got {value}"));
            }
        }
        if self.seed_list.is_empty() && self.seeds == 0 {
            v.push("seeds must be at least 1 (or give seed_list)".into());
        }
        let s = &self.sweep;
        if s.cache_fraction.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            v.push("sweep.cache_fraction values must be >= 0".into());
        }
        if s.processing_capacity.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            v.push("sweep.processing_capacity values must be >= 0".into());
        }
        if s.zipf_alpha.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            v.push("sweep.zipf_alpha values must be >= 0".into());
        }
        v
    }

    /// Informational differences from the reference simulation settings.
    pub fn reference_deviations(&self) -> Vec<String> {
        let reference = Self::default();
        let mut d = Vec::new();
        fn check(d: &mut Vec<String>, name: &str, ours: String, theirs: String) {
            if ours != theirs {
                d.push(format!("{name} = {ours} (reference {theirs})"));
            }
        }
        check(
            &mut d,
            "cluster.nodes",
            self.cluster.nodes.to_string(),
            reference.cluster.nodes.to_string(),
        );
        check(
            &mut d,
            "workload.requests_per_bs",
            self.workload.requests_per_bs.to_string(),
            reference.workload.requests_per_bs.to_string(),
        );
        check(
            &mut d,
            "workload.users_per_bs",
            self.workload.users_per_bs.to_string(),
            reference.workload.users_per_bs.to_string(),
        );
        check(
            &mut d,
            "workload.session_mean_s",
            self.workload.session_mean_s.to_string(),
            reference.workload.session_mean_s.to_string(),
        );
        check(
            &mut d,
            "library.videos",
            self.library.videos.to_string(),
            reference.library.videos.to_string(),
        );
        check(
            &mut d,
            "library.zipf_alpha",
            self.library.zipf_alpha.to_string(),
            reference.library.zipf_alpha.to_string(),
        );
        check(
            &mut d,
            "library.max_chunks",
            self.library.max_chunks.to_string(),
            reference.library.max_chunks.to_string(),
        );
        check(
            &mut d,
            "categories",
            format!("{} rows", self.categories.len()),
            format!("{} rows", reference.categories.len()),
        );
        if self.categories != reference.categories && self.categories.len() == reference.categories.len() {
            d.push("categories differ from the default coefficient table".into());
        }
        check(
            &mut d,
            "ladder.level_factors",
            format!("{:?}", self.ladder.level_factors),
            format!("{:?}", reference.ladder.level_factors),
        );
        check(
            &mut d,
            "ladder.chunk_duration_s",
            self.ladder.chunk_duration_s.to_string(),
            reference.ladder.chunk_duration_s.to_string(),
        );
        check(
            &mut d,
            "policy.threshold",
            self.policy.threshold.to_string(),
            reference.policy.threshold.to_string(),
        );
        check(
            &mut d,
            "costs.cdn_price_per_gb",
            self.costs.cdn_price_per_gb.to_string(),
            reference.costs.cdn_price_per_gb.to_string(),
        );
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_reference() {
        let c = ExperimentConfig::default();
        assert!(c.validate().is_empty());
        assert!(c.reference_deviations().is_empty());
        assert_eq!(c.cluster.nodes, 3);
        assert_eq!(c.workload.requests_per_bs, 10_000);
        assert_eq!(c.categories.len(), 14);
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string(), &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_listed() {
        let err = ExperimentConfig::from_toml_str(
            "bogus = 1\n[cluster]\nnodes = 2\nextra = 3\n[[categories]]\nname='x'\nalpha=1.0\nbeta=1.0\ngamma=0.0\nshape=2\n",
            &[],
        )
        .unwrap_err();
        let Error::InvalidConfig(problems) = err else {
            panic!("expected InvalidConfig, got {err}");
        };
        assert!(problems.iter().any(|p| p.contains("`bogus`")));
        assert!(problems.iter().any(|p| p.contains("`cluster.extra`")));
        assert!(problems.iter().any(|p| p.contains("`categories[0].shape`")));
    }

    #[test]
    fn negative_cache_is_a_violation() {
        let c = ExperimentConfig::from_toml_str("[cluster]\ncache_fraction = -0.1\n", &[]).unwrap();
        assert!(c.validate().iter().any(|p| p.contains("cache_fraction")));
    }

    #[test]
    fn precedence_override_file_default() {
        let file = "[cluster]\ncache_fraction = 0.2\nprocessing_capacity = 5.0\n";
        let overrides = [Override::parse("cluster.processing_capacity=30").unwrap()];
        let c = ExperimentConfig::from_toml_str(file, &overrides).unwrap();
        assert_eq!(c.cluster.processing_capacity, 30.0);
        assert_eq!(c.cluster.cache_fraction, 0.2);
        assert_eq!(c.cluster.nodes, 3);
    }

    #[test]
    fn literal_parsing() {
        assert_eq!(parse_literal("3"), Value::Integer(3));
        assert_eq!(parse_literal("0.5"), Value::Float(0.5));
        assert_eq!(parse_literal("jccp"), Value::String("jccp".into()));
        assert_eq!(
            parse_literal("[1, 2]"),
            Value::Array(vec![Value::Integer(1), Value::Integer(2)])
        );
        assert!(Override::parse("novalue").is_err());
    }

    #[test]
    fn replicate_seeds_are_stable() {
        let c = ExperimentConfig::default();
        assert_eq!(c.replicate_seeds().len(), 10);
        assert_eq!(c.replicate_seeds(), c.replicate_seeds());
        let explicit = ExperimentConfig {
            seed_list: vec![5, 6],
            ..Default::default()
        };
        assert_eq!(explicit.replicate_seeds(), vec![5, 6]);
    }
}
