//! Sweeps over cluster, library and policy settings.
//!
//! Every replicate `r` uses the seed `derive_seed(master_seed, [r])` (or the
//! `r`-th entry of `seed_list`) at every sweep point, so points and policies
//! are compared on identical workloads. Runs execute in parallel; rows are
//! sorted by sweep point, policy and replicate before they are written.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::sim::{run_workload, write_event_log, EventRecord, MetricsReport, Scenario, Workload};

/// Coordinates of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub policy: PolicyKind,
    pub cache_fraction: f64,
    pub processing_capacity: f64,
    pub zipf_alpha: f64,
    pub prefetch_window: usize,
}

impl SweepPoint {
    fn sort_key(&self) -> (u64, u64, u64, usize, usize) {
        let policy = PolicyKind::ALL.iter().position(|&p| p == self.policy).unwrap_or(0);
        (
            self.cache_fraction.to_bits(),
            self.processing_capacity.to_bits(),
            self.zipf_alpha.to_bits(),
            self.prefetch_window,
            policy,
        )
    }

    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = base.clone();
        c.policy.kind = self.policy;
        c.cluster.cache_fraction = self.cache_fraction;
        c.cluster.processing_capacity = self.processing_capacity;
        c.library.zipf_alpha = self.zipf_alpha;
        c.policy.prefetch_window = self.prefetch_window;
        c
    }

    /// File-name stem, e.g. `pccp_cf0.1_pc15_za0.5_wd0`.
    pub fn label(&self) -> String {
        format!(
            "{}_cf{}_pc{}_za{}_wd{}",
            self.policy, self.cache_fraction, self.processing_capacity, self.zipf_alpha, self.prefetch_window
        )
    }
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Cartesian product of the sweep axes, in output order.
pub fn sweep_points(config: &ExperimentConfig) -> Vec<SweepPoint> {
    let s = &config.sweep;
    let mut points = Vec::new();
    for &cache_fraction in &axis(&s.cache_fraction, config.cluster.cache_fraction) {
        for &processing_capacity in &axis(&s.processing_capacity, config.cluster.processing_capacity) {
            for &zipf_alpha in &axis(&s.zipf_alpha, config.library.zipf_alpha) {
                for &prefetch_window in &axis(&s.prefetch_window, config.policy.prefetch_window) {
                    for &policy in &axis(&s.policy, config.policy.kind) {
                        points.push(SweepPoint {
                            policy,
                            cache_fraction,
                            processing_capacity,
                            zipf_alpha,
                            prefetch_window,
                        });
                    }
                }
            }
        }
    }
    points.sort_by_key(SweepPoint::sort_key);
    points.dedup_by_key(|p| p.sort_key());
    points
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub point: SweepPoint,
    pub replicate: usize,
    pub seed: u64,
    pub report: MetricsReport,
    pub log: Option<Vec<EventRecord>>,
}

/// Runs every sweep point for every replicate on up to `jobs` threads
/// (0 means all cores). Results come back in output order.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize, keep_logs: bool) -> Result<Vec<RunResult>> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems));
    }
    let points = sweep_points(config);
    let seeds = config.replicate_seeds();
    let mut alphas: Vec<f64> = points.iter().map(|p| p.zipf_alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let groups: Vec<(f64, usize, u64)> = alphas
        .iter()
        .flat_map(|&a| seeds.iter().enumerate().map(move |(r, &s)| (a, r, s)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(vec![format!("cannot start {jobs} worker threads: {e}")]))?;
    let nested: Vec<Vec<RunResult>> = pool.install(|| {
        groups
            .par_iter()
            .map(|&(alpha, replicate, seed)| {
                let mut lib_config = config.clone();
                lib_config.library.zipf_alpha = alpha;
                let base = Workload::generate(&lib_config, seed)?;
                points
                    .par_iter()
                    .filter(|p| p.zipf_alpha.to_bits() == alpha.to_bits())
                    .map(|point| {
                        let run_config = point.apply(config);
                        let mut workload = base.clone();
                        workload.size_cluster(&run_config);
                        let out = run_workload(&run_config, &workload, seed)?;
                        Ok(RunResult {
                            point: *point,
                            replicate,
                            seed,
                            report: out.report,
                            log: keep_logs.then_some(out.log),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut results: Vec<RunResult> = nested.into_iter().flatten().collect();
    results.sort_by_key(|r| (r.point.sort_key(), r.replicate));
    Ok(results)
}

/// One row of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub policy: PolicyKind,
    pub cache_fraction: f64,
    pub processing_capacity: f64,
    pub zipf_alpha: f64,
    pub prefetch_window: usize,
    pub replicate: usize,
    pub seed: u64,
    pub served: u64,
    pub prefetched: u64,
    pub hit_ratio: f64,
    pub hit_ratio_undefined: bool,
    pub mean_delay_ms: f64,
    pub cdn_bytes: u64,
    pub cdn_cost: f64,
    pub preload_bytes: u64,
    pub preload_cost: f64,
    pub home_hit: u64,
    pub home_transcode: u64,
    pub neighbor_hit: u64,
    pub neighbor_transcode: u64,
    pub neighbor_fetch_local_transcode: u64,
    pub cdn_direct: u64,
    pub cdn_fetch_local_transcode: u64,
    pub bytes_home: u64,
    pub bytes_neighbor: u64,
    pub bytes_cloud: u64,
}

impl From<&RunResult> for RunRow {
    fn from(r: &RunResult) -> Self {
        let m = &r.report;
        Self {
            policy: r.point.policy,
            cache_fraction: r.point.cache_fraction,
            processing_capacity: r.point.processing_capacity,
            zipf_alpha: r.point.zipf_alpha,
            prefetch_window: r.point.prefetch_window,
            replicate: r.replicate,
            seed: r.seed,
            served: m.served,
            prefetched: m.prefetched,
            hit_ratio: m.hit_ratio,
            hit_ratio_undefined: m.hit_ratio_undefined,
            mean_delay_ms: m.mean_delay_ms,
            cdn_bytes: m.cdn_bytes,
            cdn_cost: m.cdn_cost,
            preload_bytes: m.preload_bytes,
            preload_cost: m.preload_cost,
            home_hit: m.count(Scenario::HomeHit),
            home_transcode: m.count(Scenario::HomeTranscode),
            neighbor_hit: m.count(Scenario::NeighborHit),
            neighbor_transcode: m.count(Scenario::NeighborTranscode),
            neighbor_fetch_local_transcode: m.count(Scenario::NeighborFetchLocalTranscode),
            cdn_direct: m.count(Scenario::CdnDirect),
            cdn_fetch_local_transcode: m.count(Scenario::CdnFetchLocalTranscode),
            bytes_home: m.bytes_by_source[0],
            bytes_neighbor: m.bytes_by_source[1],
            bytes_cloud: m.bytes_by_source[2],
        }
    }
}

/// One row of `summary.csv`: replicate mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub policy: PolicyKind,
    pub cache_fraction: f64,
    pub processing_capacity: f64,
    pub zipf_alpha: f64,
    pub prefetch_window: usize,
    pub runs: usize,
    pub hit_ratio_mean: f64,
    pub hit_ratio_std: f64,
    pub mean_delay_ms_mean: f64,
    pub mean_delay_ms_std: f64,
    pub cdn_cost_mean: f64,
    pub cdn_cost_std: f64,
    pub preload_cost_mean: f64,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Groups results (already in output order) by sweep point.
pub fn summarize(results: &[RunResult]) -> Vec<SummaryRow> {
    results
        .chunk_by(|a, b| a.point.sort_key() == b.point.sort_key())
        .map(|group| {
            let p = group[0].point;
            let pick = |f: fn(&MetricsReport) -> f64| group.iter().map(|r| f(&r.report)).collect::<Vec<_>>();
            let (hit_ratio_mean, hit_ratio_std) = mean_std(&pick(|m| m.hit_ratio));
            let (mean_delay_ms_mean, mean_delay_ms_std) = mean_std(&pick(|m| m.mean_delay_ms));
            let (cdn_cost_mean, cdn_cost_std) = mean_std(&pick(|m| m.cdn_cost));
            let (preload_cost_mean, _) = mean_std(&pick(|m| m.preload_cost));
            SummaryRow {
                policy: p.policy,
                cache_fraction: p.cache_fraction,
                processing_capacity: p.processing_capacity,
                zipf_alpha: p.zipf_alpha,
                prefetch_window: p.prefetch_window,
                runs: group.len(),
                hit_ratio_mean,
                hit_ratio_std,
                mean_delay_ms_mean,
                mean_delay_ms_std,
                cdn_cost_mean,
                cdn_cost_std,
                preload_cost_mean,
            }
        })
        .collect()
}

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const EVENTS_DIR: &str = "events";

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `runs.csv`, `summary.csv`, the resolved `config.toml` and, for
/// runs that kept their logs, `events/<point>_r<replicate>.csv`. Refuses to
/// replace existing files unless `overwrite` is set.
pub fn write_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    results: &[RunResult],
    overwrite: bool,
) -> Result<Vec<PathBuf>> {
    let mut targets = vec![dir.join(RUNS_FILE), dir.join(SUMMARY_FILE), dir.join(CONFIG_FILE)];
    let logs: Vec<(PathBuf, &[EventRecord])> = results
        .iter()
        .filter_map(|r| {
            r.log.as_deref().map(|log| {
                let name = format!("{}_r{}.csv", r.point.label(), r.replicate);
                (dir.join(EVENTS_DIR).join(name), log)
            })
        })
        .collect();
    targets.extend(logs.iter().map(|(p, _)| p.clone()));
    if !overwrite {
        if let Some(existing) = targets.iter().find(|p| p.exists()) {
            return Err(Error::OutputExists(existing.clone()));
        }
    }
    fs::create_dir_all(dir)?;
    let rows: Vec<RunRow> = results.iter().map(RunRow::from).collect();
    write_csv(&targets[0], &rows)?;
    write_csv(&targets[1], &summarize(results))?;
    fs::write(&targets[2], config.to_toml_string())?;
    if !logs.is_empty() {
        fs::create_dir_all(dir.join(EVENTS_DIR))?;
        for (path, log) in &logs {
            write_event_log(BufWriter::new(File::create(path)?), log)?;
        }
    }
    Ok(targets)
}
