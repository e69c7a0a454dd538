use edgesim::config::ExperimentConfig;
use edgesim::policy::PolicyKind;
use edgesim::seed::derive_seed;
use edgesim::sim::{read_event_log, run_simulation, write_event_log, MetricsReport, Scenario, SourceClass};

fn small() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.library.videos = 200;
    c.library.max_chunks = 20;
    c.workload.users_per_bs = 100;
    c.workload.requests_per_bs = 3000;
    c
}

fn with_policy(mut c: ExperimentConfig, kind: PolicyKind) -> ExperimentConfig {
    c.policy.kind = kind;
    c
}

fn seeds(n: u64) -> impl Iterator<Item = u64> {
    (0..n).map(|r| derive_seed(2019, &[r]))
}

#[test]
fn delays_fall_in_their_source_range() {
    let mut base = small();
    base.latency.transcode_extra_ms = 0.75;
    for kind in PolicyKind::ALL {
        let c = with_policy(base.clone(), kind);
        let out = run_simulation(&c, 3).unwrap();
        assert!(!out.log.is_empty());
        for r in &out.log {
            let class = r.scenario.source_class();
            let [lo, hi] = c.latency.range(class);
            let extra = if r.scenario.transcodes() {
                c.latency.transcode_extra_ms
            } else {
                0.0
            };
            assert!(
                r.delay_ms >= lo + extra && r.delay_ms <= hi + extra,
                "{kind}: {:?} took {} ms",
                r.scenario,
                r.delay_ms
            );
        }
        // Disjoint ranges order the sources.
        let max_of = |cl: SourceClass| {
            out.log
                .iter()
                .filter(|r| r.scenario.source_class() == cl && !r.scenario.transcodes())
                .map(|r| r.delay_ms)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let min_of = |cl: SourceClass| {
            out.log
                .iter()
                .filter(|r| r.scenario.source_class() == cl && !r.scenario.transcodes())
                .map(|r| r.delay_ms)
                .fold(f64::INFINITY, f64::min)
        };
        assert!(max_of(SourceClass::Home) <= min_of(SourceClass::Neighbor));
        assert!(max_of(SourceClass::Neighbor) <= min_of(SourceClass::Cloud));
    }
}

#[test]
fn prefetch_dominates_on_paired_seeds() {
    // Reference settings; with a small library the extra transcodes can
    // outweigh the gain.
    let base = ExperimentConfig::default();
    let mut ahead = base.clone();
    ahead.policy.prefetch_window = 1;
    let (mut hit0, mut hit1, mut bytes0, mut bytes1) = (0.0, 0.0, 0u64, 0u64);
    for seed in seeds(5) {
        let a = run_simulation(&base, seed).unwrap().report;
        let b = run_simulation(&ahead, seed).unwrap().report;
        hit0 += a.hit_ratio;
        hit1 += b.hit_ratio;
        bytes0 += a.cdn_bytes;
        bytes1 += b.cdn_bytes;
        assert!(b.prefetched > 0);
        assert_eq!(a.prefetched, 0);
    }
    assert!(hit1 >= hit0, "prefetch hit ratio {hit1} vs {hit0}");
    // Chunks fetched ahead but never watched still cost.
    assert!(bytes1 >= bytes0, "prefetch cdn bytes {bytes1} vs {bytes0}");
}

#[test]
fn neighbor_cache_beats_isolated_cache() {
    let base = small();
    let (mut pro, mut co) = (0.0, 0.0);
    for seed in seeds(10) {
        pro += run_simulation(&with_policy(base.clone(), PolicyKind::CachePro), seed)
            .unwrap()
            .report
            .hit_ratio;
        co += run_simulation(&with_policy(base.clone(), PolicyKind::CoCache), seed)
            .unwrap()
            .report
            .hit_ratio;
    }
    assert!(co >= pro, "cocache {co} < cachepro {pro}");
}

#[test]
fn jccp_with_unbounded_cache_hits_after_warm_up() {
    let mut c = with_policy(small(), PolicyKind::Jccp);
    c.library.videos = 40;
    c.library.max_chunks = 10;
    c.cluster.cache_fraction = 1.0;
    c.cluster.processing_capacity = 1e6;
    c.workload.requests_per_bs = 6000;
    let out = run_simulation(&c, 9).unwrap();
    let viewer: Vec<_> = out.log.iter().filter(|r| !r.prefetch).collect();
    let tail = &viewer[viewer.len() / 2..];
    let hits = tail.iter().filter(|r| !r.scenario.is_cdn()).count();
    let ratio = hits as f64 / tail.len() as f64;
    assert!(ratio > 0.97, "late viewer hit ratio {ratio}");
}

#[test]
fn no_cache_no_processing_goes_to_cdn() {
    let mut c = small();
    c.cluster.cache_fraction = 0.0;
    c.cluster.processing_capacity = 0.0;
    for kind in PolicyKind::ALL {
        let c = with_policy(c.clone(), kind);
        let out = run_simulation(&c, 4).unwrap();
        let r = &out.report;
        assert_eq!(r.count(Scenario::CdnDirect), r.served);
        assert_eq!(r.hit_ratio, 0.0);
        let ladder = c.ladder.build().unwrap();
        let bytes: u64 = out.log.iter().map(|e| ladder.chunk_bytes(e.cv.level)).sum();
        assert_eq!(r.cdn_bytes, bytes);
        assert_eq!(r.preload_bytes, 0);
    }
}

#[test]
fn replayed_log_reproduces_report() {
    for kind in PolicyKind::ALL {
        let c = with_policy(small(), kind);
        let out = run_simulation(&c, 5).unwrap();
        let mut buf = Vec::new();
        write_event_log(&mut buf, &out.log).unwrap();
        let back = read_event_log(buf.as_slice()).unwrap();
        let ladder = c.ladder.build().unwrap();
        let replay = MetricsReport::from_log(&back, &ladder, c.costs.cdn_price_per_gb, out.report.preload_bytes);
        assert_eq!(replay, out.report, "{kind}");
    }
}
