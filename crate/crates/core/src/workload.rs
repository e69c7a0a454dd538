//! Seedable request-stream generation: users, library, sessions, playbacks
//! and the chunk requests they emit.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, Weibull};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::ChunkVersion;
use crate::error::{Error, Result};
use crate::popularity::{zipf_normalizer, CategoryCoeffs, CategoryId, UserPreference, VideoMeta, WeibullParams};
use crate::seed::derive_seed;

/// Bitrate representations of every video, lowest level first. Levels are
/// numbered `1..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BitrateLadder {
    bitrates_mbps: Vec<f64>,
    chunk_duration_s: f64,
    chunk_bytes: Vec<u64>,
}

impl BitrateLadder {
    pub fn new(bitrates_mbps: Vec<f64>, chunk_duration_s: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if bitrates_mbps.is_empty() || bitrates_mbps.len() > u8::MAX as usize {
            problems.push(format!("ladder needs 1..=255 levels, got {}", bitrates_mbps.len()));
        }
        if bitrates_mbps.iter().any(|b| !b.is_finite() || *b <= 0.0) {
            problems.push("ladder bitrates must be positive".to_string());
        }
        if bitrates_mbps.windows(2).any(|w| w[0] >= w[1]) {
            problems.push("ladder bitrates must be strictly increasing".to_string());
        }
        if !chunk_duration_s.is_finite() || chunk_duration_s <= 0.0 {
            problems.push("chunk duration must be positive".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems));
        }
        let chunk_bytes = bitrates_mbps
            .iter()
            .map(|mbps| (mbps * 1e6 * chunk_duration_s / 8.0).round() as u64)
            .collect();
        Ok(Self {
            bitrates_mbps,
            chunk_duration_s,
            chunk_bytes,
        })
    }

    /// Ladder whose levels are fractions of one original bitrate.
    pub fn from_factors(original_mbps: f64, factors: &[f64], chunk_duration_s: f64) -> Result<Self> {
        Self::new(factors.iter().map(|f| f * original_mbps).collect(), chunk_duration_s)
    }

    pub fn levels(&self) -> u8 {
        self.bitrates_mbps.len() as u8
    }

    pub fn top(&self) -> u8 {
        self.levels()
    }

    pub fn contains(&self, level: u8) -> bool {
        level >= 1 && level <= self.levels()
    }

    pub fn chunk_duration_s(&self) -> f64 {
        self.chunk_duration_s
    }

    pub fn bitrate_mbps(&self, level: u8) -> f64 {
        self.bitrates_mbps[level as usize - 1]
    }

    /// Bitrate in whole kbit/s, the unit of the transcoding budget.
    pub fn bitrate_kbps(&self, level: u8) -> u64 {
        (self.bitrate_mbps(level) * 1000.0).round() as u64
    }

    pub fn chunk_bytes(&self, level: u8) -> u64 {
        self.chunk_bytes[level as usize - 1]
    }

    pub fn max_chunk_bytes(&self) -> u64 {
        self.chunk_bytes.last().copied().unwrap_or(0)
    }

    /// Bytes of one chunk stored at every level.
    pub fn all_levels_bytes(&self) -> u64 {
        self.chunk_bytes.iter().sum()
    }
}

impl Default for BitrateLadder {
    fn default() -> Self {
        Self::from_factors(2.0, &[0.45, 0.55, 0.67, 0.82], 30.0).expect("default ladder is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadParams {
    pub users_per_bs: usize,
    /// Chunk requests emitted per base station.
    pub requests_per_bs: usize,
    /// Mean gap between playback starts at one base station.
    pub playback_interarrival_s: f64,
    pub session_mean_s: f64,
    pub idle_mean_s: f64,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        Self {
            users_per_bs: 500,
            requests_per_bs: 10_000,
            playback_interarrival_s: 6.0,
            session_mean_s: 300.0,
            idle_mean_s: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestEvent {
    pub time_s: f64,
    pub bs: usize,
    pub cv: ChunkVersion,
}

/// One viewer playback: chunks `0..=drop_chunk` of `video` at `level`.
#[derive(Debug, Clone, PartialEq)]
pub struct Playback {
    pub start_s: f64,
    pub video: u32,
    pub level: u8,
    pub drop_chunk: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionPlan {
    pub user: usize,
    pub bs: usize,
    pub start_s: f64,
    /// Nominal end, extended to the last chunk request of its playbacks.
    pub end_s: f64,
    pub playbacks: Vec<Playback>,
}

/// Random category preferences, uniform on the simplex, for every user of
/// every base station.
pub fn generate_users(
    bs_count: usize,
    users_per_bs: usize,
    category_count: usize,
    seed: u64,
) -> Vec<Vec<UserPreference>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..bs_count)
        .map(|_| {
            (0..users_per_bs)
                .map(|_| random_simplex_point(&mut rng, category_count))
                .collect()
        })
        .collect()
}

fn random_simplex_point<R: Rng>(rng: &mut R, dims: usize) -> UserPreference {
    loop {
        let draws: Vec<f64> = (0..dims).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            let weights = draws.into_iter().map(|d| d / total).collect();
            if let Ok(p) = UserPreference::new(weights) {
                return p;
            }
        }
    }
}

/// Synthetic library: ranks are a random permutation, categories and chunk
/// counts are uniform, popularity follows the Zipf law on rank.
pub fn generate_library(
    videos: usize,
    zipf_alpha: f64,
    category_count: usize,
    max_chunks: usize,
    seed: u64,
) -> Vec<VideoMeta> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranks: Vec<usize> = (1..=videos).collect();
    ranks.shuffle(&mut rng);
    let norm = zipf_normalizer(videos, zipf_alpha);
    ranks
        .into_iter()
        .enumerate()
        .map(|(id, rank)| VideoMeta {
            id: id as u32,
            category: CategoryId(rng.random_range(0..category_count)),
            chunk_count: rng.random_range(1..=max_chunks),
            zipf_rank: rank,
            popularity: (rank as f64).powf(-zipf_alpha) / norm,
        })
        .collect()
}

/// Samples drop positions from a category's Weibull, truncated to `[0, 1]`
/// by rejection.
#[derive(Debug, Clone, Copy)]
pub struct DropSampler {
    weibull: Weibull<f64>,
    gamma: f64,
}

impl DropSampler {
    const MAX_REJECTIONS: usize = 100_000;

    pub fn new(params: &WeibullParams) -> Result<Self> {
        params.validate()?;
        let weibull = Weibull::new(params.beta, params.alpha).map_err(|_| Error::InvalidWeibull {
            alpha: params.alpha,
            beta: params.beta,
            gamma: params.gamma,
        })?;
        Ok(Self {
            weibull,
            gamma: params.gamma,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        for _ in 0..Self::MAX_REJECTIONS {
            let x = self.gamma + self.weibull.sample(rng);
            if (0.0..=1.0).contains(&x) {
                return x;
            }
        }
        // support (almost) disjoint from [0, 1]
        self.gamma.clamp(0.0, 1.0)
    }
}

/// Last fully watched chunk for a drop at normalized position `drop`.
pub fn drop_chunk_index(drop: f64, chunk_count: usize) -> usize {
    let idx = (drop * chunk_count as f64).ceil() as i64 - 1;
    idx.clamp(0, chunk_count as i64 - 1) as usize
}

/// Two-stage video choice: category from the user's preference, then a
/// video of that category in proportion to its popularity.
#[derive(Debug, Clone)]
pub struct VideoSampler {
    members: Vec<Vec<u32>>,
    within: Vec<Option<WeightedIndex<f64>>>,
}

impl VideoSampler {
    pub fn new(library: &[VideoMeta], category_count: usize) -> Self {
        let mut members = vec![Vec::new(); category_count];
        for video in library {
            members[video.category.0].push(video.id);
        }
        let within = members
            .iter()
            .map(|ids| WeightedIndex::new(ids.iter().map(|&id| library[id as usize].popularity)).ok())
            .collect();
        Self { members, within }
    }

    pub fn category_weights(pref: &UserPreference) -> Option<WeightedIndex<f64>> {
        WeightedIndex::new(pref.weights().iter().copied()).ok()
    }

    pub fn sample_in_category<R: Rng + ?Sized>(&self, rng: &mut R, category: usize) -> Option<u32> {
        let dist = self.within.get(category)?.as_ref()?;
        Some(self.members[category][dist.sample(rng)])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, category_dist: &WeightedIndex<f64>) -> Option<u32> {
        let category = category_dist.sample(rng);
        self.sample_in_category(rng, category)
    }
}

#[derive(Debug, Clone, Copy)]
struct UserActivity {
    active: bool,
    next_toggle: f64,
    session: Option<usize>,
}

/// Plans sessions and playbacks at one base station until at least
/// `requests_per_bs` chunk requests exist.
pub fn plan_sessions(
    bs: usize,
    prefs: &[UserPreference],
    library: &[VideoMeta],
    coeffs: &[CategoryCoeffs],
    ladder: &BitrateLadder,
    params: &WorkloadParams,
    seed: u64,
) -> Result<Vec<SessionPlan>> {
    if prefs.is_empty() {
        return Err(Error::NoUsers);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrivals = Exp::new(1.0 / params.playback_interarrival_s)
        .map_err(|_| Error::InvalidConfig(vec!["playback inter-arrival must be positive".into()]))?;
    let active_len = Exp::new(1.0 / params.session_mean_s)
        .map_err(|_| Error::InvalidConfig(vec!["session mean must be positive".into()]))?;
    let idle_len = Exp::new(1.0 / params.idle_mean_s)
        .map_err(|_| Error::InvalidConfig(vec!["idle mean must be positive".into()]))?;

    let sampler = VideoSampler::new(library, coeffs.len());
    let category_dists: Vec<Option<WeightedIndex<f64>>> = prefs.iter().map(VideoSampler::category_weights).collect();
    let drop_samplers = coeffs
        .iter()
        .map(|c| DropSampler::new(&c.params()))
        .collect::<Result<Vec<_>>>()?;

    let mut sessions: Vec<SessionPlan> = Vec::new();
    let mut users: Vec<UserActivity> = (0..prefs.len())
        .map(|_| {
            let active = rng.random_bool(0.5);
            let len = if active {
                active_len.sample(&mut rng)
            } else {
                idle_len.sample(&mut rng)
            };
            UserActivity {
                active,
                next_toggle: len,
                session: None,
            }
        })
        .collect();
    // sessions already running at t = 0
    for (user, activity) in users.iter_mut().enumerate() {
        if activity.active {
            activity.session = Some(sessions.len());
            sessions.push(SessionPlan {
                user,
                bs,
                start_s: 0.0,
                end_s: activity.next_toggle,
                playbacks: Vec::new(),
            });
        }
    }

    let duration = ladder.chunk_duration_s();
    let mut emitted = 0usize;
    let mut now = 0.0;
    let mut active_ids = Vec::with_capacity(prefs.len());
    while emitted < params.requests_per_bs {
        now += arrivals.sample(&mut rng);
        active_ids.clear();
        for (user, activity) in users.iter_mut().enumerate() {
            while activity.next_toggle <= now {
                let at = activity.next_toggle;
                activity.active = !activity.active;
                if activity.active {
                    activity.next_toggle = at + active_len.sample(&mut rng);
                    activity.session = Some(sessions.len());
                    sessions.push(SessionPlan {
                        user,
                        bs,
                        start_s: at,
                        end_s: activity.next_toggle,
                        playbacks: Vec::new(),
                    });
                } else {
                    activity.next_toggle = at + idle_len.sample(&mut rng);
                    activity.session = None;
                }
            }
            if activity.active {
                active_ids.push(user);
            }
        }
        let Some(&user) = active_ids.get(rng.random_range(0..active_ids.len().max(1))) else {
            continue;
        };
        let Some(category_dist) = &category_dists[user] else {
            continue;
        };
        let Some(video) = sampler.sample(&mut rng, category_dist) else {
            continue;
        };
        let meta = &library[video as usize];
        let level = rng.random_range(1..=ladder.levels());
        let drop = drop_samplers[meta.category.0].sample(&mut rng);
        let mut drop_chunk = drop_chunk_index(drop, meta.chunk_count);
        let remaining = params.requests_per_bs - emitted;
        drop_chunk = drop_chunk.min(remaining - 1);
        emitted += drop_chunk + 1;

        let session = &mut sessions[users[user].session.expect("active user has a session")];
        session.end_s = session.end_s.max(now + drop_chunk as f64 * duration);
        session.playbacks.push(Playback {
            start_s: now,
            video,
            level,
            drop_chunk,
        });
    }
    sessions.retain(|s| !s.playbacks.is_empty());
    Ok(sessions)
}

/// Flattens playbacks into chunk requests paced at the chunk duration and
/// ordered by time.
pub fn session_requests(sessions: &[SessionPlan], ladder: &BitrateLadder) -> Vec<RequestEvent> {
    let mut playbacks: Vec<(usize, &Playback)> = sessions
        .iter()
        .flat_map(|s| s.playbacks.iter().map(move |p| (s.bs, p)))
        .collect();
    playbacks.sort_by(|a, b| a.1.start_s.total_cmp(&b.1.start_s));
    let mut events: Vec<RequestEvent> = playbacks
        .into_iter()
        .flat_map(|(bs, p)| {
            (0..=p.drop_chunk).map(move |chunk| RequestEvent {
                time_s: p.start_s + chunk as f64 * ladder.chunk_duration_s(),
                bs,
                cv: ChunkVersion::new(p.video, chunk, p.level),
            })
        })
        .collect();
    events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    events
}

/// Request streams for every base station; each station draws from its
/// own seed derived from `seed`.
pub fn generate_requests(
    bs_prefs: &[Vec<UserPreference>],
    library: &[VideoMeta],
    coeffs: &[CategoryCoeffs],
    ladder: &BitrateLadder,
    params: &WorkloadParams,
    seed: u64,
) -> Result<Vec<Vec<RequestEvent>>> {
    bs_prefs
        .par_iter()
        .enumerate()
        .map(|(bs, prefs)| {
            let sessions = plan_sessions(
                bs,
                prefs,
                library,
                coeffs,
                ladder,
                params,
                derive_seed(seed, &[bs as u64]),
            )?;
            Ok(session_requests(&sessions, ladder))
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    time_s: f64,
    bs_id: usize,
    video_id: u32,
    chunk_idx: usize,
    level: u8,
}

/// Writes requests as CSV `time_s,bs_id,video_id,chunk_idx,level`.
pub fn write_trace<W: Write>(writer: W, streams: &[Vec<RequestEvent>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for event in streams.iter().flatten() {
        out.serialize(TraceRow {
            time_s: event.time_s,
            bs_id: event.bs,
            video_id: event.cv.video,
            chunk_idx: event.cv.chunk,
            level: event.cv.level,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace<R: std::io::Read>(reader: R) -> Result<Vec<RequestEvent>> {
    let mut input = csv::Reader::from_reader(reader);
    input
        .deserialize::<TraceRow>()
        .map(|row| {
            let row = row?;
            Ok(RequestEvent {
                time_s: row.time_s,
                bs: row.bs_id,
                cv: ChunkVersion::new(row.video_id, row.chunk_idx, row.level),
            })
        })
        .collect()
}
