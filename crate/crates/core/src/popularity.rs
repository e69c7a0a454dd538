//! Viewing model: category preferences, Zipf video popularity, Weibull drop
//! positions and the resulting per-chunk popularity.
//!
//! A chunk's popularity at a base station is the product of three factors:
//! the probability that the station's users ask for the video's category,
//! the probability of picking that video inside its category, and the
//! probability that a viewer who starts the video is still watching when the
//! chunk begins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub usize);

/// Three-parameter Weibull: shape `alpha`, scale `beta`, location `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl WeibullParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let params = Self { alpha, beta, gamma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha.is_finite()
            && self.alpha > 0.0
            && self.beta.is_finite()
            && self.beta > 0.0
            && self.gamma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidWeibull {
                alpha: self.alpha,
                beta: self.beta,
                gamma: self.gamma,
            })
        }
    }

    /// Survival term `exp(-((x - gamma)^+ / beta)^alpha)`.
    fn survival(&self, x: f64) -> f64 {
        let z = (x - self.gamma).max(0.0) / self.beta;
        (-z.powf(self.alpha)).exp()
    }
}

/// One row of the drop-position coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryCoeffs {
    pub name: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl CategoryCoeffs {
    pub fn params(&self) -> WeibullParams {
        WeibullParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }
}

/// Fitted drop-position coefficients for 14 video categories.
pub fn default_coefficients() -> Vec<CategoryCoeffs> {
    const ROWS: [(&str, f64, f64, f64); 14] = [
        ("People", 2.39, 0.56, 0.0023),
        ("Gaming", 1.98, 0.45, 0.0146),
        ("Entertainment", 2.41, 0.56, -0.0064),
        ("News", 4.70, 0.95, -0.298),
        ("Music", 2.45, 0.51, 0.0178),
        ("Sports", 4.34, 0.92, -0.267),
        ("Film", 2.32, 0.62, 0.0205),
        ("Howto", 2.74, 0.52, 0.0153),
        ("Comedy", 2.89, 0.65, -0.0250),
        ("Education", 2.40, 0.54, -0.0104),
        ("Science", 2.53, 0.53, 0.013),
        ("Autos", 2.68, 0.58, 0.0016),
        ("Activism", 2.50, 0.59, -0.0228),
        ("Pets", 3.089, 0.69, -0.066),
    ];
    ROWS.iter()
        .map(|&(name, alpha, beta, gamma)| CategoryCoeffs {
            name: name.to_string(),
            alpha,
            beta,
            gamma,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub id: u32,
    pub category: CategoryId,
    pub chunk_count: usize,
    pub zipf_rank: usize,
    pub popularity: f64,
}

/// A user's probability of requesting each category.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPreference(Vec<f64>);

impl UserPreference {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidPreference("empty vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidPreference(format!("entry {w} is not a probability")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidPreference(format!("entries sum to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(categories: usize) -> Self {
        Self(vec![1.0 / categories as f64; categories])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, category: CategoryId) -> f64 {
        self.0.get(category.0).copied().unwrap_or(0.0)
    }

    /// Moves the mass of categories flagged empty onto the others,
    /// proportionally to the mass they already carry (uniformly if none).
    pub fn without_empty(&self, nonempty: &[bool]) -> Self {
        let kept: f64 = self
            .0
            .iter()
            .zip(nonempty)
            .filter(|(_, &keep)| keep)
            .map(|(w, _)| w)
            .sum();
        let live = nonempty.iter().filter(|&&keep| keep).count();
        if live == 0 {
            return self.clone();
        }
        let weights = self
            .0
            .iter()
            .zip(nonempty)
            .map(|(&w, &keep)| match (keep, kept > 0.0) {
                (false, _) => 0.0,
                (true, true) => w / kept,
                (true, false) => 1.0 / live as f64,
            })
            .collect();
        Self(weights)
    }
}

/// Flags which categories have at least one video in the library.
pub fn nonempty_categories(library: &[VideoMeta], categories: usize) -> Vec<bool> {
    let mut flags = vec![false; categories];
    for video in library {
        if let Some(flag) = flags.get_mut(video.category.0) {
            *flag = true;
        }
    }
    flags
}

pub fn redistribute_empty_categories(prefs: &[UserPreference], library: &[VideoMeta]) -> Vec<UserPreference> {
    let Some(first) = prefs.first() else {
        return Vec::new();
    };
    let nonempty = nonempty_categories(library, first.weights().len());
    prefs.iter().map(|p| p.without_empty(&nonempty)).collect()
}

/// Normalized Zipf mass of `rank` in a library of `library_size` videos.
pub fn zipf_popularity(rank: usize, library_size: usize, alpha: f64) -> Result<f64> {
    if rank == 0 || rank > library_size {
        return Err(Error::RankOutOfRange {
            rank,
            size: library_size,
        });
    }
    Ok((rank as f64).powf(-alpha) / zipf_normalizer(library_size, alpha))
}

pub(crate) fn zipf_normalizer(library_size: usize, alpha: f64) -> f64 {
    (1..=library_size).map(|i| (i as f64).powf(-alpha)).sum()
}

/// Probability that a request at a base station targets `category`.
pub fn category_request_prob(bs_prefs: &[UserPreference], category: CategoryId) -> Result<f64> {
    if bs_prefs.is_empty() {
        return Err(Error::NoUsers);
    }
    let sum: f64 = bs_prefs.iter().map(|p| p.get(category)).sum();
    Ok(sum / bs_prefs.len() as f64)
}

fn category_mass(library: &[VideoMeta], category: CategoryId) -> f64 {
    library
        .iter()
        .filter(|v| v.category == category)
        .map(|v| v.popularity)
        .sum()
}

/// Probability of picking `video` among the videos of `category`.
pub fn video_in_category_prob(video: &VideoMeta, category: CategoryId, library: &[VideoMeta]) -> f64 {
    if video.category != category {
        return 0.0;
    }
    let mass = category_mass(library, category);
    if mass > 0.0 {
        video.popularity / mass
    } else {
        0.0
    }
}

/// Weibull density of the drop position; zero at and below the location.
pub fn drop_pdf(position: f64, params: &WeibullParams) -> f64 {
    if position <= params.gamma {
        return 0.0;
    }
    let z = (position - params.gamma) / params.beta;
    params.alpha / params.beta * z.powf(params.alpha - 1.0) * (-z.powf(params.alpha)).exp()
}

/// Probability that a viewer is still watching at normalized `chunk_position`.
pub fn watch_prob(chunk_position: f64, params: &WeibullParams) -> f64 {
    let p = params.survival(chunk_position) - params.survival(1.0);
    p.clamp(0.0, 1.0)
}

/// Normalized start position of chunk `index` in a `count`-chunk video.
pub fn chunk_position(index: usize, count: usize) -> f64 {
    index as f64 / count as f64
}

pub fn chunk_popularity(
    bs_prefs: &[UserPreference],
    video: &VideoMeta,
    chunk_index: usize,
    library: &[VideoMeta],
    coeffs: &[CategoryCoeffs],
) -> Result<f64> {
    if chunk_index >= video.chunk_count {
        return Err(Error::ChunkOutOfRange {
            video: video.id,
            index: chunk_index,
            count: video.chunk_count,
        });
    }
    let params = coeffs[video.category.0].params();
    let category = category_request_prob(bs_prefs, video.category)?;
    let within = video_in_category_prob(video, video.category, library);
    let watch = watch_prob(chunk_position(chunk_index, video.chunk_count), &params);
    Ok(category * within * watch)
}

/// Chunk popularities at one base station, indexed by video id then chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityTable {
    bs: usize,
    values: Vec<Vec<f64>>,
}

impl PopularityTable {
    /// Builds a table from explicit `(video, chunk, popularity)` entries.
    /// Missing chunks of a video below the highest listed index read as 0.
    pub fn from_entries(bs: usize, entries: impl IntoIterator<Item = (u32, usize, f64)>) -> Self {
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (video, chunk, p) in entries {
            let v = video as usize;
            if values.len() <= v {
                values.resize_with(v + 1, Vec::new);
            }
            let row = &mut values[v];
            if row.len() <= chunk {
                row.resize(chunk + 1, 0.0);
            }
            row[chunk] = p;
        }
        Self { bs, values }
    }

    pub fn bs(&self) -> usize {
        self.bs
    }

    pub fn get(&self, video: u32, chunk: usize) -> f64 {
        self.values
            .get(video as usize)
            .and_then(|row| row.get(chunk))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn video(&self, video: u32) -> &[f64] {
        self.values.get(video as usize).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(v, row)| row.iter().enumerate().map(move |(chunk, &p)| (v as u32, chunk, p)))
    }
}

/// Evaluates [`chunk_popularity`] for every chunk of the library. Videos
/// must be stored at the index equal to their id.
pub fn build_popularity_table(
    bs_id: usize,
    bs_prefs: &[UserPreference],
    library: &[VideoMeta],
    coeffs: &[CategoryCoeffs],
) -> Result<PopularityTable> {
    if bs_prefs.is_empty() {
        return Err(Error::NoUsers);
    }
    let categories = coeffs.len();
    let mut category_probs = Vec::with_capacity(categories);
    let mut masses = Vec::with_capacity(categories);
    for y in 0..categories {
        category_probs.push(category_request_prob(bs_prefs, CategoryId(y))?);
        masses.push(category_mass(library, CategoryId(y)));
    }
    let params: Vec<WeibullParams> = coeffs.iter().map(CategoryCoeffs::params).collect();

    let values = library
        .iter()
        .enumerate()
        .map(|(idx, video)| {
            debug_assert_eq!(idx, video.id as usize, "library must be indexed by video id");
            let y = video.category.0;
            let within = if masses[y] > 0.0 {
                video.popularity / masses[y]
            } else {
                0.0
            };
            (0..video.chunk_count)
                .map(|i| {
                    let watch = watch_prob(chunk_position(i, video.chunk_count), &params[y]);
                    category_probs[y] * within * watch
                })
                .collect()
        })
        .collect();
    Ok(PopularityTable { bs: bs_id, values })
}
