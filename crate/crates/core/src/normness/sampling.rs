use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{NormDimension, NormnessError};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertRating {
    pub comment_id: String,
    pub community: String,
    pub dimension: NormDimension,
    pub rating: u8,
}

impl LikertRating {
    pub fn new(
        comment_id: impl Into<String>,
        community: impl Into<String>,
        dimension: NormDimension,
        rating: u8,
    ) -> Result<Self, NormnessError> {
        if !(1..=5).contains(&rating) {
            return Err(NormnessError::InvalidParameter(format!(
                "rating {rating} outside 1..5"
            )));
        }
        Ok(LikertRating {
            comment_id: comment_id.into(),
            community: community.into(),
            dimension,
            rating,
        })
    }
}

/// A stratum that held fewer comments than requested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub community: String,
    pub scale: u8,
    pub available: usize,
    pub requested: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratifiedSample {
    /// Sampled ids grouped by community, then scale point 1..5.
    pub ids: Vec<String>,
    pub shortfalls: Vec<Shortfall>,
}

/// Draws up to `k_per_scale` comments per (community, scale point) without
/// replacement.
///
/// All ratings must share one dimension. Each stratum is sorted before the
/// seeded shuffle, so input order does not matter.
pub fn stratified_sample(
    ratings: &[LikertRating],
    k_per_scale: usize,
    seed: u64,
) -> Result<StratifiedSample, NormnessError> {
    if k_per_scale == 0 {
        return Err(NormnessError::InvalidParameter(
            "k_per_scale must be positive".into(),
        ));
    }
    let dims: BTreeSet<NormDimension> = ratings.iter().map(|r| r.dimension).collect();
    if dims.len() > 1 {
        return Err(NormnessError::InvalidParameter(format!(
            "ratings mix {} dimensions",
            dims.len()
        )));
    }
    let mut strata: BTreeMap<&str, BTreeMap<u8, BTreeSet<&str>>> = BTreeMap::new();
    for r in ratings {
        if !(1..=5).contains(&r.rating) {
            return Err(NormnessError::InvalidParameter(format!(
                "rating {} outside 1..5",
                r.rating
            )));
        }
        strata
            .entry(&r.community)
            .or_default()
            .entry(r.rating)
            .or_default()
            .insert(&r.comment_id);
    }

    let mut ids = Vec::new();
    let mut shortfalls = Vec::new();
    for (community, by_scale) in &strata {
        for scale in 1..=5u8 {
            let mut pool: Vec<&str> = by_scale
                .get(&scale)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
            if pool.len() < k_per_scale {
                shortfalls.push(Shortfall {
                    community: community.to_string(),
                    scale,
                    available: pool.len(),
                    requested: k_per_scale,
                });
            }
            let mut rng = seed::rng(seed, &format!("stratum/{community}/{scale}"), 0);
            pool.shuffle(&mut rng);
            ids.extend(pool.into_iter().take(k_per_scale).map(str::to_owned));
        }
    }
    Ok(StratifiedSample { ids, shortfalls })
}

/// Maps a linear index in `0..C(n,2)` to the pair `(i, j)`, `i < j`, in
/// row-major order.
fn decode_pair(k: usize, n: usize) -> (usize, usize) {
    let offset = |i: usize| i * (2 * n - i - 1) / 2;
    let (mut lo, mut hi) = (0, n - 1);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if offset(mid) <= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, lo + 1 + (k - offset(lo)))
}

/// Draws `m` distinct unordered pairs from `comments`.
///
/// Pairs come back ordered by their position in `comments`.
pub fn sample_pairs(
    comments: &[String],
    m: usize,
    seed: u64,
) -> Result<Vec<(String, String)>, NormnessError> {
    let unique: BTreeSet<&String> = comments.iter().collect();
    if unique.len() != comments.len() {
        return Err(NormnessError::InvalidParameter(
            "duplicate comment ids".into(),
        ));
    }
    let n = comments.len();
    let total = n * n.saturating_sub(1) / 2;
    if m > total {
        return Err(NormnessError::InvalidParameter(format!(
            "{m} pairs requested but only {total} exist"
        )));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut rng = seed::rng(seed, "pairs", 0);
    let mut picked = rand::seq::index::sample(&mut rng, total, m).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|k| {
            let (i, j) = decode_pair(k, n);
            (comments[i].clone(), comments[j].clone())
        })
        .collect())
}
