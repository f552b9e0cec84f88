//! Shot boundaries from colour-histogram differences between sampled frames,
//! and diverse thumbnail selection inside a step's interval.

mod frames;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Interval;

pub use frames::{load_frame_dir, FrameError, FrameManifest, ManifestEntry, MANIFEST_FILE};

pub const BINS_PER_CHANNEL: usize = 8;
pub const HISTOGRAM_LEN: usize = BINS_PER_CHANNEL * BINS_PER_CHANNEL * BINS_PER_CHANNEL;
pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShotError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("threshold must be in (0, 2], got {0}")]
    InvalidThreshold(f64),
    #[error("candidate count must be at least 1")]
    InvalidCount,
    #[error("no frames inside [{start_s}, {end_s})")]
    NoFramesInInterval { start_s: f64, end_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    pub time_s: f64,
    /// L1-normalized RGB histogram.
    pub feature: Vec<f64>,
    pub image_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotBoundary {
    pub time_s: f64,
    pub score: f64,
}

/// 8x8x8-bin RGB histogram, normalized to sum to one.
pub fn compute_histogram(image: &RgbImage) -> Result<Vec<f64>, ShotError> {
    histogram_from_pixels(image.pixels().map(|p| p.0))
}

pub fn histogram_from_pixels(pixels: impl IntoIterator<Item = [u8; 3]>) -> Result<Vec<f64>, ShotError> {
    let shift = 8 - BINS_PER_CHANNEL.trailing_zeros();
    let mut counts = vec![0u64; HISTOGRAM_LEN];
    let mut total = 0u64;
    for [r, g, b] in pixels {
        let bin = ((r >> shift) as usize * BINS_PER_CHANNEL + (g >> shift) as usize) * BINS_PER_CHANNEL
            + (b >> shift) as usize;
        counts[bin] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(ShotError::EmptyImage);
    }
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Emits a boundary at `samples[i]` whenever the L1 distance to the previous
/// sample's histogram reaches `threshold`.
pub fn detect_boundaries(samples: &[FrameSample], threshold: f64) -> Result<Vec<ShotBoundary>, ShotError> {
    if !(threshold > 0.0 && threshold <= 2.0) {
        return Err(ShotError::InvalidThreshold(threshold));
    }
    Ok(samples
        .windows(2)
        .filter_map(|w| {
            let score = l1_distance(&w[0].feature, &w[1].feature);
            (score >= threshold).then_some(ShotBoundary {
                time_s: w[1].time_s,
                score,
            })
        })
        .collect())
}

/// Up to `k` visually diverse frames from `[start, end)` of `step`.
///
/// The first pick is the frame opening the earliest shot that starts inside
/// the interval, or the frame nearest the midpoint when no cut falls inside.
/// Each further pick maximizes its minimum histogram distance to the frames
/// already picked; ties go to shot-opening frames, then to earlier frames.
pub fn select_thumbnails<'a>(
    step: Interval,
    samples: &'a [FrameSample],
    boundaries: &[ShotBoundary],
    k: usize,
) -> Result<Vec<&'a FrameSample>, ShotError> {
    if k == 0 {
        return Err(ShotError::InvalidCount);
    }
    let inside = |t: f64| t >= step.start_s && t < step.end_s;
    let mut pool: Vec<&FrameSample> = Vec::new();
    for s in samples.iter().filter(|s| inside(s.time_s)) {
        if !pool.iter().any(|p| p.image_ref == s.image_ref) {
            pool.push(s);
        }
    }
    if pool.is_empty() {
        return Err(ShotError::NoFramesInInterval {
            start_s: step.start_s,
            end_s: step.end_s,
        });
    }

    let mut seeded = vec![false; pool.len()];
    let mut first_seed: Option<usize> = None;
    for b in boundaries.iter().filter(|b| inside(b.time_s)) {
        if let Some(i) = pool.iter().position(|p| p.time_s >= b.time_s) {
            seeded[i] = true;
            if first_seed.is_none_or(|f| pool[i].time_s < pool[f].time_s) {
                first_seed = Some(i);
            }
        }
    }
    let midpoint = (step.start_s + step.end_s) / 2.0;
    let mid = (0..pool.len())
        .min_by(|&a, &b| {
            let da = (pool[a].time_s - midpoint).abs();
            let db = (pool[b].time_s - midpoint).abs();
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .expect("pool is non-empty");
    seeded[mid] = true;

    let first = first_seed.unwrap_or(mid);
    let mut chosen = vec![first];
    let mut taken = vec![false; pool.len()];
    taken[first] = true;
    let mut min_dist: Vec<f64> = pool
        .iter()
        .map(|p| l1_distance(&p.feature, &pool[first].feature))
        .collect();

    while chosen.len() < k.min(pool.len()) {
        let mut best: Option<usize> = None;
        for i in (0..pool.len()).filter(|&i| !taken[i]) {
            let better = match best {
                None => true,
                Some(b) => min_dist[i] > min_dist[b] || (min_dist[i] == min_dist[b] && seeded[i] && !seeded[b]),
            };
            if better {
                best = Some(i);
            }
        }
        let pick = best.expect("untaken frames remain");
        taken[pick] = true;
        chosen.push(pick);
        for i in 0..pool.len() {
            min_dist[i] = min_dist[i].min(l1_distance(&pool[i].feature, &pool[pick].feature));
        }
    }
    Ok(chosen.into_iter().map(|i| pool[i]).collect())
}

/// Image references of [`select_thumbnails`].
pub fn thumbnail_candidates(
    step: Interval,
    samples: &[FrameSample],
    boundaries: &[ShotBoundary],
    k: usize,
) -> Result<Vec<String>, ShotError> {
    Ok(select_thumbnails(step, samples, boundaries, k)?
        .into_iter()
        .map(|s| s.image_ref.clone())
        .collect())
}
