use rand::Rng;
use rayon::prelude::*;

use crate::imgcore::{GrayImage, Window};
use crate::rng;

use super::{Cascade, Outcome, TrainError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiningConfig {
    /// Windows to keep.
    pub count: usize,
    /// Smallest window side drawn.
    pub min_size: i32,
    /// Largest window side drawn; further capped by each image's dimensions.
    pub max_size: i32,
    /// Draws allowed before giving up.
    pub max_draws: u64,
}

/// A background window that survived the cascade it was mined against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinedWindow {
    /// Index into the background image list.
    pub image: usize,
    pub window: Window,
    /// Accumulated score under the mining cascade.
    pub score: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiningResult {
    pub negatives: Vec<MinedWindow>,
    pub drawn: u64,
    /// The draw budget ran out before `count` windows were kept.
    pub exhausted: bool,
}

impl MiningResult {
    /// Kept / drawn: the cascade's false-positive rate on random windows.
    pub fn acceptance_ratio(&self) -> f64 {
        if self.drawn == 0 {
            0.0
        } else {
            self.negatives.len() as f64 / self.drawn as f64
        }
    }
}

const BATCH: u64 = 1024;
const BATCHES_PER_ROUND: u64 = 64;

/// Draws one window: image uniform over `usable`, side log-uniform over the
/// size range (capped by the image), top-left uniform over valid positions.
fn draw_window<R: Rng>(
    rng: &mut R,
    backgrounds: &[GrayImage],
    usable: &[usize],
    cfg: &MiningConfig,
) -> (usize, Window) {
    let image = usable[rng.random_range(0..usable.len())];
    let img = &backgrounds[image];
    let cap = cfg.max_size.min(img.width() as i32).min(img.height() as i32);
    let (lo, hi) = ((cfg.min_size as f64).ln(), (cap as f64).ln());
    let size = if hi > lo {
        (rng.random_range(lo..=hi).exp().round() as i32).clamp(cfg.min_size, cap)
    } else {
        cfg.min_size
    };
    let top = rng.random_range(0..=img.height() as i32 - size);
    let left = rng.random_range(0..=img.width() as i32 - size);
    (image, Window::from_top_left(top, left, size))
}

/// Collects background windows that `cascade` does not reject.
///
/// Draws are made in fixed-size batches, each from its own substream of
/// `(seed, stream)`, and scored in parallel; kept windows are merged in
/// draw order, so the result does not depend on thread count. `drawn`
/// counts draws up to and including the one that filled the quota.
pub fn mine_negatives(
    cascade: &Cascade,
    backgrounds: &[GrayImage],
    cfg: &MiningConfig,
    seed: u64,
    stream: u64,
) -> Result<MiningResult, TrainError> {
    if cfg.count == 0 || cfg.min_size < 1 || cfg.max_size < cfg.min_size {
        return Err(TrainError::Config(format!("invalid mining configuration {cfg:?}")));
    }
    let usable: Vec<usize> = backgrounds
        .iter()
        .enumerate()
        .filter(|(_, img)| img.width().min(img.height()) as i64 >= cfg.min_size as i64)
        .map(|(i, _)| i)
        .collect();
    if usable.is_empty() {
        return Err(TrainError::NoUsableBackground { min_size: cfg.min_size });
    }

    let mut negatives = Vec::with_capacity(cfg.count);
    let mut drawn = 0u64;
    let total_batches = cfg.max_draws.div_ceil(BATCH);
    let mut next_batch = 0u64;
    while next_batch < total_batches && negatives.len() < cfg.count {
        let end = (next_batch + BATCHES_PER_ROUND).min(total_batches);
        let kept: Vec<Vec<(u64, MinedWindow)>> = (next_batch..end)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng::substream(seed, &[0x6d69_6e65, stream, b]);
                let first = b * BATCH;
                let last = (first + BATCH).min(cfg.max_draws);
                (first..last)
                    .filter_map(|draw| {
                        let (image, window) = draw_window(&mut rng, backgrounds, &usable, cfg);
                        match cascade.classify(&backgrounds[image], &window) {
                            Outcome::Accepted { score } => Some((draw, MinedWindow { image, window, score })),
                            Outcome::Rejected { .. } => None,
                        }
                    })
                    .collect()
            })
            .collect();
        drawn = (end * BATCH).min(cfg.max_draws);
        for (draw, mined) in kept.into_iter().flatten() {
            negatives.push(mined);
            if negatives.len() == cfg.count {
                drawn = draw + 1;
                break;
            }
        }
        next_batch = end;
    }
    let exhausted = negatives.len() < cfg.count;
    Ok(MiningResult {
        negatives,
        drawn,
        exhausted,
    })
}
