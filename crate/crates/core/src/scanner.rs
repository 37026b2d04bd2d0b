//! Multi-scale, multi-position, multi-orientation sliding-window scanning.
//!
//! The image is never resampled: larger windows simply map the same
//! normalized test coordinates onto more pixels, and rotations are handled
//! by scanning with pre-rotated copies of the cascade.

use rayon::prelude::*;

use crate::cascade::{Cascade, Outcome};
use crate::cluster::{cluster_detections, FinalDetection, DEFAULT_OVERLAP};
use crate::imgcore::{GrayImage, OrientationTable, Window};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanParams {
    pub min_size: i32,
    /// Largest window side; `None` means limited only by the image.
    pub max_size: Option<i32>,
    pub scale_factor: f64,
    /// Step between neighbouring windows as a fraction of the window side.
    pub stride_factor: f64,
    pub orientations: usize,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            min_size: 24,
            max_size: None,
            scale_factor: 1.2,
            stride_factor: 0.1,
            orientations: 1,
        }
    }
}

impl ScanParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_size < 2 {
            return Err(format!("min size {} is below 2", self.min_size));
        }
        if let Some(max) = self.max_size {
            if max < self.min_size {
                return Err(format!("max size {max} is below min size {}", self.min_size));
            }
        }
        if !(self.scale_factor > 1.0 && self.scale_factor.is_finite()) {
            return Err(format!("scale factor {} must exceed 1", self.scale_factor));
        }
        if !(self.stride_factor > 0.0 && self.stride_factor <= 1.0) {
            return Err(format!("stride factor {} outside (0, 1]", self.stride_factor));
        }
        if self.orientations == 0 {
            return Err("need at least one orientation".into());
        }
        Ok(())
    }

    /// Window sides scanned in a `width x height` image.
    ///
    /// The nominal size starts at `min_size` and is multiplied by
    /// `scale_factor` each step; the scanned side is its integer part.
    /// Sides that repeat after truncation are scanned once.
    pub fn window_sizes(&self, width: usize, height: usize) -> Vec<i32> {
        let limit = (width.min(height) as i64).min(self.max_size.map_or(i64::MAX, |m| m as i64));
        let mut sizes = Vec::new();
        let mut nominal = self.min_size as f64;
        while (nominal as i64) <= limit {
            let size = nominal as i32;
            if sizes.last() != Some(&size) {
                sizes.push(size);
            }
            nominal *= self.scale_factor;
        }
        sizes
    }

    /// Pixel step for windows of side `size`.
    pub fn stride(&self, size: i32) -> i32 {
        ((self.stride_factor * size as f64).floor() as i32).max(1)
    }

    /// Every scanned window, ordered by (size, row, col).
    pub fn windows(&self, width: usize, height: usize) -> impl Iterator<Item = Window> + '_ {
        self.window_sizes(width, height).into_iter().flat_map(move |size| {
            let step = self.stride(size);
            let rows = (0..=height as i32 - size).step_by(step as usize);
            rows.flat_map(move |top| {
                (0..=width as i32 - size)
                    .step_by(step as usize)
                    .map(move |left| Window::from_top_left(top, left, size))
            })
        })
    }
}

/// A single window that passed every stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawDetection {
    pub row: i32,
    pub col: i32,
    pub size: i32,
    pub score: f32,
    /// Index into the orientation table used for the scan.
    pub orientation: usize,
}

impl RawDetection {
    pub fn window(&self) -> Window {
        Window::new(self.row, self.col, self.size)
    }
}

/// One cascade per orientation; copy `k` has every test rotated by `2πk/n`.
pub fn build_rotated_cascades(cascade: &Cascade, table: &OrientationTable) -> Vec<Cascade> {
    (0..table.len()).map(|k| cascade.rotated(table, k)).collect()
}

fn scan_row(cascades: &[Cascade], img: &GrayImage, size: i32, top: i32, step: i32, out: &mut Vec<RawDetection>) {
    let mut left = 0;
    while left + size <= img.width() as i32 {
        let window = Window::from_top_left(top, left, size);
        for (orientation, cascade) in cascades.iter().enumerate() {
            if let Outcome::Accepted { score } = cascade.classify(img, &window) {
                out.push(RawDetection {
                    row: window.row,
                    col: window.col,
                    size,
                    score,
                    orientation,
                });
            }
        }
        left += step;
    }
}

fn rows(params: &ScanParams, img: &GrayImage) -> Vec<(i32, i32, i32)> {
    params
        .window_sizes(img.width(), img.height())
        .into_iter()
        .flat_map(|size| {
            let step = params.stride(size);
            (0..=img.height() as i32 - size)
                .step_by(step as usize)
                .map(move |top| (size, top, step))
        })
        .collect()
}

/// Scans `img` with `cascades[k]` standing for orientation `k`.
///
/// Output is ordered by (size, row, col, orientation).
pub fn scan(cascades: &[Cascade], img: &GrayImage, params: &ScanParams) -> Vec<RawDetection> {
    let mut out = Vec::new();
    for (size, top, step) in rows(params, img) {
        scan_row(cascades, img, size, top, step, &mut out);
    }
    out
}

/// [`scan`] split into row bands on the current rayon pool; same output.
pub fn scan_parallel(cascades: &[Cascade], img: &GrayImage, params: &ScanParams) -> Vec<RawDetection> {
    rows(params, img)
        .into_par_iter()
        .map(|(size, top, step)| {
            let mut out = Vec::new();
            scan_row(cascades, img, size, top, step, &mut out);
            out
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Counters from an instrumented scan.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScanStats {
    /// Window positions visited (each evaluated once per orientation).
    pub windows: u64,
    /// Cascade evaluations: windows times orientations.
    pub evaluations: u64,
    /// `rejected_at[k]`: evaluations rejected by stage `k`.
    pub rejected_at: Vec<u64>,
    pub accepted: u64,
    pub trees_evaluated: u64,
}

impl ScanStats {
    /// Fraction of evaluations that ended (by rejection) within the first
    /// `stages` stages.
    pub fn rejected_within(&self, stages: usize) -> f64 {
        let n: u64 = self.rejected_at.iter().take(stages).sum();
        n as f64 / self.evaluations.max(1) as f64
    }

    pub fn mean_trees(&self) -> f64 {
        self.trees_evaluated as f64 / self.evaluations.max(1) as f64
    }
}

pub fn scan_stats(cascades: &[Cascade], img: &GrayImage, params: &ScanParams) -> ScanStats {
    let stages = cascades.first().map_or(0, |c| c.stages().len());
    let mut stats = ScanStats {
        rejected_at: vec![0; stages],
        ..ScanStats::default()
    };
    for window in params.windows(img.width(), img.height()) {
        stats.windows += 1;
        for cascade in cascades {
            let outcome = cascade.classify(img, &window);
            stats.evaluations += 1;
            stats.trees_evaluated += cascade.trees_evaluated(&outcome) as u64;
            match outcome {
                Outcome::Accepted { .. } => stats.accepted += 1,
                Outcome::Rejected { stage, .. } => stats.rejected_at[stage] += 1,
            }
        }
    }
    stats
}

/// A cascade prepared for scanning: rotated copies plus scan and
/// clustering parameters.
#[derive(Clone, Debug)]
pub struct Detector {
    cascades: Vec<Cascade>,
    params: ScanParams,
    overlap: f64,
}

impl Detector {
    pub fn new(cascade: &Cascade, params: ScanParams) -> Result<Self, String> {
        params.validate()?;
        let table = OrientationTable::new(params.orientations);
        Ok(Self {
            cascades: build_rotated_cascades(cascade, &table),
            params,
            overlap: DEFAULT_OVERLAP,
        })
    }

    pub fn with_overlap(mut self, overlap: f64) -> Self {
        self.overlap = overlap;
        self
    }

    pub fn cascades(&self) -> &[Cascade] {
        &self.cascades
    }

    pub fn params(&self) -> &ScanParams {
        &self.params
    }

    pub fn raw(&self, img: &GrayImage) -> Vec<RawDetection> {
        scan(&self.cascades, img, &self.params)
    }

    pub fn raw_parallel(&self, img: &GrayImage) -> Vec<RawDetection> {
        scan_parallel(&self.cascades, img, &self.params)
    }

    /// Scans and clusters.
    pub fn detect(&self, img: &GrayImage) -> Vec<FinalDetection> {
        cluster_detections(&self.raw(img), self.overlap)
    }

    pub fn stats(&self, img: &GrayImage) -> ScanStats {
        scan_stats(&self.cascades, img, &self.params)
    }
}
