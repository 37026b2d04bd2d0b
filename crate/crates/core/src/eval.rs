//! Detection matching, ROC curves, noise sweeps and timing.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::cluster::{square_iou, FinalDetection, DEFAULT_OVERLAP};
use crate::dataset::{Annotation, SynthImage};
use crate::imgcore::{add_gaussian_noise, GrayImage};
use crate::rng;
use crate::scanner::Detector;

/// Overlap a detection needs with a truth square to count as a match.
pub const MATCH_OVERLAP: f64 = DEFAULT_OVERLAP;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub matched: usize,
    pub false_positives: usize,
}

/// Greedy one-to-one matching. Detections are visited by descending score
/// (ties in input order); each takes the unmatched truth with the highest
/// overlap if that overlap exceeds `min_overlap`.
pub fn match_detections(detections: &[FinalDetection], truth: &[Annotation], min_overlap: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));
    let mut taken = vec![false; truth.len()];
    let mut result = MatchResult::default();
    for i in order {
        let d = detections[i].square();
        let best = truth
            .iter()
            .enumerate()
            .filter(|(j, _)| !taken[*j])
            .map(|(j, t)| (j, square_iou(d, t.square())))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        match best {
            Some((j, iou)) if iou > min_overlap => {
                taken[j] = true;
                result.matched += 1;
            }
            _ => result.false_positives += 1,
        }
    }
    result
}

/// Final detections of one image next to its annotations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredImage {
    pub detections: Vec<FinalDetection>,
    pub truth: Vec<Annotation>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f32,
    pub tpr: f64,
    pub false_positives: usize,
}

pub fn roc_point(images: &[ScoredImage], threshold: f32, min_overlap: f64) -> RocPoint {
    let (mut matched, mut fp, mut truths) = (0, 0, 0);
    for img in images {
        let kept: Vec<FinalDetection> = img
            .detections
            .iter()
            .copied()
            .filter(|d| d.score >= threshold)
            .collect();
        let m = match_detections(&kept, &img.truth, min_overlap);
        matched += m.matched;
        fp += m.false_positives;
        truths += img.truth.len();
    }
    RocPoint {
        threshold,
        tpr: if truths == 0 {
            0.0
        } else {
            matched as f64 / truths as f64
        },
        false_positives: fp,
    }
}

/// One point per distinct detection score in ascending order, followed by
/// a point at `+inf` that keeps nothing.
pub fn roc_curve(images: &[ScoredImage], min_overlap: f64) -> Vec<RocPoint> {
    let mut scores: Vec<f32> = images
        .iter()
        .flat_map(|i| i.detections.iter().map(|d| d.score))
        .collect();
    scores.sort_by(f32::total_cmp);
    scores.dedup();
    scores.push(f32::INFINITY);
    scores.into_iter().map(|t| roc_point(images, t, min_overlap)).collect()
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,tpr,false_positives\n");
    for p in points {
        writeln!(out, "{},{},{}", p.threshold, p.tpr, p.false_positives).unwrap();
    }
    out
}

/// An image with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: GrayImage,
    pub truth: Vec<Annotation>,
}

impl LabeledImage {
    pub fn from_synth(item: &SynthImage, name: &str) -> Self {
        let truth = item
            .object
            .iter()
            .map(|o| Annotation {
                image: name.into(),
                row: o.row,
                col: o.col,
                size: o.size,
            })
            .collect();
        Self {
            image: item.image.clone(),
            truth,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalSummary {
    pub images: usize,
    pub truths: usize,
    pub matched: usize,
    pub false_positives: usize,
}

impl EvalSummary {
    pub fn detection_rate(&self) -> f64 {
        if self.truths == 0 {
            0.0
        } else {
            self.matched as f64 / self.truths as f64
        }
    }

    pub fn false_positives_per_image(&self) -> f64 {
        if self.images == 0 {
            0.0
        } else {
            self.false_positives as f64 / self.images as f64
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            images: self.images + o.images,
            truths: self.truths + o.truths,
            matched: self.matched + o.matched,
            false_positives: self.false_positives + o.false_positives,
        }
    }
}

fn summarize(detector: &Detector, image: &GrayImage, truth: &[Annotation], min_overlap: f64) -> EvalSummary {
    let m = match_detections(&detector.detect(image), truth, min_overlap);
    EvalSummary {
        images: 1,
        truths: truth.len(),
        matched: m.matched,
        false_positives: m.false_positives,
    }
}

/// Detects on every image at the detector's native operating point.
/// Images are processed in parallel on the current rayon pool.
pub fn evaluate(detector: &Detector, corpus: &[LabeledImage], min_overlap: f64) -> EvalSummary {
    corpus
        .par_iter()
        .map(|li| summarize(detector, &li.image, &li.truth, min_overlap))
        .reduce(EvalSummary::default, EvalSummary::add)
}

/// Final detections per image, in corpus order.
pub fn detect_all(detector: &Detector, corpus: &[LabeledImage]) -> Vec<ScoredImage> {
    corpus
        .par_iter()
        .map(|li| ScoredImage {
            detections: detector.detect(&li.image),
            truth: li.truth.clone(),
        })
        .collect()
}

/// Noise seed of image `index` in a sweep; the same field is reused across
/// sigmas.
pub fn noise_seed(seed: u64, index: usize) -> u64 {
    rng::derive(seed, &[0x6e6f_6973, index as u64])
}

/// Evaluation summary per sigma. With `sigma = 0` the images are used
/// unchanged.
pub fn noise_sweep(
    detector: &Detector,
    corpus: &[LabeledImage],
    sigmas: &[f64],
    seed: u64,
    min_overlap: f64,
) -> Vec<(f64, EvalSummary)> {
    sigmas
        .iter()
        .map(|&sigma| {
            let summary = corpus
                .par_iter()
                .enumerate()
                .map(|(i, li)| {
                    let noisy = add_gaussian_noise(&li.image, sigma, noise_seed(seed, i));
                    summarize(detector, &noisy, &li.truth, min_overlap)
                })
                .reduce(EvalSummary::default, EvalSummary::add);
            (sigma, summary)
        })
        .collect()
}

pub fn sweep_csv(rows: &[(f64, EvalSummary)]) -> String {
    let mut out = String::from("sigma,detection_rate,matched,truths,false_positives\n");
    for (sigma, s) in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            sigma,
            s.detection_rate(),
            s.matched,
            s.truths,
            s.false_positives
        )
        .unwrap();
    }
    out
}

/// Mean wall-clock milliseconds per image for a full single-threaded
/// detect pass, measured over `repetitions` passes after one warm-up.
pub fn throughput(detector: &Detector, images: &[GrayImage], repetitions: usize) -> f64 {
    assert!(repetitions >= 3, "at least 3 repetitions required");
    assert!(!images.is_empty(), "no images to time");
    let pass = || images.iter().map(|img| detector.detect(img).len()).sum::<usize>();
    std::hint::black_box(pass());
    let start = Instant::now();
    for _ in 0..repetitions {
        std::hint::black_box(pass());
    }
    start.elapsed().as_secs_f64() * 1e3 / (repetitions * images.len()) as f64
}
