use crate::imgcore::GrayImage;
use crate::tree::TreeParams;

use super::{boost_fit_stage, mine_negatives, Cascade, MiningConfig, Patch, Stage, StageConfig, TrainError};

/// Smallest `k` such that `k / total >= tpr_target`.
pub fn required_rank(total: usize, tpr_target: f64) -> usize {
    assert!(total > 0, "need at least one score");
    let p = total as f64;
    let mut k = ((tpr_target * p).ceil() as usize).clamp(1, total);
    while k > 1 && (k - 1) as f64 / p >= tpr_target {
        k -= 1;
    }
    while k < total && (k as f64 / p) < tpr_target {
        k += 1;
    }
    k
}

/// The largest threshold that keeps at least `tpr_target` of `scores`,
/// i.e. the `⌈tpr_target · P⌉`-th largest score.
pub fn calibrate_threshold(scores: &[f32], tpr_target: f64) -> f32 {
    assert!(!scores.is_empty(), "cannot calibrate on an empty score list");
    assert!(tpr_target > 0.0 && tpr_target <= 1.0, "tpr target must be in (0, 1]");
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted[required_rank(scores.len(), tpr_target) - 1]
}

/// Fraction of `scores` at or above `threshold`.
pub fn achieved_tpr(scores: &[f32], threshold: f32) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s >= threshold).count() as f64 / scores.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub tree: TreeParams,
    pub schedule: Vec<StageConfig>,
    /// Side range of mined negative windows.
    pub negative_min_size: i32,
    pub negative_max_size: i32,
    /// Mining budget per requested negative.
    pub draws_per_negative: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tree: TreeParams::default(),
            schedule: super::default_schedule(300_000),
            negative_min_size: 24,
            negative_max_size: i32::MAX,
            draws_per_negative: 100_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    pub trees: usize,
    pub tpr_target: f64,
    /// Fraction of this stage's positives at or above the threshold.
    pub tpr_achieved: f64,
    pub threshold: f32,
    pub positives: usize,
    pub negatives: usize,
    pub drawn: u64,
    /// Acceptance ratio of the cascade before this stage on random
    /// background windows.
    pub fpr_estimate: f64,
    /// This stage's own false-positive rate on windows that reached it:
    /// the next stage's acceptance ratio over this one's. Unknown for the
    /// last stage.
    pub stage_fpr: Option<f64>,
}

/// Renders reports as a table: one row per stage. `FPR%` is the stage's
/// own false-positive rate, `reached%` the fraction of random background
/// windows that reached the stage.
pub fn format_report(reports: &[StageReport]) -> String {
    let mut out = format!(
        "{:>5} {:>6} {:>8} {:>8} {:>8} {:>10} {:>11} {:>9} {:>9} {:>12}\n",
        "stage", "trees", "target%", "TPR%", "FPR%", "reached%", "threshold", "positive", "negative", "drawn"
    );
    for r in reports {
        let stage_fpr = r
            .stage_fpr
            .map_or_else(|| "-".to_string(), |f| format!("{:.2}", f * 100.0));
        out.push_str(&format!(
            "{:>5} {:>6} {:>8.2} {:>8.2} {:>8} {:>10.4} {:>11.5} {:>9} {:>9} {:>12}\n",
            r.stage + 1,
            r.trees,
            r.tpr_target * 100.0,
            r.tpr_achieved * 100.0,
            stage_fpr,
            r.fpr_estimate * 100.0,
            r.threshold,
            r.positives,
            r.negatives,
            r.drawn
        ));
    }
    out
}

pub fn train_cascade(
    positives: &[Patch<'_>],
    backgrounds: &[GrayImage],
    cfg: &TrainConfig,
) -> Result<(Cascade, Vec<StageReport>), TrainError> {
    train_cascade_with_progress(positives, backgrounds, cfg, |_| {})
}

/// Trains one stage per schedule entry.
///
/// Each stage mines negatives against the cascade built so far, boosts its
/// trees, and sets its threshold so that the required fraction of the
/// remaining positives keep an accumulated score at or above it. Positives
/// below the threshold are dropped from later stages.
pub fn train_cascade_with_progress(
    positives: &[Patch<'_>],
    backgrounds: &[GrayImage],
    cfg: &TrainConfig,
    mut on_stage: impl FnMut(&StageReport),
) -> Result<(Cascade, Vec<StageReport>), TrainError> {
    if cfg.schedule.is_empty() {
        return Err(TrainError::Config("empty stage schedule".into()));
    }
    for (i, s) in cfg.schedule.iter().enumerate() {
        s.validate()
            .map_err(|m| TrainError::Config(format!("stage {}: {m}", i + 1)))?;
    }
    if positives.is_empty() {
        return Err(TrainError::EmptyClass {
            positives: 0,
            negatives: 0,
        });
    }

    let mut cascade = Cascade::new(cfg.tree.depth);
    let mut reports: Vec<StageReport> = Vec::with_capacity(cfg.schedule.len());
    let mut live: Vec<Patch<'_>> = positives.to_vec();
    let mut live_scores = vec![0.0f32; live.len()];

    for (stage, sc) in cfg.schedule.iter().enumerate() {
        if live.is_empty() {
            return Err(TrainError::AllPositivesRejected { stage });
        }
        let mining = MiningConfig {
            count: sc.negatives_to_mine,
            min_size: cfg.negative_min_size,
            max_size: cfg.negative_max_size,
            max_draws: (sc.negatives_to_mine as u64).saturating_mul(cfg.draws_per_negative),
        };
        let mined = mine_negatives(&cascade, backgrounds, &mining, cfg.seed, stage as u64)?;
        if mined.exhausted {
            return Err(TrainError::MiningExhausted {
                stage,
                kept: mined.negatives.len(),
                wanted: sc.negatives_to_mine,
                drawn: mined.drawn,
            });
        }
        let negatives: Vec<Patch<'_>> = mined
            .negatives
            .iter()
            .map(|m| Patch {
                image: &backgrounds[m.image],
                window: m.window,
            })
            .collect();
        let negative_scores: Vec<f32> = mined.negatives.iter().map(|m| m.score).collect();

        let trees = boost_fit_stage(
            &live,
            &negatives,
            &live_scores,
            &negative_scores,
            sc.tree_count,
            cfg.tree,
            cfg.seed,
            stage as u64,
        )?;

        // Same accumulation order as Cascade::classify.
        let scores: Vec<f32> = live
            .iter()
            .zip(&live_scores)
            .map(|(p, &prior)| trees.iter().fold(prior, |acc, t| acc + t.eval(p.image, &p.window)))
            .collect();
        let threshold = calibrate_threshold(&scores, sc.tpr_target);
        let report = StageReport {
            stage,
            trees: trees.len(),
            tpr_target: sc.tpr_target,
            tpr_achieved: achieved_tpr(&scores, threshold),
            threshold,
            positives: live.len(),
            negatives: negatives.len(),
            drawn: mined.drawn,
            fpr_estimate: mined.acceptance_ratio(),
            stage_fpr: None,
        };
        if let Some(prev) = reports.last_mut() {
            if prev.fpr_estimate > 0.0 {
                prev.stage_fpr = Some(report.fpr_estimate / prev.fpr_estimate);
            }
        }
        cascade.push_stage(Stage::new(trees, threshold)?)?;

        let (kept, kept_scores): (Vec<_>, Vec<_>) =
            live.into_iter().zip(scores).filter(|(_, s)| *s >= threshold).unzip();
        live = kept;
        live_scores = kept_scores;

        on_stage(&report);
        reports.push(report);
    }
    Ok((cascade, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Window;
    use proptest::prelude::*;

    #[test]
    fn calibration_examples() {
        assert_eq!(calibrate_threshold(&[3.0, 2.0, 1.0], 1.0), 1.0);
        // ceil(0.34 * 3) = ceil(1.02) = 2, the second largest score.
        assert_eq!(calibrate_threshold(&[3.0, 2.0, 1.0], 0.34), 2.0);
        assert_eq!(calibrate_threshold(&[1.0, 3.0, 2.0], 0.33), 3.0);
        assert_eq!(required_rank(1000, 0.975), 975);
        assert_eq!(required_rank(3, 0.34), 2);
        assert_eq!(required_rank(10, 0.1), 1);
        assert_eq!(required_rank(7, 1.0), 7);
    }

    #[test]
    fn ties_are_kept() {
        let scores = [1.0, 1.0, 1.0, 0.0];
        let t = calibrate_threshold(&scores, 0.5);
        assert_eq!(t, 1.0);
        assert_eq!(achieved_tpr(&scores, t), 0.75);
    }

    proptest! {
        #[test]
        fn achieved_tpr_meets_target(scores in prop::collection::vec(-50.0f32..50.0, 1..400), target in 0.001f64..=1.0) {
            let t = calibrate_threshold(&scores, target);
            prop_assert!(achieved_tpr(&scores, t) >= target);
            // Rank-based oracle: t is the k-th largest, for the smallest valid k.
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let k = (1..=scores.len()).find(|&k| k as f64 / scores.len() as f64 >= target).unwrap();
            prop_assert_eq!(t, sorted[k - 1]);
        }
    }

    fn toy_data() -> (Vec<GrayImage>, Vec<GrayImage>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let positives = (0..60)
            .map(|_| {
                let j: u8 = rng.random_range(0..30);
                GrayImage::from_fn(16, 16, |r, c| {
                    let d = (r as i32 - 8).pow(2) + (c as i32 - 8).pow(2);
                    if d < 25 {
                        200 - j
                    } else {
                        60 + j
                    }
                })
            })
            .collect();
        let backgrounds = (0..4)
            .map(|_| GrayImage::from_fn(64, 64, |_, _| rng.random()))
            .collect();
        (positives, backgrounds)
    }

    #[test]
    fn single_stage_full_target_keeps_everyone() {
        let (pos_imgs, bg) = toy_data();
        let positives: Vec<Patch> = pos_imgs
            .iter()
            .map(|i| Patch {
                image: i,
                window: Window::new(8, 8, 16),
            })
            .collect();
        let cfg = TrainConfig {
            tree: TreeParams {
                depth: 2,
                candidates: 16,
            },
            schedule: vec![StageConfig {
                tree_count: 2,
                tpr_target: 1.0,
                negatives_to_mine: 100,
            }],
            negative_min_size: 12,
            negative_max_size: 64,
            draws_per_negative: 10,
            seed: 1,
        };
        let (cascade, reports) = train_cascade(&positives, &bg, &cfg).unwrap();
        assert_eq!(reports[0].tpr_achieved, 1.0);
        assert_eq!(reports[0].fpr_estimate, 1.0);
        for p in &positives {
            assert!(cascade.classify(p.image, &p.window).is_accepted());
        }
    }

    #[test]
    fn config_errors() {
        let (pos_imgs, bg) = toy_data();
        let positives: Vec<Patch> = pos_imgs
            .iter()
            .map(|i| Patch {
                image: i,
                window: Window::new(8, 8, 16),
            })
            .collect();
        let mut cfg = TrainConfig {
            schedule: vec![],
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_cascade(&positives, &bg, &cfg),
            Err(TrainError::Config(_))
        ));
        cfg.schedule = vec![StageConfig {
            tree_count: 1,
            tpr_target: 0.0,
            negatives_to_mine: 1,
        }];
        assert!(matches!(
            train_cascade(&positives, &bg, &cfg),
            Err(TrainError::Config(_))
        ));
        cfg.schedule = vec![StageConfig {
            tree_count: 1,
            tpr_target: 0.5,
            negatives_to_mine: 1,
        }];
        assert!(matches!(
            train_cascade(&[], &bg, &cfg),
            Err(TrainError::EmptyClass { .. })
        ));
    }
}
