//! Boosted stages organized as a cascade of rejectors.
//!
//! Every stage adds its trees' outputs to a running score and rejects the
//! window as soon as that accumulated score falls below the stage threshold.
//! A window that survives all stages is accepted with the final accumulated
//! score as its confidence.

mod boost;
mod mining;
mod schedule;
mod train;

pub use boost::{boost_fit_stage, GentleBoost};
pub use mining::{mine_negatives, MinedWindow, MiningConfig, MiningResult};
pub use schedule::{default_schedule, format_schedule, parse_schedule, ScheduleError, StageConfig};
pub use train::{
    achieved_tpr, calibrate_threshold, format_report, required_rank, train_cascade, train_cascade_with_progress,
    StageReport, TrainConfig,
};

use thiserror::Error;

use crate::imgcore::{GrayImage, OrientationTable, Window};
use crate::tree::DecisionTree;

/// A window inside an image, without label or weight.
#[derive(Clone, Copy, Debug)]
pub struct Patch<'a> {
    pub image: &'a GrayImage,
    pub window: Window,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CascadeError {
    #[error("a stage needs at least one tree")]
    EmptyStage,
    #[error("stage threshold must be finite, got {0}")]
    NonFiniteThreshold(f32),
    #[error("tree depth {found} does not match cascade depth {expected}")]
    DepthMismatch { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("boosting needs positives and negatives (got {positives} and {negatives})")]
    EmptyClass { positives: usize, negatives: usize },
    #[error("prior score count {found} does not match sample count {expected}")]
    PriorLength { expected: usize, found: usize },
    #[error("sample weights collapsed to zero at stage {stage}, tree {tree}")]
    WeightCollapse { stage: usize, tree: usize },
    #[error("every positive was rejected before stage {stage}")]
    AllPositivesRejected { stage: usize },
    #[error("negative mining at stage {stage} kept {kept} of {wanted} windows in {drawn} draws")]
    MiningExhausted {
        stage: usize,
        kept: usize,
        wanted: usize,
        drawn: u64,
    },
    #[error("no background image can hold a window of {min_size} pixels")]
    NoUsableBackground { min_size: i32 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    trees: Vec<DecisionTree>,
    threshold: f32,
}

impl Stage {
    pub fn new(trees: Vec<DecisionTree>, threshold: f32) -> Result<Self, CascadeError> {
        if trees.is_empty() {
            return Err(CascadeError::EmptyStage);
        }
        if !threshold.is_finite() {
            return Err(CascadeError::NonFiniteThreshold(threshold));
        }
        Ok(Self { trees, threshold })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn threshold(&self) -> f32 {
        self.threshold
    }
}

/// Result of running a window through a cascade.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    /// Passed every stage; `score` is the accumulated confidence.
    Accepted { score: f32 },
    /// Accumulated score fell below the threshold of stage `stage` (0-based).
    Rejected { stage: usize, score: f32 },
}

impl Outcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Outcome::Accepted { .. })
    }

    pub fn score(&self) -> f32 {
        match *self {
            Outcome::Accepted { score } | Outcome::Rejected { score, .. } => score,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cascade {
    depth: usize,
    stages: Vec<Stage>,
}

impl Cascade {
    /// An empty cascade; it accepts every window with score 0.
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            stages: Vec::new(),
        }
    }

    pub fn from_stages(depth: usize, stages: Vec<Stage>) -> Result<Self, CascadeError> {
        let mut cascade = Self::new(depth);
        for stage in stages {
            cascade.push_stage(stage)?;
        }
        Ok(cascade)
    }

    pub fn push_stage(&mut self, stage: Stage) -> Result<(), CascadeError> {
        if let Some(t) = stage.trees.iter().find(|t| t.depth() != self.depth) {
            return Err(CascadeError::DepthMismatch {
                expected: self.depth,
                found: t.depth(),
            });
        }
        self.stages.push(stage);
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn tree_count(&self) -> usize {
        self.stages.iter().map(|s| s.trees.len()).sum()
    }

    /// The first `k` stages.
    pub fn prefix(&self, k: usize) -> Self {
        Self {
            depth: self.depth,
            stages: self.stages[..k.min(self.stages.len())].to_vec(),
        }
    }

    /// Trees evaluated by a window whose outcome is `outcome`.
    pub fn trees_evaluated(&self, outcome: &Outcome) -> usize {
        let last = match *outcome {
            Outcome::Accepted { .. } => self.stages.len(),
            Outcome::Rejected { stage, .. } => stage + 1,
        };
        self.stages[..last].iter().map(|s| s.trees.len()).sum()
    }

    /// Classifies `window`, which must lie inside `img`.
    ///
    /// Tree outputs are added one at a time, in stage then tree order, to a
    /// single `f32` accumulator; the stage threshold is checked after the
    /// last tree of each stage.
    #[inline]
    pub fn classify(&self, img: &GrayImage, window: &Window) -> Outcome {
        debug_assert!(img.contains(window));
        let mut score = 0.0f32;
        for (i, stage) in self.stages.iter().enumerate() {
            for tree in &stage.trees {
                score += tree.eval(img, window);
            }
            if score < stage.threshold {
                return Outcome::Rejected { stage: i, score };
            }
        }
        Outcome::Accepted { score }
    }

    /// Copy with every test rotated by orientation `k`; leaves and
    /// thresholds unchanged.
    pub fn rotated(&self, table: &OrientationTable, k: usize) -> Self {
        Self {
            depth: self.depth,
            stages: self
                .stages
                .iter()
                .map(|s| Stage {
                    trees: s.trees.iter().map(|t| t.rotated(table, k)).collect(),
                    threshold: s.threshold,
                })
                .collect(),
        }
    }
}
