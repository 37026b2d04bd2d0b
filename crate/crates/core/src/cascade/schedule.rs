//! Stage schedules: one stage per line, `tree_count tpr_target negatives_to_mine`.

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageConfig {
    pub tree_count: usize,
    /// Fraction of surviving positives the stage must keep.
    pub tpr_target: f64,
    pub negatives_to_mine: usize,
}

impl StageConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.tree_count == 0 || self.tree_count > u16::MAX as usize {
            return Err(format!("tree count {} outside [1, 65535]", self.tree_count));
        }
        if !(self.tpr_target > 0.0 && self.tpr_target <= 1.0) {
            return Err(format!("tpr target {} outside (0, 1]", self.tpr_target));
        }
        if self.negatives_to_mine == 0 {
            return Err("negatives to mine must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("schedule line {line}: {message}")]
pub struct ScheduleError {
    pub line: usize,
    pub message: String,
}

/// Parses a schedule. `#` starts a comment; blank lines are skipped.
pub fn parse_schedule(text: &str) -> Result<Vec<StageConfig>, ScheduleError> {
    let mut stages = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ScheduleError { line: i + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        }
        let stage = StageConfig {
            tree_count: fields[0]
                .parse()
                .map_err(|_| err(format!("bad tree count {:?}", fields[0])))?,
            tpr_target: fields[1]
                .parse()
                .map_err(|_| err(format!("bad tpr target {:?}", fields[1])))?,
            negatives_to_mine: fields[2]
                .parse()
                .map_err(|_| err(format!("bad negative count {:?}", fields[2])))?,
        };
        stage.validate().map_err(err)?;
        stages.push(stage);
    }
    Ok(stages)
}

pub fn format_schedule(stages: &[StageConfig]) -> String {
    let mut out = String::from("# tree_count tpr_target negatives_to_mine\n");
    for s in stages {
        out.push_str(&format!("{} {} {}\n", s.tree_count, s.tpr_target, s.negatives_to_mine));
    }
    out
}

/// The 20-stage face-detector schedule: 1, 2, 3, 4, 5 and 10 trees with
/// rising targets, then fourteen 20-tree stages at 0.999.
pub fn default_schedule(negatives_to_mine: usize) -> Vec<StageConfig> {
    let head = [(1, 0.975), (2, 0.98), (3, 0.985), (4, 0.99), (5, 0.995), (10, 0.997)];
    head.into_iter()
        .chain(std::iter::repeat_n((20, 0.999), 14))
        .map(|(tree_count, tpr_target)| StageConfig {
            tree_count,
            tpr_target,
            negatives_to_mine,
        })
        .collect()
}
