//! The `.pct` binary model format.
//!
//! All integers are little-endian.
//!
//! ```text
//! header (16 bytes)
//!   magic        4  "PCT1"
//!   version      u16 = 1
//!   depth        u8  in [1, 16]
//!   reserved     u8  = 0
//!   stage count  u32 in [1, 256]
//!   tree count   u32 (sum over stages)
//! per stage
//!   tree count   u16
//!   threshold    f32
//!   per tree
//!     2^depth - 1 nodes, 4 signed bytes each: a.qr a.qc b.qr b.qc
//!     2^depth leaves, f32 each
//! ```

use thiserror::Error;

use crate::cascade::{Cascade, Stage};
use crate::imgcore::NormLoc;
use crate::tree::{CompTest, DecisionTree, MAX_DEPTH};

pub const MAGIC: &[u8; 4] = b"PCT1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const STAGE_HEADER_LEN: usize = 6;
pub const MAX_STAGES: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("reserved header byte is {0}, expected 0")]
    Reserved(u8),
    #[error("tree depth {0} outside [1, 16]")]
    Depth(u8),
    #[error("stage count {0} outside [1, 256]")]
    StageCount(u32),
    #[error("stage {stage} has no trees")]
    EmptyStage { stage: usize },
    #[error("header declares {declared} trees, stages hold {found}")]
    TreeCount { declared: u32, found: u64 },
    #[error("truncated model: needed {needed} bytes at offset {offset}, {available} left")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{0} trailing bytes after the last stage")]
    TrailingData(usize),
    #[error("non-finite {what} at offset {offset}")]
    NonFinite { what: &'static str, offset: usize },
    #[error("coordinate -128 at offset {offset}")]
    BadCoordinate { offset: usize },
    #[error("cascade cannot be serialized: {0}")]
    Unserializable(String),
}

/// Encoded size of a cascade with the given depth and per-stage tree counts.
pub fn encoded_len(depth: usize, stage_trees: &[usize]) -> usize {
    let tree = ((1 << depth) - 1) * 4 + (1 << depth) * 4;
    HEADER_LEN + stage_trees.len() * STAGE_HEADER_LEN + stage_trees.iter().sum::<usize>() * tree
}

pub fn serialize(cascade: &Cascade) -> Result<Vec<u8>, ModelError> {
    let depth = cascade.depth();
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(ModelError::Unserializable(format!("depth {depth}")));
    }
    let stages = cascade.stages();
    if stages.is_empty() || stages.len() > MAX_STAGES {
        return Err(ModelError::Unserializable(format!("{} stages", stages.len())));
    }
    let counts: Vec<usize> = stages.iter().map(|s| s.trees().len()).collect();
    if let Some(&c) = counts.iter().find(|&&c| c > u16::MAX as usize) {
        return Err(ModelError::Unserializable(format!("stage with {c} trees")));
    }

    let mut out = Vec::with_capacity(encoded_len(depth, &counts));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(depth as u8);
    out.push(0);
    out.extend_from_slice(&(stages.len() as u32).to_le_bytes());
    out.extend_from_slice(&(cascade.tree_count() as u32).to_le_bytes());
    for stage in stages {
        out.extend_from_slice(&(stage.trees().len() as u16).to_le_bytes());
        out.extend_from_slice(&stage.threshold().to_le_bytes());
        for tree in stage.trees() {
            for t in tree.tests() {
                out.extend_from_slice(&[t.a.qr() as u8, t.a.qc() as u8, t.b.qr() as u8, t.b.qc() as u8]);
            }
            for leaf in tree.leaves() {
                if !leaf.is_finite() {
                    return Err(ModelError::Unserializable("non-finite leaf".into()));
                }
                out.extend_from_slice(&leaf.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(ModelError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &'static str) -> Result<f32, ModelError> {
        let offset = self.pos;
        let v = f32::from_le_bytes(self.take(4)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(ModelError::NonFinite { what, offset });
        }
        Ok(v)
    }

    fn loc(&mut self) -> Result<NormLoc, ModelError> {
        let offset = self.pos;
        let b = self.take(2)?;
        NormLoc::try_new(b[0] as i8, b[1] as i8).ok_or(ModelError::BadCoordinate { offset })
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<Cascade, ModelError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(ModelError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(ModelError::Version(version));
    }
    let depth = r.u8()?;
    if !(1..=MAX_DEPTH as u8).contains(&depth) {
        return Err(ModelError::Depth(depth));
    }
    let reserved = r.u8()?;
    if reserved != 0 {
        return Err(ModelError::Reserved(reserved));
    }
    let stage_count = r.u32()?;
    if !(1..=MAX_STAGES as u32).contains(&stage_count) {
        return Err(ModelError::StageCount(stage_count));
    }
    let declared = r.u32()?;

    let depth = depth as usize;
    let nodes = (1usize << depth) - 1;
    let mut stages = Vec::with_capacity(stage_count as usize);
    let mut found = 0u64;
    for stage in 0..stage_count as usize {
        let tree_count = r.u16()? as usize;
        if tree_count == 0 {
            return Err(ModelError::EmptyStage { stage });
        }
        found += tree_count as u64;
        let threshold = r.f32("threshold")?;
        let mut trees = Vec::with_capacity(tree_count);
        for _ in 0..tree_count {
            let tests = (0..nodes)
                .map(|_| Ok(CompTest::new(r.loc()?, r.loc()?)))
                .collect::<Result<Vec<_>, ModelError>>()?;
            let leaves = (0..=nodes)
                .map(|_| r.f32("leaf"))
                .collect::<Result<Vec<_>, ModelError>>()?;
            trees.push(DecisionTree::from_parts(depth, tests, leaves).expect("shape follows depth"));
        }
        stages.push(Stage::new(trees, threshold).expect("validated stage"));
    }
    if found != declared as u64 {
        return Err(ModelError::TreeCount { declared, found });
    }
    if r.pos != bytes.len() {
        return Err(ModelError::TrailingData(bytes.len() - r.pos));
    }
    Ok(Cascade::from_stages(depth, stages).expect("uniform depth"))
}
