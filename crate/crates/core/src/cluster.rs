//! Grouping of overlapping raw detections.
//!
//! Raw detections are vertices of an undirected graph with an edge wherever
//! two squares overlap by more than the threshold; each connected component
//! becomes one detection with averaged position and size.

use crate::scanner::RawDetection;

/// Overlap above which two raw detections are joined.
pub const DEFAULT_OVERLAP: f64 = 0.3;

/// Intersection over union of two axis-aligned squares given by center and
/// side length.
pub fn square_iou(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    let (ar, ac, asz) = a;
    let (br, bc, bsz) = b;
    let span = |ca: f64, sa: f64, cb: f64, sb: f64| {
        let lo = (ca - sa / 2.0).max(cb - sb / 2.0);
        let hi = (ca + sa / 2.0).min(cb + sb / 2.0);
        (hi - lo).max(0.0)
    };
    let inter = span(ar, asz, br, bsz) * span(ac, asz, bc, bsz);
    let union = asz * asz + bsz * bsz - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Overlap of two raw detections; orientation is ignored.
pub fn overlap(a: &RawDetection, b: &RawDetection) -> f64 {
    square_iou(
        (a.row as f64, a.col as f64, a.size as f64),
        (b.row as f64, b.col as f64, b.size as f64),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinalDetection {
    pub row: f32,
    pub col: f32,
    pub size: f32,
    /// Sum of member scores.
    pub score: f32,
    pub count: usize,
    /// Orientation of the highest-scoring member.
    pub orientation: usize,
}

impl FinalDetection {
    pub fn square(&self) -> (f64, f64, f64) {
        (self.row as f64, self.col as f64, self.size as f64)
    }
}

/// Connected components of the overlap graph, found by depth-first search.
///
/// Members of each component are listed in ascending index order;
/// components are ordered by their smallest member.
pub fn connected_components(raw: &[RawDetection], threshold: f64) -> Vec<Vec<usize>> {
    let n = raw.len();
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut members = Vec::new();
        while let Some(v) = stack.pop() {
            members.push(v);
            for u in 0..n {
                if !seen[u] && overlap(&raw[v], &raw[u]) > threshold {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

/// Clusters raw detections into final detections, ordered by descending
/// score, then row, then column.
pub fn cluster_detections(raw: &[RawDetection], threshold: f64) -> Vec<FinalDetection> {
    let mut out: Vec<FinalDetection> = connected_components(raw, threshold)
        .into_iter()
        .map(|members| {
            let n = members.len() as f64;
            let mean = |f: fn(&RawDetection) -> f64| members.iter().map(|&i| f(&raw[i])).sum::<f64>() / n;
            let best = members
                .iter()
                .copied()
                .reduce(|a, b| if raw[b].score > raw[a].score { b } else { a })
                .unwrap();
            FinalDetection {
                row: mean(|d| d.row as f64) as f32,
                col: mean(|d| d.col as f64) as f32,
                size: mean(|d| d.size as f64) as f32,
                score: members.iter().map(|&i| raw[i].score).sum(),
                count: members.len(),
                orientation: raw[best].orientation,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.row.total_cmp(&b.row))
            .then(a.col.total_cmp(&b.col))
    });
    out
}
