//! Depth-limited regression trees with two-pixel comparisons in their nodes.
//!
//! A tree of depth `D` is stored complete: `2^D - 1` tests in level order
//! (children of node `i` at `2i + 1 + bit`) followed by `2^D` leaf values.
//! Training picks, at every node, the best of `B` random comparisons by
//! weighted mean squared error.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::imgcore::{map_location, rotate_location, GrayImage, NormLoc, OrientationTable, Window};
use crate::rng;

/// Compares the intensities at two normalized locations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct CompTest {
    pub a: NormLoc,
    pub b: NormLoc,
}

impl CompTest {
    pub fn new(a: NormLoc, b: NormLoc) -> Self {
        Self { a, b }
    }

    /// `0` if `I(a) <= I(b)`, otherwise `1`.
    #[inline]
    pub fn eval(&self, img: &GrayImage, window: &Window) -> usize {
        let (r1, c1) = map_location(window, self.a);
        let (r2, c2) = map_location(window, self.b);
        (img.get(r1 as usize, c1 as usize) > img.get(r2 as usize, c2 as usize)) as usize
    }

    /// Draws both locations uniformly over `[-127, 127]²`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut q = || rng.random_range(-127i8..=127);
        let a = NormLoc::new(q(), q());
        let b = NormLoc::new(q(), q());
        Self { a, b }
    }

    pub fn rotated(&self, table: &OrientationTable, k: usize) -> Self {
        Self {
            a: rotate_location(self.a, table, k),
            b: rotate_location(self.b, table, k),
        }
    }
}

/// A training sample: a window in an image, its label and its weight.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a> {
    pub image: &'a GrayImage,
    pub window: Window,
    pub label: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TreeError {
    #[error("tree depth {0} outside [1, 16]")]
    Depth(usize),
    #[error("depth {depth} needs {expected_tests} tests and {expected_leaves} leaves, got {tests} and {leaves}")]
    Shape {
        depth: usize,
        expected_tests: usize,
        expected_leaves: usize,
        tests: usize,
        leaves: usize,
    },
}

pub const MAX_DEPTH: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    depth: usize,
    tests: Vec<CompTest>,
    leaves: Vec<f32>,
}

impl DecisionTree {
    pub fn from_parts(depth: usize, tests: Vec<CompTest>, leaves: Vec<f32>) -> Result<Self, TreeError> {
        if !(1..=MAX_DEPTH).contains(&depth) {
            return Err(TreeError::Depth(depth));
        }
        let expected_leaves = 1usize << depth;
        if tests.len() != expected_leaves - 1 || leaves.len() != expected_leaves {
            return Err(TreeError::Shape {
                depth,
                expected_tests: expected_leaves - 1,
                expected_leaves,
                tests: tests.len(),
                leaves: leaves.len(),
            });
        }
        Ok(Self { depth, tests, leaves })
    }

    /// A tree whose leaves are all `value`; every test compares the center
    /// pixel with itself.
    pub fn constant(depth: usize, value: f32) -> Self {
        let n = 1usize << depth;
        Self::from_parts(depth, vec![CompTest::default(); n - 1], vec![value; n]).expect("valid constant tree")
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tests(&self) -> &[CompTest] {
        &self.tests
    }

    pub fn leaves(&self) -> &[f32] {
        &self.leaves
    }

    /// Index of the leaf reached by `window`, after exactly `depth` comparisons.
    #[inline]
    pub fn leaf_index(&self, img: &GrayImage, window: &Window) -> usize {
        let mut node = 0;
        for _ in 0..self.depth {
            node = 2 * node + 1 + self.tests[node].eval(img, window);
        }
        node - self.tests.len()
    }

    #[inline]
    pub fn eval(&self, img: &GrayImage, window: &Window) -> f32 {
        self.leaves[self.leaf_index(img, window)]
    }

    /// Copy with every test rotated by orientation `k`; leaves unchanged.
    pub fn rotated(&self, table: &OrientationTable, k: usize) -> Self {
        Self {
            depth: self.depth,
            tests: self.tests.iter().map(|t| t.rotated(table, k)).collect(),
            leaves: self.leaves.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeParams {
    pub depth: usize,
    /// Random tests scored per internal node.
    pub candidates: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            depth: 6,
            candidates: 256,
        }
    }
}

/// Identifies the random stream a tree is trained from.
///
/// Each node draws its candidates from the substream
/// `(seed, stage, tree, node)`, independent of how many samples reached
/// other nodes or of evaluation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeSeed {
    pub seed: u64,
    pub stage: u64,
    pub tree: u64,
}

impl TreeSeed {
    const DOMAIN: u64 = 0x7472_6565; // "tree"

    pub fn node_rng(&self, node: usize) -> ChaCha8Rng {
        rng::substream(self.seed, &[Self::DOMAIN, self.stage, self.tree, node as u64])
    }

    /// The `count` candidate tests of `node`, in draw order.
    pub fn candidates(&self, node: usize, count: usize) -> Vec<CompTest> {
        let mut rng = self.node_rng(node);
        (0..count).map(|_| CompTest::random(&mut rng)).collect()
    }
}

/// Score of a split together with the weighted label mean of each side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitScore {
    pub score: f64,
    pub mean0: f64,
    pub mean1: f64,
}

fn weighted_mean(w: f64, wv: f64) -> f64 {
    if w > 0.0 {
        wv / w
    } else {
        0.0
    }
}

/// Two-pass weighted squared error of the partition given by `bits`.
fn split_error<'s>(items: impl Iterator<Item = (&'s Sample<'s>, usize)> + Clone) -> SplitScore {
    let (mut w0, mut wv0, mut w1, mut wv1) = (0.0, 0.0, 0.0, 0.0);
    for (s, bit) in items.clone() {
        if bit == 0 {
            w0 += s.weight;
            wv0 += s.weight * s.label;
        } else {
            w1 += s.weight;
            wv1 += s.weight * s.label;
        }
    }
    let (mean0, mean1) = (weighted_mean(w0, wv0), weighted_mean(w1, wv1));
    let (mut e0, mut e1) = (0.0, 0.0);
    for (s, bit) in items {
        if bit == 0 {
            e0 += s.weight * (s.label - mean0).powi(2);
        } else {
            e1 += s.weight * (s.label - mean1).powi(2);
        }
    }
    SplitScore {
        score: e0 + e1,
        mean0,
        mean1,
    }
}

/// Weighted mean squared error of splitting `samples` by `test`.
///
/// Empty or zero-weight clusters have mean 0 and contribute nothing.
pub fn wmse_split_score(samples: &[Sample<'_>], test: &CompTest) -> SplitScore {
    let bits: Vec<usize> = samples.iter().map(|s| test.eval(s.image, &s.window)).collect();
    split_error(samples.iter().zip(bits.iter().copied()))
}

// Work above which candidate scoring for a node fans out across threads.
const PARALLEL_WORK: usize = 1 << 15;

fn best_candidate(samples: &[Sample<'_>], members: &[usize], candidates: &[CompTest]) -> usize {
    let score = |test: &CompTest| {
        let bits: Vec<usize> = members
            .iter()
            .map(|&i| test.eval(samples[i].image, &samples[i].window))
            .collect();
        split_error(members.iter().map(|&i| &samples[i]).zip(bits.iter().copied())).score
    };
    // Lexicographic (score, draw index): the first drawn candidate wins ties.
    let better = |a: (f64, usize), b: (f64, usize)| {
        if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    };
    let init = (f64::INFINITY, usize::MAX);
    let best = if members.len() * candidates.len() >= PARALLEL_WORK {
        candidates
            .par_iter()
            .enumerate()
            .map(|(i, t)| (score(t), i))
            .reduce(|| init, better)
    } else {
        candidates
            .iter()
            .enumerate()
            .map(|(i, t)| (score(t), i))
            .fold(init, better)
    };
    best.1
}

/// Grows a complete tree of depth `params.depth` on `samples`.
///
/// Leaves hold the weighted label mean of the samples that reach them, or 0
/// when none (or only zero-weight samples) arrive.
pub fn train_tree(samples: &[Sample<'_>], params: &TreeParams, seed: TreeSeed) -> DecisionTree {
    let depth = params.depth;
    assert!((1..=MAX_DEPTH).contains(&depth), "tree depth must be in [1, 16]");
    assert!(params.candidates >= 1, "need at least one candidate test");
    let internal = (1usize << depth) - 1;

    let mut tests = Vec::with_capacity(internal);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); 2 * internal + 1];
    members[0] = (0..samples.len()).collect();

    for node in 0..internal {
        let here = std::mem::take(&mut members[node]);
        let candidates = seed.candidates(node, params.candidates);
        let test = candidates[best_candidate(samples, &here, &candidates)];
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for i in here {
            if test.eval(samples[i].image, &samples[i].window) == 0 {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        members[2 * node + 1] = left;
        members[2 * node + 2] = right;
        tests.push(test);
    }

    let leaves = members[internal..]
        .iter()
        .map(|arrived| {
            let (w, wv) = arrived.iter().fold((0.0, 0.0), |(w, wv), &i| {
                let s = &samples[i];
                (w + s.weight, wv + s.weight * s.label)
            });
            weighted_mean(w, wv) as f32
        })
        .collect();

    DecisionTree { depth, tests, leaves }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn two_pixel(a: u8, b: u8) -> GrayImage {
        // Column 0 holds `a`, column 2 holds `b`; a 3x3 window centered at (1, 1).
        GrayImage::from_fn(3, 3, |_, c| match c {
            0 => a,
            2 => b,
            _ => 0,
        })
    }

    fn left_right() -> CompTest {
        CompTest::new(NormLoc::new(0, -127), NormLoc::new(0, 127))
    }

    #[test]
    fn bintest_branches() {
        let w = Window::new(1, 1, 3);
        assert_eq!(left_right().eval(&two_pixel(10, 20), &w), 0);
        assert_eq!(left_right().eval(&two_pixel(20, 20), &w), 0);
        assert_eq!(left_right().eval(&two_pixel(30, 20), &w), 1);
    }

    #[test]
    fn wmse_examples() {
        let w = Window::new(1, 1, 3);
        let lo = two_pixel(10, 20);
        let hi = two_pixel(30, 20);
        let s = |img, label| Sample {
            image: img,
            window: w,
            label,
            weight: 1.0,
        };
        let perfect = wmse_split_score(&[s(&hi, 1.0), s(&lo, -1.0)], &left_right());
        assert_eq!(perfect.score, 0.0);
        assert_eq!((perfect.mean0, perfect.mean1), (-1.0, 1.0));

        // All in C1, labels {+1, +1, -1}: mean 1/3, error 2(2/3)² + (4/3)² = 8/3.
        let all_one = wmse_split_score(&[s(&hi, 1.0), s(&hi, 1.0), s(&hi, -1.0)], &left_right());
        assert!((all_one.score - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(all_one.mean0, 0.0);

        let zero: Vec<Sample> = [s(&hi, 1.0), s(&lo, -1.0), s(&hi, -1.0)]
            .into_iter()
            .map(|mut x| {
                x.weight = 0.0;
                x
            })
            .collect();
        let z = wmse_split_score(&zero, &left_right());
        assert_eq!((z.score, z.mean0, z.mean1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_labels_give_constant_leaves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let images: Vec<GrayImage> = (0..20).map(|_| GrayImage::from_fn(8, 8, |_, _| rng.random())).collect();
        let samples: Vec<Sample> = images
            .iter()
            .map(|img| Sample {
                image: img,
                window: Window::new(4, 4, 8),
                label: 1.0,
                weight: 0.05,
            })
            .collect();
        let seed = TreeSeed {
            seed: 1,
            stage: 0,
            tree: 0,
        };
        let tree = train_tree(
            &samples,
            &TreeParams {
                depth: 3,
                candidates: 8,
            },
            seed,
        );
        for &leaf in tree.leaves() {
            assert!(leaf == 1.0 || leaf == 0.0);
        }
        for s in &samples {
            assert_eq!(tree.eval(s.image, &s.window), 1.0);
        }
    }

    #[test]
    fn empty_training_set() {
        let seed = TreeSeed {
            seed: 9,
            stage: 1,
            tree: 2,
        };
        let tree = train_tree(
            &[],
            &TreeParams {
                depth: 4,
                candidates: 5,
            },
            seed,
        );
        assert_eq!(tree.tests().len(), 15);
        assert!(tree.leaves().iter().all(|&v| v == 0.0));
        // Every node picked its first candidate.
        for (node, t) in tree.tests().iter().enumerate() {
            assert_eq!(*t, seed.candidates(node, 1)[0]);
        }
    }

    #[test]
    fn self_comparison_and_flat_images_take_leaf_zero() {
        let loc = NormLoc::new(30, -40);
        let tree = DecisionTree::from_parts(1, vec![CompTest::new(loc, loc)], vec![0.25, -0.75]).unwrap();
        let img = GrayImage::from_fn(20, 20, |r, c| (r * 20 + c) as u8);
        assert_eq!(tree.eval(&img, &Window::new(10, 10, 20)), 0.25);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tests: Vec<CompTest> = (0..7).map(|_| CompTest::random(&mut rng)).collect();
        let leaves: Vec<f32> = (0..8).map(|i| i as f32).collect();
        let tree = DecisionTree::from_parts(3, tests, leaves).unwrap();
        assert_eq!(tree.eval(&GrayImage::filled(9, 9, 77), &Window::new(4, 4, 9)), 0.0);
    }

    #[test]
    fn separable_set_is_fit_exactly() {
        // Positives are bright on the left, negatives bright on the right.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let positive = i % 2 == 0;
            let (l, r) = if positive { (200u8, 50u8) } else { (50, 200) };
            let jitter: u8 = rng.random_range(0..20);
            images.push(GrayImage::from_fn(
                16,
                16,
                |_, c| if c < 8 { l + jitter } else { r + jitter },
            ));
            labels.push(if positive { 1.0 } else { -1.0 });
        }
        let samples: Vec<Sample> = images
            .iter()
            .zip(&labels)
            .map(|(img, &label)| Sample {
                image: img,
                window: Window::new(8, 8, 16),
                label,
                weight: 1.0 / 40.0,
            })
            .collect();
        let tree = train_tree(
            &samples,
            &TreeParams {
                depth: 2,
                candidates: 64,
            },
            TreeSeed {
                seed: 5,
                stage: 0,
                tree: 0,
            },
        );
        for s in &samples {
            assert_eq!(tree.eval(s.image, &s.window) as f64, s.label);
        }
    }

    #[test]
    fn shape_checks() {
        assert!(matches!(
            DecisionTree::from_parts(0, vec![], vec![0.0]),
            Err(TreeError::Depth(0))
        ));
        assert!(matches!(
            DecisionTree::from_parts(2, vec![CompTest::default(); 3], vec![0.0; 3]),
            Err(TreeError::Shape { .. })
        ));
    }

    #[test]
    fn rotation_by_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tests: Vec<CompTest> = (0..15).map(|_| CompTest::random(&mut rng)).collect();
        let tree = DecisionTree::from_parts(4, tests, vec![0.5; 16]).unwrap();
        assert_eq!(tree.rotated(&OrientationTable::new(7), 0), tree);
    }
}
