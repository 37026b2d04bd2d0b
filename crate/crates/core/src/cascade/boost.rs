use crate::tree::{train_tree, DecisionTree, Sample, TreeParams, TreeSeed};

use super::{Patch, TrainError};

const MIN_WEIGHT_SUM: f64 = 1e-300;

/// GentleBoost over two-pixel regression trees.
///
/// Positives carry label `+1`, negatives `-1`. Weights start at `1/P` and
/// `1/N`; after each tree `T` every weight is multiplied by `exp(-c T(I))`
/// and the whole set is renormalized to sum to one.
pub struct GentleBoost<'a> {
    samples: Vec<Sample<'a>>,
    params: TreeParams,
    seed: u64,
    stage: u64,
    trees: Vec<DecisionTree>,
}

impl<'a> GentleBoost<'a> {
    pub fn new(
        positives: &[Patch<'a>],
        negatives: &[Patch<'a>],
        params: TreeParams,
        seed: u64,
        stage: u64,
    ) -> Result<Self, TrainError> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(TrainError::EmptyClass {
                positives: positives.len(),
                negatives: negatives.len(),
            });
        }
        let (wp, wn) = (1.0 / positives.len() as f64, 1.0 / negatives.len() as f64);
        let labelled = |patches: &[Patch<'a>], label: f64, weight: f64| {
            patches
                .iter()
                .map(move |p| Sample {
                    image: p.image,
                    window: p.window,
                    label,
                    weight,
                })
                .collect::<Vec<_>>()
        };
        let mut samples = labelled(positives, 1.0, wp);
        samples.extend(labelled(negatives, -1.0, wn));
        Ok(Self {
            samples,
            params,
            seed,
            stage,
            trees: Vec::new(),
        })
    }

    /// Starts each class from `exp(-c A)` instead of a flat weight, where `A`
    /// is the sample's score accumulated over earlier stages. Each class
    /// still sums to one, so equal priors reproduce `1/P` and `1/N`.
    pub fn with_prior(mut self, positive_prior: &[f32], negative_prior: &[f32]) -> Result<Self, TrainError> {
        let p = self.samples.iter().filter(|s| s.label > 0.0).count();
        let n = self.samples.len() - p;
        for (prior, expected) in [(positive_prior, p), (negative_prior, n)] {
            if prior.len() != expected {
                return Err(TrainError::PriorLength {
                    expected,
                    found: prior.len(),
                });
            }
        }
        let (pos, neg) = self.samples.split_at_mut(p);
        for (class, prior) in [(pos, positive_prior), (neg, negative_prior)] {
            let exponents: Vec<f64> = class.iter().zip(prior).map(|(s, &a)| -s.label * a as f64).collect();
            let top = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let raw: Vec<f64> = exponents.iter().map(|e| (e - top).exp()).collect();
            let total: f64 = raw.iter().sum();
            for (s, r) in class.iter_mut().zip(raw) {
                s.weight = r / total;
            }
        }
        Ok(self)
    }

    pub fn samples(&self) -> &[Sample<'a>] {
        &self.samples
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.weight)
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Fits the next tree to the current weights and applies it.
    pub fn step(&mut self) -> Result<&DecisionTree, TrainError> {
        let seed = TreeSeed {
            seed: self.seed,
            stage: self.stage,
            tree: self.trees.len() as u64,
        };
        let tree = train_tree(&self.samples, &self.params, seed);
        self.apply_tree(tree)?;
        Ok(self.trees.last().unwrap())
    }

    /// Reweights by `tree` and appends it to the ensemble.
    pub fn apply_tree(&mut self, tree: DecisionTree) -> Result<(), TrainError> {
        let mut total = 0.0;
        for s in &mut self.samples {
            let out = tree.eval(s.image, &s.window) as f64;
            s.weight *= (-s.label * out).exp();
            total += s.weight;
        }
        if total.is_nan() || total < MIN_WEIGHT_SUM || total.is_infinite() {
            return Err(TrainError::WeightCollapse {
                stage: self.stage as usize,
                tree: self.trees.len(),
            });
        }
        for s in &mut self.samples {
            s.weight /= total;
        }
        self.trees.push(tree);
        Ok(())
    }

    pub fn into_trees(self) -> Vec<DecisionTree> {
        self.trees
    }
}

/// Fits `tree_count` trees to separate `positives` from `negatives`.
///
/// `positive_prior` / `negative_prior` are the samples' accumulated scores
/// from earlier stages (all zeros for the first stage).
#[allow(clippy::too_many_arguments)]
pub fn boost_fit_stage<'a>(
    positives: &[Patch<'a>],
    negatives: &[Patch<'a>],
    positive_prior: &[f32],
    negative_prior: &[f32],
    tree_count: usize,
    params: TreeParams,
    seed: u64,
    stage: u64,
) -> Result<Vec<DecisionTree>, TrainError> {
    let mut boost =
        GentleBoost::new(positives, negatives, params, seed, stage)?.with_prior(positive_prior, negative_prior)?;
    for _ in 0..tree_count {
        boost.step()?;
    }
    Ok(boost.into_trees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::{GrayImage, Window};

    fn patch(img: &GrayImage) -> Patch<'_> {
        Patch {
            image: img,
            window: Window::new(4, 4, 8),
        }
    }

    #[test]
    fn empty_class_is_rejected() {
        let img = GrayImage::filled(8, 8, 0);
        let r = GentleBoost::new(&[patch(&img)], &[], TreeParams::default(), 0, 0);
        assert!(matches!(
            r,
            Err(TrainError::EmptyClass {
                positives: 1,
                negatives: 0
            })
        ));
    }

    #[test]
    fn initial_weights_and_neutral_tree() {
        let img = GrayImage::filled(8, 8, 0);
        let pos = vec![patch(&img); 4];
        let neg = vec![patch(&img); 2];
        let mut boost = GentleBoost::new(
            &pos,
            &neg,
            TreeParams {
                depth: 2,
                candidates: 4,
            },
            0,
            0,
        )
        .unwrap();
        let w: Vec<f64> = boost.weights().collect();
        assert_eq!(w, vec![0.25, 0.25, 0.25, 0.25, 0.5, 0.5]);
        boost.apply_tree(DecisionTree::constant(2, 0.0)).unwrap();
        let w: Vec<f64> = boost.weights().collect();
        assert_eq!(w, vec![0.125, 0.125, 0.125, 0.125, 0.25, 0.25]);
        boost.apply_tree(DecisionTree::constant(2, 0.0)).unwrap();
        assert_eq!(boost.weights().collect::<Vec<_>>(), w);
    }

    #[test]
    fn one_of_each() {
        let a = GrayImage::filled(8, 8, 10);
        let mut boost = GentleBoost::new(
            &[patch(&a)],
            &[patch(&a)],
            TreeParams {
                depth: 1,
                candidates: 1,
            },
            0,
            0,
        )
        .unwrap();
        assert_eq!(boost.weights().collect::<Vec<_>>(), vec![1.0, 1.0]);
        boost.step().unwrap();
        assert_eq!(boost.weights().collect::<Vec<_>>(), vec![0.5, 0.5]);
    }

    #[test]
    fn priors_reweight_within_class() {
        let img = GrayImage::filled(8, 8, 0);
        let pos = vec![patch(&img); 2];
        let neg = vec![patch(&img); 2];
        let boost = GentleBoost::new(&pos, &neg, TreeParams::default(), 0, 0)
            .unwrap()
            .with_prior(&[0.0, 0.0], &[1.0, 1.0])
            .unwrap();
        assert_eq!(boost.weights().collect::<Vec<_>>(), vec![0.5; 4]);

        let boost = GentleBoost::new(&pos, &neg, TreeParams::default(), 0, 0)
            .unwrap()
            .with_prior(&[0.0, 1.0], &[0.0, 0.0])
            .unwrap();
        let w: Vec<f64> = boost.weights().collect();
        // The positive with the lower prior score gets weight e / (1 + e).
        let e = std::f64::consts::E;
        assert!((w[0] - e / (1.0 + e)).abs() < 1e-12);
        assert!((w[0] + w[1] - 1.0).abs() < 1e-12);

        let bad = GentleBoost::new(&pos, &neg, TreeParams::default(), 0, 0)
            .unwrap()
            .with_prior(&[0.0], &[0.0, 0.0]);
        assert!(matches!(bad, Err(TrainError::PriorLength { expected: 2, found: 1 })));
    }

    #[test]
    fn weight_collapse_is_an_error() {
        let img = GrayImage::filled(8, 8, 0);
        let mut boost = GentleBoost::new(
            &[patch(&img)],
            &[patch(&img)],
            TreeParams {
                depth: 1,
                candidates: 1,
            },
            0,
            3,
        )
        .unwrap();
        // exp(-inf) zeroes the positive and exp(+inf) overflows the negative.
        let r = boost.apply_tree(DecisionTree::constant(1, f32::INFINITY));
        assert!(matches!(r, Err(TrainError::WeightCollapse { stage: 3, tree: 0 })));
    }
}
