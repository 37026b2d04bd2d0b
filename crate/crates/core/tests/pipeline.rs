use pct::cascade::{mine_negatives, train_cascade, MiningConfig, Patch, TrainConfig};
use pct::dataset::{augment, generate_synthetic, AugmentParams, SynthSpec};
use pct::eval::{detect_all, evaluate, noise_sweep, roc_curve, throughput, LabeledImage, MATCH_OVERLAP};
use pct::model_io::{deserialize, serialize};
use pct::{Cascade, Detector, GrayImage, ScanParams, StageConfig, TreeParams, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn backgrounds(count: usize, seed: u64) -> Vec<GrayImage> {
    let spec = SynthSpec {
        width: 256,
        height: 256,
        with_object: false,
        clutter: 16,
        ..SynthSpec::default()
    };
    generate_synthetic(&spec, count, seed)
        .into_iter()
        .map(|s| s.image)
        .collect()
}

fn scan_params() -> ScanParams {
    ScanParams {
        max_size: Some(72),
        ..ScanParams::default()
    }
}

fn train_small(stages: &[(usize, f64)], seed: u64) -> (Cascade, Vec<GrayImage>) {
    let corpus = generate_synthetic(&SynthSpec::default(), 150, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = AugmentParams {
        count: 4,
        ..AugmentParams::default()
    };
    let mut windows = Vec::new();
    for (i, item) in corpus.iter().enumerate() {
        for a in &LabeledImage::from_synth(item, "x").truth {
            for w in augment(a, 128, 128, &params, &mut rng) {
                windows.push((i, w));
            }
        }
    }
    let positives: Vec<Patch<'_>> = windows
        .iter()
        .map(|&(i, window)| Patch {
            image: &corpus[i].image,
            window,
        })
        .collect();
    let bg = backgrounds(20, seed + 1);
    let cfg = TrainConfig {
        tree: TreeParams {
            depth: 4,
            candidates: 128,
        },
        schedule: stages
            .iter()
            .map(|&(tree_count, tpr_target)| StageConfig {
                tree_count,
                tpr_target,
                negatives_to_mine: 600,
            })
            .collect(),
        negative_min_size: 24,
        negative_max_size: 72,
        draws_per_negative: 100_000,
        seed,
    };
    let (cascade, _) = train_cascade(&positives, &bg, &cfg).unwrap();
    (cascade, bg)
}

#[test]
fn mining_ratio_matches_fresh_windows() {
    let (cascade, bg) = train_small(&[(1, 0.98)], 3);
    let cfg = MiningConfig {
        count: 4000,
        min_size: 24,
        max_size: 72,
        max_draws: 10_000_000,
    };
    let mined = mine_negatives(&cascade, &bg, &cfg, 41, 0).unwrap();
    assert!(!mined.exhausted);
    let ratio = mined.acceptance_ratio();

    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let n = 100_000;
    let (lo, hi) = ((24f64).ln(), (72f64).ln());
    let accepted = (0..n)
        .filter(|_| {
            let img = &bg[rng.random_range(0..bg.len())];
            let size = rng.random_range(lo..=hi).exp().round() as i32;
            let top = rng.random_range(0..=img.height() as i32 - size);
            let left = rng.random_range(0..=img.width() as i32 - size);
            cascade
                .classify(img, &Window::from_top_left(top, left, size))
                .is_accepted()
        })
        .count();
    let fresh = accepted as f64 / n as f64;
    let se = (fresh * (1.0 - fresh) / n as f64 + ratio * (1.0 - ratio) / mined.drawn as f64).sqrt();
    assert!(
        (ratio - fresh).abs() <= 3.0 * se,
        "mined ratio {ratio} vs fresh {fresh}, se {se}"
    );
}

#[test]
fn model_file_roundtrip_keeps_detections() {
    let (cascade, _) = train_small(&[(1, 0.98), (3, 0.99)], 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("disc.pct");
    std::fs::write(&path, serialize(&cascade).unwrap()).unwrap();
    let loaded = deserialize(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(loaded, cascade);

    let images = generate_synthetic(&SynthSpec::default(), 10, 77);
    let a = Detector::new(&cascade, scan_params()).unwrap();
    let b = Detector::new(&loaded, scan_params()).unwrap();
    for s in &images {
        assert_eq!(a.detect(&s.image), b.detect(&s.image));
    }
}

#[test]
fn sweep_at_zero_sigma_equals_direct_evaluation() {
    let (cascade, _) = train_small(&[(1, 0.98), (3, 0.99)], 6);
    let corpus: Vec<LabeledImage> = generate_synthetic(&SynthSpec::default(), 30, 8)
        .iter()
        .map(|s| LabeledImage::from_synth(s, "s"))
        .collect();
    let detector = Detector::new(&cascade, scan_params()).unwrap();
    let direct = evaluate(&detector, &corpus, MATCH_OVERLAP);
    let sweep = noise_sweep(&detector, &corpus, &[0.0], 1, MATCH_OVERLAP);
    assert_eq!(sweep, vec![(0.0, direct)]);
    assert_eq!(sweep, noise_sweep(&detector, &corpus, &[0.0], 99, MATCH_OVERLAP));

    let noisy_a = noise_sweep(&detector, &corpus, &[0.0, 16.0], 3, MATCH_OVERLAP);
    let noisy_b = noise_sweep(&detector, &corpus, &[0.0, 16.0], 3, MATCH_OVERLAP);
    assert_eq!(noisy_a, noisy_b);
}

#[test]
fn roc_on_real_detections_is_monotone() {
    let (cascade, _) = train_small(&[(1, 0.98), (3, 0.99)], 9);
    let corpus: Vec<LabeledImage> = generate_synthetic(&SynthSpec::default(), 40, 10)
        .iter()
        .map(|s| LabeledImage::from_synth(s, "r"))
        .collect();
    let detector = Detector::new(&cascade, scan_params()).unwrap();
    let scored = detect_all(&detector, &corpus);
    let curve = roc_curve(&scored, MATCH_OVERLAP);
    let native = evaluate(&detector, &corpus, MATCH_OVERLAP);
    assert_eq!(curve[0].tpr, native.detection_rate());
    assert_eq!(curve[0].false_positives, native.false_positives);
    for w in curve.windows(2) {
        assert!(w[1].tpr <= w[0].tpr);
        assert!(w[1].false_positives <= w[0].false_positives);
    }
    let last = curve.last().unwrap();
    assert_eq!((last.tpr, last.false_positives), (0.0, 0));
}

#[test]
fn scan_time_tracks_image_area() {
    // Every window runs the same five trees and is rejected, so the work
    // is proportional to the window count.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let trees = (0..5)
        .map(|_| {
            let tests = (0..63).map(|_| pct::CompTest::random(&mut rng)).collect();
            pct::DecisionTree::from_parts(6, tests, vec![0.0; 64]).unwrap()
        })
        .collect();
    let reject_all = Cascade::from_stages(6, vec![pct::Stage::new(trees, 1.0).unwrap()]).unwrap();
    let spec = SynthSpec {
        width: 320,
        height: 240,
        with_object: false,
        ..SynthSpec::default()
    };
    let small: Vec<GrayImage> = generate_synthetic(&spec, 2, 1).into_iter().map(|s| s.image).collect();
    let large: Vec<GrayImage> = generate_synthetic(&SynthSpec { width: 640, ..spec }, 2, 1)
        .into_iter()
        .map(|s| s.image)
        .collect();
    let params = scan_params();
    let count = |img: &GrayImage| params.windows(img.width(), img.height()).count() as f64;
    let predicted = count(&large[0]) / count(&small[0]);
    assert!((1.5..=3.0).contains(&predicted), "window ratio {predicted}");

    let detector = Detector::new(&reject_all, params).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut ratios: Vec<f64> = pool.install(|| {
        (0..7)
            .map(|_| throughput(&detector, &large, 3) / throughput(&detector, &small, 3))
            .collect()
    });
    ratios.sort_by(f64::total_cmp);
    let median = ratios[ratios.len() / 2];
    assert!((1.5..=3.0).contains(&median), "time ratios {ratios:?}");

    let tiny = [GrayImage::filled(30, 30, 128)];
    let pass_all = Cascade::from_stages(
        1,
        vec![pct::Stage::new(vec![pct::DecisionTree::constant(1, 1.0)], 0.0).unwrap()],
    )
    .unwrap();
    let d = Detector::new(&pass_all, ScanParams::default()).unwrap();
    assert!(throughput(&d, &tiny, 3) > 0.0);
}
