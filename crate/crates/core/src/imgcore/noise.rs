use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::GrayImage;

/// Adds zero-mean Gaussian noise with standard deviation `sigma` to every
/// pixel, rounding to the nearest integer and clamping to `[0, 255]`.
///
/// The noise field depends only on `seed` and the pixel index, so the same
/// seed at different `sigma` values scales one underlying field.
pub fn add_gaussian_noise(img: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    assert!(
        sigma >= 0.0 && sigma.is_finite(),
        "sigma must be finite and non-negative"
    );
    if sigma == 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = img.clone();
    for px in out.data_mut() {
        let z: f64 = normal.sample(&mut rng);
        let v = *px as f64 + (sigma * z).round();
        *px = v.clamp(0.0, 255.0) as u8;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let img = GrayImage::from_fn(17, 9, |r, c| (r * 31 + c * 7) as u8);
        assert_eq!(add_gaussian_noise(&img, 0.0, 5), img);
    }

    #[test]
    fn deterministic_per_seed() {
        let img = GrayImage::filled(64, 64, 100);
        let a = add_gaussian_noise(&img, 16.0, 42);
        let b = add_gaussian_noise(&img, 16.0, 42);
        let c = add_gaussian_noise(&img, 16.0, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_std_matches_sigma() {
        let img = GrayImage::filled(1000, 1000, 128);
        let out = add_gaussian_noise(&img, 16.0, 1);
        let n = out.data().len() as f64;
        let mean = out.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = out.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        assert!((15.5..=16.5).contains(&sd), "sd = {sd}");
        assert!((mean - 128.0).abs() < 0.1, "mean = {mean}");
    }

    #[test]
    fn clamps_to_byte_range() {
        let img = GrayImage::filled(100, 100, 250);
        let out = add_gaussian_noise(&img, 64.0, 9);
        assert!(out.data().contains(&255));
        let dark = add_gaussian_noise(&GrayImage::filled(100, 100, 3), 64.0, 9);
        assert!(dark.data().contains(&0));
    }
}
