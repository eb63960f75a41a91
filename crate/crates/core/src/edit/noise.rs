use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::EditError;
use crate::image::Image;

/// Adds i.i.d. `N(0, std^2)` noise in 8-bit intensity units to every sample
/// and clamps to the valid range. Deterministic in `seed`.
pub fn add_gaussian_noise(img: &Image, std: f32, seed: u64) -> Result<Image, EditError> {
    if !(std.is_finite() && std >= 0.0) {
        return Err(EditError::BadStd(std));
    }
    if std == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f64, std as f64).map_err(|_| EditError::BadStd(std))?;
    let data = img
        .to_f32_vec()
        .into_iter()
        .map(|v| ((v as f64 * 255.0 + normal.sample(&mut rng)).clamp(0.0, 255.0) / 255.0) as f32)
        .collect();
    Ok(Image::from_f32(img.width(), img.height(), img.channels(), data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_identity() {
        let img = Image::gray_from_fn(4, 4, |x, y| (x + y) as u8);
        assert_eq!(add_gaussian_noise(&img, 0.0, 1).unwrap(), img);
    }

    #[test]
    fn deterministic() {
        let img = Image::gray_from_fn(16, 16, |_, _| 128);
        assert_eq!(
            add_gaussian_noise(&img, 5.0, 42).unwrap(),
            add_gaussian_noise(&img, 5.0, 42).unwrap()
        );
        assert_ne!(
            add_gaussian_noise(&img, 5.0, 42).unwrap(),
            add_gaussian_noise(&img, 5.0, 43).unwrap()
        );
    }

    #[test]
    fn moments_on_mid_gray() {
        // 65536 samples: standard error of the mean 5/256 ~ 0.02, of the std ~ 0.014
        let img = Image::gray_from_fn(256, 256, |_, _| 128);
        let out = add_gaussian_noise(&img, 5.0, 7).unwrap().to_f32_vec();
        let diffs: Vec<f64> = out.iter().map(|&v| v as f64 * 255.0 - 128.0).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 0.5, "mean {mean}");
        assert!((std - 5.0).abs() < 0.5, "std {std}");
    }

    #[test]
    fn clamped() {
        let img = Image::gray_from_fn(32, 32, |x, _| if x % 2 == 0 { 0 } else { 255 });
        let out = add_gaussian_noise(&img, 50.0, 3).unwrap();
        assert!(out.to_f32_vec().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
