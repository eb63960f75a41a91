//! Two-class power-law texture datasets.
//!
//! Each image is white Gaussian noise shaped in the frequency domain by an
//! amplitude `1 / f^alpha`, standardized to mean 0.5 and std 0.15 and stored as
//! 8-bit gray. A smaller exponent keeps more high-frequency energy and so more
//! local contrast: the sharp class plays "real", the smooth class "fake".
//!
//! [`generate_varied_textures`] builds an unlabelled set whose images differ in
//! exponent, overall contrast and fine grain, for edit-robustness analyses.

use std::fs;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, Manifest, ManifestEntry, FAKE, REAL};
use crate::fft::Fft2;
use crate::image::{quantize, save_image, Image, ImageError};

pub const TARGET_MEAN: f64 = 0.5;
pub const TARGET_STD: f64 = 0.15;
pub const DEFAULT_SIZE: usize = 64;
pub const DEFAULT_COUNT: usize = 200;
pub const DEFAULT_SHARP_EXPONENT: f64 = 1.0;
pub const DEFAULT_SMOOTH_EXPONENT: f64 = 1.6;
const SMOOTH_STREAM: u64 = 1;
const GRAIN_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("image size {0} must be a power of two >= 32")]
    Size(usize),
    #[error("spectral exponent must be positive and finite, got {0}")]
    Exponent(f64),
    #[error("sharp exponent {sharp} must be below smooth exponent {smooth}")]
    Ordering { sharp: f64, smooth: f64 },
    #[error("cannot normalize a constant image")]
    Constant,
    #[error("image is not finite")]
    NonFinite,
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub size: usize,
    pub spectral_exponent: f64,
    pub count: usize,
    pub seed: u64,
}

impl TextureSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.size < 32 || !self.size.is_power_of_two() {
            return Err(SynthError::Size(self.size));
        }
        if !(self.spectral_exponent.is_finite() && self.spectral_exponent > 0.0) {
            return Err(SynthError::Exponent(self.spectral_exponent));
        }
        Ok(())
    }

    /// Seed of image `index`.
    pub fn image_seed(&self, index: usize) -> u64 {
        self.seed ^ index as u64
    }
}

/// Scrambles a user seed into a class seed. Per-image seeds are `class ^ index`,
/// so nearby user seeds must not map to nearby class seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Sharp and smooth specs with the default size, count and exponents.
pub fn default_specs(seed: u64) -> (TextureSpec, TextureSpec) {
    let sharp = TextureSpec {
        size: DEFAULT_SIZE,
        spectral_exponent: DEFAULT_SHARP_EXPONENT,
        count: DEFAULT_COUNT,
        seed: derive_seed(seed, 0),
    };
    let smooth = TextureSpec {
        spectral_exponent: DEFAULT_SMOOTH_EXPONENT,
        seed: derive_seed(seed, SMOOTH_STREAM),
        ..sharp
    };
    (sharp, smooth)
}

/// Zero-mean power-law random field of side `size`, row-major.
pub fn power_law_field(size: usize, exponent: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..size * size).map(|_| rng.sample(StandardNormal)).collect();
    let fft = Fft2::new(size, size);
    let mut spec = fft.forward_real(&noise);
    let folded = |k: usize| k.min(size - k) as f64;
    for y in 0..size {
        for x in 0..size {
            let f = folded(x).hypot(folded(y));
            let amp = if f == 0.0 { 0.0 } else { f.powf(-exponent) };
            spec[y * size + x] *= amp;
        }
    }
    fft.run(&mut spec, true);
    spec.iter().map(|c: &Complex64| c.re).collect()
}

fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn affine(values: &[f64], mean: f64, std: f64) -> Result<(f64, f64), SynthError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SynthError::NonFinite);
    }
    let (m, s) = moments(values);
    if s <= 0.0 || !s.is_finite() {
        return Err(SynthError::Constant);
    }
    Ok((std / s, mean - m * std / s))
}

fn standardize(values: &[f64]) -> Result<Vec<f64>, SynthError> {
    let (a, b) = affine(values, TARGET_MEAN, TARGET_STD)?;
    Ok(values.iter().map(|v| (a * v + b).clamp(0.0, 1.0)).collect())
}

/// Like [`standardize`] but refits the affine map so the *clamped* result has
/// the target moments; otherwise heavy-tailed images lose more variance to the
/// clamp and the class with larger excursions becomes separable by its std.
fn standardize_clamped(values: &[f64], mean: f64, std: f64) -> Result<Vec<f64>, SynthError> {
    let (mut a, mut b) = affine(values, mean, std)?;
    let mut out: Vec<f64> = values.iter().map(|v| (a * v + b).clamp(0.0, 1.0)).collect();
    for _ in 0..50 {
        let (m, s) = moments(&out);
        if (m - mean).abs() < 1e-7 && (s - std).abs() < 1e-7 || s == 0.0 {
            break;
        }
        a *= std / s;
        b = mean + (b - mean) * std / s + (mean - m);
        out = values.iter().map(|v| (a * v + b).clamp(0.0, 1.0)).collect();
    }
    Ok(out)
}

/// Affine map of all pixel values to mean 0.5 and (population) std 0.15, then
/// clamped to `[0, 1]`. Returns a float image.
pub fn normalize_image_stats(img: &Image) -> Result<Image, SynthError> {
    let values: Vec<f64> = img.to_f32_vec().iter().map(|&v| v as f64).collect();
    let out = standardize(&values)?;
    Ok(Image::from_f32(
        img.width(),
        img.height(),
        img.channels(),
        out.into_iter().map(|v| v as f32).collect(),
    )?)
}

/// One 8-bit gray texture.
pub fn generate_texture(size: usize, exponent: f64, seed: u64) -> Result<Image, SynthError> {
    let field = standardize_clamped(&power_law_field(size, exponent, seed), TARGET_MEAN, TARGET_STD)?;
    let px = field.into_iter().map(|v| quantize(v as f32)).collect();
    Ok(Image::from_u8(size, size, 1, px)?)
}

/// All images of one class, in index order.
pub fn generate_class(spec: &TextureSpec) -> Result<Vec<Image>, SynthError> {
    spec.validate()?;
    crate::par::map_range(spec.count, |i| {
        generate_texture(spec.size, spec.spectral_exponent, spec.image_seed(i))
    })
    .into_iter()
    .collect()
}

/// Parameter ranges of [`generate_varied_textures`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariedSpec {
    pub size: usize,
    pub count: usize,
    pub seed: u64,
    pub exponent: (f64, f64),
    /// Std of the power-law structure.
    pub contrast: (f64, f64),
    /// Std of the added white grain.
    pub grain: (f64, f64),
}

impl VariedSpec {
    pub fn new(size: usize, count: usize, seed: u64) -> Self {
        Self {
            size,
            count,
            seed: derive_seed(seed, GRAIN_STREAM),
            exponent: (DEFAULT_SHARP_EXPONENT, DEFAULT_SMOOTH_EXPONENT),
            contrast: (0.03, 0.2),
            grain: (0.0, 0.08),
        }
    }
}

/// Textures whose exponent, structure contrast and grain strength are drawn
/// uniformly per image: `clamp(0.5 + s * field / std(field) + g * noise)`.
pub fn generate_varied_textures(spec: &VariedSpec) -> Result<Vec<Image>, SynthError> {
    TextureSpec {
        size: spec.size,
        spectral_exponent: spec.exponent.0,
        count: spec.count,
        seed: spec.seed,
    }
    .validate()?;
    let ranges_ok = [spec.exponent, spec.contrast, spec.grain]
        .iter()
        .all(|&(lo, hi)| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi);
    if !ranges_ok || spec.exponent.0 <= 0.0 || spec.contrast.0 <= 0.0 {
        return Err(SynthError::Exponent(spec.exponent.0));
    }
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.gen_range(lo..hi) };
    crate::par::map_range(spec.count, |i| {
        let seed = spec.seed ^ i as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(GRAIN_STREAM);
        let alpha = draw(&mut rng, spec.exponent);
        let s = draw(&mut rng, spec.contrast);
        let g = draw(&mut rng, spec.grain);
        let field = power_law_field(spec.size, alpha, seed);
        let (a, b) = affine(&field, TARGET_MEAN, s)?;
        let px = field
            .iter()
            .map(|&v| {
                let z: f64 = rng.sample(StandardNormal);
                quantize((a * v + b + g * z) as f32)
            })
            .collect();
        Ok(Image::from_u8(spec.size, spec.size, 1, px)?)
    })
    .into_iter()
    .collect()
}

/// Writes `real/NNNNN.png` (sharp) and `fake/NNNNN.png` (smooth) plus
/// `manifest.json` under `out`, and returns the manifest.
pub fn generate_texture_dataset(
    sharp: &TextureSpec,
    smooth: &TextureSpec,
    out: impl AsRef<Path>,
) -> Result<Manifest, SynthError> {
    sharp.validate()?;
    smooth.validate()?;
    if sharp.spectral_exponent >= smooth.spectral_exponent {
        return Err(SynthError::Ordering {
            sharp: sharp.spectral_exponent,
            smooth: smooth.spectral_exponent,
        });
    }
    let out = out.as_ref();
    let mut entries = Vec::with_capacity(sharp.count + smooth.count);
    for (spec, label, dir) in [(sharp, REAL, "real"), (smooth, FAKE, "fake")] {
        let sub = out.join(dir);
        fs::create_dir_all(&sub).map_err(|source| SynthError::Io {
            path: sub.display().to_string(),
            source,
        })?;
        let written: Vec<Result<ManifestEntry, SynthError>> = crate::par::map_range(spec.count, |i| {
            let seed = spec.image_seed(i);
            let img = generate_texture(spec.size, spec.spectral_exponent, seed)?;
            let rel = format!("{dir}/{i:05}.png");
            save_image(&img, out.join(&rel))?;
            Ok(ManifestEntry {
                path: rel,
                label,
                seed: Some(seed),
            })
        });
        for e in written {
            entries.push(e?);
        }
    }
    let manifest = Manifest {
        root: out.to_path_buf(),
        entries,
    };
    manifest.save(out.join("manifest.json"))?;
    Ok(manifest)
}

/// Best accuracy of a single threshold (either direction) separating `a` from `b`.
pub fn threshold_separability(a: &[f64], b: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len() as f64;
    // threshold below everything: predicting "a" above it is right for all of a
    let (mut a_below, mut b_below) = (0usize, 0usize);
    let mut best = (a.len().max(b.len())) as f64 / n;
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0 == v {
            if all[i].1 {
                a_below += 1;
            } else {
                b_below += 1;
            }
            i += 1;
        }
        let a_above_rule = (b_below + (a.len() - a_below)) as f64 / n;
        let b_above_rule = (a_below + (b.len() - b_below)) as f64 / n;
        best = best.max(a_above_rule).max(b_above_rule);
    }
    best
}
