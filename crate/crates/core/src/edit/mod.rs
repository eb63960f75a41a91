//! Deterministic image edits: bilinear resize, simulated JPEG, Gaussian blur,
//! additive Gaussian noise and L0 gradient smoothing.
//!
//! Every edit returns a new image; resize, blur, noise and L0 produce float
//! images, the JPEG simulation produces 8-bit levels like a real decoder.

mod blur;
mod jpeg;
mod l0;
mod noise;
mod resize;

pub use blur::{gaussian_blur, gaussian_kernel, gaussian_sigma};
pub use jpeg::{jpeg_codec, psnr, quant_table, CHROMINANCE_BASE, LUMINANCE_BASE};
pub use l0::{l0_smooth, l0_smooth_with, nonzero_gradient_count, L0Params};
pub use noise::add_gaussian_noise;
pub use resize::{bilinear_resize, resize_by_factor};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Image, ImageError};

pub const DEFAULT_JPEG_QUALITY: u8 = 75;
pub const DEFAULT_BLUR_KERNEL: usize = 25;
pub const DEFAULT_NOISE_STD: f32 = 5.0;
pub const DEFAULT_L0_LAMBDA: f64 = 0.02;

#[derive(Debug, Error)]
pub enum EditError {
    #[error("JPEG quality {0} outside 1..=100")]
    Quality(u8),
    #[error("blur kernel size {0} must be odd")]
    EvenKernel(usize),
    #[error("resize target must be at least 1x1 (got {0}x{1})")]
    EmptyTarget(usize, usize),
    #[error("resize factor {0} must be finite and positive")]
    BadFactor(f64),
    #[error("noise std {0} must be finite and non-negative")]
    BadStd(f32),
    #[error("L0 lambda {0} must be finite and non-negative")]
    BadLambda(f64),
    #[error("image contains non-finite pixels")]
    NonFinite,
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Resize target: explicit size or a uniform scale factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResizeTarget {
    Size { width: usize, height: usize },
    Factor { factor: f64 },
}

/// A serializable edit, e.g. `{"kind":"jpeg","quality":75}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EditSpec {
    Identity,
    Resize(ResizeTarget),
    Jpeg { quality: u8 },
    Blur { kernel_size: usize },
    Noise { std: f32, seed: u64 },
    L0 { lambda: f64 },
}

impl EditSpec {
    pub fn resize(width: usize, height: usize) -> Self {
        EditSpec::Resize(ResizeTarget::Size { width, height })
    }

    pub fn scale(factor: f64) -> Self {
        EditSpec::Resize(ResizeTarget::Factor { factor })
    }

    pub fn validate(&self) -> Result<(), EditError> {
        match *self {
            EditSpec::Identity => Ok(()),
            EditSpec::Resize(ResizeTarget::Size { width, height }) => {
                if width == 0 || height == 0 {
                    Err(EditError::EmptyTarget(width, height))
                } else {
                    Ok(())
                }
            }
            EditSpec::Resize(ResizeTarget::Factor { factor }) => {
                if factor.is_finite() && factor > 0.0 {
                    Ok(())
                } else {
                    Err(EditError::BadFactor(factor))
                }
            }
            EditSpec::Jpeg { quality } => {
                if (1..=100).contains(&quality) {
                    Ok(())
                } else {
                    Err(EditError::Quality(quality))
                }
            }
            EditSpec::Blur { kernel_size } => {
                if kernel_size % 2 == 1 {
                    Ok(())
                } else {
                    Err(EditError::EvenKernel(kernel_size))
                }
            }
            EditSpec::Noise { std, .. } => {
                if std.is_finite() && std >= 0.0 {
                    Ok(())
                } else {
                    Err(EditError::BadStd(std))
                }
            }
            EditSpec::L0 { lambda } => {
                if lambda.is_finite() && lambda >= 0.0 {
                    Ok(())
                } else {
                    Err(EditError::BadLambda(lambda))
                }
            }
        }
    }

    /// Applies the edit. Noise draws from `seed` mixed with a digest of the
    /// image content, so each image gets its own field independent of the
    /// order in which a set is processed.
    pub fn apply(&self, img: &Image) -> Result<Image, EditError> {
        self.validate()?;
        match *self {
            EditSpec::Identity => Ok(img.clone()),
            EditSpec::Resize(ResizeTarget::Size { width, height }) => bilinear_resize(img, width, height),
            EditSpec::Resize(ResizeTarget::Factor { factor }) => resize_by_factor(img, factor),
            EditSpec::Jpeg { quality } => jpeg_codec(img, quality),
            EditSpec::Blur { kernel_size } => gaussian_blur(img, kernel_size),
            EditSpec::Noise { std, seed } => add_gaussian_noise(img, std, seed ^ img.content_hash()),
            EditSpec::L0 { lambda } => l0_smooth(img, lambda),
        }
    }

    pub fn label(&self) -> String {
        match self {
            EditSpec::Identity => "identity".into(),
            EditSpec::Resize(ResizeTarget::Size { width, height }) => format!("resize{width}x{height}"),
            EditSpec::Resize(ResizeTarget::Factor { factor }) => format!("scale{factor}"),
            EditSpec::Jpeg { quality } => format!("jpeg{quality}"),
            EditSpec::Blur { kernel_size } => format!("blur{kernel_size}"),
            EditSpec::Noise { std, .. } => format!("noise{std}"),
            EditSpec::L0 { lambda } => format!("l0-{lambda}"),
        }
    }
}

/// Applies edits left to right.
pub fn apply_chain(edits: &[EditSpec], img: &Image) -> Result<Image, EditError> {
    let mut cur = img.clone();
    for e in edits {
        cur = e.apply(&cur)?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shapes() {
        let cases = [
            (EditSpec::Identity, r#"{"kind":"identity"}"#),
            (EditSpec::resize(64, 32), r#"{"kind":"resize","width":64,"height":32}"#),
            (EditSpec::scale(0.25), r#"{"kind":"resize","factor":0.25}"#),
            (EditSpec::Jpeg { quality: 75 }, r#"{"kind":"jpeg","quality":75}"#),
            (EditSpec::Blur { kernel_size: 25 }, r#"{"kind":"blur","kernel_size":25}"#),
            (EditSpec::Noise { std: 5.0, seed: 9 }, r#"{"kind":"noise","std":5.0,"seed":9}"#),
            (EditSpec::L0 { lambda: 0.02 }, r#"{"kind":"l0","lambda":0.02}"#),
        ];
        for (spec, json) in cases {
            assert_eq!(serde_json::to_string(&spec).unwrap(), json);
            assert_eq!(serde_json::from_str::<EditSpec>(json).unwrap(), spec);
        }
    }

    #[test]
    fn noise_requires_seed() {
        assert!(serde_json::from_str::<EditSpec>(r#"{"kind":"noise","std":5.0}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(EditSpec::Jpeg { quality: 0 }.validate().is_err());
        assert!(EditSpec::Jpeg { quality: 101 }.validate().is_err());
        assert!(EditSpec::Blur { kernel_size: 4 }.validate().is_err());
        assert!(EditSpec::resize(0, 4).validate().is_err());
        assert!(EditSpec::scale(-1.0).validate().is_err());
        assert!(EditSpec::Noise { std: -1.0, seed: 0 }.validate().is_err());
        assert!(EditSpec::L0 { lambda: f64::NAN }.validate().is_err());
    }

    #[test]
    fn noise_is_order_independent_and_deterministic() {
        let a = Image::gray_from_fn(8, 8, |x, y| (x * 20 + y) as u8);
        let b = Image::gray_from_fn(8, 8, |x, y| (y * 20 + x) as u8);
        let spec = EditSpec::Noise { std: 5.0, seed: 1 };
        assert_eq!(spec.apply(&a).unwrap(), spec.apply(&a).unwrap());
        assert_ne!(spec.apply(&a).unwrap().to_f32_vec(), spec.apply(&b).unwrap().to_f32_vec());
    }

    #[test]
    fn chain_order() {
        let img = Image::gray_from_fn(16, 16, |x, _| (x * 16) as u8);
        let out = apply_chain(&[EditSpec::Jpeg { quality: 50 }, EditSpec::resize(4, 4)], &img).unwrap();
        assert_eq!((out.width(), out.height()), (4, 4));
    }
}
