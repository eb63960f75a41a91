//! Raster images: the substrate every analysis and editing routine consumes.
//!
//! Pixels are stored row-major, channel-interleaved, either as 8-bit levels
//! or as `f32` intensities in `[0, 1]`. Conversions between the two use
//! `float = u8 / 255` and `u8 = round_half_up(clamp(float, 0, 1) * 255)`.

mod io;

pub use io::{load_image, save_image};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),
    #[error("truncated image stream: {0}")]
    Truncated(String),
    #[error("malformed image: {0}")]
    Malformed(String),
    #[error("invalid dimensions {width}x{height}x{channels}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("pixel buffer has {actual} values, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("float pixel at index {0} is not finite")]
    NonFinite(usize),
    #[error("crop {crop_w}x{crop_h} does not fit in {width}x{height}")]
    CropTooLarge {
        crop_w: usize,
        crop_h: usize,
        width: usize,
        height: usize,
    },
}

/// Pixel storage.
#[derive(Debug, Clone, PartialEq)]
pub enum Pixels {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Pixels,
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    // round-half-up after clamping
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

#[inline]
pub fn dequantize(v: u8) -> f32 {
    v as f32 / 255.0
}

fn check_dims(width: usize, height: usize, channels: usize, len: usize) -> Result<(), ImageError> {
    if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
        return Err(ImageError::InvalidDimensions {
            width,
            height,
            channels,
        });
    }
    let expected = width * height * channels;
    if len != expected {
        return Err(ImageError::LengthMismatch {
            expected,
            actual: len,
        });
    }
    Ok(())
}

impl Image {
    pub fn from_u8(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self, ImageError> {
        check_dims(width, height, channels, data.len())?;
        Ok(Self {
            width,
            height,
            channels,
            pixels: Pixels::U8(data),
        })
    }

    pub fn from_f32(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, ImageError> {
        check_dims(width, height, channels, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels: Pixels::F32(data),
        })
    }

    /// Builds a single-channel 8-bit image by evaluating `f(x, y)`.
    pub fn gray_from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::from_u8(width, height, 1, data).expect("dimensions checked by caller")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &Pixels {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_u8(&self) -> bool {
        matches!(self.pixels, Pixels::U8(_))
    }

    /// Borrow the 8-bit buffer if this is an 8-bit image.
    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.pixels {
            Pixels::U8(v) => Some(v),
            Pixels::F32(_) => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.pixels {
            Pixels::F32(v) => Some(v),
            Pixels::U8(_) => None,
        }
    }

    /// Normalized intensity at `(x, y, c)`.
    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        let i = (y * self.width + x) * self.channels + c;
        match &self.pixels {
            Pixels::U8(v) => dequantize(v[i]),
            Pixels::F32(v) => v[i],
        }
    }

    /// All pixels as normalized floats, row-major interleaved.
    pub fn to_f32_vec(&self) -> Vec<f32> {
        match &self.pixels {
            Pixels::U8(v) => v.iter().map(|&p| dequantize(p)).collect(),
            Pixels::F32(v) => v.clone(),
        }
    }

    /// All pixels as 8-bit levels (float images are clamped and rounded half up).
    pub fn to_u8_vec(&self) -> Vec<u8> {
        match &self.pixels {
            Pixels::U8(v) => v.clone(),
            Pixels::F32(v) => v.iter().map(|&p| quantize(p)).collect(),
        }
    }

    pub fn to_u8(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            pixels: Pixels::U8(self.to_u8_vec()),
        }
    }

    pub fn to_f32(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            pixels: Pixels::F32(self.to_f32_vec()),
        }
    }

    /// One channel as a plane of normalized floats.
    pub fn plane(&self, c: usize) -> Vec<f32> {
        let n = self.width * self.height;
        (0..n)
            .map(|i| match &self.pixels {
                Pixels::U8(v) => dequantize(v[i * self.channels + c]),
                Pixels::F32(v) => v[i * self.channels + c],
            })
            .collect()
    }

    /// Rebuilds a float image from per-channel planes.
    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f32>]) -> Result<Self, ImageError> {
        let channels = planes.len();
        let n = width * height;
        if planes.iter().any(|p| p.len() != n) {
            return Err(ImageError::LengthMismatch {
                expected: n,
                actual: planes.iter().map(Vec::len).find(|&l| l != n).unwrap_or(0),
            });
        }
        let mut data = vec![0.0f32; n * channels];
        for (c, p) in planes.iter().enumerate() {
            for (i, &v) in p.iter().enumerate() {
                data[i * channels + c] = v;
            }
        }
        Self::from_f32(width, height, channels, data)
    }

    /// Luma with BT.601 weights. Gray input is returned unchanged.
    pub fn to_grayscale(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.width * self.height;
        let pixels = match &self.pixels {
            Pixels::U8(v) => Pixels::U8(
                (0..n)
                    .map(|i| {
                        let [r, g, b] = [v[3 * i], v[3 * i + 1], v[3 * i + 2]].map(f64::from);
                        (0.299 * r + 0.587 * g + 0.114 * b).round().clamp(0.0, 255.0) as u8
                    })
                    .collect(),
            ),
            Pixels::F32(v) => Pixels::F32(
                (0..n)
                    .map(|i| 0.299 * v[3 * i] + 0.587 * v[3 * i + 1] + 0.114 * v[3 * i + 2])
                    .collect(),
            ),
        };
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            pixels,
        }
    }

    /// Gray images are replicated into three channels; RGB is returned as is.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = match &self.pixels {
            Pixels::U8(v) => Pixels::U8(v.iter().flat_map(|&p| [p, p, p]).collect()),
            Pixels::F32(v) => Pixels::F32(v.iter().flat_map(|&p| [p, p, p]).collect()),
        };
        Image {
            width: self.width,
            height: self.height,
            channels: 3,
            pixels,
        }
    }

    /// Crop of size `w`x`h` whose origin is `((width - w) / 2, (height - h) / 2)`, rounded down.
    pub fn center_crop(&self, w: usize, h: usize) -> Result<Image, ImageError> {
        if w == 0 || h == 0 || w > self.width || h > self.height {
            return Err(ImageError::CropTooLarge {
                crop_w: w,
                crop_h: h,
                width: self.width,
                height: self.height,
            });
        }
        let x0 = (self.width - w) / 2;
        let y0 = (self.height - h) / 2;
        let c = self.channels;
        let rows = |row_len: usize| (y0..y0 + h).map(move |y| ((y * self.width + x0) * c, row_len));
        let pixels = match &self.pixels {
            Pixels::U8(v) => Pixels::U8(rows(w * c).flat_map(|(s, l)| v[s..s + l].iter().copied()).collect()),
            Pixels::F32(v) => Pixels::F32(rows(w * c).flat_map(|(s, l)| v[s..s + l].iter().copied()).collect()),
        };
        Ok(Image {
            width: w,
            height: h,
            channels: c,
            pixels,
        })
    }

    /// FNV-1a digest of the 8-bit rendering; used to derive content-keyed seeds.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for v in [self.width as u64, self.height as u64, self.channels as u64] {
            v.to_le_bytes().into_iter().for_each(&mut eat);
        }
        self.to_u8_vec().into_iter().for_each(eat);
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(
            Image::from_u8(2, 2, 1, vec![0; 3]),
            Err(ImageError::LengthMismatch { .. })
        ));
        assert!(matches!(
            Image::from_u8(2, 2, 2, vec![0; 8]),
            Err(ImageError::InvalidDimensions { .. })
        ));
        assert!(matches!(
            Image::from_f32(1, 1, 1, vec![f32::NAN]),
            Err(ImageError::NonFinite(0))
        ));
    }

    #[test]
    fn gray_is_identity() {
        let img = Image::from_u8(2, 1, 1, vec![3, 200]).unwrap();
        assert_eq!(img.to_grayscale(), img);
    }

    #[test]
    fn luma_values() {
        let white = Image::from_u8(1, 1, 3, vec![255, 255, 255]).unwrap();
        assert_eq!(white.to_grayscale().as_u8().unwrap(), &[255]);
        let red = Image::from_u8(1, 1, 3, vec![255, 0, 0]).unwrap();
        // 0.299 * 255 = 76.245
        assert_eq!(red.to_grayscale().as_u8().unwrap(), &[76]);
    }

    #[test]
    fn grayscale_idempotent() {
        let img = Image::from_u8(2, 1, 3, vec![10, 20, 30, 250, 3, 77]).unwrap();
        let g = img.to_grayscale();
        assert_eq!(g.to_grayscale(), g);
    }

    #[test]
    fn crop_full_is_identity() {
        let img = Image::gray_from_fn(5, 4, |x, y| (x + 10 * y) as u8);
        assert_eq!(img.center_crop(5, 4).unwrap(), img);
    }

    #[test]
    fn crop_uses_floor_offset() {
        let img = Image::gray_from_fn(5, 5, |x, y| (x + 10 * y) as u8);
        let c = img.center_crop(3, 3).unwrap();
        assert_eq!(c.as_u8().unwrap(), &[11, 12, 13, 21, 22, 23, 31, 32, 33]);
        let c = img.center_crop(2, 2).unwrap();
        // (5 - 2) / 2 = 1
        assert_eq!(c.as_u8().unwrap(), &[11, 12, 21, 22]);
    }

    #[test]
    fn crop_celeba_geometry() {
        let img = Image::gray_from_fn(178, 218, |_, y| y as u8);
        let c = img.center_crop(178, 178).unwrap();
        assert_eq!((c.width(), c.height()), (178, 178));
        assert_eq!(c.get(0, 0, 0), dequantize(20));
        assert_eq!(c.get(0, 177, 0), dequantize(197));
    }

    #[test]
    fn crop_too_large() {
        let img = Image::gray_from_fn(4, 4, |_, _| 0);
        assert!(matches!(img.center_crop(5, 1), Err(ImageError::CropTooLarge { .. })));
    }

    #[test]
    fn quantization_rule() {
        assert_eq!(quantize(-0.5), 0);
        assert_eq!(quantize(2.0), 255);
        assert_eq!(quantize(0.5), 128); // 127.5 rounds up
        for v in 0..=255u8 {
            assert_eq!(quantize(dequantize(v)), v);
        }
    }
}
