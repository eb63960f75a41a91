//! Gray-level co-occurrence statistics and the contrast-robustness analysis.
//!
//! A [`GlcmMatrix`] counts, for a fixed offset, how often a pixel of level `i`
//! has a neighbour of level `j`. Contrast at distance `d` is
//! `sum |i - j|^2 P(i, j)` where each per-angle matrix is normalized to a
//! probability distribution and the result is averaged over the angles that
//! have at least one in-bounds pair.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edit::{EditError, EditSpec};
use crate::image::Image;
use crate::par;

pub const LEVELS: usize = 256;

/// Distances reported by default in contrast tables.
pub const DEFAULT_DISTANCES: [usize; 6] = [1, 2, 5, 10, 15, 20];

#[derive(Debug, Error)]
pub enum TextureError {
    #[error("co-occurrence requires a single-channel 8-bit image")]
    NotGrayU8,
    #[error("distance must be at least 1")]
    ZeroDistance,
    #[error("no in-bounds pixel pairs at distance {0} for any angle")]
    NoPairs(usize),
    #[error("matrices mix distances {0} and {1}")]
    MixedDistances(usize, usize),
    #[error("empty image set")]
    EmptyDataset,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("zero variance in {0}; correlation undefined")]
    ZeroVariance(&'static str),
    #[error(transparent)]
    Edit(#[from] EditError),
}

/// Neighbour direction: right, down, left, up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Angle {
    Right,
    Down,
    Left,
    Up,
}

impl Angle {
    pub const ALL: [Angle; 4] = [Angle::Right, Angle::Down, Angle::Left, Angle::Up];

    /// Pixel offset `(dx, dy)` at distance `d`; `y` grows downwards.
    pub fn offset(self, d: usize) -> (isize, isize) {
        let d = d as isize;
        match self {
            Angle::Right => (d, 0),
            Angle::Down => (0, d),
            Angle::Left => (-d, 0),
            Angle::Up => (0, -d),
        }
    }

    /// Angle in radians: 0, pi/2, pi, 3pi/2.
    pub fn radians(self) -> f64 {
        use std::f64::consts::FRAC_PI_2;
        FRAC_PI_2
            * match self {
                Angle::Right => 0.0,
                Angle::Down => 1.0,
                Angle::Left => 2.0,
                Angle::Up => 3.0,
            }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    distance: usize,
    angle: Angle,
    counts: Vec<u64>,
    total_pairs: u64,
}

impl GlcmMatrix {
    pub fn empty(distance: usize, angle: Angle) -> Self {
        Self {
            distance,
            angle,
            counts: vec![0; LEVELS * LEVELS],
            total_pairs: 0,
        }
    }

    pub fn distance(&self) -> usize {
        self.distance
    }

    pub fn angle(&self) -> Angle {
        self.angle
    }

    pub fn total_pairs(&self) -> u64 {
        self.total_pairs
    }

    /// True when the offset left no in-bounds pairs.
    pub fn is_empty(&self) -> bool {
        self.total_pairs == 0
    }

    pub fn count(&self, i: u8, j: u8) -> u64 {
        self.counts[i as usize * LEVELS + j as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Probability table; `None` when there are no pairs.
    pub fn normalized(&self) -> Option<Vec<f64>> {
        if self.is_empty() {
            return None;
        }
        let t = self.total_pairs as f64;
        Some(self.counts.iter().map(|&c| c as f64 / t).collect())
    }

    /// Adds the pairs of `pixels` (a `width`x`height` gray raster) to the counts.
    fn accumulate(&mut self, pixels: &[u8], width: usize, height: usize) {
        let (dx, dy) = self.angle.offset(self.distance);
        let x_range = clip_range(width, dx);
        let y_range = clip_range(height, dy);
        for y in y_range {
            let ny = (y as isize + dy) as usize;
            let row = &pixels[y * width..(y + 1) * width];
            let nrow = &pixels[ny * width..(ny + 1) * width];
            for x in x_range.clone() {
                let nx = (x as isize + dx) as usize;
                self.counts[row[x] as usize * LEVELS + nrow[nx] as usize] += 1;
                self.total_pairs += 1;
            }
        }
    }

    /// Pools another matrix with the same offset into this one.
    pub fn merge(&mut self, other: &GlcmMatrix) {
        assert_eq!((self.distance, self.angle), (other.distance, other.angle));
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_pairs += other.total_pairs;
    }

    /// `sum |i-j|^2 P(i,j)` for this single matrix.
    pub fn contrast(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let mut num: u128 = 0;
        for i in 0..LEVELS {
            let row = &self.counts[i * LEVELS..(i + 1) * LEVELS];
            for (j, &c) in row.iter().enumerate() {
                if c != 0 {
                    let diff = i.abs_diff(j) as u128;
                    num += diff * diff * c as u128;
                }
            }
        }
        Some(num as f64 / self.total_pairs as f64)
    }
}

/// Positions `p` in `0..n` with `p + delta` also in `0..n`.
fn clip_range(n: usize, delta: isize) -> std::ops::Range<usize> {
    let n = n as isize;
    let lo = (-delta).max(0);
    let hi = (n - delta).min(n);
    if lo >= hi {
        0..0
    } else {
        lo as usize..hi as usize
    }
}

fn gray_u8(img: &Image) -> Result<&[u8], TextureError> {
    match (img.channels(), img.as_u8()) {
        (1, Some(p)) => Ok(p),
        _ => Err(TextureError::NotGrayU8),
    }
}

/// Converts any image into the single-channel 8-bit form the GLCM needs.
pub fn prepare_gray(img: &Image) -> Image {
    let g = img.to_grayscale();
    if g.is_u8() {
        g
    } else {
        g.to_u8()
    }
}

/// Co-occurrence counts of a gray 8-bit image at offset `(d, angle)`.
///
/// Pairs whose neighbour falls outside the image are skipped; when nothing is
/// left the returned matrix has `total_pairs == 0`.
pub fn compute_glcm(img: &Image, d: usize, angle: Angle) -> Result<GlcmMatrix, TextureError> {
    if d == 0 {
        return Err(TextureError::ZeroDistance);
    }
    let px = gray_u8(img)?;
    let mut m = GlcmMatrix::empty(d, angle);
    m.accumulate(px, img.width(), img.height());
    Ok(m)
}

/// Contrast `C_d` from the per-angle matrices of one distance.
pub fn contrast_from_glcm(glcms: &[GlcmMatrix]) -> Result<f64, TextureError> {
    let first = glcms.first().ok_or(TextureError::EmptyDataset)?;
    if let Some(m) = glcms.iter().find(|m| m.distance != first.distance) {
        return Err(TextureError::MixedDistances(first.distance, m.distance));
    }
    let per_angle: Vec<f64> = glcms.iter().filter_map(GlcmMatrix::contrast).collect();
    if per_angle.is_empty() {
        return Err(TextureError::NoPairs(first.distance));
    }
    Ok(per_angle.iter().sum::<f64>() / per_angle.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastProfile {
    pub distances: Vec<usize>,
    pub contrast: Vec<f64>,
}

impl ContrastProfile {
    pub fn at(&self, d: usize) -> Option<f64> {
        self.distances
            .iter()
            .position(|&x| x == d)
            .map(|i| self.contrast[i])
    }
}

/// Per-image contrast at each distance.
pub fn image_contrast(img: &Image, distances: &[usize]) -> Result<ContrastProfile, TextureError> {
    let g = prepare_gray(img);
    let contrast = distances
        .iter()
        .map(|&d| {
            let ms = Angle::ALL
                .iter()
                .map(|&a| compute_glcm(&g, d, a))
                .collect::<Result<Vec<_>, _>>()?;
            contrast_from_glcm(&ms)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ContrastProfile {
        distances: distances.to_vec(),
        contrast,
    })
}

/// Pooled co-occurrence matrices over a set of images, one per `(d, angle)`
/// in `distances x Angle::ALL` order.
pub fn pooled_glcms(images: &[Image], distances: &[usize]) -> Result<Vec<GlcmMatrix>, TextureError> {
    if images.is_empty() {
        return Err(TextureError::EmptyDataset);
    }
    if distances.contains(&0) {
        return Err(TextureError::ZeroDistance);
    }
    let grays: Vec<Image> = par::map_slice(images, prepare_gray);
    let offsets: Vec<(usize, Angle)> = distances
        .iter()
        .flat_map(|&d| Angle::ALL.into_iter().map(move |a| (d, a)))
        .collect();
    // integer counts: the merge is associative, so order cannot matter
    Ok(par::map_slice(&offsets, |&(d, a)| {
        let mut m = GlcmMatrix::empty(d, a);
        for g in &grays {
            m.accumulate(g.as_u8().expect("prepared"), g.width(), g.height());
        }
        m
    }))
}

/// Contrast of a whole image set: counts are pooled across images before
/// normalization, rather than averaging per-image contrasts.
pub fn dataset_contrast(images: &[Image], distances: &[usize]) -> Result<ContrastProfile, TextureError> {
    let pooled = pooled_glcms(images, distances)?;
    let contrast = pooled
        .chunks(Angle::ALL.len())
        .map(contrast_from_glcm)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ContrastProfile {
        distances: distances.to_vec(),
        contrast,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, TextureError> {
    if x.len() != y.len() {
        return Err(TextureError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(TextureError::TooFewSamples(n));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 {
        return Err(TextureError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(TextureError::ZeroVariance("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation between original and edited per-image contrast, per distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub edit: EditSpec,
    pub distances: Vec<usize>,
    pub r: Vec<f64>,
    /// Per-image contrast of the originals, `[image][distance]`.
    pub original: Vec<Vec<f64>>,
    /// Per-image contrast after editing, `[image][distance]`.
    pub edited: Vec<Vec<f64>>,
}

impl CorrelationTable {
    pub fn at(&self, d: usize) -> Option<f64> {
        self.distances.iter().position(|&x| x == d).map(|i| self.r[i])
    }
}

/// For each distance, the Pearson correlation between `C_d(image)` and
/// `C_d(edit(image))` across the image set.
pub fn contrast_correlation_analysis(
    images: &[Image],
    edit: &EditSpec,
    distances: &[usize],
) -> Result<CorrelationTable, TextureError> {
    if images.len() < 2 {
        return Err(TextureError::TooFewSamples(images.len()));
    }
    let rows = par::map_range(images.len(), |i| -> Result<_, TextureError> {
        let img = &images[i];
        let edited = edit.apply(img)?;
        Ok((
            image_contrast(img, distances)?.contrast,
            image_contrast(&edited, distances)?.contrast,
        ))
    });
    let (original, edited): (Vec<_>, Vec<_>) = rows.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().unzip();
    let r = (0..distances.len())
        .map(|k| {
            let xs: Vec<f64> = original.iter().map(|row| row[k]).collect();
            let ys: Vec<f64> = edited.iter().map(|row| row[k]).collect();
            pearson(&xs, &ys)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorrelationTable {
        edit: edit.clone(),
        distances: distances.to_vec(),
        r,
        original,
        edited,
    })
}

/// CSV with one row per `(image, distance)`.
pub fn contrast_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a ContrastProfile)>) -> String {
    let mut out = String::from("image,distance,contrast\n");
    for (name, p) in rows {
        for (d, c) in p.distances.iter().zip(&p.contrast) {
            out.push_str(&format!("{name},{d},{c}\n"));
        }
    }
    out
}
