//! In-memory JPEG round trip: color transform, 8x8 DCT, quantization with the
//! Annex K tables, and the inverse path. No entropy coding and no chroma
//! subsampling; the loss is exactly what quantization introduces.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::EditError;
use crate::image::Image;

/// Annex K.1 luminance table, row-major.
pub const LUMINANCE_BASE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Annex K.2 chrominance table, row-major.
pub const CHROMINANCE_BASE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Scales a base table for `quality` in `1..=100`.
pub fn quant_table(base: &[u16; 64], quality: u8) -> Result<[u16; 64], EditError> {
    if !(1..=100).contains(&quality) {
        return Err(EditError::Quality(quality));
    }
    let q = quality as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    Ok(base.map(|b| ((b as u32 * scale + 50) / 100).clamp(1, 255) as u16))
}

/// `cos((2x + 1) u pi / 16) * c(u) / 2`, indexed `[u][x]`; the 2-D transform
/// is this matrix applied along both axes, which makes it orthonormal.
fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (u, row) in m.iter_mut().enumerate() {
            let cu = if u == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = 0.5 * cu * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
            }
        }
        m
    })
}

fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| b[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| b[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

fn idct(coef: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| b[u][x] * coef[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| b[v][y] * tmp[v * 8 + x]).sum();
        }
    }
    out
}

/// Quantizes one plane (values in 0..=255) blockwise and reconstructs it.
fn roundtrip_plane(plane: &[f64], w: usize, h: usize, table: &[u16; 64]) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut block = [0.0; 64];
            for y in 0..8 {
                for x in 0..8 {
                    // pad past the border by repeating the last row/column
                    let sy = (by + y).min(h - 1);
                    let sx = (bx + x).min(w - 1);
                    block[y * 8 + x] = plane[sy * w + sx] - 128.0;
                }
            }
            let mut coef = fdct(&block);
            for (c, &q) in coef.iter_mut().zip(table) {
                let q = q as f64;
                *c = (*c / q).round() * q;
            }
            let rec = idct(&coef);
            for y in 0..8.min(h - by) {
                for x in 0..8.min(w - bx) {
                    out[(by + y) * w + bx + x] = rec[y * 8 + x] + 128.0;
                }
            }
        }
    }
    out
}

fn level(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Compresses and decompresses `img` at `quality`, returning 8-bit levels.
pub fn jpeg_codec(img: &Image, quality: u8) -> Result<Image, EditError> {
    let luma = quant_table(&LUMINANCE_BASE, quality)?;
    let chroma = quant_table(&CHROMINANCE_BASE, quality)?;
    let (w, h) = (img.width(), img.height());
    let px: Vec<f64> = img.to_u8_vec().into_iter().map(f64::from).collect();
    let data = if img.channels() == 1 {
        roundtrip_plane(&px, w, h, &luma).into_iter().map(level).collect()
    } else {
        let n = w * h;
        let (mut y, mut cb, mut cr) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let (r, g, b) = (px[3 * i], px[3 * i + 1], px[3 * i + 2]);
            y[i] = 0.299 * r + 0.587 * g + 0.114 * b;
            cb[i] = -0.168_735_892 * r - 0.331_264_108 * g + 0.5 * b + 128.0;
            cr[i] = 0.5 * r - 0.418_687_589 * g - 0.081_312_411 * b + 128.0;
        }
        let y = roundtrip_plane(&y, w, h, &luma);
        let cb = roundtrip_plane(&cb, w, h, &chroma);
        let cr = roundtrip_plane(&cr, w, h, &chroma);
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            let (yy, u, v) = (y[i], cb[i] - 128.0, cr[i] - 128.0);
            out.push(level(yy + 1.402 * v));
            out.push(level(yy - 0.344_136_286 * u - 0.714_136_286 * v));
            out.push(level(yy + 1.772 * u));
        }
        out
    };
    Ok(Image::from_u8(w, h, img.channels(), data)?)
}

/// Peak signal-to-noise ratio in dB on the 8-bit scale; infinite for identical images.
pub fn psnr(a: &Image, b: &Image) -> f64 {
    let (x, y) = (a.to_u8_vec(), b.to_u8_vec());
    assert_eq!(x.len(), y.len(), "psnr needs equally sized images");
    let mse = x
        .iter()
        .zip(&y)
        .map(|(&p, &q)| (p as f64 - q as f64).powi(2))
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_scaling() {
        assert_eq!(quant_table(&LUMINANCE_BASE, 50).unwrap(), LUMINANCE_BASE);
        assert!(quant_table(&LUMINANCE_BASE, 100).unwrap().iter().all(|&q| q == 1));
        // q=10: scale 500, 16*5 = 80
        assert_eq!(quant_table(&LUMINANCE_BASE, 10).unwrap()[0], 80);
        assert!(quant_table(&LUMINANCE_BASE, 1).unwrap().iter().all(|&q| q == 255));
        assert!(quant_table(&LUMINANCE_BASE, 0).is_err());
    }

    #[test]
    fn dct_round_trip() {
        let block: [f64; 64] = std::array::from_fn(|i| ((i * 37) % 255) as f64 - 128.0);
        let back = idct(&fdct(&block));
        for (a, b) in block.iter().zip(back) {
            assert!((a - b).abs() < 1e-9);
        }
        // DC of a constant block is 8x the value
        let dc = fdct(&[3.0; 64])[0];
        assert!((dc - 24.0).abs() < 1e-12);
    }

    #[test]
    fn mid_gray_exact_at_every_quality() {
        let img = Image::gray_from_fn(19, 13, |_, _| 128);
        for q in 1..=100 {
            assert_eq!(jpeg_codec(&img, q).unwrap(), img);
        }
    }

    #[test]
    fn constant_stays_constant() {
        for v in [0u8, 37, 200, 255] {
            let img = Image::from_u8(12, 9, 3, [v, v / 2, 255 - v].repeat(108)).unwrap();
            for q in [10, 50, 75, 100] {
                let out = jpeg_codec(&img, q).unwrap().to_u8_vec();
                assert!(out.chunks(3).all(|p| p == &out[..3]));
            }
            let gray = Image::gray_from_fn(9, 9, |_, _| v);
            assert_eq!(jpeg_codec(&gray, 100).unwrap(), gray);
        }
    }

    #[test]
    fn ramp_blocks_at_low_quality() {
        let img = Image::gray_from_fn(64, 8, |x, _| (x * 4) as u8);
        let out = jpeg_codec(&img, 10).unwrap();
        let (a, b) = (img.to_u8_vec(), out.to_u8_vec());
        let max_err = a.iter().zip(&b).map(|(&p, &q)| p.abs_diff(q)).max().unwrap();
        assert!(max_err > 0);
        // jump across each block boundary exceeds the within-block steps
        let row = &b[..64];
        let boundary: u32 = (1..8).map(|k| row[8 * k].abs_diff(row[8 * k - 1]) as u32).sum();
        let inner: u32 = (1..8).map(|k| row[8 * k + 4].abs_diff(row[8 * k + 3]) as u32).sum();
        assert!(boundary > inner, "boundary {boundary} inner {inner}");
    }

    #[test]
    fn quality_100_psnr() {
        let img = Image::from_u8(
            24,
            16,
            3,
            (0..24 * 16 * 3).map(|i| ((i * 7919) % 251) as u8).collect(),
        )
        .unwrap();
        let out = jpeg_codec(&img, 100).unwrap();
        assert!(psnr(&img, &out) >= 45.0, "psnr {}", psnr(&img, &out));
    }
}
