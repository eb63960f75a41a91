use super::EditError;
use crate::image::Image;

/// Sample positions and weights along one axis with the half-pixel-center
/// mapping `src = (dst + 0.5) * (src_len / dst_len) - 0.5`, clamped to the border.
fn axis_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f32)> {
    let scale = src_len as f64 / dst_len as f64;
    let max = (src_len - 1) as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resampling to `w`x`h`; output is a float image.
pub fn bilinear_resize(img: &Image, w: usize, h: usize) -> Result<Image, EditError> {
    if w == 0 || h == 0 {
        return Err(EditError::EmptyTarget(w, h));
    }
    let c = img.channels();
    let src = img.to_f32_vec();
    let sw = img.width();
    let xs = axis_taps(sw, w);
    let ys = axis_taps(img.height(), h);
    let mut out = Vec::with_capacity(w * h * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p = |x: usize, y: usize| src[(y * sw + x) * c + ch];
                let top = p(x0, y0) + (p(x1, y0) - p(x0, y0)) * fx;
                let bot = p(x0, y1) + (p(x1, y1) - p(x0, y1)) * fx;
                out.push(top + (bot - top) * fy);
            }
        }
    }
    Ok(Image::from_f32(w, h, c, out)?)
}

/// Resizes both sides by `factor`, rounding to the nearest pixel (at least 1).
pub fn resize_by_factor(img: &Image, factor: f64) -> Result<Image, EditError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(EditError::BadFactor(factor));
    }
    let side = |n: usize| ((n as f64 * factor).round() as usize).max(1);
    bilinear_resize(img, side(img.width()), side(img.height()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let img = Image::gray_from_fn(7, 5, |x, y| (x * 30 + y * 7) as u8);
        let out = bilinear_resize(&img, 7, 5).unwrap();
        assert_eq!(out.to_f32_vec(), img.to_f32_vec());
    }

    #[test]
    fn half_pixel_upsample() {
        let img = Image::from_u8(2, 1, 1, vec![0, 255]).unwrap();
        let out = bilinear_resize(&img, 4, 1).unwrap();
        let v: Vec<f32> = out.to_f32_vec().iter().map(|p| p * 255.0).collect();
        for (a, b) in v.iter().zip([0.0, 63.75, 191.25, 255.0]) {
            assert!((a - b).abs() < 1e-4, "{v:?}");
        }
    }

    #[test]
    fn constant_stays_constant() {
        let img = Image::from_f32(5, 3, 3, vec![0.3; 45]).unwrap();
        for (w, h) in [(1, 1), (2, 9), (17, 4)] {
            let out = bilinear_resize(&img, w, h).unwrap();
            assert!(out.to_f32_vec().iter().all(|&v| v == 0.3));
        }
    }

    #[test]
    fn down_then_up_constant_exact() {
        let img = Image::gray_from_fn(32, 32, |_, _| 77);
        let down = bilinear_resize(&img, 4, 4).unwrap();
        let up = bilinear_resize(&down, 32, 32).unwrap();
        assert_eq!(up.to_u8_vec(), img.to_u8_vec());
    }

    #[test]
    fn factor_sizes() {
        let img = Image::gray_from_fn(64, 48, |_, _| 0);
        let out = resize_by_factor(&img, 0.25).unwrap();
        assert_eq!((out.width(), out.height()), (16, 12));
        assert!(bilinear_resize(&img, 0, 2).is_err());
    }
}
