use super::EditError;
use crate::image::Image;

/// Standard deviation tied to the kernel size: `0.3 * ((k - 1) / 2 - 1) + 0.8`.
pub fn gaussian_sigma(kernel_size: usize) -> f64 {
    0.3 * ((kernel_size as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Normalized 1-D Gaussian taps of odd length `kernel_size`.
pub fn gaussian_kernel(kernel_size: usize) -> Result<Vec<f64>, EditError> {
    if kernel_size.is_multiple_of(2) {
        return Err(EditError::EvenKernel(kernel_size));
    }
    if kernel_size == 1 {
        return Ok(vec![1.0]);
    }
    let sigma = gaussian_sigma(kernel_size);
    let r = (kernel_size / 2) as f64;
    let taps: Vec<f64> = (0..kernel_size)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / sum).collect())
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

fn convolve_axis(src: &[f64], dst: &mut [f64], w: usize, h: usize, taps: &[f64], horizontal: bool) {
    let r = (taps.len() / 2) as isize;
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let o = k as isize - r;
                let idx = if horizontal {
                    y * w + reflect(x as isize + o, w)
                } else {
                    reflect(y as isize + o, h) * w + x
                };
                acc += t * src[idx];
            }
            dst[y * w + x] = acc;
        }
    }
}

/// Separable Gaussian blur with reflect-101 borders.
pub fn gaussian_blur(img: &Image, kernel_size: usize) -> Result<Image, EditError> {
    let taps = gaussian_kernel(kernel_size)?;
    let (w, h) = (img.width(), img.height());
    let planes: Vec<Vec<f32>> = (0..img.channels())
        .map(|c| {
            let src: Vec<f64> = img.plane(c).into_iter().map(f64::from).collect();
            let mut tmp = vec![0.0; w * h];
            let mut out = vec![0.0; w * h];
            convolve_axis(&src, &mut tmp, w, h, &taps, true);
            convolve_axis(&tmp, &mut out, w, h, &taps, false);
            out.into_iter().map(|v| v as f32).collect()
        })
        .collect();
    Ok(Image::from_planes(w, h, &planes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_sums_to_one() {
        for k in [1, 3, 5, 9, 25, 51] {
            let t = gaussian_kernel(k).unwrap();
            assert_eq!(t.len(), k);
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(gaussian_kernel(4).is_err());
    }

    #[test]
    fn sigma_rule() {
        assert!((gaussian_sigma(3) - 0.8).abs() < 1e-12);
        assert!((gaussian_sigma(25) - 4.1).abs() < 1e-12);
    }

    #[test]
    fn kernel_one_is_identity() {
        let img = Image::gray_from_fn(6, 4, |x, y| (x * 40 + y) as u8);
        let out = gaussian_blur(&img, 1).unwrap();
        assert_eq!(out.to_f32_vec(), img.to_f32_vec());
    }

    #[test]
    fn constant_preserved() {
        let img = Image::gray_from_fn(7, 7, |_, _| 200);
        let out = gaussian_blur(&img, 25).unwrap();
        let v = 200.0 / 255.0;
        assert!(out.to_f32_vec().iter().all(|&p| (p - v).abs() < 1e-6));
    }

    #[test]
    fn impulse_reproduces_kernel() {
        // explicit taps for sigma 0.8: exp(-1/1.28) around centre weight 1
        let e = (-1.0f64 / 1.28).exp();
        let oracle = [e / (1.0 + 2.0 * e), 1.0 / (1.0 + 2.0 * e), e / (1.0 + 2.0 * e)];
        let mut data = vec![0.0f32; 25];
        data[12] = 1.0;
        let img = Image::from_f32(5, 5, 1, data).unwrap();
        let out = gaussian_blur(&img, 3).unwrap().to_f32_vec();
        for y in 0..5 {
            for x in 0..5 {
                let expected = if (1..4).contains(&x) && (1..4).contains(&y) {
                    oracle[x - 1] * oracle[y - 1]
                } else {
                    0.0
                };
                assert!((out[y * 5 + x] as f64 - expected).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect(-5, 1), 0);
    }
}
