//! L0 gradient minimization by half-quadratic splitting.
//!
//! Minimizes `|S - I|^2 + lambda * #{p : |dx S_p| + |dy S_p| != 0}`. Each
//! iteration hard-thresholds auxiliary gradients `(h, v)` and then solves the
//! quadratic `S` subproblem exactly with FFTs (periodic boundary).
//!
//! The continuation is finished in closed form: with the last support fixed
//! and `beta -> inf`, pixels joined by zero-gradient links take the mean of
//! the input over their group. The result is returned only if its objective
//! beats the input itself, so the gradient count never grows.

use rustfft::num_complex::Complex64;

use super::EditError;
use crate::fft::Fft2;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L0Params {
    pub lambda: f64,
    pub kappa: f64,
    pub beta_max: f64,
}

impl Default for L0Params {
    fn default() -> Self {
        Self {
            lambda: super::DEFAULT_L0_LAMBDA,
            kappa: 2.0,
            beta_max: 1e5,
        }
    }
}

/// Smooths with the default `kappa = 2` and `beta_max = 1e5`.
pub fn l0_smooth(img: &Image, lambda: f64) -> Result<Image, EditError> {
    l0_smooth_with(
        img,
        L0Params {
            lambda,
            ..L0Params::default()
        },
    )
}

pub fn l0_smooth_with(img: &Image, params: L0Params) -> Result<Image, EditError> {
    let L0Params {
        lambda,
        kappa,
        beta_max,
    } = params;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(EditError::BadLambda(lambda));
    }
    let input = img.to_f32_vec();
    if input.iter().any(|v| !v.is_finite()) {
        return Err(EditError::NonFinite);
    }
    if lambda == 0.0 {
        return Ok(img.to_f32());
    }
    let (w, h, nc) = (img.width(), img.height(), img.channels());
    let n = w * h;
    let fft = Fft2::new(w, h);

    // transfer functions of the circular forward differences
    let otf = |dx: usize, dy: usize| {
        let mut k = vec![0.0; n];
        k[0] = -1.0;
        // (S * k)(p) = S(p + delta) - S(p)  =>  k(-delta) = 1
        k[((h - dy) % h) * w + (w - dx) % w] += 1.0;
        fft.forward_real(&k)
    };
    let otf_x = otf(1, 0);
    let otf_y = otf(0, 1);
    let denom_grad: Vec<f64> = otf_x
        .iter()
        .zip(&otf_y)
        .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
        .collect();

    let mut s: Vec<Vec<f64>> = (0..nc)
        .map(|c| (0..n).map(|i| input[i * nc + c] as f64).collect())
        .collect();
    let f_in: Vec<Vec<Complex64>> = s.iter().map(|p| fft.forward_real(p)).collect();

    let mut hgrad = vec![vec![0.0; n]; nc];
    let mut vgrad = vec![vec![0.0; n]; nc];
    let mut flat = vec![false; n];
    let mut beta = 2.0 * lambda;
    while beta < beta_max {
        for c in 0..nc {
            for y in 0..h {
                let yn = (y + 1) % h;
                for x in 0..w {
                    let xn = (x + 1) % w;
                    hgrad[c][y * w + x] = s[c][y * w + xn] - s[c][y * w + x];
                    vgrad[c][y * w + x] = s[c][yn * w + x] - s[c][y * w + x];
                }
            }
        }
        let thresh = lambda / beta;
        for i in 0..n {
            let mag: f64 = (0..nc).map(|c| hgrad[c][i].powi(2) + vgrad[c][i].powi(2)).sum();
            flat[i] = mag <= thresh;
            if flat[i] {
                for c in 0..nc {
                    hgrad[c][i] = 0.0;
                    vgrad[c][i] = 0.0;
                }
            }
        }
        for c in 0..nc {
            let fh = fft.forward_real(&hgrad[c]);
            let fv = fft.forward_real(&vgrad[c]);
            let mut fs: Vec<Complex64> = (0..n)
                .map(|i| {
                    let adj = otf_x[i].conj() * fh[i] + otf_y[i].conj() * fv[i];
                    (f_in[c][i] + adj * beta) / (1.0 + beta * denom_grad[i])
                })
                .collect();
            fft.run(&mut fs, true);
            for (dst, v) in s[c].iter_mut().zip(&fs) {
                *dst = v.re;
            }
        }
        beta *= kappa;
    }

    let data = group_means(&input, &flat, w, h, nc);
    let cost = |v: &[f32], count: usize| {
        let fidelity: f64 = v.iter().zip(&input).map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2)).sum();
        fidelity + lambda * count as f64
    };
    let smoothed = Image::from_f32(w, h, nc, data)?;
    let original = img.to_f32();
    if cost(&smoothed.to_f32_vec(), nonzero_gradient_count(&smoothed, 0.0))
        <= cost(&input, nonzero_gradient_count(&original, 0.0))
    {
        Ok(smoothed)
    } else {
        Ok(original)
    }
}

/// Replaces each group of pixels joined by flat forward links (no wrap-around)
/// with the group's mean of `input`.
fn group_means(input: &[f32], flat: &[bool], w: usize, h: usize, nc: usize) -> Vec<f32> {
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let n = w * h;
    let mut parent: Vec<usize> = (0..n).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !flat[i] {
                continue;
            }
            let next = [(x + 1 < w).then_some(i + 1), (y + 1 < h).then_some(i + w)];
            for j in next.into_iter().flatten() {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut sums = vec![0.0f64; n * nc];
    let mut sizes = vec![0usize; n];
    let roots: Vec<usize> = (0..n).map(|i| root(&mut parent, i)).collect();
    for (i, &r) in roots.iter().enumerate() {
        sizes[r] += 1;
        for c in 0..nc {
            sums[r * nc + c] += f64::from(input[i * nc + c]);
        }
    }
    let mut out = vec![0.0f32; n * nc];
    for (i, &r) in roots.iter().enumerate() {
        for c in 0..nc {
            out[i * nc + c] = (sums[r * nc + c] / sizes[r] as f64) as f32;
        }
    }
    out
}

/// Pixels whose forward differences satisfy `sum_c |dx| + |dy| > threshold`;
/// differences that would leave the image count as zero.
pub fn nonzero_gradient_count(img: &Image, threshold: f32) -> usize {
    let (w, h, nc) = (img.width(), img.height(), img.channels());
    let px = img.to_f32_vec();
    let at = |x: usize, y: usize, c: usize| px[(y * w + x) * nc + c];
    let mut count = 0;
    for y in 0..h {
        for x in 0..w {
            let mut g = 0.0f32;
            for c in 0..nc {
                if x + 1 < w {
                    g += (at(x + 1, y, c) - at(x, y, c)).abs();
                }
                if y + 1 < h {
                    g += (at(x, y + 1, c) - at(x, y, c)).abs();
                }
            }
            if g > threshold {
                count += 1;
            }
        }
    }
    count
}
