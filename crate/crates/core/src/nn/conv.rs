use super::tensor::{matmul, Parameter, Scalar, Tensor4};
use super::{shape_err, Module, NnError};
use crate::par;

/// Static shape of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn square(in_c: usize, out_c: usize, k: usize, stride: usize, padding: usize) -> Self {
        Self {
            in_c,
            out_c,
            kh: k,
            kw: k,
            stride,
            padding,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.kh * self.kw
    }

    pub fn out_size(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if self.stride == 0 || ph < self.kh || pw < self.kw {
            return Err(shape_err(
                "conv2d",
                format!("{h}x{w} input too small for {}x{} kernel", self.kh, self.kw),
            ));
        }
        Ok(((ph - self.kh) / self.stride + 1, (pw - self.kw) / self.stride + 1))
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Unfolds one sample into a `(in_c*kh*kw) x (ho*wo)` matrix.
fn im2col<T: Scalar>(x: &[T], h: usize, w: usize, g: &ConvGeom, ho: usize, wo: usize, cols: &mut [T]) {
    let p = g.padding as isize;
    let mut row = 0;
    for c in 0..g.in_c {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - p;
                    let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        out_row.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - p;
                        *v = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the sample.
fn col2im<T: Scalar>(cols: &[T], h: usize, w: usize, g: &ConvGeom, ho: usize, wo: usize, dx: &mut [T]) {
    let p = g.padding as isize;
    let mut row = 0;
    for c in 0..g.in_c {
        let plane = &mut dx[c * h * w..(c + 1) * h * w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - p;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn check_input<T: Scalar>(x: &Tensor4<T>, weight: &[T], g: &ConvGeom) -> Result<(usize, usize), NnError> {
    if x.c() != g.in_c {
        return Err(shape_err(
            "conv2d",
            format!("input has {} channels, weight expects {}", x.c(), g.in_c),
        ));
    }
    if weight.len() != g.weight_len() {
        return Err(shape_err(
            "conv2d",
            format!("weight has {} values, geometry needs {}", weight.len(), g.weight_len()),
        ));
    }
    g.out_size(x.h(), x.w())
}

/// Cross-correlation of `x` with `weight` (`out_c x in_c x kh x kw`) plus optional bias.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor4<T>,
    weight: &[T],
    bias: Option<&[T]>,
    g: &ConvGeom,
) -> Result<Tensor4<T>, NnError> {
    let (ho, wo) = check_input(x, weight, g)?;
    if bias.is_some_and(|b| b.len() != g.out_c) {
        return Err(shape_err("conv2d", "bias length differs from output channels"));
    }
    let (h, w) = (x.h(), x.w());
    let k = g.in_c * g.kh * g.kw;
    let mut y = Tensor4::zeros([x.n(), g.out_c, ho, wo]);
    let out_len = g.out_c * ho * wo;
    par::for_each_chunk_mut(&mut y.data, out_len, |i, out| {
        let xs = x.sample(i);
        let mut buf;
        let cols: &[T] = if g.is_pointwise() {
            xs
        } else {
            buf = vec![T::zero(); k * ho * wo];
            im2col(xs, h, w, g, ho, wo, &mut buf);
            &buf
        };
        matmul(g.out_c, k, ho * wo, weight, false, cols, false, out, false);
        if let Some(b) = bias {
            for (o, &bv) in b.iter().enumerate() {
                out[o * ho * wo..(o + 1) * ho * wo].iter_mut().for_each(|v| *v += bv);
            }
        }
    });
    Ok(y)
}

/// Gradients `(dx, dweight, dbias)` of a convolution given the upstream `dy`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    weight: &[T],
    dy: &Tensor4<T>,
    g: &ConvGeom,
) -> Result<(Tensor4<T>, Vec<T>, Vec<T>), NnError> {
    let (ho, wo) = check_input(x, weight, g)?;
    if dy.shape() != [x.n(), g.out_c, ho, wo] {
        return Err(shape_err("conv2d", format!("upstream gradient shape {:?}", dy.shape())));
    }
    let (h, w) = (x.h(), x.w());
    let k = g.in_c * g.kh * g.kw;
    let per_sample = par::map_range(x.n(), |i| {
        let xs = x.sample(i);
        let dys = dy.sample(i);
        let mut dw = vec![T::zero(); g.weight_len()];
        let mut dx = vec![T::zero(); x.sample_len()];
        if g.is_pointwise() {
            matmul(g.out_c, ho * wo, k, dys, false, xs, true, &mut dw, false);
            matmul(k, g.out_c, ho * wo, weight, true, dys, false, &mut dx, false);
        } else {
            let mut cols = vec![T::zero(); k * ho * wo];
            im2col(xs, h, w, g, ho, wo, &mut cols);
            matmul(g.out_c, ho * wo, k, dys, false, &cols, true, &mut dw, false);
            matmul(k, g.out_c, ho * wo, weight, true, dys, false, &mut cols, false);
            col2im(&cols, h, w, g, ho, wo, &mut dx);
        }
        (dx, dw)
    });
    let mut dx = Tensor4::zeros(x.shape());
    let mut dw = vec![T::zero(); g.weight_len()];
    for (i, (dxs, dws)) in per_sample.into_iter().enumerate() {
        dx.sample_mut(i).copy_from_slice(&dxs);
        for (a, b) in dw.iter_mut().zip(dws) {
            *a += b;
        }
    }
    let mut db = vec![T::zero(); g.out_c];
    for i in 0..dy.n() {
        let s = dy.sample(i);
        for (o, acc) in db.iter_mut().enumerate() {
            *acc += s[o * ho * wo..(o + 1) * ho * wo].iter().copied().sum::<T>();
        }
    }
    Ok((dx, dw, db))
}

/// Convolution layer that caches its input for the backward pass.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub geom: ConvGeom,
    pub weight: Parameter<T>,
    pub bias: Option<Parameter<T>>,
    cache: Option<Tensor4<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// He-normal weights drawn from `sample_normal`, zero bias.
    pub fn new(
        name: &str,
        geom: ConvGeom,
        with_bias: bool,
        mut sample_normal: impl FnMut() -> f64,
    ) -> Self {
        let fan_in = (geom.in_c * geom.kh * geom.kw) as f64;
        let std = (2.0 / fan_in).sqrt();
        let w = (0..geom.weight_len()).map(|_| T::of(sample_normal() * std)).collect();
        Self {
            geom,
            weight: Parameter::new(
                format!("{name}.weight"),
                vec![geom.out_c, geom.in_c, geom.kh, geom.kw],
                w,
            ),
            bias: with_bias.then(|| Parameter::filled(format!("{name}.bias"), vec![geom.out_c], T::zero())),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor4<T>, keep: bool) -> Result<Tensor4<T>, NnError> {
        let y = conv2d_forward(x, &self.weight.value, self.bias.as_ref().map(|b| &b.value[..]), &self.geom)?;
        self.cache = keep.then(|| x.clone());
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let x = self.cache.take().ok_or(NnError::NoCache("conv2d"))?;
        let (dx, dw, db) = conv2d_backward(&x, &self.weight.value, dy, &self.geom)?;
        for (a, b) in self.weight.grad.iter_mut().zip(dw) {
            *a += b;
        }
        if let Some(bias) = &mut self.bias {
            for (a, b) in bias.grad.iter_mut().zip(db) {
                *a += b;
            }
        }
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &Tensor4<f64>, w: &[f64], b: &[f64], g: &ConvGeom) -> Tensor4<f64> {
        let (ho, wo) = g.out_size(x.h(), x.w()).unwrap();
        let mut y = Tensor4::zeros([x.n(), g.out_c, ho, wo]);
        for n in 0..x.n() {
            for o in 0..g.out_c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b[o];
                        for c in 0..g.in_c {
                            for ky in 0..g.kh {
                                for kx in 0..g.kw {
                                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < x.h() && (ix as usize) < x.w() {
                                        acc += w[((o * g.in_c + c) * g.kh + ky) * g.kw + kx]
                                            * x.at(n, c, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        y.data[((n * g.out_c + o) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn identity_pointwise() {
        let g = ConvGeom::square(2, 2, 1, 1, 0);
        let x = Tensor4::from_vec([1, 2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let y = conv2d_forward(&x, &[1.0, 0.0, 0.0, 1.0], Some(&[0.0, 0.0]), &g).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_border_counts() {
        let g = ConvGeom::square(1, 1, 3, 1, 1);
        let c = 2.5;
        let x = Tensor4::full([1, 1, 5, 5], c);
        let y = conv2d_forward(&x, &[1.0; 9], None, &g).unwrap();
        assert_eq!(y.at(0, 0, 2, 2), 9.0 * c);
        assert_eq!(y.at(0, 0, 0, 0), 4.0 * c);
        assert_eq!(y.at(0, 0, 0, 2), 6.0 * c);
        assert_eq!(y.at(0, 0, 4, 4), 4.0 * c);
    }

    #[test]
    fn matches_naive_loops() {
        let mut s = 1u64;
        let mut rnd = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        for g in [
            ConvGeom::square(2, 3, 3, 1, 1),
            ConvGeom::square(3, 2, 3, 2, 1),
            ConvGeom::square(1, 4, 2, 2, 0),
            ConvGeom::square(3, 2, 1, 1, 0),
        ] {
            let x = Tensor4::from_vec([2, g.in_c, 7, 6], (0..2 * g.in_c * 42).map(|_| rnd()).collect()).unwrap();
            let w: Vec<f64> = (0..g.weight_len()).map(|_| rnd()).collect();
            let b: Vec<f64> = (0..g.out_c).map(|_| rnd()).collect();
            let y = conv2d_forward(&x, &w, Some(&b), &g).unwrap();
            let r = naive(&x, &w, &b, &g);
            assert_eq!(y.shape(), r.shape());
            for (a, b) in y.data.iter().zip(&r.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let g = ConvGeom::square(2, 1, 3, 1, 0);
        let x = Tensor4::<f32>::zeros([1, 3, 4, 4]);
        assert!(conv2d_forward(&x, &[0.0; 18], None, &g).is_err());
        let x = Tensor4::<f32>::zeros([1, 2, 2, 2]);
        assert!(conv2d_forward(&x, &[0.0; 18], None, &g).is_err());
    }

    #[test]
    fn backward_requires_forward() {
        let mut c = Conv2d::<f32>::new("c", ConvGeom::square(1, 1, 1, 1, 0), false, || 0.1);
        assert_eq!(c.backward(&Tensor4::zeros([1, 1, 1, 1])), Err(NnError::NoCache("conv2d")));
    }
}
