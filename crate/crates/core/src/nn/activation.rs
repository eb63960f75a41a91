use super::tensor::{Scalar, Tensor4};
use super::{shape_err, NnError};

pub fn relu_forward<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    Tensor4::from_vec(x.shape(), x.data.iter().map(|&v| v.max(T::zero())).collect())
        .expect("same shape")
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(x: &Tensor4<T>, dy: &Tensor4<T>) -> Tensor4<T> {
    let data = x
        .data
        .iter()
        .zip(&dy.data)
        .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
        .collect();
    Tensor4::from_vec(dy.shape(), data).expect("same shape")
}

/// ReLU layer; caches the activity mask.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn forward<T: Scalar>(&mut self, x: &Tensor4<T>, keep: bool) -> Tensor4<T> {
        if keep {
            self.mask = Some(x.data.iter().map(|&v| v > T::zero()).collect());
        }
        relu_forward(x)
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let mask = self.mask.take().ok_or(NnError::NoCache("relu"))?;
        if mask.len() != dy.data.len() {
            return Err(shape_err("relu", "gradient size differs from cached input"));
        }
        let data = dy
            .data
            .iter()
            .zip(mask)
            .map(|(&d, m)| if m { d } else { T::zero() })
            .collect();
        Ok(Tensor4::from_vec(dy.shape(), data).expect("same shape"))
    }
}

/// Per-channel spatial mean; output is `N x C x 1 x 1`.
pub fn global_avg_pool_forward<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let hw = x.h() * x.w();
    let data = x
        .data
        .chunks(hw)
        .map(|plane| T::of(plane.iter().map(|v| v.f64()).sum::<f64>() / hw as f64))
        .collect();
    Tensor4::from_vec([x.n(), x.c(), 1, 1], data).expect("pooled shape")
}

/// Spreads each pooled gradient evenly over the `h x w` positions.
pub fn global_avg_pool_backward<T: Scalar>(dy: &Tensor4<T>, h: usize, w: usize) -> Tensor4<T> {
    let hw = h * w;
    let scale = T::of(1.0 / hw as f64);
    let data = dy.data.iter().flat_map(|&d| std::iter::repeat_n(d * scale, hw)).collect();
    Tensor4::from_vec([dy.n(), dy.c(), h, w], data).expect("unpooled shape")
}

/// Concatenates flat feature tensors (`N x Ci x 1 x 1`) along channels, in order.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor4<T>]) -> Result<Tensor4<T>, NnError> {
    let first = parts.first().ok_or_else(|| shape_err("concat", "no parts"))?;
    let n = first.n();
    if let Some(p) = parts.iter().find(|p| p.n() != n) {
        return Err(shape_err("concat", format!("batch {} vs {}", p.n(), n)));
    }
    let total: usize = parts.iter().map(|p| p.sample_len()).sum();
    let mut data = Vec::with_capacity(n * total);
    for i in 0..n {
        for p in parts {
            data.extend_from_slice(p.sample(i));
        }
    }
    Tensor4::from_vec([n, total, 1, 1], data)
}

/// Inverse of [`concat_channels`]: splits `N x sum(widths)` into flat parts.
pub fn split_channels<T: Scalar>(x: &Tensor4<T>, widths: &[usize]) -> Result<Vec<Tensor4<T>>, NnError> {
    if widths.iter().sum::<usize>() != x.sample_len() {
        return Err(shape_err("split", "widths do not add up to the feature length"));
    }
    let mut out: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(w * x.n())).collect();
    for i in 0..x.n() {
        let mut off = 0;
        let s = x.sample(i);
        for (k, &w) in widths.iter().enumerate() {
            out[k].extend_from_slice(&s[off..off + w]);
            off += w;
        }
    }
    Ok(out
        .into_iter()
        .zip(widths)
        .map(|(d, &w)| Tensor4::from_vec([x.n(), w, 1, 1], d).expect("split shape"))
        .collect())
}

pub fn add_inplace<T: Scalar>(a: &mut Tensor4<T>, b: &Tensor4<T>) -> Result<(), NnError> {
    if a.shape() != b.shape() {
        return Err(shape_err("add", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    for (x, &y) in a.data.iter_mut().zip(&b.data) {
        *x += y;
    }
    Ok(())
}
