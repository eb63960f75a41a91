use super::tensor::{Parameter, Scalar, Tensor4};
use super::{shape_err, Module, NnError};

/// `y[n, o] = b[o] + sum_k w[o, k] x[n, k]` on flattened samples.
///
/// Plain loops with a fixed summation order: appending zero features to `x`
/// (with any weights) leaves the outputs bit-identical.
pub fn linear_forward<T: Scalar>(x: &Tensor4<T>, weight: &[T], bias: &[T]) -> Result<Tensor4<T>, NnError> {
    let f = x.sample_len();
    let o = bias.len();
    if weight.len() != o * f {
        return Err(shape_err(
            "linear",
            format!("weight has {} values, expected {o}x{f}", weight.len()),
        ));
    }
    let mut y = Vec::with_capacity(x.n() * o);
    for i in 0..x.n() {
        let xs = x.sample(i);
        for (row, &b) in weight.chunks(f).zip(bias) {
            let mut acc = b;
            for (&w, &v) in row.iter().zip(xs) {
                acc += w * v;
            }
            y.push(acc);
        }
    }
    Tensor4::from_vec([x.n(), o, 1, 1], y)
}

/// Returns `(dx, dweight, dbias)`.
pub fn linear_backward<T: Scalar>(
    x: &Tensor4<T>,
    weight: &[T],
    dy: &Tensor4<T>,
) -> Result<(Tensor4<T>, Vec<T>, Vec<T>), NnError> {
    let f = x.sample_len();
    let o = dy.sample_len();
    if dy.n() != x.n() || weight.len() != o * f {
        return Err(shape_err("linear", "gradient shape mismatch"));
    }
    let mut dx = Tensor4::zeros(x.shape());
    let mut dw = vec![T::zero(); o * f];
    let mut db = vec![T::zero(); o];
    for i in 0..x.n() {
        let xs = x.sample(i);
        let ds = dy.sample(i);
        let dxs = dx.sample_mut(i);
        for (k, &d) in ds.iter().enumerate() {
            db[k] += d;
            let row = &weight[k * f..(k + 1) * f];
            let grow = &mut dw[k * f..(k + 1) * f];
            for j in 0..f {
                grow[j] += d * xs[j];
                dxs[j] += d * row[j];
            }
        }
    }
    Ok((dx, dw, db))
}

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    cache: Option<Tensor4<T>>,
}

impl<T: Scalar> Linear<T> {
    /// Weights uniform in `+-1/sqrt(inputs)` from `sample_unit` (values in `[-1, 1)`).
    pub fn new(name: &str, inputs: usize, outputs: usize, mut sample_unit: impl FnMut() -> f64) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let w = (0..inputs * outputs).map(|_| T::of(sample_unit() * bound)).collect();
        Self {
            weight: Parameter::new(format!("{name}.weight"), vec![outputs, inputs], w),
            bias: Parameter::filled(format!("{name}.bias"), vec![outputs], T::zero()),
            cache: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn forward(&mut self, x: &Tensor4<T>, keep: bool) -> Result<Tensor4<T>, NnError> {
        let y = linear_forward(x, &self.weight.value, &self.bias.value)?;
        self.cache = keep.then(|| x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let x = self.cache.take().ok_or(NnError::NoCache("linear"))?;
        let (dx, dw, db) = linear_backward(&x, &self.weight.value, dy)?;
        for (a, b) in self.weight.grad.iter_mut().zip(dw) {
            *a += b;
        }
        for (a, b) in self.bias.grad.iter_mut().zip(db) {
            *a += b;
        }
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
