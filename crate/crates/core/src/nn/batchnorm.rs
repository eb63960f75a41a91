use super::tensor::{Parameter, Scalar, Tensor4};
use super::{shape_err, Mode, Module, NnError};
use crate::par;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// What the backward pass needs from a batch-norm forward.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Tensor4<T>,
    pub invstd: Vec<f64>,
    pub mode: Mode,
    /// Per-channel batch mean and biased variance (train mode only).
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

fn channel_sums<T: Scalar>(x: &Tensor4<T>, f: impl Fn(usize, T) -> f64 + Sync + Send) -> Vec<f64> {
    let hw = x.h() * x.w();
    let c = x.c();
    par::map_range(c, |ch| {
        let mut acc = 0.0;
        for n in 0..x.n() {
            let start = (n * c + ch) * hw;
            for &v in &x.data[start..start + hw] {
                acc += f(ch, v);
            }
        }
        acc
    })
}

/// Per-channel normalization. Train mode uses batch statistics, eval mode
/// the supplied running statistics.
pub fn batch_norm_forward<T: Scalar>(
    x: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    mode: Mode,
    running_mean: &[T],
    running_var: &[T],
    eps: f64,
) -> Result<(Tensor4<T>, BnCache<T>), NnError> {
    let c = x.c();
    if [gamma.len(), beta.len(), running_mean.len(), running_var.len()] != [c; 4] {
        return Err(shape_err("batch_norm", format!("parameters must have {c} entries")));
    }
    let count = (x.n() * x.h() * x.w()) as f64;
    let (mean, var) = match mode {
        Mode::Train => {
            let mean: Vec<f64> = channel_sums(x, |_, v| v.f64()).into_iter().map(|s| s / count).collect();
            let var: Vec<f64> = channel_sums(x, |ch, v| (v.f64() - mean[ch]).powi(2))
                .into_iter()
                .map(|s| s / count)
                .collect();
            (mean, var)
        }
        Mode::Eval => (
            running_mean.iter().map(|v| v.f64()).collect(),
            running_var.iter().map(|v| v.f64()).collect(),
        ),
    };
    let invstd: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let hw = x.h() * x.w();
    let mut xhat = Tensor4::zeros(x.shape());
    let mut y = Tensor4::zeros(x.shape());
    par::for_each_chunk_pair_mut(&mut xhat.data, hw, &mut y.data, hw, |i, xh, yy| {
        let ch = i % c;
        let src = &x.data[i * hw..(i + 1) * hw];
        let (m, s) = (mean[ch], invstd[ch]);
        let (g, b) = (gamma[ch].f64(), beta[ch].f64());
        for ((a, o), &v) in xh.iter_mut().zip(yy.iter_mut()).zip(src) {
            let n = (v.f64() - m) * s;
            *a = T::of(n);
            *o = T::of(g * n + b);
        }
    });
    let (batch_mean, batch_var) = if mode == Mode::Train { (mean, var) } else { (vec![], vec![]) };
    Ok((
        y,
        BnCache {
            xhat,
            invstd,
            mode,
            batch_mean,
            batch_var,
        },
    ))
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batch_norm_backward<T: Scalar>(
    dy: &Tensor4<T>,
    cache: &BnCache<T>,
    gamma: &[T],
) -> Result<(Tensor4<T>, Vec<T>, Vec<T>), NnError> {
    if dy.shape() != cache.xhat.shape() {
        return Err(shape_err("batch_norm", "upstream gradient shape differs from input"));
    }
    let c = dy.c();
    let hw = dy.h() * dy.w();
    let count = (dy.n() * hw) as f64;
    let sums = par::map_range(c, |ch| {
        let (mut sd, mut sdx) = (0.0, 0.0);
        for n in 0..dy.n() {
            let start = (n * c + ch) * hw;
            for (d, xh) in dy.data[start..start + hw].iter().zip(&cache.xhat.data[start..start + hw]) {
                sd += d.f64();
                sdx += d.f64() * xh.f64();
            }
        }
        (sd, sdx)
    });
    let mut dx = Tensor4::zeros(dy.shape());
    par::for_each_chunk_mut(&mut dx.data, hw, |i, out| {
        let ch = i % c;
        let k = gamma[ch].f64() * cache.invstd[ch];
        let src = &dy.data[i * hw..(i + 1) * hw];
        match cache.mode {
            Mode::Eval => {
                for (o, d) in out.iter_mut().zip(src) {
                    *o = T::of(d.f64() * k);
                }
            }
            Mode::Train => {
                let (sd, sdx) = sums[ch];
                let xh = &cache.xhat.data[i * hw..(i + 1) * hw];
                for ((o, d), x) in out.iter_mut().zip(src).zip(xh) {
                    *o = T::of(k * (d.f64() - sd / count - x.f64() * sdx / count));
                }
            }
        }
    });
    let dgamma = sums.iter().map(|s| T::of(s.1)).collect();
    let dbeta = sums.iter().map(|s| T::of(s.0)).collect();
    Ok((dx, dgamma, dbeta))
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub running_mean: Parameter<T>,
    pub running_var: Parameter<T>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache<T>>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Parameter::filled(format!("{name}.gamma"), vec![channels], T::one()),
            beta: Parameter::filled(format!("{name}.beta"), vec![channels], T::zero()),
            running_mean: Parameter::filled(format!("{name}.running_mean"), vec![channels], T::zero()),
            running_var: Parameter::filled(format!("{name}.running_var"), vec![channels], T::one()),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
            cache: None,
        }
    }

    /// Train mode also folds the batch statistics into the running estimates
    /// (variance with the unbiased `n / (n - 1)` correction).
    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode, keep: bool) -> Result<Tensor4<T>, NnError> {
        let (y, cache) = batch_norm_forward(
            x,
            &self.gamma.value,
            &self.beta.value,
            mode,
            &self.running_mean.value,
            &self.running_var.value,
            self.eps,
        )?;
        if mode == Mode::Train {
            let count = (x.n() * x.h() * x.w()) as f64;
            let correction = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            let m = self.momentum;
            for ch in 0..x.c() {
                let rm = &mut self.running_mean.value[ch];
                *rm = T::of((1.0 - m) * rm.f64() + m * cache.batch_mean[ch]);
                let rv = &mut self.running_var.value[ch];
                *rv = T::of((1.0 - m) * rv.f64() + m * cache.batch_var[ch] * correction);
            }
        }
        self.cache = keep.then_some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let cache = self.cache.take().ok_or(NnError::NoCache("batch_norm"))?;
        let (dx, dg, db) = batch_norm_backward(dy, &cache, &self.gamma.value)?;
        for (a, b) in self.gamma.grad.iter_mut().zip(dg) {
            *a += b;
        }
        for (a, b) in self.beta.grad.iter_mut().zip(db) {
            *a += b;
        }
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}
