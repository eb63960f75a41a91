//! Finite-difference validation of every differentiable op, the Gram Block
//! and a tiny end-to-end Gram-Net.
//!
//! Each probe runs twice: gradients computed in `f64` against `f64` central
//! differences, and gradients computed by the `f32` training path against the
//! same `f64` differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::gram::{gram_matrix, gram_matrix_backward, GramBlock, GramBlockConfig, GramNet, GramNetConfig, ModelKind};
use crate::nn::gradcheck::{finite_difference_check, project, FdOptions, GradCheck};
use crate::nn::{
    batch_norm_backward, batch_norm_forward, conv2d_backward, conv2d_forward, linear_backward, linear_forward,
    softmax_cross_entropy, ConvGeom, Mode, Module, Parameter, Scalar, Tensor4, BN_EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    Conv2d,
    BatchNorm,
    Linear,
    SoftmaxCrossEntropy,
    GramMatrix,
    GramBlock,
    GramNet,
}

impl Probe {
    pub const ALL: [Probe; 7] = [
        Probe::Conv2d,
        Probe::BatchNorm,
        Probe::Linear,
        Probe::SoftmaxCrossEntropy,
        Probe::GramMatrix,
        Probe::GramBlock,
        Probe::GramNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Probe::Conv2d => "conv2d",
            Probe::BatchNorm => "batch_norm",
            Probe::Linear => "linear",
            Probe::SoftmaxCrossEntropy => "softmax_cross_entropy",
            Probe::GramMatrix => "gram_matrix",
            Probe::GramBlock => "gram_block",
            Probe::GramNet => "gramnet_tiny",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub seed: u64,
    pub f64_tolerance: f64,
    pub f32_tolerance: f64,
    pub f64_step: f64,
    pub f32_step: f64,
    pub max_per_input: Option<usize>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            f64_tolerance: 1e-6,
            f32_tolerance: 1e-3,
            f64_step: 1e-3,
            f32_step: 1e-3,
            max_per_input: Some(64),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    pub probe: Probe,
    pub precision: Precision,
    #[serde(flatten)]
    pub check: GradCheck,
}

struct Setup {
    inputs: Vec<Vec<f64>>,
    /// Projection weights for tensor-valued outputs.
    r: Vec<f64>,
    labels: Vec<usize>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn tensor<T: Scalar>(shape: [usize; 4], v: &[f64]) -> Tensor4<T> {
    Tensor4::from_vec(shape, v.iter().map(|&x| T::of(x)).collect()).expect("probe shape")
}

fn cast<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

fn back<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.f64()).collect()
}

const CONV_X: [usize; 4] = [2, 3, 6, 5];
const BN_X: [usize; 4] = [3, 2, 3, 3];
const LIN_X: [usize; 4] = [3, 5, 1, 1];
const LIN_OUT: usize = 2;
const CE_X: [usize; 4] = [4, 3, 1, 1];
const GRAM_C: usize = 3;
const GRAM_K: usize = 16;
const BLOCK_X: [usize; 4] = [2, 3, 5, 5];
const NET_X: [usize; 4] = [2, 3, 8, 8];

fn conv_geom() -> ConvGeom {
    ConvGeom::square(3, 4, 3, 2, 1)
}

fn block_cfg() -> GramBlockConfig {
    GramBlockConfig {
        align_channels: 3,
        refine_channels: 2,
    }
}

fn module_params<T: Scalar>(m: &mut impl Module<T>) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    m.visit_params(&mut |p: &mut Parameter<T>| out.push(back(&p.value)));
    out
}

fn load_params<T: Scalar>(m: &mut impl Module<T>, values: &[Vec<f64>]) {
    let mut i = 0;
    m.visit_params(&mut |p: &mut Parameter<T>| {
        p.value = cast(&values[i]);
        i += 1;
    });
}

fn module_grads<T: Scalar>(m: &mut impl Module<T>) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    m.visit_params(&mut |p: &mut Parameter<T>| out.push(back(&p.grad)));
    out
}

fn setup(probe: Probe, seed: u64) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (probe as u64) << 32);
    let n = |s: [usize; 4]| s.iter().product::<usize>();
    match probe {
        Probe::Conv2d => {
            let g = conv_geom();
            let (ho, wo) = g.out_size(CONV_X[2], CONV_X[3]).unwrap();
            Setup {
                inputs: vec![
                    uniform(&mut rng, n(CONV_X), 1.0),
                    uniform(&mut rng, g.weight_len(), 0.5),
                    uniform(&mut rng, g.out_c, 0.5),
                ],
                r: uniform(&mut rng, CONV_X[0] * g.out_c * ho * wo, 1.0),
                labels: vec![],
            }
        }
        Probe::BatchNorm => Setup {
            inputs: vec![
                uniform(&mut rng, n(BN_X), 2.0),
                (0..BN_X[1]).map(|_| rng.gen_range(0.5..1.5)).collect(),
                uniform(&mut rng, BN_X[1], 0.5),
            ],
            r: uniform(&mut rng, n(BN_X), 1.0),
            labels: vec![],
        },
        Probe::Linear => Setup {
            inputs: vec![
                uniform(&mut rng, n(LIN_X), 1.0),
                uniform(&mut rng, LIN_OUT * LIN_X[1], 0.5),
                uniform(&mut rng, LIN_OUT, 0.5),
            ],
            r: uniform(&mut rng, LIN_X[0] * LIN_OUT, 1.0),
            labels: vec![],
        },
        Probe::SoftmaxCrossEntropy => Setup {
            inputs: vec![uniform(&mut rng, n(CE_X), 2.0)],
            r: vec![],
            labels: (0..CE_X[0]).map(|i| i % CE_X[1]).collect(),
        },
        Probe::GramMatrix => Setup {
            inputs: vec![uniform(&mut rng, GRAM_C * GRAM_K, 1.0)],
            r: uniform(&mut rng, GRAM_C * GRAM_C, 1.0),
            labels: vec![],
        },
        Probe::GramBlock => {
            let mut block = GramBlock::<f64>::new("g", BLOCK_X[1], block_cfg(), || rng.gen_range(-1.0..1.0));
            let mut inputs = vec![uniform(&mut rng, n(BLOCK_X), 1.0)];
            inputs.extend(module_params(&mut block));
            Setup {
                inputs,
                r: uniform(&mut rng, BLOCK_X[0] * block_cfg().output_dim(), 1.0),
                labels: vec![],
            }
        }
        Probe::GramNet => {
            let mut net = GramNet::<f64>::new(GramNetConfig::tiny(), ModelKind::GramNet, seed).expect("tiny config");
            let mut inputs = vec![uniform(&mut rng, n(NET_X), 1.0)];
            inputs.extend(module_params(&mut net));
            Setup {
                inputs,
                r: vec![],
                labels: (0..NET_X[0]).map(|i| i % 2).collect(),
            }
        }
    }
}

/// Loss of the probe at `inputs`, evaluated in precision `T`, plus its input
/// gradients when `grad` is set.
fn eval<T: Scalar>(probe: Probe, s: &Setup, inputs: &[Vec<f64>], grad: bool) -> (f64, Vec<Vec<f64>>) {
    match probe {
        Probe::Conv2d => {
            let g = conv_geom();
            let x = tensor::<T>(CONV_X, &inputs[0]);
            let (w, b) = (cast::<T>(&inputs[1]), cast::<T>(&inputs[2]));
            let y = conv2d_forward(&x, &w, Some(&b), &g).unwrap();
            let loss = project(&back(&y.data), &s.r);
            if !grad {
                return (loss, vec![]);
            }
            let dy = tensor::<T>(y.shape(), &s.r);
            let (dx, dw, db) = conv2d_backward(&x, &w, &dy, &g).unwrap();
            (loss, vec![back(&dx.data), back(&dw), back(&db)])
        }
        Probe::BatchNorm => {
            let x = tensor::<T>(BN_X, &inputs[0]);
            let (gamma, beta) = (cast::<T>(&inputs[1]), cast::<T>(&inputs[2]));
            let (rm, rv) = (vec![T::zero(); BN_X[1]], vec![T::one(); BN_X[1]]);
            let (y, cache) = batch_norm_forward(&x, &gamma, &beta, Mode::Train, &rm, &rv, BN_EPS).unwrap();
            let loss = project(&back(&y.data), &s.r);
            if !grad {
                return (loss, vec![]);
            }
            let (dx, dg, db) = batch_norm_backward(&tensor::<T>(BN_X, &s.r), &cache, &gamma).unwrap();
            (loss, vec![back(&dx.data), back(&dg), back(&db)])
        }
        Probe::Linear => {
            let x = tensor::<T>(LIN_X, &inputs[0]);
            let (w, b) = (cast::<T>(&inputs[1]), cast::<T>(&inputs[2]));
            let y = linear_forward(&x, &w, &b).unwrap();
            let loss = project(&back(&y.data), &s.r);
            if !grad {
                return (loss, vec![]);
            }
            let (dx, dw, db) = linear_backward(&x, &w, &tensor::<T>(y.shape(), &s.r)).unwrap();
            (loss, vec![back(&dx.data), back(&dw), back(&db)])
        }
        Probe::SoftmaxCrossEntropy => {
            let z = tensor::<T>(CE_X, &inputs[0]);
            let (loss, dz) = softmax_cross_entropy(&z, &s.labels).unwrap();
            (loss, if grad { vec![back(&dz.data)] } else { vec![] })
        }
        Probe::GramMatrix => {
            let f = cast::<T>(&inputs[0]);
            let g = gram_matrix(&f, GRAM_C, true);
            let loss = project(&back(&g), &s.r);
            if !grad {
                return (loss, vec![]);
            }
            let df = gram_matrix_backward(&f, GRAM_C, true, &cast::<T>(&s.r));
            (loss, vec![back(&df)])
        }
        Probe::GramBlock => {
            let mut block = GramBlock::<T>::new("g", BLOCK_X[1], block_cfg(), || 0.0);
            load_params(&mut block, &inputs[1..]);
            let x = tensor::<T>(BLOCK_X, &inputs[0]);
            let y = block.forward(&x, Mode::Train, grad).unwrap();
            let loss = project(&back(&y.data), &s.r);
            if !grad {
                return (loss, vec![]);
            }
            block.zero_grad();
            let dx = block.backward(&tensor::<T>(y.shape(), &s.r)).unwrap();
            let mut out = vec![back(&dx.data)];
            out.extend(module_grads(&mut block));
            (loss, out)
        }
        Probe::GramNet => {
            let mut net = GramNet::<T>::new(GramNetConfig::tiny(), ModelKind::GramNet, 0).unwrap();
            load_params(&mut net, &inputs[1..]);
            let x = tensor::<T>(NET_X, &inputs[0]);
            let logits = net.forward(&x, Mode::Train, grad).unwrap();
            let (loss, dlogits) = softmax_cross_entropy(&logits, &s.labels).unwrap();
            if !grad {
                return (loss, vec![]);
            }
            net.zero_grad();
            let dx = net.backward(&dlogits).unwrap();
            let mut out = vec![back(&dx.data)];
            out.extend(module_grads(&mut net));
            (loss, out)
        }
    }
}

pub fn run_probe(probe: Probe, precision: Precision, opts: &SuiteOptions) -> ProbeResult {
    let s = setup(probe, opts.seed);
    let analytic = match precision {
        Precision::F64 => eval::<f64>(probe, &s, &s.inputs, true).1,
        Precision::F32 => eval::<f32>(probe, &s, &s.inputs, true).1,
    };
    let (step, tolerance) = match precision {
        Precision::F64 => (opts.f64_step, opts.f64_tolerance),
        Precision::F32 => (opts.f32_step, opts.f32_tolerance),
    };
    let fd = FdOptions {
        step,
        tolerance,
        max_per_input: opts.max_per_input,
        extrapolate: true,
    };
    let name = format!("{}/{}", probe.name(), if precision == Precision::F64 { "f64" } else { "f32" });
    let check = finite_difference_check(&name, &s.inputs, &analytic, |p| eval::<f64>(probe, &s, p, false).0, fd);
    ProbeResult {
        probe,
        precision,
        check,
    }
}

/// Every probe in both precisions.
pub fn run_suite(opts: &SuiteOptions) -> Vec<ProbeResult> {
    Probe::ALL
        .iter()
        .flat_map(|&p| [Precision::F64, Precision::F32].map(|prec| run_probe(p, prec, opts)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_probes_pass() {
        let opts = SuiteOptions::default();
        for p in [Probe::Conv2d, Probe::Linear, Probe::SoftmaxCrossEntropy, Probe::GramMatrix] {
            for prec in [Precision::F64, Precision::F32] {
                let r = run_probe(p, prec, &opts);
                assert!(r.check.passed(), "{:?}", r.check);
            }
        }
    }
}
