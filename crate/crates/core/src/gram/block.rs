use serde::{Deserialize, Serialize};

use super::{gram_matrix, gram_matrix_backward};
use crate::nn::{
    global_avg_pool_backward, global_avg_pool_forward, BatchNorm2d, Conv2d, ConvGeom, Mode, Module, NnError,
    Parameter, Relu, Scalar, Tensor4,
};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GramBlockConfig {
    /// Channels after the 1x1 alignment convolution (side of the Gram matrix).
    pub align_channels: usize,
    /// Channels of the two refining conv-BN-ReLU layers.
    pub refine_channels: usize,
}

impl Default for GramBlockConfig {
    fn default() -> Self {
        Self {
            align_channels: 16,
            refine_channels: 32,
        }
    }
}

impl GramBlockConfig {
    pub fn output_dim(&self) -> usize {
        self.refine_channels
    }
}

/// Align (1x1 conv) -> normalized Gram matrix as a 1-channel `C x C` map ->
/// two 3x3 conv-BN-ReLU -> global average pool.
#[derive(Debug, Clone)]
pub struct GramBlock<T> {
    pub cfg: GramBlockConfig,
    pub align: Conv2d<T>,
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    relu1: Relu,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    relu2: Relu,
    aligned: Option<Tensor4<T>>,
}

impl<T: Scalar> GramBlock<T> {
    pub fn new(name: &str, in_channels: usize, cfg: GramBlockConfig, mut normal: impl FnMut() -> f64) -> Self {
        let (a, r) = (cfg.align_channels, cfg.refine_channels);
        Self {
            cfg,
            align: Conv2d::new(&format!("{name}.align"), ConvGeom::square(in_channels, a, 1, 1, 0), true, &mut normal),
            conv1: Conv2d::new(&format!("{name}.refine1.conv"), ConvGeom::square(1, r, 3, 1, 1), false, &mut normal),
            bn1: BatchNorm2d::new(&format!("{name}.refine1.bn"), r),
            relu1: Relu::default(),
            conv2: Conv2d::new(&format!("{name}.refine2.conv"), ConvGeom::square(r, r, 3, 1, 1), false, &mut normal),
            bn2: BatchNorm2d::new(&format!("{name}.refine2.bn"), r),
            relu2: Relu::default(),
            aligned: None,
        }
    }

    /// Returns `N x output_dim x 1 x 1` features for any input resolution.
    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode, keep: bool) -> Result<Tensor4<T>, NnError> {
        let a = self.align.forward(x, keep)?;
        let c = self.cfg.align_channels;
        let grams = par::map_range(a.n(), |i| gram_matrix(a.sample(i), c, true));
        let g = Tensor4::from_vec([a.n(), 1, c, c], grams.concat())?;
        let h = self.conv1.forward(&g, keep)?;
        let h = self.bn1.forward(&h, mode, keep)?;
        let h = self.relu1.forward(&h, keep);
        let h = self.conv2.forward(&h, keep)?;
        let h = self.bn2.forward(&h, mode, keep)?;
        let h = self.relu2.forward(&h, keep);
        self.aligned = keep.then_some(a);
        Ok(global_avg_pool_forward(&h))
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let a = self.aligned.take().ok_or(NnError::NoCache("gram_block"))?;
        let c = self.cfg.align_channels;
        let d = global_avg_pool_backward(dy, c, c);
        let d = self.relu2.backward(&d)?;
        let d = self.bn2.backward(&d)?;
        let d = self.conv2.backward(&d)?;
        let d = self.relu1.backward(&d)?;
        let d = self.bn1.backward(&d)?;
        let dg = self.conv1.backward(&d)?;
        let da = par::map_range(a.n(), |i| gram_matrix_backward(a.sample(i), c, true, dg.sample(i)));
        let da = Tensor4::from_vec(a.shape(), da.concat())?;
        self.align.backward(&da)
    }
}

impl<T: Scalar> Module<T> for GramBlock<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.align.visit_params(f);
        self.conv1.visit_params(f);
        self.bn1.visit_params(f);
        self.conv2.visit_params(f);
        self.bn2.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.bn1.visit_buffers(f);
        self.bn2.visit_buffers(f);
    }
}
