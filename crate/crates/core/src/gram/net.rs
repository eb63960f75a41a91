//! Residual backbone with Gram Blocks tapped at the input, after the stem and
//! at the end of every stage (each of which feeds a downsampling layer: the
//! next stage's stride-2 conv, or the final global pooling).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GramBlock, GramBlockConfig};
use crate::nn::{
    add_inplace, concat_channels, global_avg_pool_backward, global_avg_pool_forward, split_channels, BatchNorm2d,
    Conv2d, ConvGeom, Linear, Mode, Module, NnError, Parameter, Relu, Scalar, Tensor4,
};

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("input must have {expected} channels, got {got}")]
    Channels { expected: usize, got: usize },
    #[error("input {h}x{w} is smaller than the {min}x{min} minimum for {stages} downsampling stages")]
    TooSmall { h: usize, w: usize, min: usize, stages: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    GramNet,
    Baseline,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::GramNet => "gramnet",
            ModelKind::Baseline => "baseline",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gramnet" => Ok(ModelKind::GramNet),
            "baseline" => Ok(ModelKind::Baseline),
            other => Err(format!("unknown model kind '{other}' (expected gramnet|baseline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramNetConfig {
    pub input_channels: usize,
    /// Channels of each residual stage; every stage starts with a stride-2 conv.
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub gram: GramBlockConfig,
    pub num_classes: usize,
}

impl Default for GramNetConfig {
    fn default() -> Self {
        Self {
            input_channels: 3,
            stage_widths: vec![16, 32, 64, 128],
            blocks_per_stage: 2,
            gram: GramBlockConfig::default(),
            num_classes: 2,
        }
    }
}

impl GramNetConfig {
    /// Small network for gradient checks and quick tests.
    pub fn tiny() -> Self {
        Self {
            input_channels: 3,
            stage_widths: vec![2, 3],
            blocks_per_stage: 1,
            gram: GramBlockConfig {
                align_channels: 3,
                refine_channels: 2,
            },
            num_classes: 2,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let err = |m: &str| Err(NetError::Config(m.to_string()));
        if self.stage_widths.is_empty() {
            return err("at least one stage required");
        }
        if self.stage_widths.contains(&0) || self.input_channels == 0 {
            return err("widths must be positive");
        }
        if self.stage_widths.windows(2).any(|w| w[1] < w[0]) {
            return err("stage widths must be non-decreasing");
        }
        if self.gram.align_channels == 0 || self.gram.refine_channels == 0 {
            return err("gram block widths must be positive");
        }
        if self.num_classes < 2 {
            return err("need at least two classes");
        }
        Ok(())
    }

    /// Input, stem output, and the output of every stage.
    pub fn gram_taps(&self) -> usize {
        self.stage_widths.len() + 2
    }

    fn tap_channels(&self) -> Vec<usize> {
        let mut v = vec![self.input_channels, self.stage_widths[0]];
        v.extend(&self.stage_widths);
        v
    }

    pub fn backbone_dim(&self) -> usize {
        *self.stage_widths.last().expect("validated")
    }

    pub fn head_inputs(&self, kind: ModelKind) -> usize {
        match kind {
            ModelKind::GramNet => self.backbone_dim() + self.gram_taps() * self.gram.output_dim(),
            ModelKind::Baseline => self.backbone_dim(),
        }
    }

    /// Smallest accepted input side: leaves at least 2x2 after the last downsample.
    pub fn min_input_side(&self) -> usize {
        1 << (self.stage_widths.len() + 1)
    }
}

#[derive(Debug, Clone)]
struct ConvBnRelu<T> {
    conv: Conv2d<T>,
    bn: BatchNorm2d<T>,
    relu: Relu,
}

impl<T: Scalar> ConvBnRelu<T> {
    fn new(name: &str, geom: ConvGeom, normal: &mut impl FnMut() -> f64) -> Self {
        Self {
            conv: Conv2d::new(&format!("{name}.conv"), geom, false, normal),
            bn: BatchNorm2d::new(&format!("{name}.bn"), geom.out_c),
            relu: Relu::default(),
        }
    }

    fn forward(&mut self, x: &Tensor4<T>, mode: Mode, keep: bool) -> Result<Tensor4<T>, NnError> {
        let h = self.conv.forward(x, keep)?;
        let h = self.bn.forward(&h, mode, keep)?;
        Ok(self.relu.forward(&h, keep))
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let d = self.relu.backward(dy)?;
        let d = self.bn.backward(&d)?;
        self.conv.backward(&d)
    }
}

impl<T: Scalar> Module<T> for ConvBnRelu<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.conv.visit_params(f);
        self.bn.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.bn.visit_buffers(f);
    }
}

/// `relu(bn(conv(relu(bn(conv(x))))) + x)`.
#[derive(Debug, Clone)]
struct BasicBlock<T> {
    first: ConvBnRelu<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
    out: Relu,
}

impl<T: Scalar> BasicBlock<T> {
    fn new(name: &str, width: usize, normal: &mut impl FnMut() -> f64) -> Self {
        Self {
            first: ConvBnRelu::new(&format!("{name}.conv1"), ConvGeom::square(width, width, 3, 1, 1), normal),
            conv2: Conv2d::new(&format!("{name}.conv2.conv"), ConvGeom::square(width, width, 3, 1, 1), false, normal),
            bn2: BatchNorm2d::new(&format!("{name}.conv2.bn"), width),
            out: Relu::default(),
        }
    }

    fn forward(&mut self, x: &Tensor4<T>, mode: Mode, keep: bool) -> Result<Tensor4<T>, NnError> {
        let h = self.first.forward(x, mode, keep)?;
        let h = self.conv2.forward(&h, keep)?;
        let mut h = self.bn2.forward(&h, mode, keep)?;
        add_inplace(&mut h, x)?;
        Ok(self.out.forward(&h, keep))
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let dsum = self.out.backward(dy)?;
        let d = self.bn2.backward(&dsum)?;
        let d = self.conv2.backward(&d)?;
        let mut dx = self.first.backward(&d)?;
        add_inplace(&mut dx, &dsum)?;
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for BasicBlock<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.first.visit_params(f);
        self.conv2.visit_params(f);
        self.bn2.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.first.visit_buffers(f);
        self.bn2.visit_buffers(f);
    }
}

#[derive(Debug, Clone)]
struct Stage<T> {
    down: ConvBnRelu<T>,
    blocks: Vec<BasicBlock<T>>,
}

/// Gram-Net, or the plain backbone when built as [`ModelKind::Baseline`].
#[derive(Debug, Clone)]
pub struct GramNet<T> {
    config: GramNetConfig,
    kind: ModelKind,
    stem: ConvBnRelu<T>,
    stages: Vec<Stage<T>>,
    grams: Vec<GramBlock<T>>,
    pub head: Linear<T>,
    pooled_hw: Option<(usize, usize)>,
}

impl<T: Scalar> GramNet<T> {
    /// Deterministic initialization from `seed`.
    pub fn new(config: GramNetConfig, kind: ModelKind, seed: u64) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || rng.sample::<f64, _>(StandardNormal);
        let w0 = config.stage_widths[0];
        let stem = ConvBnRelu::new("stem", ConvGeom::square(config.input_channels, w0, 3, 1, 1), &mut normal);
        let mut prev = w0;
        let stages = config
            .stage_widths
            .iter()
            .enumerate()
            .map(|(s, &w)| {
                let down = ConvBnRelu::new(&format!("stage{s}.down"), ConvGeom::square(prev, w, 3, 2, 1), &mut normal);
                prev = w;
                let blocks = (0..config.blocks_per_stage)
                    .map(|b| BasicBlock::new(&format!("stage{s}.block{b}"), w, &mut normal))
                    .collect();
                Stage { down, blocks }
            })
            .collect();
        let grams = match kind {
            ModelKind::GramNet => config
                .tap_channels()
                .into_iter()
                .enumerate()
                .map(|(t, c)| GramBlock::new(&format!("gram{t}"), c, config.gram, &mut normal))
                .collect(),
            ModelKind::Baseline => Vec::new(),
        };
        let head = Linear::new("head", config.head_inputs(kind), config.num_classes, || {
            rng.gen_range(-1.0..1.0)
        });
        Ok(Self {
            config,
            kind,
            stem,
            stages,
            grams,
            head,
            pooled_hw: None,
        })
    }

    pub fn config(&self) -> &GramNetConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<(), NetError> {
        if x.c() != self.config.input_channels {
            return Err(NetError::Channels {
                expected: self.config.input_channels,
                got: x.c(),
            });
        }
        let min = self.config.min_input_side();
        if x.h() < min || x.w() < min {
            return Err(NetError::TooSmall {
                h: x.h(),
                w: x.w(),
                min,
                stages: self.config.stage_widths.len(),
            });
        }
        Ok(())
    }

    /// Backbone pooled features and one feature vector per Gram tap (empty for the baseline).
    pub fn forward_features(
        &mut self,
        x: &Tensor4<T>,
        mode: Mode,
        keep: bool,
    ) -> Result<(Tensor4<T>, Vec<Tensor4<T>>), NetError> {
        self.check_input(x)?;
        let gram = self.kind == ModelKind::GramNet;
        let mut taps = Vec::with_capacity(self.grams.len());
        if gram {
            taps.push(self.grams[0].forward(x, mode, keep)?);
        }
        let mut h = self.stem.forward(x, mode, keep)?;
        if gram {
            taps.push(self.grams[1].forward(&h, mode, keep)?);
        }
        for (s, stage) in self.stages.iter_mut().enumerate() {
            h = stage.down.forward(&h, mode, keep)?;
            for b in &mut stage.blocks {
                h = b.forward(&h, mode, keep)?;
            }
            if gram {
                taps.push(self.grams[s + 2].forward(&h, mode, keep)?);
            }
        }
        self.pooled_hw = keep.then_some((h.h(), h.w()));
        Ok((global_avg_pool_forward(&h), taps))
    }

    /// Class logits, `N x num_classes x 1 x 1`.
    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode, keep: bool) -> Result<Tensor4<T>, NetError> {
        let (pooled, taps) = self.forward_features(x, mode, keep)?;
        let mut parts = vec![&pooled];
        parts.extend(taps.iter());
        let feat = concat_channels(&parts)?;
        Ok(self.head.forward(&feat, keep)?)
    }

    /// Back-propagates `dlogits` through a forward run with `keep = true`,
    /// accumulating parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, dlogits: &Tensor4<T>) -> Result<Tensor4<T>, NetError> {
        let (ph, pw) = self.pooled_hw.take().ok_or(NnError::NoCache("gramnet"))?;
        let dfeat = self.head.backward(dlogits)?;
        let mut widths = vec![self.config.backbone_dim()];
        widths.extend(std::iter::repeat_n(self.config.gram.output_dim(), self.grams.len()));
        let mut parts = split_channels(&dfeat, &widths)?.into_iter();
        let dpooled = parts.next().expect("backbone part");
        let dtaps: Vec<Tensor4<T>> = parts.collect();
        let gram = !dtaps.is_empty();

        let mut dh = global_avg_pool_backward(&dpooled, ph, pw);
        for (s, stage) in self.stages.iter_mut().enumerate().rev() {
            if gram {
                add_inplace(&mut dh, &self.grams[s + 2].backward(&dtaps[s + 2])?)?;
            }
            for b in stage.blocks.iter_mut().rev() {
                dh = b.backward(&dh)?;
            }
            dh = stage.down.backward(&dh)?;
        }
        if gram {
            add_inplace(&mut dh, &self.grams[1].backward(&dtaps[1])?)?;
        }
        let mut dx = self.stem.backward(&dh)?;
        if gram {
            add_inplace(&mut dx, &self.grams[0].backward(&dtaps[0])?)?;
        }
        Ok(dx)
    }

    /// Named `(name, shape, values)` for every parameter and buffer, in a fixed order.
    pub fn state(&mut self) -> Vec<(String, Vec<usize>, Vec<T>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.push((p.name.clone(), p.shape.clone(), p.value.clone())));
        self.visit_buffers(&mut |p| out.push((p.name.clone(), p.shape.clone(), p.value.clone())));
        out
    }

    /// Overwrites a parameter or buffer by name. Errors on unknown names or shape mismatch.
    pub fn set_tensor(&mut self, name: &str, shape: &[usize], values: &[T]) -> Result<(), NetError> {
        let mut result = Err(NetError::Config(format!("unknown tensor '{name}'")));
        let mut apply = |p: &mut Parameter<T>| {
            if p.name == name {
                result = if p.shape != shape || values.len() != p.value.len() {
                    Err(NetError::Config(format!(
                        "tensor '{name}' has shape {:?}, got {shape:?}",
                        p.shape
                    )))
                } else {
                    p.value.copy_from_slice(values);
                    Ok(())
                };
            }
        };
        self.visit_params(&mut apply);
        self.visit_buffers(&mut apply);
        result
    }

    /// The baseline network sharing this model's backbone, with the head
    /// restricted to the backbone features.
    pub fn to_baseline(&mut self) -> Result<GramNet<T>, NetError> {
        let mut base = GramNet::new(self.config.clone(), ModelKind::Baseline, 0)?;
        for (name, shape, values) in self.state() {
            if name.starts_with("gram") || name.starts_with("head.") {
                continue;
            }
            base.set_tensor(&name, &shape, &values)?;
        }
        let f = self.head.inputs();
        let keep = self.config.backbone_dim();
        base.head.weight.value = self.head.weight.value.chunks(f).flat_map(|row| row[..keep].to_vec()).collect();
        base.head.bias.value = self.head.bias.value.clone();
        Ok(base)
    }

    pub fn cast<U: Scalar>(&mut self) -> Result<GramNet<U>, NetError> {
        let mut other = GramNet::<U>::new(self.config.clone(), self.kind, 0)?;
        for (name, shape, values) in self.state() {
            let v: Vec<U> = values.iter().map(|x| U::of(x.f64())).collect();
            other.set_tensor(&name, &shape, &v)?;
        }
        Ok(other)
    }
}

impl<T: Scalar> Module<T> for GramNet<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.stem.visit_params(f);
        for s in &mut self.stages {
            s.down.visit_params(f);
            for b in &mut s.blocks {
                b.visit_params(f);
            }
        }
        for g in &mut self.grams {
            g.visit_params(f);
        }
        self.head.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.stem.visit_buffers(f);
        for s in &mut self.stages {
            s.down.visit_buffers(f);
            for b in &mut s.blocks {
                b.visit_buffers(f);
            }
        }
        for g in &mut self.grams {
            g.visit_buffers(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(n: usize, side: usize, seed: u64) -> Tensor4<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * 3 * side * side).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor4::from_vec([n, 3, side, side], data).unwrap()
    }

    #[test]
    fn default_head_is_320() {
        let cfg = GramNetConfig::default();
        assert_eq!(cfg.gram_taps(), 6);
        assert_eq!(cfg.head_inputs(ModelKind::GramNet), 320);
        assert_eq!(cfg.head_inputs(ModelKind::Baseline), 128);
        assert_eq!(cfg.min_input_side(), 32);
    }

    #[test]
    fn variable_input_sizes() {
        let mut net = GramNet::<f32>::new(GramNetConfig::tiny(), ModelKind::GramNet, 1).unwrap();
        for side in [8, 13, 24] {
            let y = net.forward(&input(2, side, side as u64), Mode::Eval, false).unwrap();
            assert_eq!(y.shape(), [2, 2, 1, 1]);
            assert!(y.is_finite());
        }
        assert!(matches!(
            net.forward(&input(1, 7, 0), Mode::Eval, false),
            Err(NetError::TooSmall { .. })
        ));
    }

    #[test]
    fn deterministic_init_and_forward() {
        let x = input(2, 16, 3);
        let mut a = GramNet::<f32>::new(GramNetConfig::tiny(), ModelKind::GramNet, 9).unwrap();
        let mut b = GramNet::<f32>::new(GramNetConfig::tiny(), ModelKind::GramNet, 9).unwrap();
        assert_eq!(
            a.forward(&x, Mode::Eval, false).unwrap(),
            b.forward(&x, Mode::Eval, false).unwrap()
        );
    }

    #[test]
    fn baseline_has_fewer_parameters() {
        let cfg = GramNetConfig::default();
        let mut g = GramNet::<f32>::new(cfg.clone(), ModelKind::GramNet, 0).unwrap();
        let mut b = GramNet::<f32>::new(cfg, ModelKind::Baseline, 0).unwrap();
        assert!(b.param_count() < g.param_count());
    }

    #[test]
    fn state_names_unique() {
        let mut g = GramNet::<f32>::new(GramNetConfig::default(), ModelKind::GramNet, 0).unwrap();
        let names: Vec<String> = g.state().into_iter().map(|t| t.0).collect();
        let set: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(set.len(), names.len());
    }

    #[test]
    fn config_validation() {
        let cfg = GramNetConfig {
            stage_widths: vec![32, 16],
            ..GramNetConfig::default()
        };
        assert!(GramNet::<f32>::new(cfg, ModelKind::GramNet, 0).is_err());
    }
}
