//! Training loop, checkpoints and the robustness evaluation grid.

mod checkpoint;
mod eval;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointMeta, FORMAT_VERSION, MAGIC};
pub use eval::{
    evaluate, robustness_matrix, Condition, ConditionResult, EvalReport, EvalSettings, Prediction,
    DEFAULT_BASE_SIZE,
};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, Manifest, FAKE, REAL};
use crate::edit::{bilinear_resize, EditError};
use crate::gram::{GramNet, GramNetConfig, ModelKind, NetError};
use crate::image::Image;
use crate::nn::{softmax, softmax_cross_entropy, Adam, AdamConfig, Mode, Module, NnError, Tensor4};

/// Per-channel input normalization `(v - INPUT_MEAN) / INPUT_STD`.
pub const INPUT_MEAN: f32 = 0.5;
pub const INPUT_STD: f32 = 0.25;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("class {label} needs at least {need} images, found {found}")]
    TooFewImages { label: u8, need: usize, found: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("model kind mismatch: checkpoint is {checkpoint}, expected {expected}")]
    KindMismatch { checkpoint: ModelKind, expected: ModelKind },
    #[error("nothing to evaluate")]
    EmptySet,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Inclusive range of the random square side drawn once per batch.
    pub augment_resize_range: (usize, usize),
    pub seed: u64,
    pub val_fraction: f64,
    pub model: GramNetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            batch_size: 16,
            epochs: 20,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            augment_resize_range: (64, 256),
            seed: 0,
            val_fraction: 0.2,
            model: GramNetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return err(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return err("batch size and epochs must be positive".into());
        }
        let (lo, hi) = self.augment_resize_range;
        if lo > hi || lo < 32 || hi > 512 {
            return err(format!("resize range {lo}..={hi} must lie within 32..=512"));
        }
        let min = self.model.min_input_side();
        if lo < min {
            return err(format!("resize range starts below the model's {min}px minimum"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return err(format!("val fraction must be in [0, 1), got {}", self.val_fraction));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return err("invalid Adam constants".into());
        }
        self.model.validate()?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Network input for one image: replicated to RGB if gray, optionally resized
/// to a square, then normalized.
pub fn image_to_input(img: &Image, side: Option<usize>) -> Result<Vec<f32>, EditError> {
    let resized;
    let img = match side {
        Some(s) if (img.width(), img.height()) != (s, s) => {
            resized = bilinear_resize(img, s, s)?;
            &resized
        }
        _ => img,
    };
    let n = img.width() * img.height();
    let px = img.to_f32_vec();
    let mut out = vec![0.0f32; 3 * n];
    for c in 0..3 {
        let src = if img.channels() == 1 { 0 } else { c };
        for i in 0..n {
            out[c * n + i] = (px[i * img.channels() + src] - INPUT_MEAN) / INPUT_STD;
        }
    }
    Ok(out)
}

/// Stacks images of one size (or resized to `side`) into an `N x 3 x H x W` batch.
pub fn make_batch(images: &[&Image], side: Option<usize>) -> Result<Tensor4<f32>, TrainError> {
    let first = images.first().ok_or(TrainError::EmptySet)?;
    let (h, w) = match side {
        Some(s) => (s, s),
        None => (first.height(), first.width()),
    };
    if side.is_none() && images.iter().any(|i| (i.height(), i.width()) != (h, w)) {
        return Err(TrainError::Config("batch images differ in size".into()));
    }
    let parts = crate::par::map_slice(images, |img| image_to_input(img, side));
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for p in parts {
        data.extend(p?);
    }
    Ok(Tensor4::from_vec([images.len(), 3, h, w], data)?)
}

/// Stratified train/validation index split, shuffled by `seed`.
pub fn split_indices(labels: &[u8], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for label in [REAL, FAKE] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        idx.shuffle(&mut rng);
        let mut n_val = (idx.len() as f64 * val_fraction).round() as usize;
        if val_fraction > 0.0 && idx.len() >= 2 {
            n_val = n_val.clamp(1, idx.len() - 1);
        }
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Groups indices by image size, keeping first-seen order, into batches of at most `batch`.
pub(crate) fn size_batches(images: &[&Image], batch: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<((usize, usize), Vec<usize>)> = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let key = (img.width(), img.height());
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.1.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    groups
        .into_iter()
        .flat_map(|(_, idx)| idx.chunks(batch).map(<[usize]>::to_vec).collect::<Vec<_>>())
        .collect()
}

/// Eval-mode class probabilities for each image at its own size.
pub fn predict(net: &mut GramNet<f32>, images: &[&Image], batch: usize) -> Result<Vec<Vec<f64>>, TrainError> {
    let mut probs = vec![Vec::new(); images.len()];
    for group in size_batches(images, batch.max(1)) {
        let imgs: Vec<&Image> = group.iter().map(|&i| images[i]).collect();
        let x = make_batch(&imgs, None)?;
        let logits = net.forward(&x, Mode::Eval, false)?;
        for (&i, p) in group.iter().zip(softmax(&logits)) {
            probs[i] = p;
        }
    }
    Ok(probs)
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Mean cross-entropy and accuracy of eval-mode predictions.
fn score(probs: &[Vec<f64>], labels: &[usize]) -> (f64, f64) {
    let n = labels.len().max(1) as f64;
    let loss = probs.iter().zip(labels).map(|(p, &l)| -p[l].max(1e-300).ln()).sum::<f64>() / n;
    let correct = probs.iter().zip(labels).filter(|(p, &l)| argmax(p) == l).count();
    (loss, correct as f64 / n)
}

/// Trains a model and returns the epoch with the best validation accuracy
/// (ties go to the lower validation loss, then the earlier epoch). The result
/// depends only on the image bytes, their order and `cfg`.
pub fn train(kind: ModelKind, data: &Manifest, cfg: &TrainConfig) -> Result<Checkpoint, TrainError> {
    cfg.validate()?;
    let loaded = data.load_images()?;
    let images: Vec<&Image> = loaded.iter().map(|(i, _)| i).collect();
    let labels: Vec<u8> = loaded.iter().map(|(_, l)| *l).collect();
    train_on(kind, &images, &labels, cfg)
}

/// [`train`] on images already in memory.
pub fn train_on(kind: ModelKind, images: &[&Image], labels: &[u8], cfg: &TrainConfig) -> Result<Checkpoint, TrainError> {
    cfg.validate()?;
    if images.len() != labels.len() {
        return Err(TrainError::Config(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    for label in [REAL, FAKE] {
        let found = labels.iter().filter(|&&l| l == label).count();
        if found < 2 {
            return Err(TrainError::TooFewImages { label, need: 2, found });
        }
    }
    let (train_idx, val_idx) = split_indices(labels, cfg.val_fraction, cfg.seed);
    info!(
        "training {kind}: {} train / {} val images, config {}",
        train_idx.len(),
        val_idx.len(),
        serde_json::to_string(cfg).unwrap_or_default()
    );
    let mut net = GramNet::<f32>::new(cfg.model.clone(), kind, cfg.seed)?;
    let mut adam = Adam::new(cfg.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    // selection set: validation images, or the training set when there are none
    let sel_idx = if val_idx.is_empty() { &train_idx } else { &val_idx };
    let sel_images: Vec<&Image> = sel_idx.iter().map(|&i| images[i]).collect();
    let sel_labels: Vec<usize> = sel_idx.iter().map(|&i| labels[i] as usize).collect();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, usize, Checkpoint)> = None;
    let mut order = train_idx.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let side = rng.gen_range(cfg.augment_resize_range.0..=cfg.augment_resize_range.1);
            let batch: Vec<&Image> = chunk.iter().map(|&i| images[i]).collect();
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i] as usize).collect();
            let x = make_batch(&batch, Some(side))?;
            let logits = net.forward(&x, Mode::Train, true)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &y)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, step, loss });
            }
            for (p, &l) in softmax(&logits).iter().zip(&y) {
                correct += usize::from(argmax(p) == l);
            }
            loss_sum += loss * y.len() as f64;
            seen += y.len();
            net.zero_grad();
            net.backward(&dlogits)?;
            adam.step(|f| net.visit_params(f));
            debug!("epoch {epoch} step {step} side {side} loss {loss:.5}");
        }
        let probs = predict(&mut net, &sel_images, cfg.batch_size)?;
        let (val_loss, val_accuracy) = score(&probs, &sel_labels);
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_accuracy: correct as f64 / seen as f64,
            val_loss,
            val_accuracy,
        };
        info!(
            "{kind} epoch {epoch}: train loss {:.4} acc {:.3}, val loss {:.4} acc {:.3}",
            log.train_loss, log.train_accuracy, log.val_loss, log.val_accuracy
        );
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                step: usize::MAX,
                loss: val_loss,
            });
        }
        history.push(log);
        let better = match &best {
            None => true,
            Some((acc, loss, _, _)) => val_accuracy > *acc || (val_accuracy == *acc && val_loss < *loss),
        };
        if better {
            let meta = CheckpointMeta {
                epoch,
                val_accuracy,
                val_loss,
                seed: cfg.seed,
                train_config: Some(cfg.clone()),
                history: Vec::new(),
            };
            best = Some((val_accuracy, val_loss, epoch, Checkpoint::from_model(&mut net, meta)));
        }
    }
    let (_, _, epoch, mut ckpt) = best.expect("at least one epoch");
    info!("selected epoch {epoch} of {}", cfg.epochs);
    ckpt.meta.history = history;
    Ok(ckpt)
}
