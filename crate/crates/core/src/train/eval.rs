//! Accuracy under editing conditions, laid out as a model x condition grid.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{argmax, predict, Checkpoint, TrainError};
use crate::dataset::{Manifest, FAKE, REAL};
use crate::edit::{apply_chain, EditSpec, DEFAULT_BLUR_KERNEL, DEFAULT_JPEG_QUALITY, DEFAULT_NOISE_STD};
use crate::image::Image;

/// Side of the "original" condition.
pub const DEFAULT_BASE_SIZE: usize = 512;
const DOWNSAMPLE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Original,
    Down8,
    Jpeg,
    JpegDown8,
    Blur,
    Noise,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::Original,
        Condition::Down8,
        Condition::Jpeg,
        Condition::JpegDown8,
        Condition::Blur,
        Condition::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Original => "original",
            Condition::Down8 => "down8",
            Condition::Jpeg => "jpeg",
            Condition::JpegDown8 => "jpeg-down8",
            Condition::Blur => "blur",
            Condition::Noise => "noise",
        }
    }

    /// Edit chain turning a test image into this condition's input.
    pub fn edits(self, img: &Image, s: &EvalSettings) -> Vec<EditSpec> {
        let base = match s.base_size {
            Some(b) => EditSpec::resize(b, b),
            None => EditSpec::Identity,
        };
        let down = match s.base_size {
            Some(b) => EditSpec::resize((b / DOWNSAMPLE).max(1), (b / DOWNSAMPLE).max(1)),
            None => {
                let shrink = |v: usize| ((v as f64 / DOWNSAMPLE as f64).round() as usize).max(1);
                EditSpec::resize(shrink(img.width()), shrink(img.height()))
            }
        };
        let jpeg = EditSpec::Jpeg {
            quality: s.jpeg_quality,
        };
        match self {
            Condition::Original => vec![base],
            Condition::Down8 => vec![base, down],
            Condition::Jpeg => vec![base, jpeg],
            Condition::JpegDown8 => vec![base, jpeg, down],
            Condition::Blur => vec![
                base,
                EditSpec::Blur {
                    kernel_size: s.blur_kernel,
                },
            ],
            Condition::Noise => vec![
                base,
                EditSpec::Noise {
                    std: s.noise_std,
                    seed: s.seed,
                },
            ],
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown condition '{s}' (expected one of original,down8,jpeg,jpeg-down8,blur,noise)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Square side of the original condition; `None` keeps native sizes.
    pub base_size: Option<usize>,
    pub jpeg_quality: u8,
    pub blur_kernel: usize,
    pub noise_std: f32,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            base_size: Some(DEFAULT_BASE_SIZE),
            jpeg_quality: DEFAULT_JPEG_QUALITY,
            blur_kernel: DEFAULT_BLUR_KERNEL,
            noise_std: DEFAULT_NOISE_STD,
            seed: 0,
            batch_size: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub path: String,
    pub label: u8,
    pub predicted: u8,
    pub prob_fake: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub model: String,
    pub condition: String,
    pub edits: Vec<EditSpec>,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: Vec<String>,
    pub conditions: Vec<String>,
    pub real_count: usize,
    pub fake_count: usize,
    pub settings: EvalSettings,
    pub results: Vec<ConditionResult>,
}

struct TestSet {
    images: Vec<Image>,
    labels: Vec<u8>,
    paths: Vec<String>,
}

fn load_test_set(real: &Manifest, fake: &Manifest) -> Result<TestSet, TrainError> {
    let mut set = TestSet {
        images: Vec::new(),
        labels: Vec::new(),
        paths: Vec::new(),
    };
    for (m, label) in [(real, REAL), (fake, FAKE)] {
        let loaded = m.load_images()?;
        for ((img, _), e) in loaded.into_iter().zip(&m.entries) {
            set.images.push(img);
            set.labels.push(label);
            set.paths.push(m.resolve(e).display().to_string());
        }
    }
    if set.images.is_empty() {
        return Err(TrainError::EmptySet);
    }
    Ok(set)
}

fn edited(set: &TestSet, chain: impl Fn(&Image) -> Vec<EditSpec> + Sync) -> Result<Vec<Image>, TrainError> {
    crate::par::map_slice(&set.images, |img| apply_chain(&chain(img), img))
        .into_iter()
        .map(|r| r.map_err(TrainError::from))
        .collect()
}

fn score_set(
    model: &str,
    condition: &str,
    edits: Vec<EditSpec>,
    ckpt: &Checkpoint,
    set: &TestSet,
    images: &[Image],
    batch: usize,
) -> Result<ConditionResult, TrainError> {
    let mut net = ckpt.to_model()?;
    let refs: Vec<&Image> = images.iter().collect();
    let probs = predict(&mut net, &refs, batch)?;
    let predictions: Vec<Prediction> = probs
        .iter()
        .zip(&set.labels)
        .zip(&set.paths)
        .map(|((p, &label), path)| Prediction {
            path: path.clone(),
            label,
            predicted: argmax(p) as u8,
            prob_fake: p[FAKE as usize],
        })
        .collect();
    let correct = predictions.iter().filter(|p| p.predicted == p.label).count();
    let total = predictions.len();
    Ok(ConditionResult {
        model: model.to_string(),
        condition: condition.to_string(),
        edits,
        correct,
        total,
        accuracy: correct as f64 / total as f64,
        predictions,
    })
}

/// Accuracy of `ckpt` after applying `edits` to every real (label 0) and fake
/// (label 1) image.
pub fn evaluate(
    ckpt: &Checkpoint,
    real: &Manifest,
    fake: &Manifest,
    edits: &[EditSpec],
    batch_size: usize,
) -> Result<ConditionResult, TrainError> {
    for e in edits {
        e.validate()?;
    }
    let set = load_test_set(real, fake)?;
    let images = edited(&set, |_| edits.to_vec())?;
    let name = ckpt.kind.to_string();
    let label = if edits.is_empty() {
        "identity".to_string()
    } else {
        edits.iter().map(EditSpec::label).collect::<Vec<_>>().join("+")
    };
    score_set(&name, &label, edits.to_vec(), ckpt, &set, &images, batch_size)
}

/// Every named model under every condition. Each condition's images are
/// built once and shared by all models.
pub fn robustness_matrix(
    models: &[(String, Checkpoint)],
    real: &Manifest,
    fake: &Manifest,
    conditions: &[Condition],
    settings: &EvalSettings,
) -> Result<EvalReport, TrainError> {
    if models.is_empty() || conditions.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let set = load_test_set(real, fake)?;
    let mut results = Vec::new();
    for &cond in conditions {
        let images = edited(&set, |img| cond.edits(img, settings))?;
        let describe = cond.edits(&set.images[0], settings);
        for (name, ckpt) in models {
            let r = score_set(name, cond.name(), describe.clone(), ckpt, &set, &images, settings.batch_size)?;
            log::info!("{name} {cond}: {:.2}%", 100.0 * r.accuracy);
            results.push(r);
        }
    }
    Ok(EvalReport {
        models: models.iter().map(|m| m.0.clone()).collect(),
        conditions: conditions.iter().map(|c| c.name().to_string()).collect(),
        real_count: set.labels.iter().filter(|&&l| l == REAL).count(),
        fake_count: set.labels.iter().filter(|&&l| l == FAKE).count(),
        settings: settings.clone(),
        results,
    })
}

impl EvalReport {
    pub fn get(&self, model: &str, condition: &str) -> Option<&ConditionResult> {
        self.results.iter().find(|r| r.model == model && r.condition == condition)
    }

    pub fn accuracy(&self, model: &str, condition: &str) -> Option<f64> {
        self.get(model, condition).map(|r| r.accuracy)
    }

    /// Every summary agrees with its stored per-sample predictions.
    pub fn is_consistent(&self) -> bool {
        self.results.iter().all(|r| {
            let correct = r.predictions.iter().filter(|p| p.predicted == p.label).count();
            correct == r.correct
                && r.predictions.len() == r.total
                && r.total > 0
                && r.accuracy == correct as f64 / r.total as f64
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// `model,condition,correct,total,accuracy` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,condition,correct,total,accuracy\n");
        for r in &self.results {
            let _ = writeln!(out, "{},{},{},{},{:.6}", r.model, r.condition, r.correct, r.total, r.accuracy);
        }
        out
    }

    /// Percent accuracies, models as rows and conditions as columns.
    pub fn table(&self) -> String {
        let width = self.models.iter().map(String::len).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}", "model");
        for c in &self.conditions {
            let _ = write!(out, " | {:>10}", c);
        }
        out.push('\n');
        out.push_str(&"-".repeat(width + 13 * self.conditions.len()));
        out.push('\n');
        for m in &self.models {
            let _ = write!(out, "{m:<width$}");
            for c in &self.conditions {
                match self.accuracy(m, c) {
                    Some(a) => {
                        let _ = write!(out, " | {:>9.2}%", 100.0 * a);
                    }
                    None => {
                        let _ = write!(out, " | {:>10}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_names_roundtrip() {
        for c in Condition::ALL {
            assert_eq!(c.name().parse::<Condition>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.name()));
        }
        assert!("sharpen".parse::<Condition>().is_err());
    }

    #[test]
    fn condition_chains() {
        let img = Image::from_u8(100, 60, 1, vec![0; 6000]).unwrap();
        let s = EvalSettings::default();
        assert_eq!(Condition::Down8.edits(&img, &s), vec![EditSpec::resize(512, 512), EditSpec::resize(64, 64)]);
        assert_eq!(
            Condition::JpegDown8.edits(&img, &s)[1],
            EditSpec::Jpeg { quality: 75 }
        );
        assert_eq!(Condition::Blur.edits(&img, &s)[1], EditSpec::Blur { kernel_size: 25 });
        let native = EvalSettings {
            base_size: None,
            ..s
        };
        assert_eq!(Condition::Original.edits(&img, &native), vec![EditSpec::Identity]);
        assert_eq!(Condition::Down8.edits(&img, &native)[1], EditSpec::resize(13, 8));
    }
}
