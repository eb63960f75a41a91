//! `gramtex`: texture statistics, image edits, and Gram-Net training and
//! evaluation from the command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 internal failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use gramtex::dataset::{Manifest, FAKE, REAL};
use gramtex::edit::{
    EditSpec, DEFAULT_BLUR_KERNEL, DEFAULT_JPEG_QUALITY, DEFAULT_L0_LAMBDA, DEFAULT_NOISE_STD,
};
use gramtex::gram::{GramBlockConfig, GramNetConfig, ModelKind};
use gramtex::image::{load_image, save_image, Image};
use gramtex::probes::{run_suite, SuiteOptions};
use gramtex::synth::{self, TextureSpec, VariedSpec};
use gramtex::texture::{contrast_correlation_analysis, contrast_csv, dataset_contrast, image_contrast, prepare_gray};
use gramtex::train::{robustness_matrix, train, Checkpoint, Condition, EvalSettings, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "gramtex", version, about = "Texture forensics: GLCM contrast, image edits and Gram-Net")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a two-class power-law texture dataset (real = sharp, fake = smooth)
    Synth(SynthArgs),
    /// GLCM contrast per image and pooled over a set
    Glcm(GlcmArgs),
    /// Apply one edit to an image or a directory of images
    Edit(EditArgs),
    /// Correlation of per-image contrast before and after an edit, per distance
    Correlate(CorrelateArgs),
    /// Train Gram-Net or the baseline and write the best checkpoint
    Train(TrainArgs),
    /// Evaluate checkpoints under the robustness conditions
    Eval(EvalArgs),
    /// Finite-difference gradient checks of every differentiable op
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SeedArg {
    /// RNG seed; falls back to GRAMNET_SEED, then 0
    #[arg(long, env = "GRAMNET_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory (receives real/, fake/ and manifest.json)
    #[arg(long)]
    out: PathBuf,
    /// Image side in pixels (power of two, at least 32)
    #[arg(long, default_value_t = synth::DEFAULT_SIZE)]
    size: usize,
    /// Images per class
    #[arg(long, default_value_t = synth::DEFAULT_COUNT)]
    count: usize,
    /// Spectral exponent of the sharp (real) class
    #[arg(long, default_value_t = synth::DEFAULT_SHARP_EXPONENT)]
    sharp_exponent: f64,
    /// Spectral exponent of the smooth (fake) class
    #[arg(long, default_value_t = synth::DEFAULT_SMOOTH_EXPONENT)]
    smooth_exponent: f64,
    #[command(flatten)]
    seed: SeedArg,
}

fn parse_distance(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("distances must be positive".into()),
        Ok(d) => Ok(d),
        Err(e) => Err(format!("bad distance '{s}': {e}")),
    }
}

const DEFAULT_DISTANCES: &str = "1,2,5,10,15,20";

#[derive(Debug, Args)]
struct GlcmArgs {
    /// Image file, image directory, or manifest
    input: PathBuf,
    /// Pixel-pair distances
    #[arg(long, value_delimiter = ',', default_value = DEFAULT_DISTANCES, value_parser = parse_distance)]
    distances: Vec<usize>,
    /// Write per-image CSV rows (image,distance,contrast) instead of JSON
    #[arg(long)]
    csv: bool,
    /// Output file (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EditOp {
    Resize,
    Jpeg,
    Blur,
    Noise,
    L0,
}

#[derive(Debug, Args)]
struct EditParams {
    /// Target width for resize
    #[arg(long)]
    width: Option<usize>,
    /// Target height for resize
    #[arg(long)]
    height: Option<usize>,
    /// Scale factor for resize (e.g. 0.25 for 4x downsampling)
    #[arg(long)]
    factor: Option<f64>,
    /// JPEG quality (1-100)
    #[arg(long, default_value_t = DEFAULT_JPEG_QUALITY)]
    quality: u8,
    /// Gaussian blur kernel size (odd)
    #[arg(long, default_value_t = DEFAULT_BLUR_KERNEL)]
    kernel: usize,
    /// Gaussian noise standard deviation in 8-bit levels
    #[arg(long, default_value_t = DEFAULT_NOISE_STD)]
    std: f32,
    /// L0 smoothing weight
    #[arg(long, default_value_t = DEFAULT_L0_LAMBDA)]
    lambda: f64,
}

impl EditParams {
    fn spec(&self, op: EditOp, seed: u64) -> anyhow::Result<EditSpec> {
        let spec = match op {
            EditOp::Resize => match (self.width, self.height, self.factor) {
                (Some(w), Some(h), None) => EditSpec::resize(w, h),
                (None, None, Some(f)) => EditSpec::scale(f),
                _ => bail!("resize needs either --width and --height, or --factor"),
            },
            EditOp::Jpeg => EditSpec::Jpeg { quality: self.quality },
            EditOp::Blur => EditSpec::Blur {
                kernel_size: self.kernel,
            },
            EditOp::Noise => EditSpec::Noise { std: self.std, seed },
            EditOp::L0 => EditSpec::L0 { lambda: self.lambda },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
struct EditArgs {
    /// Edit to apply
    #[arg(long, value_enum)]
    op: EditOp,
    /// Input image or directory
    input: PathBuf,
    /// Output image or directory
    output: PathBuf,
    #[command(flatten)]
    params: EditParams,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CorrelateOp {
    Downsample,
    Jpeg,
    Blur,
    Noise,
    L0,
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    /// Image directory or manifest; omit to use a generated varied texture set
    input: Option<PathBuf>,
    /// Edit to correlate against
    #[arg(long, value_enum, default_value_t = CorrelateOp::Downsample)]
    op: CorrelateOp,
    /// Downsampling ratio
    #[arg(long, default_value_t = 4.0)]
    ratio: f64,
    /// JPEG quality
    #[arg(long, default_value_t = DEFAULT_JPEG_QUALITY)]
    quality: u8,
    /// Blur kernel size (odd)
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    /// Noise standard deviation in 8-bit levels
    #[arg(long, default_value_t = 3.0)]
    std: f32,
    /// L0 smoothing weight
    #[arg(long, default_value_t = DEFAULT_L0_LAMBDA)]
    lambda: f64,
    /// Pixel-pair distances
    #[arg(long, value_delimiter = ',', default_value = DEFAULT_DISTANCES, value_parser = parse_distance)]
    distances: Vec<usize>,
    /// Size of the generated set
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Side of generated images
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Write CSV (distance,r) instead of JSON
    #[arg(long)]
    csv: bool,
    /// Output file (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Manifest file or directory with manifest.json (labels 0 real / 1 fake)
    #[arg(long, conflicts_with_all = ["real", "fake"])]
    data: Option<PathBuf>,
    /// Folder or manifest of real images (label 0)
    #[arg(long, requires = "fake")]
    real: Option<PathBuf>,
    /// Folder or manifest of fake images (label 1)
    #[arg(long, requires = "real")]
    fake: Option<PathBuf>,
}

impl DataArgs {
    fn sets(&self) -> anyhow::Result<(Manifest, Manifest)> {
        match (&self.data, &self.real, &self.fake) {
            (Some(d), None, None) => {
                let m = Manifest::open(d, REAL)?;
                Ok((m.with_label(REAL), m.with_label(FAKE)))
            }
            (None, Some(r), Some(f)) => Ok((
                relabel(Manifest::open(r, REAL)?, REAL),
                relabel(Manifest::open(f, FAKE)?, FAKE),
            )),
            _ => bail!("pass either --data or both --real and --fake"),
        }
    }
}

fn relabel(mut m: Manifest, label: u8) -> Manifest {
    m.entries.iter_mut().for_each(|e| e.label = label);
    m
}

fn parse_width(s: &str) -> Result<usize, String> {
    s.trim().parse::<usize>().map_err(|e| format!("bad width '{s}': {e}"))
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Architecture
    #[arg(long, value_enum, default_value_t = ModelArg::Gramnet)]
    model: ModelArg,
    /// Checkpoint path to write
    #[arg(long)]
    out: PathBuf,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Smallest random training side
    #[arg(long, default_value_t = 64)]
    resize_min: usize,
    /// Largest random training side
    #[arg(long, default_value_t = 256)]
    resize_max: usize,
    /// Fraction of each class held out for model selection
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    /// Backbone stage widths
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128", value_parser = parse_width)]
    stage_widths: Vec<usize>,
    /// Residual blocks per stage
    #[arg(long, default_value_t = 2)]
    blocks_per_stage: usize,
    /// Gram Block alignment channels
    #[arg(long, default_value_t = 16)]
    gram_align: usize,
    /// Gram Block refinement channels (its output width)
    #[arg(long, default_value_t = 32)]
    gram_refine: usize,
    /// Also write the training history as JSON here
    #[arg(long)]
    history: Option<PathBuf>,
    /// Independent runs with seeds seed, seed+1, ...; run r > 0 writes NAME.rR.EXT
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    repeats: u64,
    #[command(flatten)]
    seed: SeedArg,
}

fn repeat_path(path: &Path, run: u64) -> PathBuf {
    if run == 0 {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.r{run}.{}", ext.to_string_lossy()),
        None => format!("{stem}.r{run}"),
    };
    path.with_file_name(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Gramnet,
    Baseline,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Gramnet => ModelKind::GramNet,
            ModelArg::Baseline => ModelKind::Baseline,
        }
    }
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.trim().parse()
}

/// Side of the original condition; `None` keeps each image's native size.
#[derive(Debug, Clone, Copy)]
struct BaseSize(Option<usize>);

fn parse_base(s: &str) -> Result<BaseSize, String> {
    if s == "native" {
        return Ok(BaseSize(None));
    }
    let v: usize = s.parse().map_err(|e| format!("bad base size '{s}': {e}"))?;
    if v < 8 {
        return Err("base size must be at least 8".into());
    }
    Ok(BaseSize(Some(v)))
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint to evaluate, optionally named as NAME=PATH (repeatable)
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<String>,
    #[command(flatten)]
    data: DataArgs,
    /// Conditions to evaluate
    #[arg(long, value_delimiter = ',', default_value = "original,down8,jpeg,jpeg-down8,blur,noise", value_parser = parse_condition)]
    conditions: Vec<Condition>,
    /// Side of the original condition, or "native"
    #[arg(long, default_value = "512", value_parser = parse_base)]
    base_size: BaseSize,
    #[arg(long, default_value_t = DEFAULT_JPEG_QUALITY)]
    jpeg_quality: u8,
    #[arg(long, default_value_t = DEFAULT_BLUR_KERNEL)]
    blur_kernel: usize,
    /// Noise standard deviation in 8-bit levels
    #[arg(long, default_value_t = DEFAULT_NOISE_STD)]
    noise_std: f32,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Report path (JSON, or CSV with --csv); the table always goes to standard output
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: bool,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Probe at most this many elements per input (0 = all)
    #[arg(long, default_value_t = 64)]
    max_per_input: usize,
    /// Write results as JSON here
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

/// Failure classes mapped to exit codes.
enum Failure {
    User(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

fn user<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::User(e.into())
}

type Outcome = Result<(), Failure>;

fn write_output(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(user),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn collect_images(input: &Path) -> anyhow::Result<Vec<(String, Image)>> {
    if input.is_file() && input.extension().is_some_and(|e| e == "json") {
        let m = Manifest::load(input)?;
        return Ok(m
            .entries
            .iter()
            .map(|e| e.path.clone())
            .zip(m.load_images()?.into_iter().map(|(i, _)| i))
            .collect());
    }
    if input.is_file() {
        return Ok(vec![(input.display().to_string(), load_image(input)?)]);
    }
    let m = Manifest::open(input, REAL)?;
    Ok(m.entries
        .iter()
        .map(|e| e.path.clone())
        .zip(m.load_images()?.into_iter().map(|(i, _)| i))
        .collect())
}

fn run_synth(a: SynthArgs) -> Outcome {
    let (mut sharp, mut smooth) = synth::default_specs(a.seed.seed);
    for (spec, alpha) in [(&mut sharp, a.sharp_exponent), (&mut smooth, a.smooth_exponent)] {
        *spec = TextureSpec {
            size: a.size,
            count: a.count,
            spectral_exponent: alpha,
            ..*spec
        };
    }
    let m = synth::generate_texture_dataset(&sharp, &smooth, &a.out).map_err(user)?;
    info!("wrote {} images and manifest.json to {}", m.len(), a.out.display());
    Ok(())
}

fn run_glcm(a: GlcmArgs) -> Outcome {
    let images = collect_images(&a.input).map_err(user)?;
    let gray: Vec<Image> = images.iter().map(|(_, i)| prepare_gray(i)).collect();
    let per_image = images
        .iter()
        .zip(&gray)
        .map(|((name, _), g)| image_contrast(g, &a.distances).map(|p| (name.clone(), p)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(user)?;
    let text = if a.csv {
        contrast_csv(per_image.iter().map(|(n, p)| (n.as_str(), p)))
    } else {
        let pooled = dataset_contrast(&gray, &a.distances).map_err(user)?;
        let rows: Vec<_> = per_image
            .iter()
            .map(|(n, p)| serde_json::json!({"image": n, "contrast": p.contrast}))
            .collect();
        let doc = serde_json::json!({"distances": a.distances, "pooled": pooled.contrast, "images": rows});
        serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from)? + "\n"
    };
    write_output(a.out.as_deref(), &text)
}

fn run_edit(a: EditArgs) -> Outcome {
    let spec = a.params.spec(a.op, a.seed.seed).map_err(user)?;
    info!("edit {}", serde_json::to_string(&spec).unwrap_or_default());
    if a.input.is_dir() {
        fs::create_dir_all(&a.output)
            .with_context(|| format!("creating {}", a.output.display()))
            .map_err(user)?;
        let m = Manifest::from_folder(&a.input, REAL).map_err(user)?;
        for (e, (img, _)) in m.entries.iter().zip(m.load_images().map_err(user)?) {
            let out = spec.apply(&img).map_err(user)?;
            save_image(&out, a.output.join(&e.path)).map_err(user)?;
        }
        info!("edited {} images into {}", m.len(), a.output.display());
    } else {
        let img = load_image(&a.input).map_err(user)?;
        let out = spec.apply(&img).map_err(user)?;
        save_image(&out, &a.output).map_err(user)?;
    }
    Ok(())
}

fn run_correlate(a: CorrelateArgs) -> Outcome {
    let edit = match a.op {
        CorrelateOp::Downsample => {
            if !(a.ratio >= 1.0) {
                return Err(user(anyhow!("--ratio must be at least 1")));
            }
            EditSpec::scale(1.0 / a.ratio)
        }
        CorrelateOp::Jpeg => EditSpec::Jpeg { quality: a.quality },
        CorrelateOp::Blur => EditSpec::Blur { kernel_size: a.kernel },
        CorrelateOp::Noise => EditSpec::Noise {
            std: a.std,
            seed: a.seed.seed,
        },
        CorrelateOp::L0 => EditSpec::L0 { lambda: a.lambda },
    };
    edit.validate().map_err(user)?;
    let images: Vec<Image> = match &a.input {
        Some(p) => collect_images(p).map_err(user)?.into_iter().map(|(_, i)| i).collect(),
        None => synth::generate_varied_textures(&VariedSpec::new(a.size, a.count, a.seed.seed)).map_err(user)?,
    };
    let table = contrast_correlation_analysis(&images, &edit, &a.distances).map_err(user)?;
    let text = if a.csv {
        let mut s = String::from("distance,r\n");
        for (d, r) in table.distances.iter().zip(&table.r) {
            s.push_str(&format!("{d},{r}\n"));
        }
        s
    } else {
        serde_json::to_string_pretty(&table).map_err(anyhow::Error::from)? + "\n"
    };
    write_output(a.out.as_deref(), &text)
}

fn run_train(a: TrainArgs) -> Outcome {
    let (real, fake) = a.data.sets().map_err(user)?;
    let data = Manifest::merge(&[&real, &fake]);
    let base = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        augment_resize_range: (a.resize_min, a.resize_max),
        seed: a.seed.seed,
        val_fraction: a.val_fraction,
        model: GramNetConfig {
            stage_widths: a.stage_widths.clone(),
            blocks_per_stage: a.blocks_per_stage,
            gram: GramBlockConfig {
                align_channels: a.gram_align,
                refine_channels: a.gram_refine,
            },
            ..GramNetConfig::default()
        },
        ..TrainConfig::default()
    };
    base.validate().map_err(user)?;
    let mut accuracies = Vec::new();
    for run in 0..a.repeats {
        let cfg = TrainConfig {
            seed: base.seed.wrapping_add(run),
            ..base.clone()
        };
        let ckpt = match train(a.model.into(), &data, &cfg) {
            Ok(c) => c,
            Err(e @ (gramtex::train::TrainError::TooFewImages { .. } | gramtex::train::TrainError::Dataset(_))) => {
                return Err(user(e))
            }
            Err(e) => return Err(Failure::Internal(e.into())),
        };
        let out = repeat_path(&a.out, run);
        ckpt.save(&out).map_err(user)?;
        if let Some(h) = &a.history {
            let text = serde_json::to_string_pretty(&ckpt.meta.history).map_err(anyhow::Error::from)?;
            write_output(Some(&repeat_path(h, run)), &(text + "\n"))?;
        }
        info!(
            "run {run} seed {}: saved epoch {} (val accuracy {:.4}) to {}",
            cfg.seed,
            ckpt.meta.epoch,
            ckpt.meta.val_accuracy,
            out.display()
        );
        accuracies.push(ckpt.meta.val_accuracy);
    }
    if a.repeats > 1 {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = (accuracies.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let summary = serde_json::json!({ "val_accuracy": accuracies, "mean": mean, "std": std });
        println!("{}", serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?);
    }
    Ok(())
}

fn run_eval(a: EvalArgs) -> Outcome {
    let (real, fake) = a.data.sets().map_err(user)?;
    let mut models = Vec::new();
    for spec in &a.checkpoints {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let ckpt = Checkpoint::load(spec).map_err(user)?;
                models.push((ckpt.kind.to_string(), ckpt));
                continue;
            }
        };
        models.push((name, Checkpoint::load(&path).map_err(user)?));
    }
    let mut names: Vec<&str> = models.iter().map(|m| m.0.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(user(anyhow!("model names must be unique; use NAME=PATH")));
    }
    let conditions = a.conditions.clone();
    let settings = EvalSettings {
        base_size: a.base_size.0,
        jpeg_quality: a.jpeg_quality,
        blur_kernel: a.blur_kernel,
        noise_std: a.noise_std,
        seed: a.seed.seed,
        batch_size: a.batch_size.max(1),
    };
    for e in [
        EditSpec::Jpeg {
            quality: settings.jpeg_quality,
        },
        EditSpec::Blur {
            kernel_size: settings.blur_kernel,
        },
        EditSpec::Noise {
            std: settings.noise_std,
            seed: 0,
        },
    ] {
        e.validate().map_err(user)?;
    }
    let report = robustness_matrix(&models, &real, &fake, &conditions, &settings).map_err(|e| match e {
        gramtex::train::TrainError::Dataset(_) | gramtex::train::TrainError::EmptySet => user(e),
        other => Failure::Internal(other.into()),
    })?;
    print!("{}", report.table());
    if let Some(out) = &a.out {
        let text = if a.csv { report.to_csv() } else { report.to_json() + "\n" };
        write_output(Some(out), &text)?;
    } else if a.csv {
        print!("{}", report.to_csv());
    }
    Ok(())
}

fn run_gradcheck(a: GradcheckArgs) -> Outcome {
    let opts = SuiteOptions {
        seed: a.seed.seed,
        max_per_input: (a.max_per_input > 0).then_some(a.max_per_input),
        ..SuiteOptions::default()
    };
    let results = run_suite(&opts);
    for r in &results {
        println!(
            "{:<28} {:>5} probes  max rel err {:.3e}  tol {:.0e}  {}",
            r.check.name,
            r.check.checked,
            r.check.max_rel_error,
            r.check.tolerance,
            if r.check.passed() { "PASS" } else { "FAIL" }
        );
    }
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&results).map_err(anyhow::Error::from)?;
        write_output(Some(out), &(text + "\n"))?;
    }
    let failed = results.iter().filter(|r| !r.check.passed()).count();
    if failed > 0 {
        return Err(Failure::Internal(anyhow!("{failed} gradient checks failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    info!("gramtex {} {:?}", env!("CARGO_PKG_VERSION"), cli.command);
    let outcome = match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Glcm(a) => run_glcm(a),
        Command::Edit(a) => run_edit(a),
        Command::Correlate(a) => run_correlate(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Gradcheck(a) => run_gradcheck(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}
