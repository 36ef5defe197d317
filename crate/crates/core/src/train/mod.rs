//! Training loop, evaluation and prediction.
//!
//! Runs are single-threaded and every random choice (initial weights, split
//! shuffling, batch order) derives from the configured seed, so a given
//! configuration reproduces its log exactly.

pub mod optim;
pub mod schedule;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::data::{self, batch_order, make_batch, Dataset, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::model::{checkpoint, ModelConfig, SegNet};
use crate::nn::Module;
use crate::objectives::{
    combined_loss_logits, confusion_counts, summarize, threshold_logits, ImageMetrics, LossConfig, MetricSummary,
    DEFAULT_EPSILON,
};
use crate::tensor::{no_grad, Element, Tensor};

pub use optim::{Adam, AdamConfig};
pub use schedule::PlateauScheduler;

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CONFIG_FILE: &str = "train_config.json";
pub const SPLIT_FILE: &str = "split.json";
pub const NAN_DUMP_FILE: &str = "nan_dump.json";
pub const BEST_DIR: &str = "best";
pub const FINAL_DIR: &str = "final";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// `<path>/images` + `<path>/masks`.
    Dir { path: PathBuf },
    /// Generated in memory at the model's input size.
    Synthetic { count: usize, seed: u64 },
}

/// Which subset feeds the per-epoch evaluation and the plateau scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    #[default]
    Test,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub plateau_threshold: f64,
    pub min_lr: Option<f64>,
    /// Stop after this many epochs without improvement of the monitored DSC.
    pub early_stop_patience: Option<usize>,
    /// Stop after this many optimizer steps in total.
    pub max_iterations: Option<usize>,
    pub seed: u64,
    pub shuffle: bool,
    pub eval_split: EvalSplit,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub model: ModelConfig,
    pub dataset: DatasetSource,
    pub split: SplitSpec,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            epochs: 200,
            batch_size: 8,
            plateau_patience: 10,
            plateau_factor: 0.5,
            plateau_threshold: 1e-6,
            min_lr: None,
            early_stop_patience: None,
            max_iterations: None,
            seed: 0,
            shuffle: true,
            eval_split: EvalSplit::Test,
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            model: ModelConfig::default(),
            dataset: DatasetSource::Dir {
                path: PathBuf::from("data/isic2018"),
            },
            split: SplitSpec::isic2018(),
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

impl TrainConfig {
    /// Four synthetic images at 32×32, base width 8, 30 steps.
    pub fn smoke() -> Self {
        Self {
            lr: 2e-3,
            epochs: 30,
            batch_size: 4,
            max_iterations: Some(30),
            // one-step epochs: the default patience would halve the rate every ten steps
            plateau_patience: 50,
            model: ModelConfig::toy(32, 32, 8),
            dataset: DatasetSource::Synthetic { count: 5, seed: 0 },
            split: SplitSpec::new(4, 1),
            out_dir: PathBuf::from("runs/smoke"),
            ..Self::default()
        }
    }

    /// The same four synthetic images for training and evaluation.
    pub fn overfit() -> Self {
        Self {
            lr: 2e-3,
            epochs: 200,
            batch_size: 4,
            max_iterations: Some(200),
            plateau_patience: 50,
            eval_split: EvalSplit::Train,
            model: ModelConfig::toy(32, 32, 8),
            dataset: DatasetSource::Synthetic { count: 4, seed: 0 },
            split: SplitSpec::new(4, 0),
            out_dir: PathBuf::from("runs/overfit"),
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "smoke" => Ok(Self::smoke()),
            "overfit" => Ok(Self::overfit()),
            other => Err(Error::Config(format!("unknown preset '{other}' (default|smoke|overfit)"))),
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::Config(format!("plateau_factor must lie in (0, 1), got {}", self.plateau_factor)));
        }
        if self.plateau_patience == 0 {
            return Err(Error::Config("plateau_patience must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        self.loss.validate()?;
        self.model.plan()?;
        Ok(())
    }

    pub fn target(&self) -> (usize, usize) {
        (self.model.input_height, self.model.input_width)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSource::Dir { path } => Dataset::load_dir(path, self.target()),
            DatasetSource::Synthetic { count, seed } => Dataset::synthetic(*count, *seed, self.target()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_dsc: f64,
    pub test_iou: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochLog>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub best_dsc: Option<f64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct NanDump<'a> {
    epoch: usize,
    iteration: usize,
    batch_ids: &'a [String],
    loss: String,
}

fn save_checkpoint(net: &SegNet<f32>, dir: &Path, split: &SplitSpec) -> Result<()> {
    checkpoint::save(net, dir)?;
    let path = dir.join(SPLIT_FILE);
    fs::write(&path, serde_json::to_vec_pretty(split)?).map_err(|e| Error::io(path, e))
}

/// Trains from scratch, writing the JSONL log, `best/` (highest monitored
/// DSC) and `final/` checkpoints under `config.out_dir`.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(config, |_| {})
}

/// [`train`] with a callback invoked after each logged epoch.
pub fn train_with(config: &TrainConfig, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome> {
    config.validate()?;
    let dataset = config.load_dataset()?;
    let split = data::split(dataset.len(), &config.split)?;
    let eval_indices = match config.eval_split {
        EvalSplit::Test => split.test.clone(),
        EvalSplit::Train => split.train.clone(),
    };
    let out = config.out_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let cfg_path = out.join(CONFIG_FILE);
    fs::write(&cfg_path, serde_json::to_vec_pretty(config)?).map_err(|e| Error::io(cfg_path, e))?;
    let log_path = out.join(LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);

    let net = SegNet::<f32>::new(config.model.clone(), config.seed)?;
    let params: Vec<Tensor<f32>> = net.named_params().into_iter().map(|(_, t)| t).collect();
    let mut adam = Adam::new(config.adam);
    let mut scheduler = PlateauScheduler::new(
        config.lr,
        config.plateau_factor,
        config.plateau_patience,
        config.plateau_threshold,
        config.min_lr,
    );
    let mut outcome = TrainOutcome {
        epochs: Vec::new(),
        step_losses: Vec::new(),
        best_dsc: None,
        out_dir: out.clone(),
    };
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        if config.max_iterations.is_some_and(|m| outcome.step_losses.len() >= m) {
            break;
        }
        let lr = scheduler.current_lr;
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0usize;
        for ids in batch_order(&split.train, config.batch_size, config.shuffle, config.seed, epoch as u64)? {
            if config.max_iterations.is_some_and(|m| outcome.step_losses.len() >= m) {
                break;
            }
            let batch = make_batch::<f32>(&dataset, &ids)?;
            let logits = net.forward(&batch.images, true)?;
            // diverged logits would fail the loss's probability check before reaching the dump
            let finite = logits.data().iter().all(|v| v.is_finite());
            let loss = finite.then(|| combined_loss_logits(&batch.masks, &logits, &config.loss)).transpose()?;
            let value = loss.as_ref().map_or(f64::NAN, |l| l.item() as f64);
            if !value.is_finite() {
                let dump = NanDump {
                    epoch,
                    iteration: outcome.step_losses.len(),
                    batch_ids: &batch.ids,
                    loss: value.to_string(),
                };
                let path = out.join(NAN_DUMP_FILE);
                fs::write(&path, serde_json::to_vec_pretty(&dump)?).map_err(|e| Error::io(&path, e))?;
                return Err(Error::NonFinite(format!(
                    "loss {value} at epoch {epoch}, step {}, batch {:?}",
                    outcome.step_losses.len(),
                    batch.ids
                )));
            }
            let loss = loss.expect("finite value implies a computed loss");
            net.zero_grad();
            loss.backward()?;
            adam.step(&params, lr)?;
            outcome.step_losses.push(value);
            epoch_loss += value;
            epoch_steps += 1;
        }
        let summary = evaluate(&net, &dataset, &eval_indices, config.batch_size)?.1;
        let row = EpochLog {
            epoch,
            train_loss: epoch_loss / epoch_steps.max(1) as f64,
            test_dsc: summary.mean_dsc,
            test_iou: summary.mean_iou,
            lr,
        };
        writeln!(log, "{}", serde_json::to_string(&row)?).map_err(|e| Error::io(&log_path, e))?;
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        on_epoch(&row);
        outcome.epochs.push(row);

        if outcome.best_dsc.is_none_or(|b| summary.mean_dsc > b) {
            outcome.best_dsc = Some(summary.mean_dsc);
            save_checkpoint(&net, &out.join(BEST_DIR), &config.split)?;
            since_best = 0;
        } else {
            since_best += 1;
        }
        scheduler.step(summary.mean_dsc);
        if config.early_stop_patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    save_checkpoint(&net, &out.join(FINAL_DIR), &config.split)?;
    Ok(outcome)
}

/// Per-image DSC/IoU (threshold 0.5 on probabilities) over `indices`,
/// evaluated in inference mode, and their means.
pub fn evaluate<T: Element>(
    net: &SegNet<T>,
    dataset: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<(Vec<ImageMetrics>, MetricSummary)> {
    let mut records = Vec::with_capacity(indices.len());
    if indices.is_empty() {
        return Ok((records, MetricSummary::default()));
    }
    for ids in batch_order(indices, batch_size, false, 0, 0)? {
        let batch = make_batch::<T>(dataset, &ids)?;
        let logits = no_grad(|| net.forward(&batch.images, false))?;
        let pred = threshold_logits(&logits.data());
        let gt = batch.masks.data();
        let plane = pred.len() / ids.len();
        for (k, id) in batch.ids.iter().enumerate() {
            let range = k * plane..(k + 1) * plane;
            let counts = confusion_counts(&pred[range.clone()], &gt[range])?;
            records.push(ImageMetrics::from_counts(id.clone(), &counts, DEFAULT_EPSILON));
        }
    }
    let summary = summarize(&records);
    Ok((records, summary))
}

/// Subset selector for [`evaluate_split`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Test,
    All,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitKind::Train),
            "test" => Ok(SplitKind::Test),
            "all" => Ok(SplitKind::All),
            other => Err(Error::Usage(format!("unknown split '{other}' (train|test|all)"))),
        }
    }
}

pub fn select(dataset_len: usize, kind: SplitKind, spec: Option<&SplitSpec>) -> Result<Vec<usize>> {
    if kind == SplitKind::All {
        return Ok((0..dataset_len).collect());
    }
    let spec = spec.ok_or_else(|| Error::Usage("a split specification is required for train/test".into()))?;
    let Split { train, test } = data::split(dataset_len, spec)?;
    Ok(if kind == SplitKind::Train { train } else { test })
}

/// Reads the split stored alongside a checkpoint, if any.
pub fn checkpoint_split(dir: impl AsRef<Path>) -> Result<Option<SplitSpec>> {
    let path = dir.as_ref().join(SPLIT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

/// Hard mask (0/255) for one image resized to the network input size.
pub fn predict_mask<T: Element>(net: &SegNet<T>, image: &RgbImage) -> Result<(RgbImage, GrayImage)> {
    let (h, w) = (net.config.input_height, net.config.input_width);
    let sample = data::Sample::from_images("", image, &GrayImage::new(image.width(), image.height()), (h, w))?;
    let x = Tensor::from_vec(sample.image::<T>(), &[1, 3, h, w])?;
    let logits = no_grad(|| net.forward(&x, false))?;
    let hard = threshold_logits(&logits.data());
    let mask = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if hard[y as usize * w + x as usize] > T::zero() { 255 } else { 0 }])
    });
    let plane = h * w;
    let resized = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        Rgb([sample.rgb[i], sample.rgb[plane + i], sample.rgb[2 * plane + i]])
    });
    Ok((resized, mask))
}

/// The resized image with the mask boundary (foreground pixels with a
/// background 4-neighbour) drawn in red.
pub fn overlay(image: &RgbImage, mask: &GrayImage) -> RgbImage {
    let mut out = image.clone();
    let (w, h) = mask.dimensions();
    let fg = |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && mask.get_pixel(x as u32, y as u32).0[0] > 0;
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if fg(x, y) && !(fg(x - 1, y) && fg(x + 1, y) && fg(x, y - 1) && fg(x, y + 1)) {
                out.put_pixel(x as u32, y as u32, Rgb([255, 0, 0]));
            }
        }
    }
    out
}

#[derive(Debug)]
pub struct Prediction {
    pub input: PathBuf,
    pub result: Result<(PathBuf, PathBuf)>,
}

/// Writes `<out>/masks/<stem>.png` and `<out>/overlays/<stem>.png` for each
/// input. Failures are reported per file.
pub fn predict<T: Element>(net: &SegNet<T>, images: &[PathBuf], out: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let out = out.as_ref();
    let (mdir, odir) = (out.join("masks"), out.join("overlays"));
    for d in [&mdir, &odir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let one = |path: &Path| -> Result<(PathBuf, PathBuf)> {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Usage(format!("{} has no file stem", path.display())))?;
        let img = image::open(path)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                source: e,
            })?
            .to_rgb8();
        let (resized, mask) = predict_mask(net, &img)?;
        let mp = mdir.join(format!("{stem}.png"));
        mask.save(&mp).map_err(|e| Error::Image {
            path: mp.clone(),
            source: e,
        })?;
        let op = odir.join(format!("{stem}.png"));
        overlay(&resized, &mask).save(&op).map_err(|e| Error::Image {
            path: op.clone(),
            source: e,
        })?;
        Ok((mp, op))
    };
    Ok(images
        .iter()
        .map(|p| Prediction {
            input: p.clone(),
            result: one(p),
        })
        .collect())
}
