//! Overlap losses (Dice, Tversky, their weighted sum) and hard-mask metrics.
//!
//! Losses are differentiable in the predicted probabilities `p` and pool all
//! pixels of the batch. The Tversky index uses the standard form
//! `TP / (TP + α·FN + β·FP)`, without a leading factor 2 in the numerator,
//! so that a perfect prediction scores 0 and `α = β = 0.5` reduces to Dice.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{lit, Element, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-6;
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Tversky weight on false negatives `Σ y(1 - p)`.
    pub alpha: f64,
    /// Tversky weight on false positives `Σ (1 - y)p`.
    pub beta: f64,
    pub epsilon: f64,
    /// `(dice, tversky)` weights of the combined loss.
    pub combo_weights: (f64, f64),
    /// Permit `alpha + beta != 1`.
    pub allow_unnormalized: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.7,
            epsilon: DEFAULT_EPSILON,
            combo_weights: (0.5, 0.5),
            allow_unnormalized: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !self.allow_unnormalized && (self.alpha + self.beta - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Config(format!(
                "alpha + beta must equal 1 (got {}); set allow_unnormalized to override",
                self.alpha + self.beta
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

fn is_binary<T: Element>(v: T) -> bool {
    v == T::zero() || v == T::one()
}

/// Validates a (ground truth, probability) pair and returns `Σ y`.
fn check_pair<T: Element>(y: &Tensor<T>, p: &Tensor<T>) -> Result<T> {
    if y.shape() != p.shape() {
        return Err(Error::shape(
            "loss",
            format!("target {:?} vs prediction {:?}", y.shape(), p.shape()),
        ));
    }
    if y.numel() == 0 {
        return Err(Error::Usage("loss on empty tensors".into()));
    }
    let yd = y.data();
    if !yd.iter().all(|&v| is_binary(v)) {
        return Err(Error::Usage("target mask must be binary".into()));
    }
    if !p.data().iter().all(|&v| v >= T::zero() && v <= T::one()) {
        return Err(Error::Usage("predictions must be probabilities in [0, 1]".into()));
    }
    Ok(yd.iter().fold(T::zero(), |a, &b| a + b))
}

/// `1 - (2Σyp + ε) / (Σy + Σp + ε)`
pub fn dice_loss<T: Element>(y: &Tensor<T>, p: &Tensor<T>, epsilon: f64) -> Result<Tensor<T>> {
    let sy = check_pair(y, p)?;
    let eps = lit::<T>(epsilon);
    let tp = y.mul(p)?.sum_all();
    let num = tp.scale(lit(2.0)).add_scalar(eps);
    let den = p.sum_all().add_scalar(sy + eps);
    Ok(num.div(&den)?.rsub_scalar(T::one()))
}

/// `1 - (TP + ε) / (TP + α·FN + β·FP + ε)` with soft counts
/// `TP = Σyp`, `FN = Σy(1-p)`, `FP = Σ(1-y)p`.
pub fn tversky_loss<T: Element>(y: &Tensor<T>, p: &Tensor<T>, alpha: f64, beta: f64, epsilon: f64) -> Result<Tensor<T>> {
    let sy = check_pair(y, p)?;
    let eps = lit::<T>(epsilon);
    let tp = y.mul(p)?.sum_all();
    // TP + α(Σy - TP) + β(Σp - TP) + ε
    let den = tp
        .scale(lit(1.0 - alpha - beta))
        .add(&p.sum_all().scale(lit(beta)))?
        .add_scalar(lit::<T>(alpha) * sy + eps);
    Ok(tp.add_scalar(eps).div(&den)?.rsub_scalar(T::one()))
}

pub fn combined_loss<T: Element>(y: &Tensor<T>, p: &Tensor<T>, cfg: &LossConfig) -> Result<Tensor<T>> {
    cfg.validate()?;
    let dice = dice_loss(y, p, cfg.epsilon)?;
    let tversky = tversky_loss(y, p, cfg.alpha, cfg.beta, cfg.epsilon)?;
    let (wd, wt) = cfg.combo_weights;
    dice.scale(lit(wd)).add(&tversky.scale(lit(wt)))
}

/// Combined loss on raw network logits.
pub fn combined_loss_logits<T: Element>(y: &Tensor<T>, logits: &Tensor<T>, cfg: &LossConfig) -> Result<Tensor<T>> {
    combined_loss(y, &logits.sigmoid(), cfg)
}

/// Hard mask from logits: `sigmoid(z) > 0.5`, i.e. `z > 0`.
pub fn threshold_logits<T: Element>(logits: &[T]) -> Vec<T> {
    logits
        .iter()
        .map(|&z| if z > T::zero() { T::one() } else { T::zero() })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn empty_agreement(&self) -> bool {
        self.tp == 0 && self.fp == 0 && self.fn_ == 0
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

pub fn confusion_counts<T: Element>(pred: &[T], gt: &[T]) -> Result<ConfusionCounts> {
    if pred.len() != gt.len() {
        return Err(Error::shape(
            "confusion_counts",
            format!("{} predicted vs {} target pixels", pred.len(), gt.len()),
        ));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.iter().zip(gt) {
        if !is_binary(p) || !is_binary(g) {
            return Err(Error::Usage("confusion counts need binary masks".into()));
        }
        match (p == T::one(), g == T::one()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `2TP / (2TP + FP + FN + ε)`; `1.0` when both masks are empty.
/// `epsilon = 0` gives the exact ratio.
pub fn dsc(c: &ConfusionCounts, epsilon: f64) -> f64 {
    if c.empty_agreement() {
        return 1.0;
    }
    let tp = c.tp as f64;
    2.0 * tp / (2.0 * tp + c.fp as f64 + c.fn_ as f64 + epsilon)
}

/// `TP / (TP + FP + FN + ε)`; `1.0` when both masks are empty.
pub fn iou(c: &ConfusionCounts, epsilon: f64) -> f64 {
    if c.empty_agreement() {
        return 1.0;
    }
    let tp = c.tp as f64;
    tp / (tp + c.fp as f64 + c.fn_ as f64 + epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub image_id: String,
    pub dsc: f64,
    pub iou: f64,
}

impl ImageMetrics {
    pub fn from_counts(image_id: impl Into<String>, c: &ConfusionCounts, epsilon: f64) -> Self {
        Self {
            image_id: image_id.into(),
            dsc: dsc(c, epsilon),
            iou: iou(c, epsilon),
        }
    }
}

/// Per-image scores averaged over a set of images.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub images: usize,
    pub mean_dsc: f64,
    pub mean_iou: f64,
}

pub fn summarize(records: &[ImageMetrics]) -> MetricSummary {
    let n = records.len();
    if n == 0 {
        return MetricSummary::default();
    }
    MetricSummary {
        images: n,
        mean_dsc: records.iter().map(|r| r.dsc).sum::<f64>() / n as f64,
        mean_iou: records.iter().map(|r| r.iou).sum::<f64>() / n as f64,
    }
}

/// One JSON object per image, then `{"summary": {...}}`.
pub fn write_metrics_jsonl(mut w: impl Write, records: &[ImageMetrics], summary: &MetricSummary) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    writeln!(w, "{}", serde_json::json!({ "summary": summary }))
}
