//! Skip-path attention (CBAM, attention gate) and the selective-kernel bottleneck.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{join, Conv2d, ConvNormAct, Init, Module, Visitor};
use crate::tensor::{Activation, Conv2dParams, Element, NormKind, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CbamConfig {
    pub reduction: usize,
    /// Lower bound on the channel-MLP width. The pooled inputs are
    /// non-negative, so a one- or two-unit ReLU layer often starts dead.
    pub min_hidden: usize,
    pub spatial_kernel: usize,
}

impl Default for CbamConfig {
    fn default() -> Self {
        Self {
            reduction: 16,
            min_hidden: 8,
            spatial_kernel: 7,
        }
    }
}

impl CbamConfig {
    pub fn hidden(&self, channels: usize) -> usize {
        (channels / self.reduction.max(1)).max(self.min_hidden).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spatial_kernel % 2 == 0 {
            return Err(Error::Config(format!("CBAM spatial kernel must be odd, got {}", self.spatial_kernel)));
        }
        if self.reduction == 0 {
            return Err(Error::Config("CBAM reduction must be >= 1".into()));
        }
        Ok(())
    }
}

/// Channel attention followed by spatial attention, both multiplicative.
#[derive(Debug)]
pub struct Cbam<T: Element> {
    pub channels: usize,
    pub fc1: Conv2d<T>,
    pub fc2: Conv2d<T>,
    pub spatial: Conv2d<T>,
}

impl<T: Element> Cbam<T> {
    pub fn new(init: &mut Init, channels: usize, cfg: &CbamConfig) -> Result<Self> {
        cfg.validate()?;
        let hidden = cfg.hidden(channels);
        let k = cfg.spatial_kernel;
        Ok(Self {
            channels,
            fc1: Conv2d::k1(init, channels, hidden, true),
            fc2: Conv2d::k1(init, hidden, channels, true),
            spatial: Conv2d::new(init, 2, 1, k, Conv2dParams::same(k, 1), true),
        })
    }

    fn mlp(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        self.fc2.forward(&self.fc1.forward(v)?.relu())
    }

    /// `sigmoid(MLP(avgpool x) + MLP(maxpool x))`, shape `[B, C, 1, 1]`.
    pub fn channel_map(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.channels {
            return Err(Error::shape("cbam", format!("expected {} channels, got {c}", self.channels)));
        }
        Ok(self.mlp(&x.global_avg_pool()?)?.add(&self.mlp(&x.global_max_pool()?)?)?.sigmoid())
    }

    /// `sigmoid(conv([mean_c x; max_c x]))`, shape `[B, 1, H, W]`.
    pub fn spatial_map(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let pooled = Tensor::concat(&[&x.mean_axis(1)?, &x.max_axis(1)?], 1)?;
        Ok(self.spatial.forward(&pooled)?.sigmoid())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let refined = x.mul(&self.channel_map(x)?)?;
        refined.mul(&self.spatial_map(&refined)?)
    }
}

impl<T: Element> Module<T> for Cbam<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.fc1.visit(&join(prefix, "fc1"), v);
        self.fc2.visit(&join(prefix, "fc2"), v);
        self.spatial.visit(&join(prefix, "spatial"), v);
    }
}

/// Additive attention gate on a skip feature, driven by a same-resolution
/// decoder signal: `skip ⊙ sigmoid(ψ(relu(W_g g + W_s s)))`.
#[derive(Debug)]
pub struct AttentionGate<T: Element> {
    pub w_gate: Conv2d<T>,
    pub w_skip: Conv2d<T>,
    pub psi: Conv2d<T>,
}

impl<T: Element> AttentionGate<T> {
    pub fn new(init: &mut Init, skip_channels: usize, gate_channels: usize, inter_channels: usize) -> Self {
        let inter = inter_channels.max(1);
        Self {
            w_gate: Conv2d::k1(init, gate_channels, inter, true),
            w_skip: Conv2d::k1(init, skip_channels, inter, true),
            psi: Conv2d::k1(init, inter, 1, true),
        }
    }

    /// Default intermediate width: half the skip channels, at least one.
    pub fn default_inter(skip_channels: usize) -> usize {
        (skip_channels / 2).max(1)
    }

    /// The one-channel coefficient map α in (0, 1), shape `[B, 1, H, W]`.
    pub fn coefficients(&self, skip: &Tensor<T>, gate: &Tensor<T>) -> Result<Tensor<T>> {
        let (bs, _, hs, ws) = skip.dims4()?;
        let (bg, _, hg, wg) = gate.dims4()?;
        if (bs, hs, ws) != (bg, hg, wg) {
            return Err(Error::shape(
                "attention_gate",
                format!("skip {:?} and gate {:?} differ in batch or spatial extent", skip.shape(), gate.shape()),
            ));
        }
        let q = self.w_gate.forward(gate)?.add(&self.w_skip.forward(skip)?)?.relu();
        Ok(self.psi.forward(&q)?.sigmoid())
    }

    pub fn forward(&self, skip: &Tensor<T>, gate: &Tensor<T>) -> Result<Tensor<T>> {
        skip.mul(&self.coefficients(skip, gate)?)
    }
}

impl<T: Element> Module<T> for AttentionGate<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.w_gate.visit(&join(prefix, "w_gate"), v);
        self.w_skip.visit(&join(prefix, "w_skip"), v);
        self.psi.visit(&join(prefix, "psi"), v);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkConfig {
    pub branch_dilations: Vec<usize>,
    pub reduction: usize,
    /// Lower bound on the fusion MLP width.
    pub min_hidden: usize,
    /// Group count of the 3×3 branch convolutions (reduced to divide the channels).
    pub groups: usize,
}

impl Default for SkConfig {
    fn default() -> Self {
        Self {
            branch_dilations: vec![1, 2],
            reduction: 16,
            min_hidden: 32,
            groups: 32,
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl SkConfig {
    pub fn hidden(&self, channels: usize) -> usize {
        (channels / self.reduction.max(1)).max(self.min_hidden).max(1)
    }

    pub fn groups_for(&self, channels: usize) -> usize {
        gcd(channels, self.groups.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.branch_dilations.len() < 2 {
            return Err(Error::Config("selective-kernel unit needs at least two branches".into()));
        }
        if self.branch_dilations.contains(&0) {
            return Err(Error::Config("branch dilations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Pointwise conv → dilated 3×3 branches fused by per-channel softmax
/// weights from a pooled descriptor → pointwise conv, plus the input.
#[derive(Debug)]
pub struct SkBottleneck<T: Element> {
    pub channels: usize,
    pub pw_in: ConvNormAct<T>,
    pub branches: Vec<ConvNormAct<T>>,
    pub fc: Conv2d<T>,
    pub select: Conv2d<T>,
    pub pw_out: ConvNormAct<T>,
}

impl<T: Element> SkBottleneck<T> {
    pub fn new(init: &mut Init, channels: usize, cfg: &SkConfig) -> Result<Self> {
        cfg.validate()?;
        let groups = cfg.groups_for(channels);
        let hidden = cfg.hidden(channels);
        let relu = Some(Activation::Relu);
        let pw_in = ConvNormAct::new(Conv2d::k1(init, channels, channels, true), NormKind::Batch, relu);
        let branches = cfg
            .branch_dilations
            .iter()
            .map(|&d| {
                let conv = Conv2d::new(init, channels, channels, 3, Conv2dParams::same(3, d).with_groups(groups), true);
                ConvNormAct::new(conv, NormKind::Batch, relu)
            })
            .collect();
        Ok(Self {
            channels,
            pw_in,
            branches,
            fc: Conv2d::k1(init, channels, hidden, true),
            select: Conv2d::k1(init, hidden, cfg.branch_dilations.len() * channels, true),
            pw_out: ConvNormAct::new(Conv2d::k1(init, channels, channels, true), NormKind::Batch, None),
        })
    }

    /// Output and the branch weights `[B, K, C, 1]` (softmax over K).
    pub fn forward_with_weights(&self, x: &Tensor<T>, train: bool) -> Result<(Tensor<T>, Tensor<T>)> {
        let (b, c, _, _) = x.dims4()?;
        if c != self.channels {
            return Err(Error::shape("sk_bottleneck", format!("expected {} channels, got {c}", self.channels)));
        }
        let k = self.branches.len();
        let z = self.pw_in.forward(x, train)?;
        let us = self
            .branches
            .iter()
            .map(|br| br.forward(&z, train))
            .collect::<Result<Vec<_>>>()?;
        let mut fused = us[0].clone();
        for u in &us[1..] {
            fused = fused.add(u)?;
        }
        let s = fused.global_avg_pool()?;
        let logits = self.select.forward(&self.fc.forward(&s)?.relu())?;
        let weights = logits.reshape(&[b, k, c, 1])?.softmax(1)?;
        let mut v: Option<Tensor<T>> = None;
        for (i, u) in us.iter().enumerate() {
            let wi = weights.slice(1, i, 1)?.reshape(&[b, c, 1, 1])?;
            let term = u.mul(&wi)?;
            v = Some(match v {
                None => term,
                Some(acc) => acc.add(&term)?,
            });
        }
        let out = self.pw_out.forward(&v.expect("at least two branches"), train)?.add(x)?;
        Ok((out, weights))
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        Ok(self.forward_with_weights(x, train)?.0)
    }
}

impl<T: Element> Module<T> for SkBottleneck<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.pw_in.visit(&join(prefix, "pw_in"), v);
        for (i, br) in self.branches.iter().enumerate() {
            br.visit(&join(prefix, &format!("branch{i}")), v);
        }
        self.fc.visit(&join(prefix, "fc"), v);
        self.select.visit(&join(prefix, "select"), v);
        self.pw_out.visit(&join(prefix, "pw_out"), v);
    }
}
