//! Full U-shaped network: input conv, five encoder stages, selective-kernel
//! bottleneck, CBAM-refined skips, five gated decoder stages, output conv.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::blocks::{DecoderBlock, EncoderBlock, ResVssConfig};
use super::plan::{StagePlan, NUM_STAGES};
use crate::attention::{Cbam, CbamConfig, SkBottleneck, SkConfig};
use crate::error::{Error, Result};
use crate::nn::{join, Conv2d, ConvNormAct, Init, Module, Visitor};
use crate::tensor::{Element, Tensor};

/// Ablation variants: attention = CBAM on skips + decoder attention gates;
/// vss = ResVSS blocks (otherwise plain 3×3 conv + BN + ReLU).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Full,
    NoAttention,
    NoVss,
    Plain,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoAttention, Variant::NoVss, Variant::Plain];

    pub fn has_attention(self) -> bool {
        matches!(self, Variant::Full | Variant::NoVss)
    }

    pub fn has_vss(self) -> bool {
        matches!(self, Variant::Full | Variant::NoAttention)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoAttention => "no-attention",
            Variant::NoVss => "no-vss",
            Variant::Plain => "plain",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s || v.as_str().replace('-', "_") == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}' (full|no-attention|no-vss|plain)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub in_channels: usize,
    pub base_channels: usize,
    pub variant: Variant,
    pub vss: ResVssConfig,
    pub cbam: CbamConfig,
    pub sk: SkConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_height: 192,
            input_width: 256,
            in_channels: 3,
            base_channels: 16,
            variant: Variant::Full,
            vss: ResVssConfig::default(),
            cbam: CbamConfig::default(),
            sk: SkConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn plan(&self) -> Result<StagePlan> {
        StagePlan::new(self.input_height, self.input_width, self.base_channels)
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Small configuration used by tests and presets.
    pub fn toy(height: usize, width: usize, base_channels: usize) -> Self {
        Self {
            input_height: height,
            input_width: width,
            base_channels,
            ..Self::default()
        }
    }

    pub(crate) fn vss_config(&self) -> Option<&ResVssConfig> {
        self.variant.has_vss().then_some(&self.vss)
    }
}

/// Activations recorded during one forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    /// `F_0` (after the input conv) through `F_5` (deepest encoder output).
    pub stages: Vec<Vec<usize>>,
    /// Pre-pooling skip features of encoder blocks 1..=5.
    pub skips: Vec<Vec<usize>>,
    /// Decoder outputs, deepest first.
    pub decoders: Vec<Vec<usize>>,
    pub bottleneck: Vec<usize>,
    pub logits: Vec<usize>,
}

#[derive(Debug)]
pub struct SegNet<T: Element> {
    pub config: ModelConfig,
    pub conv_in: ConvNormAct<T>,
    pub encoders: Vec<EncoderBlock<T>>,
    pub cbams: Vec<Cbam<T>>,
    pub bottleneck: SkBottleneck<T>,
    /// Deepest first.
    pub decoders: Vec<DecoderBlock<T>>,
    pub conv_out: Conv2d<T>,
}

impl<T: Element> SegNet<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let plan = config.plan()?;
        if config.in_channels == 0 {
            return Err(Error::Config("in_channels must be >= 1".into()));
        }
        let ch: Vec<usize> = plan.stages.iter().map(|s| s.channels).collect();
        let attention = config.variant.has_attention();
        let vss = config.vss_config();
        let mut init = Init::new(seed);
        let conv_in = ConvNormAct::k3_bn_relu(&mut init, config.in_channels, ch[0]);
        let encoders = (1..NUM_STAGES)
            .map(|i| EncoderBlock::new(&mut init, ch[i - 1], ch[i], vss))
            .collect::<Result<Vec<_>>>()?;
        let cbams = if attention {
            (1..NUM_STAGES)
                .map(|i| Cbam::new(&mut init, ch[i], &config.cbam))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let bottleneck = SkBottleneck::new(&mut init, ch[NUM_STAGES - 1], &config.sk)?;
        let decoders = (1..NUM_STAGES)
            .rev()
            .map(|i| DecoderBlock::new(&mut init, ch[i], ch[i], ch[i - 1], attention, vss))
            .collect::<Result<Vec<_>>>()?;
        let conv_out = Conv2d::k1(&mut init, ch[0], 1, true);
        Ok(Self {
            config,
            conv_in,
            encoders,
            cbams,
            bottleneck,
            decoders,
            conv_out,
        })
    }

    fn check_input(&self, image: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = image.dims4()?;
        if c != self.config.in_channels {
            return Err(Error::shape(
                "forward",
                format!("expected {} input channels, got {c}", self.config.in_channels),
            ));
        }
        StagePlan::new(h, w, self.config.base_channels).map(|_| ())
    }

    /// Logits `[B, 1, H, W]` (no sigmoid).
    pub fn forward(&self, image: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        Ok(self.forward_traced(image, train)?.0)
    }

    pub fn forward_traced(&self, image: &Tensor<T>, train: bool) -> Result<(Tensor<T>, ForwardTrace)> {
        self.check_input(image)?;
        let mut trace = ForwardTrace::default();
        let mut x = self.conv_in.forward(image, train)?;
        trace.stages.push(x.shape().to_vec());
        let mut skips = Vec::with_capacity(NUM_STAGES - 1);
        for (i, enc) in self.encoders.iter().enumerate() {
            let (skip, down) = enc.forward(&x, train)?;
            trace.skips.push(skip.shape().to_vec());
            let skip = match self.cbams.get(i) {
                Some(cbam) => cbam.forward(&skip)?,
                None => skip,
            };
            skips.push(skip);
            trace.stages.push(down.shape().to_vec());
            x = down;
        }
        x = self.bottleneck.forward(&x, train)?;
        trace.bottleneck = x.shape().to_vec();
        for (dec, skip) in self.decoders.iter().zip(skips.iter().rev()) {
            x = dec.forward(&x, skip, train)?;
            trace.decoders.push(x.shape().to_vec());
        }
        let logits = self.conv_out.forward(&x)?;
        trace.logits = logits.shape().to_vec();
        Ok((logits, trace))
    }
}

impl<T: Element> Module<T> for SegNet<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.conv_in.visit(&join(prefix, "conv_in"), v);
        for (i, e) in self.encoders.iter().enumerate() {
            e.visit(&join(prefix, &format!("encoder{}", i + 1)), v);
        }
        for (i, c) in self.cbams.iter().enumerate() {
            c.visit(&join(prefix, &format!("cbam{}", i + 1)), v);
        }
        self.bottleneck.visit(&join(prefix, "bottleneck"), v);
        let n = self.decoders.len();
        for (i, d) in self.decoders.iter().enumerate() {
            d.visit(&join(prefix, &format!("decoder{}", n - i)), v);
        }
        self.conv_out.visit(&join(prefix, "conv_out"), v);
    }
}
