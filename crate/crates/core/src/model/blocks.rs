//! Residual VSS block and the encoder / decoder stages built around it.

use serde::{Deserialize, Serialize};

use crate::attention::AttentionGate;
use crate::error::{Error, Result};
use crate::nn::{join, param, Conv2d, ConvNormAct, Init, Module, Norm2d, Visitor};
use crate::ssm::{Ss2d, SsmConfig};
use crate::tensor::{maxpool2, upsample2, Activation, Conv2dParams, Element, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResVssConfig {
    /// Inner width of the scan branch as a multiple of the block channels.
    pub expand: usize,
    /// Activation on the gate path (the normalised block input, no projection).
    pub gate_activation: Activation,
    pub residual_scale_init: f64,
    pub ssm: SsmConfig,
}

impl Default for ResVssConfig {
    fn default() -> Self {
        Self {
            expand: 2,
            gate_activation: Activation::Silu,
            residual_scale_init: 1.0,
            ssm: SsmConfig::default(),
        }
    }
}

/// `y = VSS(DWConvBlock(x)) + γ ⊙ x`
///
/// * DWConvBlock: depthwise 3×3 → instance norm → ReLU
/// * VSS: instance norm → 1×1 in-projection → SS2D → instance norm →
///   1×1 out-projection, multiplied by `act(normalised input)`
#[derive(Debug)]
pub struct ResVss<T: Element> {
    pub channels: usize,
    pub dw: Conv2d<T>,
    pub dw_norm: Norm2d<T>,
    pub norm: Norm2d<T>,
    pub in_proj: Conv2d<T>,
    pub ss2d: Ss2d<T>,
    /// Normalises the merged scan output; the scan is cubic in its input.
    pub ss_norm: Norm2d<T>,
    pub out_proj: Conv2d<T>,
    /// Per-channel residual scale γ.
    pub scale: Tensor<T>,
    gate_activation: Activation,
}

impl<T: Element> ResVss<T> {
    pub fn new(init: &mut Init, channels: usize, cfg: &ResVssConfig) -> Result<Self> {
        if cfg.expand == 0 {
            return Err(Error::Config("VSS expansion must be >= 1".into()));
        }
        let inner = cfg.expand * channels;
        Ok(Self {
            channels,
            dw: Conv2d::new(init, channels, channels, 3, Conv2dParams::same(3, 1).with_groups(channels), true),
            dw_norm: Norm2d::instance(channels),
            norm: Norm2d::instance(channels),
            in_proj: Conv2d::k1(init, channels, inner, true),
            ss2d: Ss2d::new(init, inner, &cfg.ssm)?,
            ss_norm: Norm2d::instance(inner),
            out_proj: Conv2d::k1(init, inner, channels, true),
            scale: param(&[channels], cfg.residual_scale_init),
            gate_activation: cfg.gate_activation,
        })
    }

    pub fn vss_branch(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let p = self.dw_norm.forward(&self.dw.forward(x)?, true)?.relu();
        let n = self.norm.forward(&p, true)?;
        let s = self.ss_norm.forward(&self.ss2d.forward(&self.in_proj.forward(&n)?)?, true)?;
        let y = self.out_proj.forward(&s)?;
        y.mul(&n.activation(self.gate_activation))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.channels {
            return Err(Error::shape("res_vss", format!("expected {} channels, got {c}", self.channels)));
        }
        let residual = x.mul(&self.scale.reshape(&[1, c, 1, 1])?)?;
        self.vss_branch(x)?.add(&residual)
    }
}

impl<T: Element> Module<T> for ResVss<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.dw.visit(&join(prefix, "dw"), v);
        self.dw_norm.visit(&join(prefix, "dw_norm"), v);
        self.norm.visit(&join(prefix, "norm"), v);
        self.in_proj.visit(&join(prefix, "in_proj"), v);
        self.ss2d.visit(&join(prefix, "ss2d"), v);
        self.ss_norm.visit(&join(prefix, "ss_norm"), v);
        self.out_proj.visit(&join(prefix, "out_proj"), v);
        v.param(&join(prefix, "scale"), &self.scale);
    }
}

/// A ResVSS site, or the plain 3×3 conv + BN + ReLU that replaces it when
/// the scan blocks are ablated.
#[derive(Debug)]
pub enum VssSite<T: Element> {
    ResVss(Box<ResVss<T>>),
    Plain(ConvNormAct<T>),
}

impl<T: Element> VssSite<T> {
    pub fn new(init: &mut Init, channels: usize, cfg: Option<&ResVssConfig>) -> Result<Self> {
        Ok(match cfg {
            Some(cfg) => VssSite::ResVss(Box::new(ResVss::new(init, channels, cfg)?)),
            None => VssSite::Plain(ConvNormAct::k3_bn_relu(init, channels, channels)),
        })
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        match self {
            VssSite::ResVss(b) => b.forward(x),
            VssSite::Plain(b) => b.forward(x, train),
        }
    }
}

impl<T: Element> Module<T> for VssSite<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        match self {
            VssSite::ResVss(b) => b.visit(prefix, v),
            VssSite::Plain(b) => b.visit(prefix, v),
        }
    }
}

/// ResVSS → 3×3 conv (channel change) + BN + ReLU gives the skip feature;
/// 2×2 max pooling of it gives the next stage input.
#[derive(Debug)]
pub struct EncoderBlock<T: Element> {
    pub vss: VssSite<T>,
    pub conv: ConvNormAct<T>,
}

impl<T: Element> EncoderBlock<T> {
    pub fn new(init: &mut Init, cin: usize, cout: usize, vss: Option<&ResVssConfig>) -> Result<Self> {
        Ok(Self {
            vss: VssSite::new(init, cin, vss)?,
            conv: ConvNormAct::k3_bn_relu(init, cin, cout),
        })
    }

    /// Returns `(skip, down)`.
    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Result<(Tensor<T>, Tensor<T>)> {
        let skip = self.conv.forward(&self.vss.forward(x, train)?, train)?;
        let down = maxpool2(&skip)?;
        Ok((skip, down))
    }
}

impl<T: Element> Module<T> for EncoderBlock<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.vss.visit(&join(prefix, "vss"), v);
        self.conv.visit(&join(prefix, "conv"), v);
    }
}

/// Upsample ×2, gate the skip feature with the upsampled signal, concatenate,
/// reduce channels with 3×3 conv + BN + ReLU, then ResVSS.
#[derive(Debug)]
pub struct DecoderBlock<T: Element> {
    pub gate: Option<AttentionGate<T>>,
    pub conv: ConvNormAct<T>,
    pub vss: VssSite<T>,
}

impl<T: Element> DecoderBlock<T> {
    pub fn new(
        init: &mut Init,
        in_channels: usize,
        skip_channels: usize,
        out_channels: usize,
        attention: bool,
        vss: Option<&ResVssConfig>,
    ) -> Result<Self> {
        let gate = attention.then(|| {
            AttentionGate::new(init, skip_channels, in_channels, AttentionGate::<T>::default_inter(skip_channels))
        });
        Ok(Self {
            gate,
            conv: ConvNormAct::k3_bn_relu(init, in_channels + skip_channels, out_channels),
            vss: VssSite::new(init, out_channels, vss)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, skip: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let (bx, _, h, w) = x.dims4()?;
        let (bs, _, hs, ws) = skip.dims4()?;
        if bx != bs || hs != 2 * h || ws != 2 * w {
            return Err(Error::shape(
                "decoder_block",
                format!("skip {:?} must be exactly twice the resolution of {:?}", skip.shape(), x.shape()),
            ));
        }
        let up = upsample2(x)?;
        let gated = match &self.gate {
            Some(g) => g.forward(skip, &up)?,
            None => skip.clone(),
        };
        let merged = Tensor::concat(&[&up, &gated], 1)?;
        self.vss.forward(&self.conv.forward(&merged, train)?, train)
    }
}

impl<T: Element> Module<T> for DecoderBlock<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        if let Some(g) = &self.gate {
            g.visit(&join(prefix, "gate"), v);
        }
        self.conv.visit(&join(prefix, "conv"), v);
        self.vss.visit(&join(prefix, "vss"), v);
    }
}
