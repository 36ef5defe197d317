//! Parameterised layers, parameter traversal and initialisation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{conv2d, lit, normalize, Activation, Conv2dParams, Element, NormKind, RunningStats, Tensor};

/// Receives every trainable tensor and every running-statistics buffer of a
/// module tree, in a fixed order.
pub trait Visitor<T: Element> {
    fn param(&mut self, name: &str, tensor: &Tensor<T>);
    fn buffer(&mut self, _name: &str, _stats: &RunningStats<T>) {}
}

pub trait Module<T: Element> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>);

    fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        struct Collect<T: Element>(Vec<(String, Tensor<T>)>);
        impl<T: Element> Visitor<T> for Collect<T> {
            fn param(&mut self, name: &str, tensor: &Tensor<T>) {
                self.0.push((name.to_string(), tensor.clone()));
            }
        }
        let mut c = Collect(Vec::new());
        self.visit("", &mut c);
        c.0
    }

    fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    fn zero_grad(&self) {
        self.named_params().iter().for_each(|(_, t)| t.zero_grad());
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Seeded source of initial weights.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Kaiming-uniform (fan-in, ReLU gain): `U(-√(6/fan_in), √(6/fan_in))`.
    pub fn kaiming<T: Element>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        self.uniform(shape, -bound, bound)
    }

    pub fn uniform<T: Element>(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<T> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| lit(self.rng.gen_range(lo..hi))).collect();
        Tensor::leaf(data, shape, true).expect("valid parameter shape")
    }
}

pub fn param<T: Element>(shape: &[usize], value: f64) -> Tensor<T> {
    Tensor::leaf(vec![lit(value); shape.iter().product()], shape, true).expect("valid parameter shape")
}

#[derive(Debug)]
pub struct Conv2d<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub params: Conv2dParams,
}

impl<T: Element> Conv2d<T> {
    pub fn new(init: &mut Init, cin: usize, cout: usize, kernel: usize, params: Conv2dParams, bias: bool) -> Self {
        let cin_g = cin / params.groups;
        let weight = init.kaiming(&[cout, cin_g, kernel, kernel], cin_g * kernel * kernel);
        Self {
            weight,
            bias: bias.then(|| param(&[cout], 0.0)),
            params,
        }
    }

    /// 3×3, stride 1, "same" padding.
    pub fn k3(init: &mut Init, cin: usize, cout: usize) -> Self {
        Self::new(init, cin, cout, 3, Conv2dParams::same(3, 1), true)
    }

    /// 1×1 pointwise.
    pub fn k1(init: &mut Init, cin: usize, cout: usize, bias: bool) -> Self {
        Self::new(init, cin, cout, 1, Conv2dParams::default(), bias)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(x, &self.weight, self.bias.as_ref(), self.params)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
}

impl<T: Element> Module<T> for Conv2d<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        v.param(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            v.param(&join(prefix, "bias"), b);
        }
    }
}

pub const NORM_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug)]
pub struct Norm2d<T: Element> {
    pub kind: NormKind,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub eps: T,
    pub running: Option<RunningStats<T>>,
}

impl<T: Element> Norm2d<T> {
    pub fn new(kind: NormKind, channels: usize) -> Self {
        Self {
            kind,
            gamma: param(&[channels], 1.0),
            beta: param(&[channels], 0.0),
            eps: lit(NORM_EPS),
            running: (kind == NormKind::Batch).then(|| RunningStats::new(channels, lit(BN_MOMENTUM))),
        }
    }

    pub fn batch(channels: usize) -> Self {
        Self::new(NormKind::Batch, channels)
    }

    pub fn instance(channels: usize) -> Self {
        Self::new(NormKind::Instance, channels)
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        normalize(x, self.kind, &self.gamma, &self.beta, self.eps, self.running.as_ref(), train)
    }
}

impl<T: Element> Module<T> for Norm2d<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        v.param(&join(prefix, "gamma"), &self.gamma);
        v.param(&join(prefix, "beta"), &self.beta);
        if let Some(rs) = &self.running {
            v.buffer(&join(prefix, "running"), rs);
        }
    }
}

/// conv → norm → activation
#[derive(Debug)]
pub struct ConvNormAct<T: Element> {
    pub conv: Conv2d<T>,
    pub norm: Norm2d<T>,
    pub act: Option<Activation>,
}

impl<T: Element> ConvNormAct<T> {
    pub fn new(conv: Conv2d<T>, kind: NormKind, act: Option<Activation>) -> Self {
        let norm = Norm2d::new(kind, conv.out_channels());
        Self { conv, norm, act }
    }

    /// The plain 3×3 conv + BN + ReLU block.
    pub fn k3_bn_relu(init: &mut Init, cin: usize, cout: usize) -> Self {
        Self::new(Conv2d::k3(init, cin, cout), NormKind::Batch, Some(Activation::Relu))
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let y = self.norm.forward(&self.conv.forward(x)?, train)?;
        Ok(match self.act {
            Some(a) => y.activation(a),
            None => y,
        })
    }
}

impl<T: Element> Module<T> for ConvNormAct<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.conv.visit(&join(prefix, "conv"), v);
        self.norm.visit(&join(prefix, "norm"), v);
    }
}
