//! Analytic parameter and FLOP counts, computed from a [`ModelConfig`]
//! without building the network.
//!
//! Conventions (batch size 1):
//! * convolutions: `2 · MACs`, plus one FLOP per output element for the bias;
//! * normalisation, activations, elementwise products/sums, pooling and
//!   resampling: one FLOP per output element (reductions: per input element);
//! * selective scan: 7 FLOPs per (channel, step, state) for the
//!   discretised update and readout, plus 2 per (channel, step) for the skip.

use serde::Serialize;

use super::blocks::ResVssConfig;
use super::net::ModelConfig;
use super::plan::NUM_STAGES;
use crate::attention::{CbamConfig, SkConfig};
use crate::error::Result;

pub const SCAN_FLOPS_PER_STATE_STEP: u64 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerProfile {
    pub layer: String,
    pub params: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Profile {
    pub rows: Vec<LayerProfile>,
}

impl Profile {
    pub fn total_params(&self) -> u64 {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn total_flops(&self) -> u64 {
        self.rows.iter().map(|r| r.flops).sum()
    }

    /// Parameters of rows whose layer name satisfies `pred`.
    pub fn params_where(&self, pred: impl Fn(&str) -> bool) -> u64 {
        self.rows.iter().filter(|r| pred(&r.layer)).map(|r| r.params).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,params,flops\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.layer, r.params, r.flops));
        }
        s
    }

    fn push(&mut self, layer: impl Into<String>, params: u64, flops: u64) {
        self.rows.push(LayerProfile {
            layer: layer.into(),
            params,
            flops,
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, groups: usize, bias: bool, h: usize, w: usize) {
        let weights = (cout * (cin / groups) * k * k) as u64;
        let out = (cout * h * w) as u64;
        let params = weights + if bias { cout as u64 } else { 0 };
        let flops = 2 * weights * (h * w) as u64 + if bias { out } else { 0 };
        self.push(name, params, flops);
    }

    fn norm(&mut self, name: &str, c: usize, h: usize, w: usize) {
        self.push(name, 2 * c as u64, (c * h * w) as u64);
    }

    fn elementwise(&mut self, name: &str, elements: usize) {
        self.push(name, 0, elements as u64);
    }

    /// conv → norm → optional activation, stride 1 "same" padding.
    #[allow(clippy::too_many_arguments)]
    fn conv_norm_act(&mut self, name: &str, cin: usize, cout: usize, k: usize, groups: usize, act: bool, h: usize, w: usize) {
        self.conv(&format!("{name}.conv"), cin, cout, k, groups, true, h, w);
        self.norm(&format!("{name}.norm"), cout, h, w);
        if act {
            self.elementwise(&format!("{name}.act"), cout * h * w);
        }
    }

    fn ss2d(&mut self, name: &str, d: usize, h: usize, w: usize, cfg: &ResVssConfig) {
        let ssm = &cfg.ssm;
        let (r, n, l) = (ssm.dt_rank_for(d), ssm.state_dim, h * w);
        for dir in ["row_fwd", "row_bwd", "col_fwd", "col_bwd"] {
            let p = format!("{name}.{dir}");
            self.conv(&format!("{p}.x_proj"), d, r + 2 * n, 1, 1, false, l, 1);
            self.conv(&format!("{p}.dt_proj"), r, d, 1, 1, true, l, 1);
            self.elementwise(&format!("{p}.softplus"), d * l);
            // a_log → A and the skip D live here
            self.push(format!("{p}.a_d"), (d * n + d) as u64, (d * n) as u64);
            self.push(
                format!("{p}.scan"),
                0,
                SCAN_FLOPS_PER_STATE_STEP * (d * l * n) as u64 + 2 * (d * l) as u64,
            );
        }
        self.elementwise(&format!("{name}.merge"), 3 * d * l);
    }

    fn res_vss(&mut self, name: &str, c: usize, h: usize, w: usize, cfg: &ResVssConfig) {
        let (hw, inner) = (h * w, cfg.expand * c);
        self.conv(&format!("{name}.dw"), c, c, 3, c, true, h, w);
        self.norm(&format!("{name}.dw_norm"), c, h, w);
        self.elementwise(&format!("{name}.dw_act"), c * hw);
        self.norm(&format!("{name}.norm"), c, h, w);
        self.conv(&format!("{name}.in_proj"), c, inner, 1, 1, true, h, w);
        self.ss2d(&format!("{name}.ss2d"), inner, h, w, cfg);
        self.norm(&format!("{name}.ss_norm"), inner, h, w);
        self.conv(&format!("{name}.out_proj"), inner, c, 1, 1, true, h, w);
        self.elementwise(&format!("{name}.gate"), 2 * c * hw);
        self.push(format!("{name}.scale"), c as u64, 2 * (c * hw) as u64);
    }

    fn vss_site(&mut self, name: &str, c: usize, h: usize, w: usize, cfg: Option<&ResVssConfig>) {
        match cfg {
            Some(cfg) => self.res_vss(name, c, h, w, cfg),
            None => self.conv_norm_act(name, c, c, 3, 1, true, h, w),
        }
    }

    fn cbam(&mut self, name: &str, c: usize, h: usize, w: usize, cfg: &CbamConfig) {
        let (hw, hid, k) = (h * w, cfg.hidden(c), cfg.spatial_kernel);
        self.elementwise(&format!("{name}.pool"), 2 * c * hw);
        // shared MLP, evaluated on both pooled descriptors
        let fc1 = (hid * c + hid) as u64;
        let fc2 = (c * hid + c) as u64;
        self.push(format!("{name}.fc1"), fc1, 2 * (2 * (hid * c) as u64 + hid as u64 + hid as u64));
        self.push(format!("{name}.fc2"), fc2, 2 * (2 * (c * hid) as u64 + c as u64) + 2 * c as u64);
        self.elementwise(&format!("{name}.channel_gate"), c * hw);
        self.elementwise(&format!("{name}.channel_pool"), 2 * c * hw);
        self.conv(&format!("{name}.spatial"), 2, 1, k, 1, true, h, w);
        self.elementwise(&format!("{name}.spatial_gate"), hw + c * hw);
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_gate(&mut self, name: &str, cs: usize, cg: usize, inter: usize, h: usize, w: usize) {
        let hw = h * w;
        self.conv(&format!("{name}.w_gate"), cg, inter, 1, 1, true, h, w);
        self.conv(&format!("{name}.w_skip"), cs, inter, 1, 1, true, h, w);
        self.elementwise(&format!("{name}.combine"), 2 * inter * hw);
        self.conv(&format!("{name}.psi"), inter, 1, 1, 1, true, h, w);
        self.elementwise(&format!("{name}.apply"), hw + cs * hw);
    }

    fn sk(&mut self, name: &str, c: usize, h: usize, w: usize, cfg: &SkConfig) {
        let (hw, k, g, hid) = (h * w, cfg.branch_dilations.len(), cfg.groups_for(c), cfg.hidden(c));
        self.conv_norm_act(&format!("{name}.pw_in"), c, c, 1, 1, true, h, w);
        for i in 0..k {
            self.conv_norm_act(&format!("{name}.branch{i}"), c, c, 3, g, true, h, w);
        }
        self.elementwise(&format!("{name}.pool"), (k - 1) * c * hw + c * hw);
        self.conv(&format!("{name}.fc"), c, hid, 1, 1, true, 1, 1);
        self.elementwise(&format!("{name}.fc_act"), hid);
        self.conv(&format!("{name}.select"), hid, k * c, 1, 1, true, 1, 1);
        self.elementwise(&format!("{name}.softmax"), k * c);
        self.elementwise(&format!("{name}.fuse"), k * c * hw + (k - 1) * c * hw);
        self.conv_norm_act(&format!("{name}.pw_out"), c, c, 1, 1, false, h, w);
        self.elementwise(&format!("{name}.residual"), c * hw);
    }
}

/// Per-layer profile of the network described by `config` at its configured
/// input resolution.
pub fn profile(config: &ModelConfig) -> Result<Profile> {
    let plan = config.plan()?;
    let s = &plan.stages;
    let vss = config.vss_config();
    let attention = config.variant.has_attention();
    let mut p = Profile::default();
    p.conv_norm_act("conv_in", config.in_channels, s[0].channels, 3, 1, true, s[0].height, s[0].width);
    for i in 1..NUM_STAGES {
        let (prev, cur) = (s[i - 1], s[i]);
        let name = format!("encoder{i}");
        p.vss_site(&format!("{name}.vss"), prev.channels, prev.height, prev.width, vss);
        p.conv_norm_act(&format!("{name}.conv"), prev.channels, cur.channels, 3, 1, true, prev.height, prev.width);
        p.elementwise(&format!("{name}.pool"), cur.channels * cur.height * cur.width);
    }
    if attention {
        for i in 1..NUM_STAGES {
            let (prev, cur) = (s[i - 1], s[i]);
            p.cbam(&format!("cbam{i}"), cur.channels, prev.height, prev.width, &config.cbam);
        }
    }
    let deep = plan.deepest();
    p.sk("bottleneck", deep.channels, deep.height, deep.width, &config.sk);
    for i in (1..NUM_STAGES).rev() {
        let (prev, cur) = (s[i - 1], s[i]);
        let (h, w) = (prev.height, prev.width);
        let name = format!("decoder{i}");
        p.elementwise(&format!("{name}.upsample"), cur.channels * h * w);
        if attention {
            let inter = (cur.channels / 2).max(1);
            p.attention_gate(&format!("{name}.gate"), cur.channels, cur.channels, inter, h, w);
        }
        p.conv_norm_act(&format!("{name}.conv"), 2 * cur.channels, prev.channels, 3, 1, true, h, w);
        p.vss_site(&format!("{name}.vss"), prev.channels, h, w, vss);
    }
    p.conv("conv_out", s[0].channels, 1, 1, 1, true, s[0].height, s[0].width);
    Ok(p)
}

pub fn count_params(config: &ModelConfig) -> Result<u64> {
    Ok(profile(config)?.total_params())
}

/// FLOPs for one `(height, width)` image, overriding the configured input size.
pub fn count_flops(config: &ModelConfig, input: (usize, usize)) -> Result<u64> {
    let cfg = ModelConfig {
        input_height: input.0,
        input_width: input.1,
        ..config.clone()
    };
    Ok(profile(&cfg)?.total_flops())
}

/// Parameters belonging to the CBAM modules and decoder attention gates.
pub fn attention_params(config: &ModelConfig) -> Result<u64> {
    Ok(profile(config)?.params_where(|l| l.starts_with("cbam") || l.contains(".gate.")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv_count() {
        let mut p = Profile::default();
        p.conv("c", 16, 32, 3, 1, true, 1, 1);
        assert_eq!(p.total_params(), 4640);
        // 2·MACs + bias adds on a 1×1 output
        assert_eq!(p.total_flops(), 2 * 4608 + 32);
    }

    #[test]
    fn empty_profile_is_zero() {
        let p = Profile::default();
        assert_eq!((p.total_params(), p.total_flops()), (0, 0));
        assert_eq!(p.to_csv(), "layer,params,flops\n");
    }

    #[test]
    fn matches_instantiated_network() {
        use crate::model::{SegNet, Variant};
        use crate::nn::Module;
        for v in Variant::ALL {
            let cfg = ModelConfig::toy(32, 64, 4).with_variant(v);
            let net = SegNet::<f32>::new(cfg.clone(), 0).unwrap();
            assert_eq!(count_params(&cfg).unwrap(), net.num_params() as u64, "{v}");
        }
    }

    #[test]
    fn default_sizes() {
        use crate::model::Variant;
        for v in Variant::ALL {
            let cfg = ModelConfig::default().with_variant(v);
            let p = profile(&cfg).unwrap();
            eprintln!("{v}: params {} flops {} attn {}", p.total_params(), p.total_flops(), attention_params(&cfg).unwrap());
        }
    }
}
