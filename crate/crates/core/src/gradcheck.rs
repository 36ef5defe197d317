//! Central finite-difference gradient checks (f64) for every differentiable
//! building block.
//!
//! Non-scalar outputs are reduced to `Σ out ⊙ R` with a fixed random `R`.
//! The error of one element is `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
//! Elements whose first estimate fails are re-estimated with one smaller and
//! three larger steps, and the best estimate is kept: small steps avoid
//! crossing ReLU or max-pool switching points, large steps avoid rounding
//! noise on gradients that are tiny next to the function value. Failing that,
//! Richardson extrapolation over the longest steps cancels their h² error.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attention::{AttentionGate, Cbam, CbamConfig, SkBottleneck, SkConfig};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ResVss, ResVssConfig, SegNet};
use crate::nn::{Init, Module};
use crate::objectives::{combined_loss, dice_loss, tversky_loss, LossConfig, DEFAULT_EPSILON};
use crate::ssm::{selective_scan, ScanMode, Ss2d, SsmConfig};
use crate::tensor::{conv2d, maxpool2, no_grad, normalize, upsample2, Activation, Conv2dParams, NormKind, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Elements sampled per tensor (all of them when the tensor is smaller).
    pub max_elements_per_tensor: usize,
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-6,
            max_elements_per_tensor: 6,
            floor: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst element.
    pub worst: String,
    pub tolerance: f64,
    pub passed: bool,
}

type Named = Vec<(String, Tensor<f64>)>;

fn rel_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compares the gradient of the sum of `f()` with respect to each tensor in
/// `wrt` against central differences. The differences are taken term by
/// term before summing, which keeps rounding in a large sum out of them.
pub fn check(
    name: &str,
    wrt: &Named,
    f: &dyn Fn() -> Result<Tensor<f64>>,
    tolerance: f64,
    cfg: &GradCheckConfig,
) -> Result<CheckResult> {
    for (_, t) in wrt {
        t.zero_grad();
    }
    f()?.sum_all().backward()?;
    let eval = || -> Result<Vec<f64>> { Ok(no_grad(f)?.to_vec()) };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut result = CheckResult {
        name: name.into(),
        checked: 0,
        max_rel_error: 0.0,
        worst: String::new(),
        tolerance,
        passed: true,
    };
    for (tname, t) in wrt {
        let grad = t
            .grad()
            .ok_or_else(|| Error::Usage(format!("{name}: no gradient reached '{tname}'")))?;
        let n = t.numel();
        let picks = sample(&mut rng, n, cfg.max_elements_per_tensor.min(n)).into_vec();
        for i in picks {
            let original = t.data()[i];
            let numeric = |h: f64| -> Result<f64> {
                t.update_data(|d| d[i] = original + h);
                let plus = eval()?;
                t.update_data(|d| d[i] = original - h);
                let minus = eval()?;
                t.update_data(|d| d[i] = original);
                Ok(plus.iter().zip(&minus).map(|(p, m)| p - m).sum::<f64>() / (2.0 * h))
            };
            let mut err = rel_error(grad[i], numeric(cfg.step)?, cfg.floor);
            if err > tolerance {
                for h in [cfg.step * 0.1, cfg.step * 10.0, cfg.step * 100.0, cfg.step * 1000.0] {
                    err = err.min(rel_error(grad[i], numeric(h)?, cfg.floor));
                }
            }
            // small gradients of a large loss: short steps drown in rounding,
            // long ones carry the h² term, which extrapolation cancels
            if err > tolerance {
                for h in [cfg.step * 100.0, cfg.step * 1000.0, cfg.step * 10000.0] {
                    let extrapolated = (4.0 * numeric(h / 2.0)? - numeric(h)?) / 3.0;
                    err = err.min(rel_error(grad[i], extrapolated, cfg.floor));
                }
            }
            result.checked += 1;
            if err > result.max_rel_error {
                result.max_rel_error = err;
                result.worst = format!("{tname}[{i}]");
            }
        }
    }
    result.passed = result.max_rel_error <= tolerance;
    Ok(result)
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::leaf((0..n).map(|_| rng.gen_range(lo..hi)).collect(), shape, true).expect("valid shape")
}

/// `Σ out ⊙ R` for a random `R` matching `shape`.
fn projector(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape).expect("valid shape")
}

fn project(out: Tensor<f64>, r: &Tensor<f64>) -> Result<Tensor<f64>> {
    Ok(terms(out, r)?.sum_all())
}

/// The summands of [`project`], left for [`check`] to add up.
fn terms(out: Tensor<f64>, r: &Tensor<f64>) -> Result<Tensor<f64>> {
    out.mul(r)
}

fn with_input(module: &dyn Module<f64>, inputs: &[(&str, &Tensor<f64>)]) -> Named {
    let mut named: Named = inputs.iter().map(|(n, t)| (n.to_string(), (*t).clone())).collect();
    named.extend(module.named_params());
    named
}

pub const BLOCK_TOLERANCE: f64 = 1e-4;
pub const LOSS_TOLERANCE: f64 = 1e-6;

/// One named check of the suite.
pub struct GradCase {
    pub name: &'static str,
    pub tolerance: f64,
    run: fn(&mut ChaCha8Rng, &GradCheckConfig, f64) -> Result<CheckResult>,
}

impl GradCase {
    pub fn run(&self, cfg: &GradCheckConfig) -> Result<CheckResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
        let mut r = (self.run)(&mut rng, cfg, self.tolerance)?;
        r.name = self.name.into();
        Ok(r)
    }
}

fn case_conv(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let x = random(rng, &[2, 4, 8, 8], -1.0, 1.0);
    let w = random(rng, &[6, 4, 3, 3], -0.5, 0.5);
    let b = random(rng, &[6], -0.5, 0.5);
    let wg = random(rng, &[4, 2, 3, 3], -0.5, 0.5);
    let r1 = projector(rng, &[2, 6, 4, 4]);
    let r2 = projector(rng, &[2, 4, 8, 8]);
    let named = vec![("x".into(), x.clone()), ("w".into(), w.clone()), ("b".into(), b.clone()), ("wg".into(), wg.clone())];
    let strided = Conv2dParams {
        stride: 2,
        padding: 1,
        ..Conv2dParams::default()
    };
    check(
        "conv",
        &named,
        &|| {
            let a = project(conv2d(&x, &w, Some(&b), strided)?, &r1)?;
            let g = project(conv2d(&x, &wg, None, Conv2dParams::same(3, 2).with_groups(2))?, &r2)?;
            a.add(&g)
        },
        tol,
        cfg,
    )
}

fn case_norm(kind: NormKind, rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let x = random(rng, &[2, 4, 8, 8], -2.0, 2.0);
    let g = random(rng, &[4], 0.5, 1.5);
    let b = random(rng, &[4], -0.5, 0.5);
    let r = projector(rng, &[2, 4, 8, 8]);
    let named = vec![("x".into(), x.clone()), ("gamma".into(), g.clone()), ("beta".into(), b.clone())];
    check(
        "norm",
        &named,
        &|| project(normalize(&x, kind, &g, &b, 1e-5, None, true)?, &r),
        tol,
        cfg,
    )
}

fn case_batch_norm(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    case_norm(NormKind::Batch, rng, cfg, tol)
}

fn case_instance_norm(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    case_norm(NormKind::Instance, rng, cfg, tol)
}

fn case_activations(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let x = random(rng, &[2, 4, 4, 4], -3.0, 3.0);
    let r = projector(rng, &[2, 4, 4, 4]);
    let named = vec![("x".into(), x.clone())];
    check(
        "activations",
        &named,
        &|| {
            let mut acc = project(x.softplus(), &r)?;
            for a in [Activation::Relu, Activation::Sigmoid, Activation::Silu] {
                acc = acc.add(&project(x.activation(a), &r)?)?;
            }
            Ok(acc)
        },
        tol,
        cfg,
    )
}

fn case_resample(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let x = random(rng, &[2, 4, 8, 8], -1.0, 1.0);
    let rp = projector(rng, &[2, 4, 4, 4]);
    let ru = projector(rng, &[2, 4, 16, 16]);
    let named = vec![("x".into(), x.clone())];
    check(
        "resample",
        &named,
        &|| project(maxpool2(&x)?, &rp)?.add(&project(upsample2(&x)?, &ru)?),
        tol,
        cfg,
    )
}

fn case_scan(mode: ScanMode, rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let (b, d, l, n) = (2, 4, 12, 4);
    let u = random(rng, &[b, d, l], -1.0, 1.0);
    let delta = random(rng, &[b, d, l], 0.05, 0.5);
    let a = random(rng, &[d, n], -2.0, -0.2);
    let bm = random(rng, &[b, n, l], -1.0, 1.0);
    let cm = random(rng, &[b, n, l], -1.0, 1.0);
    let ds = random(rng, &[d], 0.5, 1.5);
    let r = projector(rng, &[b, d, l]);
    let named = vec![
        ("u".into(), u.clone()),
        ("delta".into(), delta.clone()),
        ("A".into(), a.clone()),
        ("B".into(), bm.clone()),
        ("C".into(), cm.clone()),
        ("D".into(), ds.clone()),
    ];
    check(
        "selective_scan",
        &named,
        &|| project(selective_scan(&u, &delta, &a, &bm, &cm, &ds, mode)?, &r),
        tol,
        cfg,
    )
}

fn case_scan_sequential(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    case_scan(ScanMode::Sequential, rng, cfg, tol)
}

fn case_scan_chunked(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    case_scan(ScanMode::Chunked { chunk: 5 }, rng, cfg, tol)
}

fn small_ssm() -> SsmConfig {
    SsmConfig {
        state_dim: 4,
        ..SsmConfig::default()
    }
}

fn case_ss2d(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let m = Ss2d::<f64>::new(&mut Init::new(rng.gen()), 4, &small_ssm())?;
    let x = random(rng, &[2, 4, 4, 4], -1.0, 1.0);
    let r = projector(rng, &[2, 4, 4, 4]);
    check("ss2d", &with_input(&m, &[("x", &x)]), &|| project(m.forward(&x)?, &r), tol, cfg)
}

fn case_cbam(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let cbam_cfg = CbamConfig {
        reduction: 4,
        ..CbamConfig::default()
    };
    let m = Cbam::<f64>::new(&mut Init::new(rng.gen()), 8, &cbam_cfg)?;
    let x = random(rng, &[2, 8, 8, 8], -1.0, 1.0);
    let r = projector(rng, &[2, 8, 8, 8]);
    check("cbam", &with_input(&m, &[("x", &x)]), &|| project(m.forward(&x)?, &r), tol, cfg)
}

fn case_attention_gate(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let m = AttentionGate::<f64>::new(&mut Init::new(rng.gen()), 4, 6, 2);
    let skip = random(rng, &[2, 4, 8, 8], -1.0, 1.0);
    let gate = random(rng, &[2, 6, 8, 8], -1.0, 1.0);
    let r = projector(rng, &[2, 4, 8, 8]);
    check(
        "attention_gate",
        &with_input(&m, &[("skip", &skip), ("gate", &gate)]),
        &|| project(m.forward(&skip, &gate)?, &r),
        tol,
        cfg,
    )
}

fn case_sk(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let sk_cfg = SkConfig {
        min_hidden: 4,
        ..SkConfig::default()
    };
    let m = SkBottleneck::<f64>::new(&mut Init::new(rng.gen()), 8, &sk_cfg)?;
    let x = random(rng, &[2, 8, 4, 4], -1.0, 1.0);
    let r = projector(rng, &[2, 8, 4, 4]);
    check("sk_bottleneck", &with_input(&m, &[("x", &x)]), &|| project(m.forward(&x, true)?, &r), tol, cfg)
}

fn case_res_vss(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let vss_cfg = ResVssConfig {
        ssm: small_ssm(),
        ..ResVssConfig::default()
    };
    let m = ResVss::<f64>::new(&mut Init::new(rng.gen()), 4, &vss_cfg)?;
    let x = random(rng, &[2, 4, 8, 8], -1.0, 1.0);
    let r = projector(rng, &[2, 4, 8, 8]);
    check("res_vss", &with_input(&m, &[("x", &x)]), &|| project(m.forward(&x)?, &r), tol, cfg)
}

fn case_model(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    // at 64×64 every instance norm sees at least 4×4 pixels; smaller inputs
    // leave 2×2 or 1×1 stages whose tiny spread amplifies gradients so far
    // that central differences cross ReLU kinks at any usable step
    let mut model_cfg = ModelConfig::toy(64, 64, 2);
    model_cfg.vss.ssm = small_ssm();
    model_cfg.sk.min_hidden = 4;
    let net = SegNet::<f64>::new(model_cfg, rng.gen())?;
    // zero-initialised offsets put whole ReLU inputs exactly on the kink
    for (name, t) in net.named_params() {
        if name.ends_with("bias") || name.ends_with("beta") {
            t.update_data(|d| d.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1)));
        }
    }
    let x = random(rng, &[1, 3, 64, 64], 0.0, 1.0);
    let r = projector(rng, &[1, 1, 64, 64]);
    let sampled = GradCheckConfig {
        max_elements_per_tensor: cfg.max_elements_per_tensor.min(2),
        ..*cfg
    };
    // Eval-mode norms: batch statistics over the deepest stage make central
    // differences meaningless; the norm cases cover batch statistics.
    check("model", &with_input(&net, &[("x", &x)]), &|| terms(net.forward(&x, false)?, &r), tol, &sampled)
}

fn loss_pair(rng: &mut ChaCha8Rng) -> (Tensor<f64>, Tensor<f64>) {
    let n = 2 * 8 * 8;
    let y = Tensor::from_vec((0..n).map(|_| f64::from(rng.gen_bool(0.4) as u8)).collect(), &[2, 1, 8, 8]).expect("valid shape");
    (y, random(rng, &[2, 1, 8, 8], 0.02, 0.98))
}

fn case_dice(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let (y, p) = loss_pair(rng);
    check("dice", &vec![("p".into(), p.clone())], &|| dice_loss(&y, &p, DEFAULT_EPSILON), tol, cfg)
}

fn case_tversky(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let (y, p) = loss_pair(rng);
    check("tversky", &vec![("p".into(), p.clone())], &|| tversky_loss(&y, &p, 0.3, 0.7, DEFAULT_EPSILON), tol, cfg)
}

fn case_combined(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, tol: f64) -> Result<CheckResult> {
    let (y, p) = loss_pair(rng);
    let loss_cfg = LossConfig::default();
    check("combined", &vec![("p".into(), p.clone())], &|| combined_loss(&y, &p, &loss_cfg), tol, cfg)
}

pub fn suite() -> Vec<GradCase> {
    let block = |name, run| GradCase {
        name,
        tolerance: BLOCK_TOLERANCE,
        run,
    };
    let loss = |name, run| GradCase {
        name,
        tolerance: LOSS_TOLERANCE,
        run,
    };
    vec![
        block("conv", case_conv),
        block("batch_norm", case_batch_norm),
        block("instance_norm", case_instance_norm),
        block("activations", case_activations),
        block("resample", case_resample),
        block("selective_scan", case_scan_sequential),
        block("selective_scan_chunked", case_scan_chunked),
        block("ss2d", case_ss2d),
        block("cbam", case_cbam),
        block("attention_gate", case_attention_gate),
        block("sk_bottleneck", case_sk),
        block("res_vss", case_res_vss),
        block("model", case_model),
        loss("dice", case_dice),
        loss("tversky", case_tversky),
        loss("combined", case_combined),
    ]
}

/// Runs every case whose name contains `filter` (all when `None`).
pub fn run_suite(filter: Option<&str>, cfg: &GradCheckConfig) -> Result<Vec<CheckResult>> {
    let cases: Vec<GradCase> = suite()
        .into_iter()
        .filter(|c| filter.is_none_or(|f| c.name.contains(f)))
        .collect();
    if cases.is_empty() {
        let names: Vec<&str> = suite().iter().map(|c| c.name).collect();
        return Err(Error::Usage(format!(
            "no gradient check matches '{}' (available: {})",
            filter.unwrap_or(""),
            names.join(", ")
        )));
    }
    cases.iter().map(|c| c.run(cfg)).collect()
}
