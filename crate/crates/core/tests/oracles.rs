//! Independent scalar oracles and hand-evaluated examples.

use approx::assert_relative_eq;
use lesionseg::attention::{AttentionGate, Cbam, CbamConfig};
use lesionseg::data::{batch_order, split, Sample, SplitSpec, DEFAULT_TARGET};
use lesionseg::model::{profile, ModelConfig, StagePlan};
use lesionseg::nn::{Conv2d, Init};
use lesionseg::objectives::{combined_loss, confusion_counts, dice_loss, dsc, iou, tversky_loss, ConfusionCounts, LossConfig};
use lesionseg::ssm::{cross_merge, cross_scan, selective_scan, ScanMode, Ss2d, SsmConfig};
use lesionseg::tensor::{conv2d, normalize, Conv2dParams, NormKind};
use lesionseg::train::{Adam, AdamConfig, PlateauScheduler};
use lesionseg::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| r.gen_range(lo..hi)).collect(), shape).unwrap()
}

fn randomize_bias(r: &mut ChaCha8Rng, conv: &Conv2d<f64>) {
    if let Some(b) = &conv.bias {
        b.update_data(|d| d.iter_mut().for_each(|v| *v = r.gen_range(-0.5..0.5)));
    }
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

// ---------------------------------------------------------------- conv

#[allow(clippy::too_many_arguments)]
fn direct_conv(
    x: &[f64],
    (b, cin, h, w): (usize, usize, usize, usize),
    wt: &[f64],
    (cout, k): (usize, usize),
    bias: Option<&[f64]>,
    p: Conv2dParams,
) -> (Vec<f64>, usize, usize) {
    let ho = (h + 2 * p.padding - p.dilation * (k - 1) - 1) / p.stride + 1;
    let wo = (w + 2 * p.padding - p.dilation * (k - 1) - 1) / p.stride + 1;
    let (cin_g, cout_g) = (cin / p.groups, cout / p.groups);
    let mut out = vec![0.0; b * cout * ho * wo];
    for n in 0..b {
        for co in 0..cout {
            let g = co / cout_g;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = bias.map_or(0.0, |bb| bb[co]);
                    for ci in 0..cin_g {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * p.stride + ky * p.dilation) as isize - p.padding as isize;
                                let ix = (ox * p.stride + kx * p.dilation) as isize - p.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xi = ((n * cin + g * cin_g + ci) * h + iy as usize) * w + ix as usize;
                                let wi = ((co * cin_g + ci) * k + ky) * k + kx;
                                s += x[xi] * wt[wi];
                            }
                        }
                    }
                    out[((n * cout + co) * ho + oy) * wo + ox] = s;
                }
            }
        }
    }
    (out, ho, wo)
}

#[test]
fn conv_matches_direct_loop_on_3x3_example() {
    let mut r = rng(1);
    let x = random(&mut r, &[1, 4, 5, 5], -1.0, 1.0);
    let wt = random(&mut r, &[2, 4, 3, 3], -1.0, 1.0);
    let p = Conv2dParams::same(3, 1);
    let y = conv2d(&x, &wt, None, p).unwrap();
    let (want, _, _) = direct_conv(&x.to_vec(), (1, 4, 5, 5), &wt.to_vec(), (2, 3), None, p);
    assert!(max_rel(&y.to_vec(), &want) <= 1e-5);
}

#[test]
fn conv_matches_direct_loop_across_configurations() {
    let mut r = rng(2);
    for case in 0..40 {
        let groups = [1, 2][case % 2];
        let cin = groups * r.gen_range(1..4);
        let cout = groups * r.gen_range(1..4);
        let k = [1, 3, 5][case % 3];
        let p = Conv2dParams {
            stride: r.gen_range(1..3),
            padding: r.gen_range(0..3),
            dilation: r.gen_range(1..3),
            groups,
        };
        let (h, w) = (r.gen_range(6..11), r.gen_range(6..11));
        if h + 2 * p.padding < p.dilation * (k - 1) + 1 || w + 2 * p.padding < p.dilation * (k - 1) + 1 {
            continue;
        }
        let b = r.gen_range(1..3);
        let x = random(&mut r, &[b, cin, h, w], -1.0, 1.0);
        let wt = random(&mut r, &[cout, cin / groups, k, k], -1.0, 1.0);
        let bias = random(&mut r, &[cout], -1.0, 1.0);
        let y = conv2d(&x, &wt, Some(&bias), p).unwrap();
        let (want, ho, wo) = direct_conv(&x.to_vec(), (b, cin, h, w), &wt.to_vec(), (cout, k), Some(&bias.to_vec()), p);
        assert_eq!(y.shape(), &[b, cout, ho, wo]);
        assert!(max_rel(&y.to_vec(), &want) <= 1e-9, "case {case}: {p:?} k={k}");
    }
}

#[test]
fn conv_parameter_count_hand_example() {
    let conv = Conv2d::<f32>::k3(&mut Init::new(0), 16, 32);
    let n = conv.weight.numel() + conv.bias.as_ref().map_or(0, |b| b.numel());
    assert_eq!(n, 3 * 3 * 16 * 32 + 32);
    assert_eq!(n, 4640);
}

// ---------------------------------------------------------------- norms

#[test]
fn normalised_moments_match_scalar_recomputation() {
    let mut r = rng(3);
    let x = random(&mut r, &[2, 3, 4, 4], -3.0, 5.0);
    let g = Tensor::ones(&[3]);
    let b = Tensor::zeros(&[3]);
    for kind in [NormKind::Instance, NormKind::Batch] {
        let y = normalize(&x, kind, &g, &b, 1e-5, None, true).unwrap().to_vec();
        let groups: Vec<Vec<usize>> = match kind {
            NormKind::Instance => (0..6).map(|s| (s * 16..(s + 1) * 16).collect()).collect(),
            NormKind::Batch => (0..3)
                .map(|c| (0..2).flat_map(|n| ((n * 3 + c) * 16..(n * 3 + c + 1) * 16).collect::<Vec<_>>()).collect())
                .collect(),
        };
        for idx in groups {
            let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
            let v = idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>() / idx.len() as f64;
            assert!(m.abs() <= 1e-6, "{kind:?} mean {m}");
            assert!((v - 1.0).abs() <= 1e-4, "{kind:?} var {v}");
        }
    }
}

// ---------------------------------------------------------------- scan

struct ScanCase {
    b: usize,
    d: usize,
    l: usize,
    n: usize,
    u: Vec<f64>,
    delta: Vec<f64>,
    a: Vec<f64>,
    bm: Vec<f64>,
    cm: Vec<f64>,
    dskip: Vec<f64>,
}

impl ScanCase {
    fn random(r: &mut ChaCha8Rng, b: usize, d: usize, l: usize, n: usize) -> Self {
        let mut v = |len: usize, lo: f64, hi: f64| (0..len).map(|_| r.gen_range(lo..hi)).collect::<Vec<f64>>();
        Self {
            b,
            d,
            l,
            n,
            u: v(b * d * l, -1.0, 1.0),
            delta: v(b * d * l, 1e-3, 0.5),
            a: v(d * n, -2.0, -0.05),
            bm: v(b * n * l, -1.0, 1.0),
            cm: v(b * n * l, -1.0, 1.0),
            dskip: v(d, -1.0, 1.0),
        }
    }

    /// `h_t = exp(Δ_t a) h_{t-1} + Δ_t B_t u_t`, `y_t = C_t · h_t + D u_t`.
    fn naive(&self) -> Vec<f64> {
        let (b, d, l, n) = (self.b, self.d, self.l, self.n);
        let mut y = vec![0.0; b * d * l];
        for bi in 0..b {
            for di in 0..d {
                let mut h = vec![0.0; n];
                for t in 0..l {
                    let i = (bi * d + di) * l + t;
                    let mut acc = 0.0;
                    for k in 0..n {
                        let bk = self.bm[(bi * n + k) * l + t];
                        let ck = self.cm[(bi * n + k) * l + t];
                        h[k] = (self.delta[i] * self.a[di * n + k]).exp() * h[k] + self.delta[i] * bk * self.u[i];
                        acc += ck * h[k];
                    }
                    y[i] = acc + self.dskip[di] * self.u[i];
                }
            }
        }
        y
    }

    fn run(&self, mode: ScanMode) -> Vec<f64> {
        let (b, d, l, n) = (self.b, self.d, self.l, self.n);
        let t = |v: &Vec<f64>, s: &[usize]| Tensor::from_vec(v.clone(), s).unwrap();
        selective_scan(
            &t(&self.u, &[b, d, l]),
            &t(&self.delta, &[b, d, l]),
            &t(&self.a, &[d, n]),
            &t(&self.bm, &[b, n, l]),
            &t(&self.cm, &[b, n, l]),
            &t(&self.dskip, &[d]),
            mode,
        )
        .unwrap()
        .to_vec()
    }
}

#[test]
fn scan_hand_sized_example_matches_sequential_loop() {
    let case = ScanCase::random(&mut rng(4), 1, 2, 12, 4);
    let want = case.naive();
    assert!(max_rel(&case.run(ScanMode::Sequential), &want) <= 1e-5);
    assert!(max_rel(&case.run(ScanMode::Chunked { chunk: 5 }), &want) <= 1e-5);
}

#[test]
fn scan_matches_naive_recurrence_on_random_instances() {
    let mut r = rng(5);
    for i in 0..120 {
        let l = if i % 10 == 0 { 256 } else { r.gen_range(1..=64) };
        let n = r.gen_range(1..=16);
        let (b, d) = (r.gen_range(1..=2), r.gen_range(1..=3));
        let case = ScanCase::random(&mut r, b, d, l, n);
        let want = case.naive();
        let chunk = r.gen_range(1..=l.max(2));
        for mode in [ScanMode::Sequential, ScanMode::Chunked { chunk }] {
            let err = max_rel(&case.run(mode), &want);
            assert!(err <= 1e-5, "instance {i} L={l} N={n} {mode:?}: {err}");
        }
    }
}

#[test]
fn cross_merge_of_cross_scan_is_four_times_input() {
    let x = random(&mut rng(6), &[2, 3, 4, 5], -1.0, 1.0);
    let seqs = cross_scan(&x).unwrap();
    let y = cross_merge(&seqs, 4, 5).unwrap();
    let want: Vec<f64> = x.to_vec().iter().map(|v| 4.0 * v).collect();
    assert!(max_rel(&y.to_vec(), &want) <= 1e-15);
}

#[test]
fn ss2d_single_pixel_is_sum_of_four_closed_forms() {
    let mut r = rng(7);
    let (d, n) = (6, 4);
    let cfg = SsmConfig {
        state_dim: n,
        ..SsmConfig::default()
    };
    let ss = Ss2d::<f64>::new(&mut Init::new(8), d, &cfg).unwrap();
    let x = random(&mut r, &[1, d, 1, 1], -1.0, 1.0);
    let u = x.to_vec();
    let mut want = vec![0.0; d];
    for br in &ss.branches {
        let rank = br.dt_proj.shape()[1];
        let xp = br.x_proj.to_vec();
        let proj = |row: usize| (0..d).map(|c| xp[row * d + c] * u[c]).sum::<f64>();
        let dt_low: Vec<f64> = (0..rank).map(proj).collect();
        let bv: Vec<f64> = (0..n).map(|k| proj(rank + k)).collect();
        let cv: Vec<f64> = (0..n).map(|k| proj(rank + n + k)).collect();
        let (dtp, dtb, ds) = (br.dt_proj.to_vec(), br.dt_bias.to_vec(), br.d_skip.to_vec());
        for c in 0..d {
            let delta = softplus((0..rank).map(|j| dtp[c * rank + j] * dt_low[j]).sum::<f64>() + dtb[c]);
            // one step from a zero state: h = Δ B u
            want[c] += (0..n).map(|k| cv[k] * delta * bv[k] * u[c]).sum::<f64>() + ds[c] * u[c];
        }
    }
    assert!(max_rel(&ss.forward(&x).unwrap().to_vec(), &want) <= 1e-12);
}

// ---------------------------------------------------------------- attention

#[test]
fn cbam_matches_scalar_oracle() {
    let mut r = rng(9);
    let (c, h, w) = (8, 4, 4);
    let cbam = Cbam::<f64>::new(&mut Init::new(10), c, &CbamConfig::default()).unwrap();
    for conv in [&cbam.fc1, &cbam.fc2, &cbam.spatial] {
        randomize_bias(&mut r, conv);
    }
    let x = random(&mut r, &[1, c, h, w], -1.0, 1.0);
    let xv = x.to_vec();
    let hid = cbam.fc1.weight.shape()[0];
    let (w1, b1) = (cbam.fc1.weight.to_vec(), cbam.fc1.bias.as_ref().unwrap().to_vec());
    let (w2, b2) = (cbam.fc2.weight.to_vec(), cbam.fc2.bias.as_ref().unwrap().to_vec());
    let mlp = |v: &[f64]| -> Vec<f64> {
        let z: Vec<f64> = (0..hid)
            .map(|j| ((0..c).map(|i| w1[j * c + i] * v[i]).sum::<f64>() + b1[j]).max(0.0))
            .collect();
        (0..c).map(|i| (0..hid).map(|j| w2[i * hid + j] * z[j]).sum::<f64>() + b2[i]).collect()
    };
    let plane = |ch: usize| &xv[ch * h * w..(ch + 1) * h * w];
    let avg: Vec<f64> = (0..c).map(|ch| plane(ch).iter().sum::<f64>() / (h * w) as f64).collect();
    let mx: Vec<f64> = (0..c).map(|ch| plane(ch).iter().cloned().fold(f64::MIN, f64::max)).collect();
    let (ma, mm) = (mlp(&avg), mlp(&mx));
    let mc: Vec<f64> = (0..c).map(|i| sigmoid(ma[i] + mm[i])).collect();
    let refined: Vec<f64> = (0..c * h * w).map(|i| xv[i] * mc[i / (h * w)]).collect();

    let k = cbam.spatial.weight.shape()[2];
    let ws = cbam.spatial.weight.to_vec();
    let bs = cbam.spatial.bias.as_ref().unwrap().to_vec()[0];
    let pooled = |kind: usize, y: usize, x: usize| {
        let vals = (0..c).map(|ch| refined[(ch * h + y) * w + x]);
        if kind == 0 {
            vals.sum::<f64>() / c as f64
        } else {
            vals.fold(f64::MIN, f64::max)
        }
    };
    let pad = (k / 2) as isize;
    let mut want = vec![0.0; c * h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = bs;
            for kind in 0..2 {
                for ky in 0..k {
                    for kx in 0..k {
                        let (iy, ix) = (y as isize + ky as isize - pad, x as isize + kx as isize - pad);
                        if iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize {
                            s += ws[(kind * k + ky) * k + kx] * pooled(kind, iy as usize, ix as usize);
                        }
                    }
                }
            }
            let ms = sigmoid(s);
            for ch in 0..c {
                want[(ch * h + y) * w + x] = refined[(ch * h + y) * w + x] * ms;
            }
        }
    }
    assert!(max_rel(&cbam.forward(&x).unwrap().to_vec(), &want) <= 1e-5);
}

#[test]
fn attention_gate_matches_scalar_oracle() {
    let mut r = rng(11);
    let (c, h, w, inter) = (8, 4, 4, 4);
    let ag = AttentionGate::<f64>::new(&mut Init::new(12), c, c, inter);
    for conv in [&ag.w_gate, &ag.w_skip, &ag.psi] {
        randomize_bias(&mut r, conv);
    }
    let skip = random(&mut r, &[1, c, h, w], -1.0, 1.0);
    let gate = random(&mut r, &[1, c, h, w], -1.0, 1.0);
    let (sv, gv) = (skip.to_vec(), gate.to_vec());
    let (wg, bg) = (ag.w_gate.weight.to_vec(), ag.w_gate.bias.as_ref().unwrap().to_vec());
    let (wsk, bsk) = (ag.w_skip.weight.to_vec(), ag.w_skip.bias.as_ref().unwrap().to_vec());
    let (wp, bp) = (ag.psi.weight.to_vec(), ag.psi.bias.as_ref().unwrap().to_vec()[0]);
    let hw = h * w;
    let mut want = vec![0.0; c * hw];
    for p in 0..hw {
        let q: Vec<f64> = (0..inter)
            .map(|j| {
                let g = (0..c).map(|i| wg[j * c + i] * gv[i * hw + p]).sum::<f64>() + bg[j];
                let s = (0..c).map(|i| wsk[j * c + i] * sv[i * hw + p]).sum::<f64>() + bsk[j];
                (g + s).max(0.0)
            })
            .collect();
        let alpha = sigmoid((0..inter).map(|j| wp[j] * q[j]).sum::<f64>() + bp);
        for i in 0..c {
            want[i * hw + p] = sv[i * hw + p] * alpha;
        }
    }
    assert!(max_rel(&ag.forward(&skip, &gate).unwrap().to_vec(), &want) <= 1e-5);
}

// ---------------------------------------------------------------- model plan

#[test]
fn stage_plan_examples() {
    let plan = StagePlan::new(192, 256, 16).unwrap();
    assert_eq!(
        plan.as_tuples(),
        vec![(16, 192, 256), (32, 96, 128), (64, 48, 64), (128, 24, 32), (256, 12, 16), (512, 6, 8)]
    );
    assert_eq!(StagePlan::new(64, 64, 8).unwrap().deepest().as_tuple(), (256, 2, 2));
}

#[test]
fn profiler_single_conv_row_matches_hand_count() {
    let p = profile(&ModelConfig::default()).unwrap();
    let row = p.rows.iter().find(|r| r.layer == "encoder1.conv.conv").expect("first encoder conv row");
    assert_eq!(row.params, 4640);
}

// ---------------------------------------------------------------- objectives

fn vec1(v: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(v.to_vec(), &[v.len()]).unwrap()
}

#[test]
fn dice_hand_example() {
    let l = dice_loss(&vec1(&[1.0, 1.0, 0.0, 0.0]), &vec1(&[0.8, 0.6, 0.2, 0.4]), 0.0).unwrap();
    assert_relative_eq!(l.item(), 1.0 - 2.8 / 4.0, epsilon = 1e-12);
    assert_relative_eq!(l.item(), 0.30, epsilon = 1e-12);
}

#[test]
fn tversky_hand_example() {
    let l = tversky_loss(&vec1(&[1.0, 1.0, 0.0, 0.0]), &vec1(&[0.9, 0.5, 0.3, 0.1]), 0.3, 0.7, 0.0).unwrap();
    assert_relative_eq!(l.item(), 1.0 - 1.4 / 1.86, epsilon = 1e-12);
    assert!((l.item() - 0.24731).abs() < 1e-5);
}

#[test]
fn losses_match_scalar_loops() {
    let mut r = rng(13);
    for _ in 0..20 {
        let n = r.gen_range(1..50);
        let y: Vec<f64> = (0..n).map(|_| f64::from(r.gen_bool(0.5) as u8)).collect();
        let p: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
        let (tp, sy, sp) = (
            y.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>(),
            y.iter().sum::<f64>(),
            p.iter().sum::<f64>(),
        );
        let fn_ = y.iter().zip(&p).map(|(a, b)| a * (1.0 - b)).sum::<f64>();
        let fp = y.iter().zip(&p).map(|(a, b)| (1.0 - a) * b).sum::<f64>();
        let eps = 1e-6;
        let dice = 1.0 - (2.0 * tp + eps) / (sy + sp + eps);
        let tv = 1.0 - (tp + eps) / (tp + 0.3 * fn_ + 0.7 * fp + eps);
        let (yt, pt) = (vec1(&y), vec1(&p));
        assert_relative_eq!(dice_loss(&yt, &pt, eps).unwrap().item(), dice, epsilon = 1e-12);
        assert_relative_eq!(tversky_loss(&yt, &pt, 0.3, 0.7, eps).unwrap().item(), tv, epsilon = 1e-12);
        assert_relative_eq!(
            combined_loss(&yt, &pt, &LossConfig::default()).unwrap().item(),
            0.5 * dice + 0.5 * tv,
            epsilon = 1e-12
        );
    }
}

#[test]
fn confusion_and_metric_hand_examples() {
    let c = confusion_counts(&[1.0f64, 1.0, 1.0, 0.0], &[1.0, 1.0, 0.0, 1.0]).unwrap();
    assert_eq!(c, ConfusionCounts { tp: 2, fp: 1, fn_: 1, tn: 0 });
    let c = ConfusionCounts { tp: 3, fp: 1, fn_: 1, tn: 0 };
    assert_relative_eq!(dsc(&c, 0.0), 0.75, epsilon = 1e-15);
    assert_relative_eq!(iou(&c, 0.0), 0.60, epsilon = 1e-15);
}

// ---------------------------------------------------------------- optimisation

#[test]
fn adam_first_step_hand_example() {
    let theta = Tensor::<f64>::leaf(vec![1.0], &[1], true).unwrap();
    theta.scale(0.5).sum_all().backward().unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    adam.step(std::slice::from_ref(&theta), 1e-3).unwrap();
    // scalar oracle: m̂ = g, v̂ = g², update = lr·g/(|g| + eps)
    let (g, lr, eps) = (0.5f64, 1e-3, 1e-8);
    let (m, v) = (0.1 * g / (1.0 - 0.9), 0.001 * g * g / (1.0 - 0.999));
    let want = 1.0 - lr * m / (v.sqrt() + eps);
    assert_relative_eq!(theta.item(), want, epsilon = 1e-15);
    assert!((theta.item() - 0.999).abs() < 1e-7);
}

#[test]
fn scheduler_halves_after_ten_flat_epochs() {
    let mut s = PlateauScheduler::new(2e-4, 0.5, 10, 1e-6, None);
    s.step(0.5);
    for _ in 0..9 {
        s.step(0.5);
        assert_eq!(s.current_lr, 2e-4);
    }
    s.step(0.5);
    assert_relative_eq!(s.current_lr, 1e-4, epsilon = 1e-18);
}

#[test]
fn scheduler_counter_resets_on_improvement() {
    let mut s = PlateauScheduler::new(2e-4, 0.5, 10, 1e-6, None);
    s.step(0.5);
    for _ in 0..9 {
        s.step(0.5);
    }
    s.step(0.6);
    for _ in 0..9 {
        s.step(0.6);
    }
    assert_eq!(s.current_lr, 2e-4);
}

// ---------------------------------------------------------------- data

#[test]
fn full_size_dermoscopy_frame_resizes_to_network_input() {
    let (h, w) = (2016u32, 3024u32);
    let img = image::RgbImage::from_fn(w, h, |x, y| image::Rgb([(x % 256) as u8, (y % 256) as u8, 128]));
    let mask = image::GrayImage::from_fn(w, h, |x, y| image::Luma([if (x / 100 + y / 100) % 2 == 0 { 255 } else { 0 }]));
    let s = Sample::from_images("big", &img, &mask, DEFAULT_TARGET).unwrap();
    assert_eq!((s.height, s.width), (192, 256));
    assert_eq!(s.rgb.len(), 3 * 192 * 256);
    assert!(s.mask.iter().all(|&v| v <= 1));
    assert!(s.mask.contains(&0) && s.mask.contains(&1));
}

#[test]
fn split_presets_match_dataset_sizes() {
    let isic = split(2594, &SplitSpec::isic2018()).unwrap();
    assert_eq!((isic.train.len(), isic.test.len()), (2074, 520));
    let ph2 = split(200, &SplitSpec::ph2()).unwrap();
    assert_eq!((ph2.train.len(), ph2.test.len()), (170, 30));
}

#[test]
fn epoch_permutations_differ_and_reproduce() {
    let idx: Vec<usize> = (0..40).collect();
    let e0 = batch_order(&idx, 8, true, 5, 0).unwrap();
    let e1 = batch_order(&idx, 8, true, 5, 1).unwrap();
    assert_ne!(e0, e1);
    assert_eq!(e0, batch_order(&idx, 8, true, 5, 0).unwrap());
    assert_eq!(e1, batch_order(&idx, 8, true, 5, 1).unwrap());
}
