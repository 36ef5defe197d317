//! Randomised invariants.

use lesionseg::attention::{AttentionGate, Cbam, CbamConfig, SkBottleneck, SkConfig};
use lesionseg::data::{split, Ordering, Sample, SplitSpec};
use lesionseg::nn::Init;
use lesionseg::objectives::{combined_loss, dice_loss, dsc, iou, tversky_loss, ConfusionCounts, LossConfig};
use lesionseg::ssm::{cross_scan, selective_scan, ScanDirection, ScanMode};
use lesionseg::tensor::{conv2d, Conv2dParams};
use lesionseg::train::PlateauScheduler;
use lesionseg::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(seed: u64, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| r.gen_range(lo..hi)).collect(), shape).unwrap()
}

fn binary(seed: u64, n: usize) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| f64::from(r.gen_bool(0.4) as u8)).collect()
}

fn unit(seed: u64, n: usize) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| r.gen_range(0.0..=1.0)).collect()
}

fn vec1(v: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(v.to_vec(), &[v.len()]).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_is_linear_in_its_input(seed in any::<u64>(), cin in 1usize..4, cout in 1usize..4, k in prop::sample::select(vec![1usize, 3]), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let x1 = random(seed, &[1, cin, 6, 5], -1.0, 1.0);
        let x2 = random(seed ^ 1, &[1, cin, 6, 5], -1.0, 1.0);
        let w = random(seed ^ 2, &[cout, cin, k, k], -1.0, 1.0);
        let p = Conv2dParams::same(k, 1);
        let lhs = conv2d(&x1.scale(a).add(&x2.scale(b)).unwrap(), &w, None, p).unwrap().to_vec();
        let y1 = conv2d(&x1, &w, None, p).unwrap().to_vec();
        let y2 = conv2d(&x2, &w, None, p).unwrap().to_vec();
        let rhs: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn depthwise_conv_equals_per_channel_conv(seed in any::<u64>(), c in 1usize..6, dil in 1usize..3) {
        let x = random(seed, &[2, c, 7, 6], -1.0, 1.0);
        let w = random(seed ^ 3, &[c, 1, 3, 3], -1.0, 1.0);
        let p = Conv2dParams::same(3, dil).with_groups(c);
        let y = conv2d(&x, &w, None, p).unwrap();
        for ch in 0..c {
            let xc = x.slice(1, ch, 1).unwrap();
            let wc = w.slice(0, ch, 1).unwrap();
            let yc = conv2d(&xc, &wc, None, Conv2dParams::same(3, dil)).unwrap().to_vec();
            prop_assert!(close(&y.slice(1, ch, 1).unwrap().to_vec(), &yc, 1e-12));
        }
    }

    #[test]
    fn each_direction_round_trips(seed in any::<u64>(), h in 1usize..9, w in 1usize..9) {
        let x = random(seed, &[1, 2, h, w], -1.0, 1.0);
        let seqs = cross_scan(&x).unwrap();
        let xv = x.to_vec();
        for (d, seq) in ScanDirection::ALL.iter().zip(&seqs) {
            let inv = d.inverse_order(h, w);
            let sv = seq.to_vec();
            for c in 0..2 {
                for s in 0..h * w {
                    prop_assert_eq!(sv[c * h * w + inv[s]], xv[c * h * w + s]);
                }
            }
        }
    }

    #[test]
    fn cbam_and_gate_preserve_shape_and_only_attenuate(seed in any::<u64>(), c in 2usize..10, h in 1usize..6, w in 1usize..6) {
        let x = random(seed, &[2, c, h, w], -3.0, 3.0);
        let cfg = CbamConfig { reduction: 2, ..CbamConfig::default() };
        let cbam = Cbam::<f64>::new(&mut Init::new(seed), c, &cfg).unwrap();
        let y = cbam.forward(&x).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
        prop_assert!(y.to_vec().iter().zip(x.to_vec()).all(|(o, i)| o.abs() <= i.abs()));

        let gate = random(seed ^ 5, &[2, c + 1, h, w], -3.0, 3.0);
        let ag = AttentionGate::<f64>::new(&mut Init::new(seed ^ 6), c, c + 1, c.div_ceil(2));
        let y = ag.forward(&x, &gate).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
        prop_assert!(y.to_vec().iter().zip(x.to_vec()).all(|(o, i)| o.abs() <= i.abs()));
    }

    #[test]
    fn selective_kernel_weights_lie_on_the_simplex(seed in any::<u64>(), c in prop::sample::select(vec![4usize, 8, 12]), k in 2usize..4) {
        let cfg = SkConfig { branch_dilations: (1..=k).collect(), min_hidden: 2, ..SkConfig::default() };
        let sk = SkBottleneck::<f64>::new(&mut Init::new(seed), c, &cfg).unwrap();
        let x = random(seed ^ 7, &[2, c, 4, 4], -2.0, 2.0);
        let (y, wts) = sk.forward_with_weights(&x, true).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
        prop_assert_eq!(wts.shape(), &[2, k, c, 1]);
        let wv = wts.to_vec();
        for b in 0..2 {
            for ch in 0..c {
                let col: Vec<f64> = (0..k).map(|i| wv[(b * k + i) * c + ch]).collect();
                prop_assert!(col.iter().all(|&v| (0.0..=1.0).contains(&v)));
                prop_assert!((col.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn losses_lie_in_unit_interval(seed in any::<u64>(), n in 1usize..200) {
        let (y, p) = (vec1(&binary(seed, n)), vec1(&unit(seed ^ 9, n)));
        let cfg = LossConfig::default();
        for l in [
            dice_loss(&y, &p, cfg.epsilon).unwrap().item(),
            tversky_loss(&y, &p, cfg.alpha, cfg.beta, cfg.epsilon).unwrap().item(),
            combined_loss(&y, &p, &cfg).unwrap().item(),
        ] {
            prop_assert!((0.0..=1.0).contains(&l), "loss {}", l);
        }
    }

    #[test]
    fn raising_a_foreground_probability_never_raises_the_loss(seed in any::<u64>(), n in 1usize..100) {
        let yv = binary(seed, n);
        let y = vec1(&yv);
        let cfg = LossConfig::default();
        for which in 0..2 {
            let p = Tensor::leaf(unit(seed ^ 11, n), &[n], true).unwrap();
            let l = if which == 0 {
                dice_loss(&y, &p, cfg.epsilon).unwrap()
            } else {
                tversky_loss(&y, &p, cfg.alpha, cfg.beta, cfg.epsilon).unwrap()
            };
            l.backward().unwrap();
            let g = p.grad().unwrap().to_vec();
            for i in (0..n).filter(|&i| yv[i] == 1.0) {
                prop_assert!(g[i] <= 0.0, "loss {} grad {} at {}", which, g[i], i);
            }
        }
    }

    #[test]
    fn scheduler_rate_is_a_power_of_the_factor(seed in any::<u64>(), patience in 1usize..6, epochs in 1usize..80) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut s = PlateauScheduler::new(2e-4, 0.5, patience, 1e-6, None);
        for _ in 0..epochs {
            s.step(r.gen_range(0.0..1.0));
            prop_assert_eq!(s.current_lr / s.initial_lr, 0.5f64.powi(s.reductions as i32));
        }
    }

    #[test]
    fn resized_masks_stay_binary_at_the_target_size(seed in any::<u64>(), h in 1u32..300, w in 1u32..300, th in 1usize..64, tw in 1usize..64) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let cell = r.gen_range(1..8);
        let img = image::RgbImage::from_fn(w, h, |x, y| image::Rgb([(x % 256) as u8, (y % 256) as u8, 7]));
        let mask = image::GrayImage::from_fn(w, h, |x, y| image::Luma([if (x / cell + y / cell) % 2 == 0 { 255 } else { 0 }]));
        let s = Sample::from_images("p", &img, &mask, (th, tw)).unwrap();
        prop_assert_eq!((s.height, s.width), (th, tw));
        prop_assert_eq!(s.rgb.len(), 3 * th * tw);
        prop_assert!(s.mask.iter().all(|&v| v <= 1));
    }

    #[test]
    fn splits_are_disjoint(n in 1usize..500, frac in 0.0f64..1.0, seed in any::<u64>(), shuffle in any::<bool>()) {
        let train = ((n as f64) * frac) as usize;
        let test = r_count(seed, n - train);
        let spec = SplitSpec {
            seed,
            ordering: if shuffle { Ordering::SeededShuffle } else { Ordering::Lexicographic },
            ..SplitSpec::new(train, test)
        };
        let s = split(n, &spec).unwrap();
        prop_assert_eq!((s.train.len(), s.test.len()), (train, test));
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), train + test);
        prop_assert!(all.iter().all(|&i| i < n));
        prop_assert_eq!(s, split(n, &spec).unwrap());
    }
}

fn r_count(seed: u64, max: usize) -> usize {
    ChaCha8Rng::seed_from_u64(seed ^ 13).gen_range(0..=max)
}

#[test]
fn balanced_tversky_equals_dice() {
    for i in 0..100u64 {
        let n = 1 + (i as usize * 7) % 120;
        let (y, p) = (vec1(&binary(i, n)), vec1(&unit(i + 1000, n)));
        // the smoothing terms enter the two ratios differently; the identity is exact at ε = 0
        let d = dice_loss(&y, &p, 0.0).unwrap().item();
        let t = tversky_loss(&y, &p, 0.5, 0.5, 0.0).unwrap().item();
        assert!((d - t).abs() <= 1e-6, "pair {i}: dice {d} tversky {t}");
    }
}

#[test]
fn combined_loss_is_the_even_mix() {
    let cfg = LossConfig::default();
    for i in 0..100u64 {
        let n = 1 + (i as usize * 11) % 150;
        let (y, p) = (vec1(&binary(i, n)), vec1(&unit(i + 2000, n)));
        let d = dice_loss(&y, &p, cfg.epsilon).unwrap().item();
        let t = tversky_loss(&y, &p, cfg.alpha, cfg.beta, cfg.epsilon).unwrap().item();
        let c = combined_loss(&y, &p, &cfg).unwrap().item();
        assert!((c - (0.5 * d + 0.5 * t)).abs() <= 1e-7);
    }
}

#[test]
fn perfect_prediction_costs_almost_nothing() {
    let cfg = LossConfig::default();
    for i in 0..50u64 {
        let n = 1 + (i as usize * 13) % 150;
        let yv = binary(i, n);
        let (y, p) = (vec1(&yv), vec1(&yv));
        for l in [
            dice_loss(&y, &p, cfg.epsilon).unwrap().item(),
            tversky_loss(&y, &p, cfg.alpha, cfg.beta, cfg.epsilon).unwrap().item(),
            combined_loss(&y, &p, &cfg).unwrap().item(),
        ] {
            assert!(l <= 2.0 * cfg.epsilon, "pair {i}: {l}");
        }
    }
}

#[test]
fn dsc_and_iou_are_linked() {
    let mut r = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let c = ConfusionCounts {
            tp: r.gen_range(0..10_000),
            fp: r.gen_range(0..10_000),
            fn_: r.gen_range(0..10_000),
            tn: r.gen_range(0..10_000),
        };
        if c.tp + c.fp + c.fn_ == 0 {
            continue;
        }
        let (d, j) = (dsc(&c, 0.0), iou(&c, 0.0));
        assert!((d - 2.0 * j / (1.0 + j)).abs() <= 1e-9, "{c:?}");
    }
}

#[test]
fn long_scan_stays_bounded_in_single_precision() {
    let (d, n, l) = (4, 16, 4096);
    let mut r = ChaCha8Rng::seed_from_u64(19);
    let mut v = |len: usize, lo: f64, hi: f64| (0..len).map(|_| r.gen_range(lo..hi)).collect::<Vec<f64>>();
    let (u, delta, a, bm, cm, ds) = (v(d * l, -1.0, 1.0), v(d * l, 1e-3, 0.5), v(d * n, -2.0, -0.05), v(n * l, -1.0, 1.0), v(n * l, -1.0, 1.0), v(d, -1.0, 1.0));
    let run64 = |mode| {
        let t = |x: &Vec<f64>, s: &[usize]| Tensor::<f64>::from_vec(x.clone(), s).unwrap();
        selective_scan(&t(&u, &[1, d, l]), &t(&delta, &[1, d, l]), &t(&a, &[d, n]), &t(&bm, &[1, n, l]), &t(&cm, &[1, n, l]), &t(&ds, &[d]), mode)
            .unwrap()
            .to_vec()
    };
    let run32 = |mode| {
        let t = |x: &Vec<f64>, s: &[usize]| Tensor::<f32>::from_vec(x.iter().map(|&e| e as f32).collect(), s).unwrap();
        selective_scan(&t(&u, &[1, d, l]), &t(&delta, &[1, d, l]), &t(&a, &[d, n]), &t(&bm, &[1, n, l]), &t(&cm, &[1, n, l]), &t(&ds, &[d]), mode)
            .unwrap()
            .to_vec()
    };
    // |h_k| ≤ Δmax·|B u|max / (1 − exp(−Δmax |a_k|)) by induction on t
    let amin = a.iter().map(|x| x.abs()).fold(f64::MAX, f64::min);
    let hbound = 0.5 / (1.0 - (-0.5 * amin).exp());
    let ybound = n as f64 * hbound + 1.0;
    let reference = run64(ScanMode::Sequential);
    for mode in [ScanMode::Sequential, ScanMode::Chunked { chunk: 64 }] {
        let y = run32(mode);
        assert!(y.iter().all(|v| v.is_finite() && (*v as f64).abs() <= ybound));
        let err = y.iter().zip(&reference).map(|(p, q)| (*p as f64 - q).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-3, "{mode:?}: {err}");
    }
}
