//! Selective state-space scan and its four-direction 2D wrapper.
//!
//! Sequences use channel-major layout `[B, D, L]`: a feature map
//! `[B, D, H, W]` flattens to row-major order without a transpose, and each
//! direction is a permutation of the last axis.
//!
//! Per channel `d` and state `n` the scan computes
//!
//! ```text
//! h_t = exp(Δ_t A) ⊙ h_{t-1} + Δ_t B_t x_t,   h_0 = 0
//! y_t = C_t · h_t + D x_t
//! ```
//!
//! with input-dependent `Δ_t > 0` (per channel), `B_t`, `C_t` (per state).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{join, Init, Module, Visitor};
use crate::tensor::{conv2d, lit, Conv2dParams, Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScanMode {
    /// Plain per-timestep recurrence. Reference semantics.
    #[default]
    Sequential,
    /// Chunks scanned independently from a zero state, then stitched by
    /// propagating each chunk's carry through its cumulative decay.
    Chunked { chunk: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanDirection {
    RowForward,
    RowBackward,
    ColForward,
    ColBackward,
}

impl ScanDirection {
    pub const ALL: [ScanDirection; 4] = [
        ScanDirection::RowForward,
        ScanDirection::RowBackward,
        ScanDirection::ColForward,
        ScanDirection::ColBackward,
    ];

    /// `order[l]` is the row-major spatial index visited at sequence position `l`.
    pub fn order(self, h: usize, w: usize) -> Vec<usize> {
        let len = h * w;
        let col_major = |l: usize| (l % h) * w + l / h;
        match self {
            ScanDirection::RowForward => (0..len).collect(),
            ScanDirection::RowBackward => (0..len).rev().collect(),
            ScanDirection::ColForward => (0..len).map(col_major).collect(),
            ScanDirection::ColBackward => (0..len).rev().map(col_major).collect(),
        }
    }

    /// Inverse of [`ScanDirection::order`]: sequence position of each spatial index.
    pub fn inverse_order(self, h: usize, w: usize) -> Vec<usize> {
        let order = self.order(h, w);
        let mut inv = vec![0; order.len()];
        for (l, &s) in order.iter().enumerate() {
            inv[s] = l;
        }
        inv
    }
}

/// Flattens `[B, C, H, W]` into the four directional sequences `[B, C, H·W]`,
/// in [`ScanDirection::ALL`] order.
pub fn cross_scan<T: Element>(x: &Tensor<T>) -> Result<[Tensor<T>; 4]> {
    let (b, c, h, w) = x.dims4()?;
    let flat = x.reshape(&[b, c, h * w])?;
    let seq = |d: ScanDirection| flat.permute_last(Arc::new(d.order(h, w)));
    Ok([
        seq(ScanDirection::RowForward)?,
        seq(ScanDirection::RowBackward)?,
        seq(ScanDirection::ColForward)?,
        seq(ScanDirection::ColBackward)?,
    ])
}

/// Restores each directional sequence to spatial order and sums them.
pub fn cross_merge<T: Element>(ys: &[Tensor<T>; 4], h: usize, w: usize) -> Result<Tensor<T>> {
    let mut acc: Option<Tensor<T>> = None;
    for (y, d) in ys.iter().zip(ScanDirection::ALL) {
        let [b, c, l] = *y.shape() else {
            return Err(Error::shape("cross_merge", format!("expected [B, C, L], got {:?}", y.shape())));
        };
        if l != h * w {
            return Err(Error::shape("cross_merge", format!("sequence length {l} != {h}x{w}")));
        }
        let m = y.permute_last(Arc::new(d.inverse_order(h, w)))?.reshape(&[b, c, h, w])?;
        acc = Some(match acc {
            None => m,
            Some(a) => a.add(&m)?,
        });
    }
    Ok(acc.expect("four directions"))
}

struct ScanDims {
    b: usize,
    d: usize,
    l: usize,
    n: usize,
}

fn scan_dims<T: Element>(
    u: &Tensor<T>,
    delta: &Tensor<T>,
    a: &Tensor<T>,
    bm: &Tensor<T>,
    cm: &Tensor<T>,
    dskip: &Tensor<T>,
) -> Result<ScanDims> {
    let [b, d, l] = *u.shape() else {
        return Err(Error::shape("selective_scan", format!("u must be [B, D, L], got {:?}", u.shape())));
    };
    let [_, n] = *a.shape() else {
        return Err(Error::shape("selective_scan", format!("A must be [D, N], got {:?}", a.shape())));
    };
    if n == 0 {
        return Err(Error::Config("state dimension must be positive".into()));
    }
    if l == 0 {
        return Err(Error::shape("selective_scan", "sequence length must be >= 1"));
    }
    let checks: [(&str, &Tensor<T>, Vec<usize>); 5] = [
        ("delta", delta, vec![b, d, l]),
        ("A", a, vec![d, n]),
        ("B", bm, vec![b, n, l]),
        ("C", cm, vec![b, n, l]),
        ("D", dskip, vec![d]),
    ];
    for (name, t, want) in checks {
        if t.shape() != want.as_slice() {
            return Err(Error::shape(
                "selective_scan",
                format!("{name} has shape {:?}, expected {want:?}", t.shape()),
            ));
        }
    }
    Ok(ScanDims { b, d, l, n })
}

/// `[B, N, L]` → `[B, L, N]` so the per-step state loop reads contiguously.
fn to_time_major<T: Element>(x: &[T], b: usize, n: usize, l: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for bi in 0..b {
        for ni in 0..n {
            for t in 0..l {
                out[(bi * l + t) * n + ni] = x[(bi * n + ni) * l + t];
            }
        }
    }
    out
}

fn from_time_major<T: Element>(x: &[T], b: usize, n: usize, l: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for bi in 0..b {
        for t in 0..l {
            for ni in 0..n {
                out[(bi * n + ni) * l + t] = x[(bi * l + t) * n + ni];
            }
        }
    }
    out
}

/// Time steps whose decay factors are exponentiated together.
const DECAY_BLOCK: usize = 64;

/// `Σ a_k b_k` with eight interleaved partial sums (fixed order, so still
/// deterministic) to break the serial add chain.
#[inline(always)]
fn dot<T: Element>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for i in 0..8 {
            lanes[i] = lanes[i] + x[i] * y[i];
        }
    }
    let mut acc = lanes.iter().fold(T::zero(), |s, &v| s + v);
    for (&x, &y) in ar.iter().zip(br) {
        acc = acc + x * y;
    }
    acc
}

/// One channel row of the recurrence: `u`, `dt` of length L; `bt`, `ct` are
/// `[L, N]`; writes `y` (length L) and optionally every state and every decay
/// factor `exp(Δ·A)` into `cache` (both `[L, N]`).
#[allow(clippy::too_many_arguments)]
fn scan_row<T: Element>(
    u: &[T],
    dt: &[T],
    a: &[T],
    bt: &[T],
    ct: &[T],
    dskip: T,
    h: &mut [T],
    y: &mut [T],
    mut cache: Option<(&mut [T], &mut [T])>,
) {
    let n = a.len();
    let l = u.len();
    h.fill(T::zero());
    let mut scratch = Vec::new();
    for t0 in (0..l).step_by(DECAY_BLOCK) {
        let t1 = (t0 + DECAY_BLOCK).min(l);
        // exponentiate a block of decays at once so the exp loop vectorises
        let block = match cache.as_mut() {
            Some((_, decays)) => &mut decays[t0 * n..t1 * n],
            None => {
                scratch.resize((t1 - t0) * n, T::zero());
                &mut scratch[..]
            }
        };
        for (row, &step) in block.chunks_exact_mut(n).zip(&dt[t0..t1]) {
            for (e, &ak) in row.iter_mut().zip(a) {
                *e = step * ak;
            }
        }
        T::exp_in_place(block);
        for t in t0..t1 {
            let (x, step) = (u[t], dt[t]);
            let (b_t, c_t) = (&bt[t * n..][..n], &ct[t * n..][..n]);
            let dec = match cache.as_ref() {
                Some((_, decays)) => &decays[t * n..][..n],
                None => &scratch[(t - t0) * n..][..n],
            };
            let dx = step * x;
            for ((hk, &e), &bk) in h.iter_mut().zip(dec).zip(b_t) {
                *hk = e * *hk + dx * bk;
            }
            if let Some((hs, _)) = cache.as_mut() {
                hs[t * n..][..n].copy_from_slice(h);
            }
            y[t] = dot(c_t, h) + dskip * x;
        }
    }
}

/// Same result as [`scan_row`] computed chunk by chunk.
#[allow(clippy::too_many_arguments)]
fn scan_row_chunked<T: Element>(
    u: &[T],
    dt: &[T],
    a: &[T],
    bt: &[T],
    ct: &[T],
    dskip: T,
    chunk: usize,
    y: &mut [T],
) {
    let n = a.len();
    let l = u.len();
    let chunk = chunk.max(1);
    // Local pass per chunk: zero-start state, cumulative decay, chunk-end state.
    let mut decay = vec![T::zero(); l * n];
    let mut local_end: Vec<Vec<T>> = Vec::new();
    let mut h = vec![T::zero(); n];
    let mut da = vec![T::zero(); n];
    for start in (0..l).step_by(chunk) {
        let end = (start + chunk).min(l);
        h.fill(T::zero());
        let mut p = vec![T::one(); n];
        for t in start..end {
            let (x, step) = (u[t], dt[t]);
            let (b_t, c_t) = (&bt[t * n..][..n], &ct[t * n..][..n]);
            for (e, &ak) in da.iter_mut().zip(a) {
                *e = step * ak;
            }
            T::exp_in_place(&mut da);
            let mut acc = T::zero();
            for k in 0..n {
                h[k] = da[k] * h[k] + step * x * b_t[k];
                p[k] = p[k] * da[k];
                acc = acc + c_t[k] * h[k];
            }
            decay[t * n..][..n].copy_from_slice(&p);
            y[t] = acc + dskip * x;
        }
        local_end.push(h.clone());
    }
    // Stitch: carry enters each chunk and decays through it.
    let mut carry = vec![T::zero(); n];
    for (ci, start) in (0..l).step_by(chunk).enumerate() {
        let end = (start + chunk).min(l);
        if ci > 0 {
            for t in start..end {
                let (p, c_t) = (&decay[t * n..][..n], &ct[t * n..][..n]);
                let mut acc = T::zero();
                for k in 0..n {
                    acc = acc + c_t[k] * p[k] * carry[k];
                }
                y[t] = y[t] + acc;
            }
        }
        let p_end = &decay[(end - 1) * n..][..n];
        for k in 0..n {
            carry[k] = local_end[ci][k] + p_end[k] * carry[k];
        }
    }
}

/// Selective scan over `u: [B, D, L]` with `delta: [B, D, L]` (already
/// positive), `a: [D, N]`, `bm`, `cm: [B, N, L]` and skip `dskip: [D]`.
/// Differentiable in every input.
pub fn selective_scan<T: Element>(
    u: &Tensor<T>,
    delta: &Tensor<T>,
    a: &Tensor<T>,
    bm: &Tensor<T>,
    cm: &Tensor<T>,
    dskip: &Tensor<T>,
    mode: ScanMode,
) -> Result<Tensor<T>> {
    let ScanDims { b, d, l, n } = scan_dims(u, delta, a, bm, cm, dskip)?;
    let mut out = vec![T::zero(); b * d * l];
    {
        let (ud, dd, ad, dsd) = (u.data(), delta.data(), a.data(), dskip.data());
        let bt = to_time_major(&bm.data(), b, n, l);
        let ct = to_time_major(&cm.data(), b, n, l);
        let mut h = vec![T::zero(); n];
        for bi in 0..b {
            let (btb, ctb) = (&bt[bi * l * n..][..l * n], &ct[bi * l * n..][..l * n]);
            for di in 0..d {
                let row = (bi * d + di) * l;
                let (ur, dr, ar) = (&ud[row..][..l], &dd[row..][..l], &ad[di * n..][..n]);
                let y = &mut out[row..][..l];
                match mode {
                    ScanMode::Sequential => scan_row(ur, dr, ar, btb, ctb, dsd[di], &mut h, y, None),
                    ScanMode::Chunked { chunk } => scan_row_chunked(ur, dr, ar, btb, ctb, dsd[di], chunk, y),
                }
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        vec![b, d, l],
        "selective_scan",
        vec![u.clone(), delta.clone(), a.clone(), bm.clone(), cm.clone(), dskip.clone()],
        Box::new(move |inputs, _, g| scan_backward(inputs, g, b, d, l, n)),
    ))
}

fn scan_backward<T: Element>(
    inputs: &[Tensor<T>],
    g: &[T],
    b: usize,
    d: usize,
    l: usize,
    n: usize,
) -> Vec<Option<Vec<T>>> {
    let (ud, dd, ad, dsd) = (inputs[0].data(), inputs[1].data(), inputs[2].data(), inputs[5].data());
    let bt = to_time_major(&inputs[3].data(), b, n, l);
    let ct = to_time_major(&inputs[4].data(), b, n, l);
    let mut du = vec![T::zero(); b * d * l];
    let mut ddelta = vec![T::zero(); b * d * l];
    let mut da = vec![T::zero(); d * n];
    let mut dbt = vec![T::zero(); b * l * n];
    let mut dct = vec![T::zero(); b * l * n];
    let mut dskip = vec![T::zero(); d];

    let mut hs = vec![T::zero(); l * n];
    let mut decays = vec![T::zero(); l * n];
    let mut h = vec![T::zero(); n];
    let mut y = vec![T::zero(); l];
    let mut dh = vec![T::zero(); n];
    for bi in 0..b {
        let (btb, ctb) = (&bt[bi * l * n..][..l * n], &ct[bi * l * n..][..l * n]);
        for di in 0..d {
            let row = (bi * d + di) * l;
            let (ur, dr, ar) = (&ud[row..][..l], &dd[row..][..l], &ad[di * n..][..n]);
            scan_row(ur, dr, ar, btb, ctb, dsd[di], &mut h, &mut y, Some((&mut hs, &mut decays)));
            dh.fill(T::zero());
            for t in (0..l).rev() {
                let (x, step, gy) = (ur[t], dr[t], g[row + t]);
                dskip[di] = dskip[di] + gy * x;
                let mut gx = gy * dsd[di];
                let mut gdt = T::zero();
                let h_t = &hs[t * n..][..n];
                let b_t = &btb[t * n..][..n];
                let c_t = &ctb[t * n..][..n];
                let dc_t = &mut dct[(bi * l + t) * n..][..n];
                for k in 0..n {
                    dc_t[k] = dc_t[k] + gy * h_t[k];
                    dh[k] = dh[k] + gy * c_t[k];
                }
                let db_t = &mut dbt[(bi * l + t) * n..][..n];
                let dec_t = &decays[t * n..][..n];
                for k in 0..n {
                    let h_prev = if t > 0 { hs[(t - 1) * n + k] } else { T::zero() };
                    let decay = dec_t[k];
                    let gh = dh[k];
                    gdt = gdt + gh * (h_prev * decay * ar[k] + b_t[k] * x);
                    da[di * n + k] = da[di * n + k] + gh * h_prev * decay * step;
                    db_t[k] = db_t[k] + gh * step * x;
                    gx = gx + gh * step * b_t[k];
                    dh[k] = gh * decay;
                }
                du[row + t] = gx;
                ddelta[row + t] = gdt;
            }
        }
    }
    vec![
        Some(du),
        Some(ddelta),
        Some(da),
        Some(from_time_major(&dbt, b, n, l)),
        Some(from_time_major(&dct, b, n, l)),
        Some(dskip),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsmConfig {
    /// State dimension N per channel.
    pub state_dim: usize,
    /// Rank of the Δ projection; `None` picks `ceil(channels / 8)`.
    pub dt_rank: Option<usize>,
    pub dt_min: f64,
    pub dt_max: f64,
    pub scan_mode: ScanMode,
}

impl Default for SsmConfig {
    fn default() -> Self {
        Self {
            state_dim: 16,
            dt_rank: None,
            dt_min: 1e-3,
            dt_max: 1e-1,
            scan_mode: ScanMode::Sequential,
        }
    }
}

impl SsmConfig {
    pub fn dt_rank_for(&self, channels: usize) -> usize {
        self.dt_rank.unwrap_or_else(|| channels.div_ceil(8)).max(1)
    }

    /// Trainable scalars of one direction's parameter set over `channels`.
    pub fn branch_params(&self, channels: usize) -> usize {
        let (r, n) = (self.dt_rank_for(channels), self.state_dim);
        channels * (r + 2 * n) + (r * channels + channels) + channels * n + channels
    }
}

/// Parameters of one scan direction: shared projection to (Δ-rank, B, C),
/// Δ up-projection with bias, `A = -exp(a_log)` and skip `D`.
#[derive(Debug)]
pub struct SsmBranch<T: Element> {
    pub x_proj: Tensor<T>,
    pub dt_proj: Tensor<T>,
    pub dt_bias: Tensor<T>,
    pub a_log: Tensor<T>,
    pub d_skip: Tensor<T>,
    dt_rank: usize,
    state_dim: usize,
}

impl<T: Element> SsmBranch<T> {
    pub fn new(init: &mut Init, channels: usize, cfg: &SsmConfig) -> Result<Self> {
        if cfg.state_dim == 0 {
            return Err(Error::Config("state dimension must be positive".into()));
        }
        if !(cfg.dt_min > 0.0 && cfg.dt_min <= cfg.dt_max) {
            return Err(Error::Config(format!("invalid Δ range [{}, {}]", cfg.dt_min, cfg.dt_max)));
        }
        let (r, n) = (cfg.dt_rank_for(channels), cfg.state_dim);
        // linear-layer bounds 1/sqrt(fan_in); B and C both scale with the
        // input, so Kaiming bounds would inflate the output sixfold
        let xb = 1.0 / (channels as f64).sqrt();
        let x_proj = init.uniform(&[r + 2 * n, channels, 1, 1], -xb, xb);
        let db = 1.0 / (r as f64).sqrt();
        let dt_proj = init.uniform(&[channels, r, 1, 1], -db, db);
        // softplus(bias) log-uniform over [dt_min, dt_max]
        let (lo, hi) = (cfg.dt_min.ln(), cfg.dt_max.ln());
        let dt_bias = (0..channels)
            .map(|_| {
                let dt: f64 = (lo + (hi - lo) * rand::Rng::gen::<f64>(init.rng())).exp();
                lit::<T>(dt + (-(-dt).exp_m1()).ln())
            })
            .collect();
        let a_log = (0..channels)
            .flat_map(|_| (1..=n).map(|k| lit::<T>((k as f64).ln())))
            .collect();
        Ok(Self {
            x_proj,
            dt_proj,
            dt_bias: Tensor::leaf(dt_bias, &[channels], true)?,
            a_log: Tensor::leaf(a_log, &[channels, n], true)?,
            d_skip: Tensor::leaf(vec![T::one(); channels], &[channels], true)?,
            dt_rank: r,
            state_dim: n,
        })
    }

    /// Continuous state matrix `A = -exp(a_log)`, strictly negative.
    pub fn a(&self) -> Tensor<T> {
        self.a_log.exp().neg()
    }

    /// Δ (after softplus), B and C for a sequence `[B, D, L]`.
    pub fn project(&self, seq: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let [b, d, l] = *seq.shape() else {
            return Err(Error::shape("ssm_project", format!("expected [B, D, L], got {:?}", seq.shape())));
        };
        let (r, n) = (self.dt_rank, self.state_dim);
        let xdbl = conv2d(&seq.reshape(&[b, d, l, 1])?, &self.x_proj, None, Conv2dParams::default())?;
        let dt_low = xdbl.slice(1, 0, r)?;
        let bm = xdbl.slice(1, r, n)?.reshape(&[b, n, l])?;
        let cm = xdbl.slice(1, r + n, n)?.reshape(&[b, n, l])?;
        let delta = conv2d(&dt_low, &self.dt_proj, Some(&self.dt_bias), Conv2dParams::default())?
            .softplus()
            .reshape(&[b, d, l])?;
        Ok((delta, bm, cm))
    }

    pub fn forward(&self, seq: &Tensor<T>, mode: ScanMode) -> Result<Tensor<T>> {
        let (delta, bm, cm) = self.project(seq)?;
        selective_scan(seq, &delta, &self.a(), &bm, &cm, &self.d_skip, mode)
    }
}

impl<T: Element> Module<T> for SsmBranch<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        v.param(&join(prefix, "x_proj"), &self.x_proj);
        v.param(&join(prefix, "dt_proj"), &self.dt_proj);
        v.param(&join(prefix, "dt_bias"), &self.dt_bias);
        v.param(&join(prefix, "a_log"), &self.a_log);
        v.param(&join(prefix, "d_skip"), &self.d_skip);
    }
}

/// Four-direction selective scan over a feature map, one independent
/// parameter set per direction; output shape equals input shape.
#[derive(Debug)]
pub struct Ss2d<T: Element> {
    pub branches: [SsmBranch<T>; 4],
    pub mode: ScanMode,
}

impl<T: Element> Ss2d<T> {
    pub fn new(init: &mut Init, channels: usize, cfg: &SsmConfig) -> Result<Self> {
        Ok(Self {
            branches: [
                SsmBranch::new(init, channels, cfg)?,
                SsmBranch::new(init, channels, cfg)?,
                SsmBranch::new(init, channels, cfg)?,
                SsmBranch::new(init, channels, cfg)?,
            ],
            mode: cfg.scan_mode,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, _, h, w) = x.dims4()?;
        let seqs = cross_scan(x)?;
        let ys = [
            self.branches[0].forward(&seqs[0], self.mode)?,
            self.branches[1].forward(&seqs[1], self.mode)?,
            self.branches[2].forward(&seqs[2], self.mode)?,
            self.branches[3].forward(&seqs[3], self.mode)?,
        ];
        cross_merge(&ys, h, w)
    }
}

impl<T: Element> Module<T> for Ss2d<T> {
    fn visit(&self, prefix: &str, v: &mut dyn Visitor<T>) {
        for (br, dir) in self.branches.iter().zip(["row_fwd", "row_bwd", "col_fwd", "col_bwd"]) {
            br.visit(&join(prefix, dir), v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_orders_on_2x2() {
        // [[a, b], [c, d]] flattened row-major as 0..4
        assert_eq!(ScanDirection::RowForward.order(2, 2), vec![0, 1, 2, 3]);
        assert_eq!(ScanDirection::ColForward.order(2, 2), vec![0, 2, 1, 3]);
        assert_eq!(ScanDirection::RowBackward.order(2, 2), vec![3, 2, 1, 0]);
        assert_eq!(ScanDirection::ColBackward.order(2, 2), vec![3, 1, 2, 0]);
    }

    #[test]
    fn inverse_orders_are_exact_permutation_inverses() {
        for (h, w) in [(1, 1), (2, 3), (5, 4), (6, 8)] {
            for d in ScanDirection::ALL {
                let (o, inv) = (d.order(h, w), d.inverse_order(h, w));
                for l in 0..h * w {
                    assert_eq!(inv[o[l]], l);
                    assert_eq!(o[inv[l]], l);
                }
            }
        }
    }

    #[test]
    fn cross_scan_of_single_pixel_is_four_identical_sequences() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0], &[1, 3, 1, 1]).unwrap();
        let s = cross_scan(&x).unwrap();
        for t in &s {
            assert_eq!(t.shape(), &[1, 3, 1]);
            assert_eq!(t.to_vec(), vec![1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn merge_of_single_nonzero_branch() {
        let x = Tensor::<f64>::from_vec((0..12).map(f64::from).collect(), &[1, 2, 2, 3]).unwrap();
        let s = cross_scan(&x).unwrap();
        let z = Tensor::<f64>::zeros(&[1, 2, 6]);
        let m = cross_merge(&[z.clone(), z.clone(), s[2].clone(), z], 2, 3).unwrap();
        assert_eq!(m.to_vec(), x.to_vec());
    }

    #[test]
    fn zero_state_dim_is_configuration_error() {
        let cfg = SsmConfig {
            state_dim: 0,
            ..SsmConfig::default()
        };
        assert!(matches!(SsmBranch::<f32>::new(&mut Init::new(0), 4, &cfg), Err(Error::Config(_))));
        let u = Tensor::<f32>::zeros(&[1, 2, 3]);
        let a = Tensor::<f32>::zeros(&[2, 0]);
        let bm = Tensor::<f32>::zeros(&[1, 0, 3]);
        let r = selective_scan(&u, &u, &a, &bm, &bm, &Tensor::zeros(&[2]), ScanMode::Sequential);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn initial_a_is_strictly_negative_and_delta_in_range() {
        let cfg = SsmConfig::default();
        let br = SsmBranch::<f64>::new(&mut Init::new(3), 8, &cfg).unwrap();
        assert!(br.a().to_vec().iter().all(|&v| v < 0.0));
        let dt = br.dt_bias.softplus().to_vec();
        assert!(dt.iter().all(|&v| (1e-3 - 1e-12..=1e-1 + 1e-12).contains(&v)));
    }
}
