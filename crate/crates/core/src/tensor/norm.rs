//! Instance and batch normalisation over `[B, C, H, W]` with a per-channel affine.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{lit, Element, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Statistics per (sample, channel) over H×W.
    Instance,
    /// Statistics per channel over B×H×W.
    Batch,
}

/// Running mean / variance tracked by batch norm for evaluation mode.
#[derive(Debug)]
pub struct RunningStats<T: Element> {
    pub momentum: T,
    state: Mutex<(Vec<T>, Vec<T>)>,
}

impl<T: Element> RunningStats<T> {
    pub fn new(channels: usize, momentum: T) -> Self {
        Self {
            momentum,
            state: Mutex::new((vec![T::zero(); channels], vec![T::one(); channels])),
        }
    }

    pub fn mean(&self) -> Vec<T> {
        self.state.lock().expect("running stats lock").0.clone()
    }

    pub fn var(&self) -> Vec<T> {
        self.state.lock().expect("running stats lock").1.clone()
    }

    pub fn set(&self, mean: Vec<T>, var: Vec<T>) -> Result<()> {
        let mut s = self.state.lock().expect("running stats lock");
        if mean.len() != s.0.len() || var.len() != s.1.len() {
            return Err(Error::shape("running_stats", "channel count mismatch"));
        }
        *s = (mean, var);
        Ok(())
    }

    fn update(&self, batch_mean: &[T], batch_var_unbiased: &[T]) {
        let mut s = self.state.lock().expect("running stats lock");
        let m = self.momentum;
        let (mean, var) = &mut *s;
        for (r, &b) in mean.iter_mut().zip(batch_mean) {
            *r = (T::one() - m) * *r + m * b;
        }
        for (r, &b) in var.iter_mut().zip(batch_var_unbiased) {
            *r = (T::one() - m) * *r + m * b;
        }
    }
}

/// Normalises `x` and applies `gamma`/`beta` per channel.
///
/// Batch kind uses batch statistics (and updates `running`) when `training`,
/// otherwise the running statistics. Instance kind always uses per-sample
/// statistics.
pub fn normalize<T: Element>(
    x: &Tensor<T>,
    kind: NormKind,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
    running: Option<&RunningStats<T>>,
    training: bool,
) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(
            "normalize",
            format!("affine params {:?}/{:?} for {c} channels", gamma.shape(), beta.shape()),
        ));
    }
    if eps.is_nan() || eps <= T::zero() {
        return Err(Error::Config(format!("normalisation eps must be > 0 (division guard), got {eps}")));
    }
    let hw = h * w;
    let use_running = kind == NormKind::Batch && !training;
    if kind == NormKind::Batch && training && b * hw < 2 {
        return Err(Error::Config(format!(
            "batch norm in training mode needs at least 2 values per channel, got B·H·W = {}",
            b * hw
        )));
    }
    if use_running && running.is_none() {
        return Err(Error::Usage("batch norm evaluation mode needs running statistics".into()));
    }

    let groups = match kind {
        NormKind::Instance => b * c,
        NormKind::Batch => c,
    };
    let stat = move |bi: usize, ci: usize| match kind {
        NormKind::Instance => bi * c + ci,
        NormKind::Batch => ci,
    };
    let count = match kind {
        NormKind::Instance => hw,
        NormKind::Batch => b * hw,
    };

    let xd = x.data();
    let (mean, invstd) = if use_running {
        let rs = running.expect("checked above");
        let var = rs.var();
        (rs.mean(), var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect::<Vec<_>>())
    } else {
        let n = lit::<T>(count as f64);
        let mut mean = vec![T::zero(); groups];
        for bi in 0..b {
            for ci in 0..c {
                let s = xd[(bi * c + ci) * hw..][..hw].iter().fold(T::zero(), |a, &v| a + v);
                mean[stat(bi, ci)] = mean[stat(bi, ci)] + s;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut var = vec![T::zero(); groups];
        for bi in 0..b {
            for ci in 0..c {
                let m = mean[stat(bi, ci)];
                let s = xd[(bi * c + ci) * hw..][..hw].iter().fold(T::zero(), |a, &v| a + (v - m) * (v - m));
                var[stat(bi, ci)] = var[stat(bi, ci)] + s;
            }
        }
        var.iter_mut().for_each(|v| *v = *v / n);
        if kind == NormKind::Batch && training {
            if let Some(rs) = running {
                let corr = n / (n - T::one());
                let unbiased: Vec<T> = var.iter().map(|&v| v * corr).collect();
                rs.update(&mean, &unbiased);
            }
        }
        let invstd = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        (mean, invstd)
    };

    let gd = gamma.data();
    let bd = beta.data();
    let mut out = vec![T::zero(); xd.len()];
    for bi in 0..b {
        for ci in 0..c {
            let s = stat(bi, ci);
            let (m, is) = (mean[s], invstd[s]);
            let (g, be) = (gd[ci], bd[ci]);
            let base = (bi * c + ci) * hw;
            for i in base..base + hw {
                out[i] = (xd[i] - m) * is * g + be;
            }
        }
    }
    drop((xd, gd, bd));

    Ok(Tensor::from_op(
        out,
        vec![b, c, h, w],
        "normalize",
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |inputs, _, g| {
            let xd = inputs[0].data();
            let gd = inputs[1].data();
            let n = lit::<T>(count as f64);
            let mut dgamma = vec![T::zero(); c];
            let mut dbeta = vec![T::zero(); c];
            // per-statistic sums of dy·γ and dy·γ·x̂
            let mut sum_dxh = vec![T::zero(); groups];
            let mut sum_dxh_xh = vec![T::zero(); groups];
            for bi in 0..b {
                for ci in 0..c {
                    let s = stat(bi, ci);
                    let base = (bi * c + ci) * hw;
                    for i in base..base + hw {
                        let xh = (xd[i] - mean[s]) * invstd[s];
                        dgamma[ci] = dgamma[ci] + g[i] * xh;
                        dbeta[ci] = dbeta[ci] + g[i];
                        let dxh = g[i] * gd[ci];
                        sum_dxh[s] = sum_dxh[s] + dxh;
                        sum_dxh_xh[s] = sum_dxh_xh[s] + dxh * xh;
                    }
                }
            }
            let dx = inputs[0].requires_grad().then(|| {
                let mut dx = vec![T::zero(); xd.len()];
                for bi in 0..b {
                    for ci in 0..c {
                        let s = stat(bi, ci);
                        let base = (bi * c + ci) * hw;
                        for i in base..base + hw {
                            let dxh = g[i] * gd[ci];
                            dx[i] = if use_running {
                                dxh * invstd[s]
                            } else {
                                let xh = (xd[i] - mean[s]) * invstd[s];
                                invstd[s] / n * (n * dxh - sum_dxh[s] - xh * sum_dxh_xh[s])
                            };
                        }
                    }
                }
                dx
            });
            vec![dx, Some(dgamma), Some(dbeta)]
        }),
    ))
}
