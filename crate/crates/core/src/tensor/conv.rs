//! 2D convolution via im2col + GEMM, with grouped and dilated kernels.

use serde::{Deserialize, Serialize};

use super::{gemm, Element, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dParams {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for Conv2dParams {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            dilation: 1,
            groups: 1,
        }
    }
}

impl Conv2dParams {
    /// Stride 1, "same" padding for an odd kernel at the given dilation.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        Self {
            stride: 1,
            padding: dilation * (kernel - 1) / 2,
            dilation,
            groups: 1,
        }
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }
}

/// `(extent + 2p - d(k-1) - 1) / s + 1`, or `None` when non-positive.
pub fn conv_output_extent(extent: usize, kernel: usize, p: &Conv2dParams) -> Option<usize> {
    let span = p.dilation * (kernel - 1) + 1;
    let padded = extent + 2 * p.padding;
    (padded >= span).then(|| (padded - span) / p.stride + 1)
}

#[derive(Clone, Copy)]
struct Geometry {
    cin_g: usize,
    h: usize,
    w: usize,
    k: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
}

impl Geometry {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.padding == 0
    }

    fn rows(&self) -> usize {
        self.cin_g * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    #[inline]
    fn src(&self, o: usize, kk: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + kk * self.dilation) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    /// Unfolds one group's input planes `[cin_g, h, w]` into `[cin_g·k·k, ho·wo]`.
    fn im2col<T: Element>(&self, x: &[T], cols: &mut [T]) {
        let l = self.cols();
        for c in 0..self.cin_g {
            let plane = &x[c * self.h * self.w..][..self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = &mut cols[((c * self.k + ki) * self.k + kj) * l..][..l];
                    for oy in 0..self.ho {
                        let dst = &mut row[oy * self.wo..][..self.wo];
                        match self.src(oy, ki, self.h) {
                            None => dst.fill(T::zero()),
                            Some(iy) => {
                                let src_row = &plane[iy * self.w..][..self.w];
                                for (ox, d) in dst.iter_mut().enumerate() {
                                    *d = match self.src(ox, kj, self.w) {
                                        Some(ix) => src_row[ix],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: scatter-adds columns back into planes.
    fn col2im<T: Element>(&self, cols: &[T], dx: &mut [T]) {
        let l = self.cols();
        for c in 0..self.cin_g {
            let plane = &mut dx[c * self.h * self.w..][..self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = &cols[((c * self.k + ki) * self.k + kj) * l..][..l];
                    for oy in 0..self.ho {
                        let Some(iy) = self.src(oy, ki, self.h) else { continue };
                        let src = &row[oy * self.wo..][..self.wo];
                        for (ox, &v) in src.iter().enumerate() {
                            if let Some(ix) = self.src(ox, kj, self.w) {
                                plane[iy * self.w + ix] = plane[iy * self.w + ix] + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x: [B, Cin, H, W]` with `weight: [Cout, Cin/groups, k, k]`.
pub fn conv2d<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    p: Conv2dParams,
) -> Result<Tensor<T>> {
    let (b, cin, h, w) = x.dims4()?;
    let (cout, cin_g, k, k2) = weight.dims4()?;
    if p.stride == 0 || p.dilation == 0 || p.groups == 0 || k == 0 {
        return Err(Error::Config(format!(
            "conv2d needs stride, dilation, groups and kernel >= 1, got {p:?} kernel {k}"
        )));
    }
    if k != k2 {
        return Err(Error::shape("conv2d", format!("kernel must be square, got {k}x{k2}")));
    }
    if cin % p.groups != 0 || cout % p.groups != 0 {
        return Err(Error::shape(
            "conv2d",
            format!("channels in {cin} / out {cout} not divisible by groups {}", p.groups),
        ));
    }
    if cin / p.groups != cin_g {
        return Err(Error::shape(
            "conv2d",
            format!("weight expects {cin_g} input channels per group, input gives {}", cin / p.groups),
        ));
    }
    if let Some(bias) = bias {
        if bias.shape() != [cout] {
            return Err(Error::shape("conv2d", format!("bias shape {:?}, expected [{cout}]", bias.shape())));
        }
    }
    let (Some(ho), Some(wo)) = (conv_output_extent(h, k, &p), conv_output_extent(w, k, &p)) else {
        return Err(Error::Config(format!(
            "conv2d output extent is non-positive for input {h}x{w}, kernel {k}, {p:?}"
        )));
    };
    let geo = Geometry {
        cin_g,
        h,
        w,
        k,
        ho,
        wo,
        stride: p.stride,
        padding: p.padding,
        dilation: p.dilation,
    };
    let groups = p.groups;
    let cout_g = cout / groups;
    let (rows, l) = (geo.rows(), geo.cols());
    let mut out = vec![T::zero(); b * cout * l];
    {
        let xd = x.data();
        let wd = weight.data();
        let mut cols = if geo.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * l] };
        for bi in 0..b {
            for g in 0..groups {
                let xs = &xd[(bi * cin + g * cin_g) * h * w..][..cin_g * h * w];
                let colv: &[T] = if geo.is_pointwise() {
                    xs
                } else {
                    geo.im2col(xs, &mut cols);
                    &cols
                };
                let wg = &wd[g * cout_g * rows..][..cout_g * rows];
                let og = &mut out[(bi * cout + g * cout_g) * l..][..cout_g * l];
                gemm(cout_g, rows, l, wg, false, colv, false, og, T::zero());
            }
        }
        if let Some(bias) = bias {
            let bd = bias.data();
            for bi in 0..b {
                for co in 0..cout {
                    for v in &mut out[(bi * cout + co) * l..][..l] {
                        *v = *v + bd[co];
                    }
                }
            }
        }
    }
    let mut inputs = vec![x.clone(), weight.clone()];
    if let Some(bias) = bias {
        inputs.push(bias.clone());
    }
    Ok(Tensor::from_op(
        out,
        vec![b, cout, ho, wo],
        "conv2d",
        inputs,
        Box::new(move |inputs, _, g| {
            let (x, weight) = (&inputs[0], &inputs[1]);
            let xd = x.data();
            let wd = weight.data();
            let need_dx = x.requires_grad();
            let need_dw = weight.requires_grad();
            let mut dx = if need_dx { vec![T::zero(); xd.len()] } else { Vec::new() };
            let mut dw = vec![T::zero(); if need_dw { wd.len() } else { 0 }];
            let mut cols = vec![T::zero(); rows * l];
            let mut dcols = vec![T::zero(); rows * l];
            for bi in 0..b {
                for gi in 0..groups {
                    let gout = &g[(bi * cout + gi * cout_g) * l..][..cout_g * l];
                    let xs = &xd[(bi * cin + gi * cin_g) * h * w..][..cin_g * h * w];
                    if need_dw {
                        let colv: &[T] = if geo.is_pointwise() {
                            xs
                        } else {
                            geo.im2col(xs, &mut cols);
                            &cols
                        };
                        let dwg = &mut dw[gi * cout_g * rows..][..cout_g * rows];
                        gemm(cout_g, l, rows, gout, false, colv, true, dwg, T::one());
                    }
                    if need_dx {
                        let wg = &wd[gi * cout_g * rows..][..cout_g * rows];
                        let dxs = &mut dx[(bi * cin + gi * cin_g) * h * w..][..cin_g * h * w];
                        if geo.is_pointwise() {
                            gemm(rows, cout_g, l, wg, true, gout, false, dxs, T::one());
                        } else {
                            gemm(rows, cout_g, l, wg, true, gout, false, &mut dcols, T::zero());
                            geo.col2im(&dcols, dxs);
                        }
                    }
                }
            }
            let mut grads = vec![need_dx.then_some(dx), need_dw.then_some(dw)];
            if inputs.len() == 3 {
                let db = inputs[2].requires_grad().then(|| {
                    let mut db = vec![T::zero(); cout];
                    for bi in 0..b {
                        for (co, d) in db.iter_mut().enumerate() {
                            *d = g[(bi * cout + co) * l..][..l].iter().fold(*d, |acc, &v| acc + v);
                        }
                    }
                    db
                });
                grads.push(db);
            }
            grads
        }),
    ))
}
