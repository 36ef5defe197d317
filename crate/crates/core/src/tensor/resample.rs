use super::{lit, Element, Tensor};
use crate::error::{Error, Result};

/// 2×2 max pooling with stride 2. Gradients route to the (first) window maximum.
pub fn maxpool2<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(Error::Config(format!("maxpool2 needs even non-zero extents, got {h}x{w}")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let planes = b * c;
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut arg = Vec::with_capacity(planes * ho * wo);
    {
        let xd = x.data();
        for p in 0..planes {
            let plane = &xd[p * h * w..][..h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = (2 * oy) * w + 2 * ox;
                    for idx in [best + 1, best + w, best + w + 1] {
                        if plane[idx] > plane[best] {
                            best = idx;
                        }
                    }
                    out.push(plane[best]);
                    arg.push(p * h * w + best);
                }
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        vec![b, c, ho, wo],
        "maxpool2",
        vec![x.clone()],
        Box::new(move |_, _, g| {
            let mut gx = vec![T::zero(); planes * h * w];
            for (&src, &gv) in arg.iter().zip(g) {
                gx[src] = gx[src] + gv;
            }
            vec![Some(gx)]
        }),
    ))
}

/// Per output index: (lower source, upper source, weight of upper).
fn bilinear_taps<T: Element>(extent: usize) -> Vec<(usize, usize, T)> {
    (0..2 * extent)
        .map(|i| {
            let src = ((i as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(extent - 1);
            let hi = (lo + 1).min(extent - 1);
            (lo, hi, lit(src - lo as f64))
        })
        .collect()
}

/// Bilinear ×2 upsampling with half-pixel centres (`src = (i + 0.5)/2 - 0.5`,
/// clamped at the border).
pub fn upsample2<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    if h == 0 || w == 0 {
        return Err(Error::Config("upsample2 on empty spatial extent".into()));
    }
    let (ho, wo) = (2 * h, 2 * w);
    let ty = bilinear_taps::<T>(h);
    let tx = bilinear_taps::<T>(w);
    let planes = b * c;
    let mut out = vec![T::zero(); planes * ho * wo];
    {
        let xd = x.data();
        for p in 0..planes {
            let plane = &xd[p * h * w..][..h * w];
            let dst = &mut out[p * ho * wo..][..ho * wo];
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let top = plane[y0 * w + x0] * (T::one() - fx) + plane[y0 * w + x1] * fx;
                    let bot = plane[y1 * w + x0] * (T::one() - fx) + plane[y1 * w + x1] * fx;
                    dst[oy * wo + ox] = top * (T::one() - fy) + bot * fy;
                }
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        vec![b, c, ho, wo],
        "upsample2",
        vec![x.clone()],
        Box::new(move |_, _, g| {
            let mut gx = vec![T::zero(); planes * h * w];
            for p in 0..planes {
                let gp = &g[p * ho * wo..][..ho * wo];
                let dst = &mut gx[p * h * w..][..h * w];
                for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                    for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                        let gv = gp[oy * wo + ox];
                        let (gt, gb) = (gv * (T::one() - fy), gv * fy);
                        dst[y0 * w + x0] = dst[y0 * w + x0] + gt * (T::one() - fx);
                        dst[y0 * w + x1] = dst[y0 * w + x1] + gt * fx;
                        dst[y1 * w + x0] = dst[y1 * w + x0] + gb * (T::one() - fx);
                        dst[y1 * w + x1] = dst[y1 * w + x1] + gb * fx;
                    }
                }
            }
            vec![Some(gx)]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_maps_stay_constant() {
        let x = Tensor::<f32>::full(&[2, 3, 4, 6], 1.25);
        let p = maxpool2(&x).unwrap();
        assert_eq!(p.shape(), &[2, 3, 2, 3]);
        assert!(p.to_vec().iter().all(|&v| v == 1.25));
        let u = upsample2(&x).unwrap();
        assert_eq!(u.shape(), &[2, 3, 8, 12]);
        assert!(u.to_vec().iter().all(|&v| (v - 1.25).abs() < 1e-7));
    }

    #[test]
    fn odd_extent_is_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 1, 3, 4]);
        assert!(matches!(maxpool2(&x), Err(Error::Config(_))));
    }

    #[test]
    fn upsample_interpolates_between_neighbours() {
        let x = Tensor::<f64>::from_vec(vec![0.0, 4.0], &[1, 1, 1, 2]).unwrap();
        let u = upsample2(&x).unwrap().to_vec();
        // columns map to sources -0.25→0 (clamped), 0.25, 0.75, 1.25→1
        assert_eq!(&u[..4], &[0.0, 1.0, 3.0, 4.0]);
    }

    #[test]
    fn maxpool_gradient_hits_window_max_only() {
        let x = Tensor::<f64>::leaf(vec![1.0, 2.0, 3.0, 4.0, 8.0, 7.0, 6.0, 5.0], &[1, 1, 2, 4], true).unwrap();
        maxpool2(&x).unwrap().sum_all().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }
}
