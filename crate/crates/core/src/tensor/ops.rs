//! Elementwise, broadcasting, reduction and layout ops.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{lit, numel, Element, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Silu,
}

#[inline]
fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn softplus<T: Element>(x: T) -> T {
    // log(1 + e^x) = max(x, 0) + log1p(e^-|x|)
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..]))
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::shape(op, format!("axis {axis} out of range for {shape:?}")));
    }
    Ok(())
}

/// Right-aligned broadcast of two shapes, both padded to rank 4.
fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<([usize; 4], [usize; 4], [usize; 4], usize)> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize]| {
        let mut p = [1usize; 4];
        p[4 - s.len()..].copy_from_slice(s);
        p
    };
    let (pa, pb) = (pad(a), pad(b));
    let mut out = [1usize; 4];
    for i in 0..4 {
        out[i] = match (pa[i], pb[i]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::shape(op, format!("cannot broadcast {a:?} with {b:?}")));
            }
        };
    }
    Ok((pa, pb, out, rank))
}

fn bstrides(shape: &[usize; 4], out: &[usize; 4]) -> [usize; 4] {
    let mut strides = [0usize; 4];
    let mut acc = 1;
    for i in (0..4).rev() {
        strides[i] = if shape[i] == 1 && out[i] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Visits every output coordinate with the matching flat offsets into `a` and `b`.
#[inline]
fn for_each_broadcast(out: &[usize; 4], sa: &[usize; 4], sb: &[usize; 4], mut f: impl FnMut(usize, usize, usize)) {
    let mut o = 0;
    for i0 in 0..out[0] {
        for i1 in 0..out[1] {
            for i2 in 0..out[2] {
                let ba = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
                let bb = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
                for i3 in 0..out[3] {
                    f(o, ba + i3 * sa[3], bb + i3 * sb[3]);
                    o += 1;
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        }
    }

    #[inline]
    fn apply<T: Element>(self, a: T, b: T) -> T {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
        }
    }

    /// Partial derivatives (d/da, d/db) scaled by upstream `g`.
    #[inline]
    fn partials<T: Element>(self, g: T, a: T, b: T) -> (T, T) {
        match self {
            BinOp::Add => (g, g),
            BinOp::Sub => (g, -g),
            BinOp::Mul => (g * b, g * a),
            BinOp::Div => (g / b, -g * a / (b * b)),
        }
    }
}

impl<T: Element> Tensor<T> {
    fn unary(
        &self,
        name: &'static str,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + Send + Sync + 'static,
    ) -> Tensor<T> {
        let out: Vec<T> = self.data().iter().map(|&v| f(v)).collect();
        Tensor::from_op(
            out,
            self.shape().to_vec(),
            name,
            vec![self.clone()],
            Box::new(move |inputs, out, g| {
                let x = inputs[0].data();
                let gx = x.iter().zip(out).zip(g).map(|((&x, &y), &g)| g * df(x, y)).collect();
                vec![Some(gx)]
            }),
        )
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary(
            "relu",
            |x| x.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary("sigmoid", sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn silu(&self) -> Tensor<T> {
        self.unary(
            "silu",
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    pub fn softplus(&self) -> Tensor<T> {
        self.unary("softplus", softplus, |x, _| sigmoid(x))
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary("exp", |x| x.exp(), |_, y| y)
    }

    pub fn neg(&self) -> Tensor<T> {
        self.unary("neg", |x| -x, |_, _| -T::one())
    }

    pub fn scale(&self, k: T) -> Tensor<T> {
        self.unary("scale", move |x| x * k, move |_, _| k)
    }

    pub fn add_scalar(&self, k: T) -> Tensor<T> {
        self.unary("add_scalar", move |x| x + k, |_, _| T::one())
    }

    /// `k - x`
    pub fn rsub_scalar(&self, k: T) -> Tensor<T> {
        self.unary("rsub_scalar", move |x| k - x, |_, _| -T::one())
    }

    pub fn activation(&self, kind: Activation) -> Tensor<T> {
        match kind {
            Activation::Relu => self.relu(),
            Activation::Sigmoid => self.sigmoid(),
            Activation::Silu => self.silu(),
        }
    }

    fn binary(&self, other: &Tensor<T>, op: BinOp) -> Result<Tensor<T>> {
        let name = op.name();
        if self.shape() == other.shape() {
            let out: Vec<T> = {
                let (a, b) = (self.data(), other.data());
                a.iter().zip(b.iter()).map(|(&a, &b)| op.apply(a, b)).collect()
            };
            return Ok(Tensor::from_op(
                out,
                self.shape().to_vec(),
                name,
                vec![self.clone(), other.clone()],
                Box::new(move |inputs, _, g| {
                    let (a, b) = (inputs[0].data(), inputs[1].data());
                    let mut ga = Vec::with_capacity(g.len());
                    let mut gb = Vec::with_capacity(g.len());
                    for i in 0..g.len() {
                        let (da, db) = op.partials(g[i], a[i], b[i]);
                        ga.push(da);
                        gb.push(db);
                    }
                    vec![
                        inputs[0].requires_grad().then_some(ga),
                        inputs[1].requires_grad().then_some(gb),
                    ]
                }),
            ));
        }
        let (pa, pb, out_shape, rank) = broadcast(name, self.shape(), other.shape())?;
        let (sa, sb) = (bstrides(&pa, &out_shape), bstrides(&pb, &out_shape));
        let mut out = vec![T::zero(); out_shape.iter().product()];
        {
            let (a, b) = (self.data(), other.data());
            for_each_broadcast(&out_shape, &sa, &sb, |o, ia, ib| out[o] = op.apply(a[ia], b[ib]));
        }
        Ok(Tensor::from_op(
            out,
            out_shape[4 - rank..].to_vec(),
            name,
            vec![self.clone(), other.clone()],
            Box::new(move |inputs, _, g| {
                let (a, b) = (inputs[0].data(), inputs[1].data());
                let mut ga = vec![T::zero(); a.len()];
                let mut gb = vec![T::zero(); b.len()];
                for_each_broadcast(&out_shape, &sa, &sb, |o, ia, ib| {
                    let (da, db) = op.partials(g[o], a[ia], b[ib]);
                    ga[ia] = ga[ia] + da;
                    gb[ib] = gb[ib] + db;
                });
                vec![
                    inputs[0].requires_grad().then_some(ga),
                    inputs[1].requires_grad().then_some(gb),
                ]
            }),
        ))
    }

    /// Broadcasting sum (shapes right-aligned, extents equal or 1).
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, BinOp::Add)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, BinOp::Sub)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, BinOp::Mul)
    }

    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, BinOp::Div)
    }

    pub fn sum_all(&self) -> Tensor<T> {
        let s = self.data().iter().fold(T::zero(), |acc, &v| acc + v);
        Tensor::from_op(
            vec![s],
            vec![1],
            "sum_all",
            vec![self.clone()],
            Box::new(|inputs, _, g| vec![Some(vec![g[0]; inputs[0].numel()])]),
        )
    }

    pub fn mean_all(&self) -> Tensor<T> {
        let n = lit::<T>(self.numel() as f64);
        self.sum_all().scale(T::one() / n)
    }

    /// Sum over one axis, keeping it with extent 1.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<T>> {
        check_axis("sum_axis", self.shape(), axis)?;
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let mut out = vec![T::zero(); outer * inner];
        {
            let x = self.data();
            for o in 0..outer {
                for l in 0..len {
                    let src = &x[(o * len + l) * inner..][..inner];
                    for (d, &s) in out[o * inner..][..inner].iter_mut().zip(src) {
                        *d = *d + s;
                    }
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = 1;
        Ok(Tensor::from_op(
            out,
            shape,
            "sum_axis",
            vec![self.clone()],
            Box::new(move |_, _, g| {
                let mut gx = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    for l in 0..len {
                        gx[(o * len + l) * inner..][..inner].copy_from_slice(&g[o * inner..][..inner]);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor<T>> {
        check_axis("mean_axis", self.shape(), axis)?;
        let len = lit::<T>(self.shape()[axis] as f64);
        Ok(self.sum_axis(axis)?.scale(T::one() / len))
    }

    /// Max over one axis (kept with extent 1). The gradient flows to the
    /// first maximal element only.
    pub fn max_axis(&self, axis: usize) -> Result<Tensor<T>> {
        check_axis("max_axis", self.shape(), axis)?;
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let mut out = vec![T::neg_infinity(); outer * inner];
        let mut arg = vec![0usize; outer * inner];
        {
            let x = self.data();
            for o in 0..outer {
                for l in 0..len {
                    for i in 0..inner {
                        let v = x[(o * len + l) * inner + i];
                        let k = o * inner + i;
                        if v > out[k] || l == 0 {
                            out[k] = v;
                            arg[k] = l;
                        }
                    }
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = 1;
        Ok(Tensor::from_op(
            out,
            shape,
            "max_axis",
            vec![self.clone()],
            Box::new(move |_, _, g| {
                let mut gx = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let k = o * inner + i;
                        gx[(o * len + arg[k]) * inner + i] = g[k];
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        check_axis("softmax", self.shape(), axis)?;
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let mut out = self.to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |l: usize| (o * len + l) * inner + i;
                let m = (0..len).map(|l| out[idx(l)]).fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for l in 0..len {
                    let e = (out[idx(l)] - m).exp();
                    out[idx(l)] = e;
                    z = z + e;
                }
                for l in 0..len {
                    out[idx(l)] = out[idx(l)] / z;
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            "softmax",
            vec![self.clone()],
            Box::new(move |_, y, g| {
                let mut gx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |l: usize| (o * len + l) * inner + i;
                        let dot = (0..len).fold(T::zero(), |acc, l| acc + g[idx(l)] * y[idx(l)]);
                        for l in 0..len {
                            gx[idx(l)] = y[idx(l)] * (g[idx(l)] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() || shape.is_empty() || shape.len() > 4 {
            return Err(Error::shape(
                "reshape",
                format!("cannot reshape {:?} into {shape:?}", self.shape()),
            ));
        }
        Ok(Tensor::from_op(
            self.to_vec(),
            shape.to_vec(),
            "reshape",
            vec![self.clone()],
            Box::new(|_, _, g| vec![Some(g.to_vec())]),
        ))
    }

    /// Concatenates along `axis`; all other extents must match.
    pub fn concat(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        check_axis("concat", first.shape(), axis)?;
        for p in parts {
            let ok = p.rank() == first.rank()
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape(
                    "concat",
                    format!("{:?} incompatible with {:?} along axis {axis}", p.shape(), first.shape()),
                ));
            }
        }
        let (outer, _, inner) = split_axis(first.shape(), axis);
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        {
            let datas: Vec<_> = parts.iter().map(|p| p.data()).collect();
            for o in 0..outer {
                for (d, &l) in datas.iter().zip(&lens) {
                    out.extend_from_slice(&d[o * l * inner..][..l * inner]);
                }
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::from_op(
            out,
            shape,
            "concat",
            parts.iter().map(|&p| p.clone()).collect(),
            Box::new(move |inputs, _, g| {
                let mut grads: Vec<Vec<T>> =
                    lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
                for o in 0..outer {
                    let mut off = 0;
                    for (gi, &l) in grads.iter_mut().zip(&lens) {
                        gi.extend_from_slice(&g[(o * total + off) * inner..][..l * inner]);
                        off += l;
                    }
                }
                grads
                    .into_iter()
                    .zip(inputs)
                    .map(|(gi, t)| t.requires_grad().then_some(gi))
                    .collect()
            }),
        ))
    }

    /// `len` entries along `axis` starting at `start`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        check_axis("slice", self.shape(), axis)?;
        let (outer, full, inner) = split_axis(self.shape(), axis);
        if start + len > full || len == 0 {
            return Err(Error::shape(
                "slice",
                format!("range {start}..{} out of extent {full}", start + len),
            ));
        }
        let mut out = Vec::with_capacity(outer * len * inner);
        {
            let x = self.data();
            for o in 0..outer {
                out.extend_from_slice(&x[(o * full + start) * inner..][..len * inner]);
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op(
            out,
            shape,
            "slice",
            vec![self.clone()],
            Box::new(move |_, _, g| {
                let mut gx = vec![T::zero(); outer * full * inner];
                for o in 0..outer {
                    gx[(o * full + start) * inner..][..len * inner]
                        .copy_from_slice(&g[o * len * inner..][..len * inner]);
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Reorders the last axis: `out[.., j] = x[.., index[j]]`. `index` must
    /// be a permutation of `0..last_extent`.
    pub fn permute_last(&self, index: Arc<Vec<usize>>) -> Result<Tensor<T>> {
        let last = *self.shape().last().expect("rank >= 1");
        if index.len() != last {
            return Err(Error::shape(
                "permute_last",
                format!("index of length {} for last extent {last}", index.len()),
            ));
        }
        let rows = self.numel() / last.max(1);
        let mut out = Vec::with_capacity(self.numel());
        {
            let x = self.data();
            for r in 0..rows {
                let row = &x[r * last..][..last];
                out.extend(index.iter().map(|&j| row[j]));
            }
        }
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            "permute_last",
            vec![self.clone()],
            Box::new(move |_, _, g| {
                let mut gx = vec![T::zero(); g.len()];
                for r in 0..rows {
                    let (gr, gxr) = (&g[r * last..][..last], &mut gx[r * last..][..last]);
                    for (j, &src) in index.iter().enumerate() {
                        gxr[src] = gxr[src] + gr[j];
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Mean over H and W of a rank-4 tensor, giving `[B, C, 1, 1]`.
    pub fn global_avg_pool(&self) -> Result<Tensor<T>> {
        let (b, c, h, w) = self.dims4()?;
        self.reshape(&[b, c, h * w])?.mean_axis(2)?.reshape(&[b, c, 1, 1])
    }

    /// Max over H and W of a rank-4 tensor, giving `[B, C, 1, 1]`.
    pub fn global_max_pool(&self) -> Result<Tensor<T>> {
        let (b, c, h, w) = self.dims4()?;
        self.reshape(&[b, c, h * w])?.max_axis(2)?.reshape(&[b, c, 1, 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
        Tensor::leaf(data, shape, true).unwrap()
    }

    #[test]
    fn relu_and_sigmoid_values() {
        let x = t(vec![-1.0, 0.0, 2.0], &[3]);
        assert_eq!(x.relu().to_vec(), vec![0.0, 0.0, 2.0]);
        assert_eq!(Tensor::<f64>::scalar(0.0).sigmoid().item(), 0.5);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let x = Tensor::<f64>::full(&[2, 5, 3], 0.7);
        let y = x.softmax(1).unwrap();
        for v in y.to_vec() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn add_zeros_is_identity() {
        let x = t((0..24).map(|v| v as f64).collect(), &[1, 2, 3, 4]);
        let y = x.add(&Tensor::zeros(&[1, 2, 3, 4])).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn broadcast_mul_reduces_gradient() {
        let x = t(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[1, 2, 3, 1]);
        let s = t(vec![10.0, 100.0], &[1, 2, 1, 1]);
        let y = x.mul(&s).unwrap();
        assert_eq!(y.to_vec(), vec![10.0, 20.0, 30.0, 400.0, 500.0, 600.0]);
        y.sum_all().backward().unwrap();
        assert_eq!(s.grad().unwrap(), vec![6.0, 15.0]);
        assert_eq!(x.grad().unwrap(), vec![10.0, 10.0, 10.0, 100.0, 100.0, 100.0]);
    }

    #[test]
    fn broadcast_rejects_incompatible() {
        let a = Tensor::<f32>::zeros(&[1, 2, 3, 4]);
        let b = Tensor::<f32>::zeros(&[1, 3, 1, 1]);
        assert!(matches!(a.add(&b), Err(Error::Shape { .. })));
    }

    #[test]
    fn concat_channel_extents() {
        let a = Tensor::<f32>::zeros(&[2, 3, 4, 5]);
        let b = Tensor::<f32>::ones(&[2, 5, 4, 5]);
        let c = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 8, 4, 5]);
        assert!(Tensor::concat(&[&a, &Tensor::zeros(&[2, 5, 4, 6])], 1).is_err());
    }

    #[test]
    fn concat_and_slice_route_gradients() {
        let a = t(vec![1.0, 2.0], &[1, 1, 2]);
        let b = t(vec![3.0, 4.0, 5.0, 6.0], &[1, 2, 2]);
        let c = Tensor::concat(&[&a, &b], 1).unwrap();
        let w = Tensor::from_vec((1..=6).map(|v| v as f64).collect(), &[1, 3, 2]).unwrap();
        c.mul(&w).unwrap().sum_all().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0, 2.0]);
        assert_eq!(b.grad().unwrap(), vec![3.0, 4.0, 5.0, 6.0]);
        let s = c.slice(1, 1, 2).unwrap();
        assert_eq!(s.to_vec(), vec![3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn global_pools_of_constant_map() {
        let x = Tensor::<f32>::full(&[2, 3, 4, 4], 2.5);
        assert!(x.global_avg_pool().unwrap().to_vec().iter().all(|&v| v == 2.5));
        assert!(x.global_max_pool().unwrap().to_vec().iter().all(|&v| v == 2.5));
        assert_eq!(x.global_avg_pool().unwrap().shape(), &[2, 3, 1, 1]);
    }

    #[test]
    fn max_axis_gradient_goes_to_argmax() {
        let x = t(vec![1.0, 5.0, 3.0, 7.0, 2.0, 0.0], &[2, 3]);
        let m = x.max_axis(1).unwrap();
        assert_eq!(m.to_vec(), vec![5.0, 7.0]);
        m.sum_all().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn permute_last_inverse_restores() {
        let x = t(vec![1.0, 2.0, 3.0, 4.0], &[1, 4]);
        let p = Arc::new(vec![2, 0, 3, 1]);
        let inv = Arc::new(vec![1, 3, 0, 2]);
        let y = x.permute_last(p).unwrap();
        assert_eq!(y.to_vec(), vec![3.0, 1.0, 4.0, 2.0]);
        assert_eq!(y.permute_last(inv).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn softplus_is_stable() {
        let x = Tensor::<f32>::from_vec(vec![-100.0, 0.0, 100.0], &[3]).unwrap();
        let y = x.softplus().to_vec();
        assert!(y[0] > 0.0 && y[0] < 1e-30);
        assert!((y[1] - std::f32::consts::LN_2).abs() < 1e-6);
        assert_eq!(y[2], 100.0);
    }
}
