//! Dense row-major tensors with a dynamically recorded reverse-mode graph.
//!
//! Every op that sees at least one input with `requires_grad` (while grad
//! mode is enabled) records its inputs and a backward closure on the output
//! node. [`Tensor::backward`] walks the recorded graph in reverse topological
//! order and accumulates gradients into the leaves. Dropping the loss tensor
//! frees the graph.

mod conv;
mod norm;
mod ops;
mod resample;

pub use conv::{conv2d, conv_output_extent, Conv2dParams};
pub use norm::{normalize, NormKind, RunningStats};
pub use ops::Activation;
pub use resample::{maxpool2, upsample2};

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::iter::Sum;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Scalar types the engine computes in. `f32` is the working precision,
/// `f64` exists for finite-difference gradient checks.
pub trait Element:
    Float + FromPrimitive + ToPrimitive + Default + fmt::Debug + fmt::Display + Send + Sync + Sum + 'static
{
    const DTYPE: &'static str;

    /// `c = alpha * op(a) * op(b) + beta * c` on raw strided buffers.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-overlapping matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// Exponentiates every element in place.
    fn exp_in_place(xs: &mut [Self]) {
        for x in xs {
            *x = x.exp();
        }
    }
}

impl Element for f32 {
    const DTYPE: &'static str = "f32";

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn exp_in_place(xs: &mut [f32]) {
        for x in xs {
            *x = exp_f32(*x);
        }
    }
}

/// `2^n · p(r)` with `x = n ln 2 + r`, `|r| ≤ ln 2 / 2` and a degree-6
/// polynomial for `e^r`: within one ulp of libm on `[-87, 88]`, and branch
/// free so slices of it vectorise. Inputs are clamped to that range.
#[inline(always)]
fn exp_f32(x: f32) -> f32 {
    // adding 1.5·2^23 rounds to an integer held in the low mantissa bits
    const ROUND: f32 = 12_582_912.0;
    let x = x.clamp(-87.0, 88.0);
    let t = x * std::f32::consts::LOG2_E + ROUND;
    let n = t - ROUND;
    let r = x - n * 0.693_359_4 + n * 2.121_944_4e-4;
    let mut p = 1.987_569_1e-4f32;
    p = p * r + 1.398_199_9e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 5.000_000_1e-1;
    p = p * (r * r) + r + 1.0;
    let scale = (t.to_bits() as i32).wrapping_sub(ROUND.to_bits() as i32).wrapping_add(127) << 23;
    p * f32::from_bits(scale as u32)
}

impl Element for f64 {
    const DTYPE: &'static str = "f64";

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Converts an `f64` literal into the element type.
#[inline]
pub fn lit<T: Element>(v: f64) -> T {
    T::from_f64(v).expect("literal representable in element type")
}

/// Row-major matrix product `c = op(a) · op(b) + beta · c`.
///
/// `a` is `m×k` (stored `k×m` when `ta`), `b` is `k×n` (stored `n×k` when `tb`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Element>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    ta: bool,
    b: &[T],
    tb: bool,
    c: &mut [T],
    beta: T,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: lengths checked above; `c` is uniquely borrowed.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording any graph on this thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let _restore = Restore(prev);
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

/// Backward closure: `(inputs, output values, output gradient) -> input gradients`.
pub(crate) type BackwardFn<T> =
    Box<dyn Fn(&[Tensor<T>], &[T], &[T]) -> Vec<Option<Vec<T>>> + Send + Sync>;

struct Op<T: Element> {
    name: &'static str,
    inputs: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Node<T: Element> {
    id: usize,
    shape: Vec<usize>,
    data: RwLock<Vec<T>>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
    op: Option<Op<T>>,
}

#[derive(Clone)]
pub struct Tensor<T: Element>(Arc<Node<T>>);

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Tensor<T> {
    fn make(data: Vec<T>, shape: Vec<usize>, requires_grad: bool, op: Option<Op<T>>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: RwLock::new(data),
            requires_grad,
            grad: Mutex::new(None),
            op,
        }))
    }

    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        Self::leaf(data, shape, false)
    }

    /// Leaf tensor, optionally tracked for gradients (a trainable parameter).
    pub fn leaf(data: Vec<T>, shape: &[usize], requires_grad: bool) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::shape("tensor", format!("rank must be 1..=4, got {shape:?}")));
        }
        if numel(shape) != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} holds {} values, got {}", numel(shape), data.len()),
            ));
        }
        Ok(Self::make(data, shape.to_vec(), requires_grad, None))
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::make(vec![value; numel(shape)], shape.to_vec(), false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(v: T) -> Self {
        Self::full(&[1], v)
    }

    /// Records an op result. Tracks the graph only when grad mode is on and
    /// some input requires gradients.
    pub(crate) fn from_op(
        data: Vec<T>,
        shape: Vec<usize>,
        name: &'static str,
        inputs: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        #[cfg(debug_assertions)]
        // overflow to infinity is ordinary arithmetic; NaN from finite inputs is a bug
        if data.iter().any(|v| v.is_nan())
            && inputs.iter().all(|t| t.data().iter().all(|v| v.is_finite()))
        {
            panic!("{name} produced NaN from finite inputs");
        }
        let track = grad_enabled() && inputs.iter().any(|t| t.requires_grad());
        let op = track.then(|| Op {
            name,
            inputs,
            backward,
        });
        Self::make(data, shape, track, op)
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape() {
            [b, c, h, w] => Ok((b, c, h, w)),
            ref s => Err(Error::shape("dims4", format!("expected rank-4 tensor, got {s:?}"))),
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.0.op.as_ref().map(|o| o.name)
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<T>> {
        self.0.data.read().expect("tensor data lock poisoned")
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        let d = self.data();
        assert_eq!(d.len(), 1, "item() on tensor of shape {:?}", self.shape());
        d[0]
    }

    /// Mutates values in place. Intended for parameter updates and
    /// initialisation; never call it on a tensor that an unfinished graph
    /// still references.
    pub fn update_data(&self, f: impl FnOnce(&mut [T])) {
        let mut d = self.0.data.write().expect("tensor data lock poisoned");
        f(&mut d);
    }

    pub fn set_data(&self, values: &[T]) -> Result<()> {
        if values.len() != self.numel() {
            return Err(Error::shape(
                "set_data",
                format!("expected {} values, got {}", self.numel(), values.len()),
            ));
        }
        self.update_data(|d| d.copy_from_slice(values));
        Ok(())
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    /// Copy of the values as an untracked leaf.
    pub fn detach(&self) -> Tensor<T> {
        Self::make(self.to_vec(), self.shape().to_vec(), false, None)
    }

    /// Converts to another element type (untracked).
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        let data = self
            .data()
            .iter()
            .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan()))
            .collect();
        Tensor::make(data, self.shape().to_vec(), false, None)
    }

    /// Reverse-mode sweep from a one-element tensor. Leaf gradients
    /// accumulate across calls until [`Tensor::zero_grad`] is called.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::Usage("backward on a tensor that does not require grad".into()));
        }
        let order = self.topo_order();
        let mut grads: HashMap<usize, Vec<T>> = HashMap::new();
        grads.insert(self.id(), vec![T::one()]);
        for node in order.iter().rev() {
            let Some(g) = grads.remove(&node.id()) else {
                continue;
            };
            match &node.0.op {
                None => {
                    let mut slot = node.0.grad.lock().expect("grad lock poisoned");
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b),
                        None => *slot = Some(g),
                    }
                }
                Some(op) => {
                    let out = node.data();
                    let input_grads = (op.backward)(&op.inputs, &out, &g);
                    debug_assert_eq!(input_grads.len(), op.inputs.len(), "{}", op.name);
                    for (inp, ig) in op.inputs.iter().zip(input_grads) {
                        let Some(ig) = ig else { continue };
                        if !inp.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(ig.len(), inp.numel(), "{} grad size", op.name);
                        match grads.get_mut(&inp.id()) {
                            Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a = *a + *b),
                            None => {
                                grads.insert(inp.id(), ig);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over the tracked subgraph (inputs before consumers).
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !seen.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(op) = &t.0.op {
                for inp in op.inputs.iter().rev() {
                    if inp.requires_grad() && !seen.contains(&inp.id()) {
                        stack.push((inp.clone(), false));
                    }
                }
            }
        }
        order
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("dtype", &T::DTYPE)
            .field("requires_grad", &self.requires_grad())
            .field("op", &self.op_name())
            .finish()
    }
}
