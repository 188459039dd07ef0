//! Dense row-major tensors.

use crate::error::{shape_err, NumericsError, Result};
use crate::scalar::Real;

/// Dense row-major real tensor with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(shape_err("tensor", format!("zero extent in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(shape_err(
                "tensor",
                format!("shape {shape:?} needs {numel} elements, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
            grad: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::full(&[1], value)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Self {
        let numel: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<T>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(shape_err("set_grad", "gradient length differs from data"));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = Some(vec![T::zero(); self.data.len()]);
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, (&ix, &ext)) in index.iter().zip(&self.shape).enumerate() {
            debug_assert!(ix < ext, "index {ix} out of range on axis {i}");
            off = off * ext + ix;
        }
        off
    }

    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(shape_err(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        self.grad = None;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    /// Converts element type, e.g. to run an `f64` check against an `f32` tensor.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of_f64(v.as_f64())).collect(),
            grad: None,
        }
    }
}

/// Complex tensor stored as separate real and imaginary buffers of one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor<T> {
    pub re: Tensor<T>,
    pub im: Tensor<T>,
}

impl<T: Real> ComplexTensor<T> {
    pub fn new(re: Tensor<T>, im: Tensor<T>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(shape_err(
                "complex",
                format!("re {:?} vs im {:?}", re.shape(), im.shape()),
            ));
        }
        Ok(Self { re, im })
    }

    pub fn from_real(re: Tensor<T>) -> Self {
        let im = Tensor::zeros(re.shape());
        Self { re, im }
    }

    pub fn eye(n: usize) -> Self {
        Self::from_real(Tensor::eye(n))
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: self.im.map(|v| -v),
        }
    }

    /// Elementwise `self ⊙ conj(other)`.
    pub fn mul_conj(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(shape_err("mul_conj", "shape mismatch"));
        }
        let (a, b) = (self.re.data(), self.im.data());
        let (c, d) = (other.re.data(), other.im.data());
        let re = (0..a.len()).map(|i| a[i] * c[i] + b[i] * d[i]).collect();
        let im = (0..a.len()).map(|i| b[i] * c[i] - a[i] * d[i]).collect();
        Ok(Self {
            re: Tensor::new(self.shape(), re)?,
            im: Tensor::new(self.shape(), im)?,
        })
    }

    /// Conjugate transpose of a 2-D complex matrix.
    pub fn adjoint(&self) -> Result<Self> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(shape_err("adjoint", format!("expected a matrix, got {s:?}")));
        }
        let (r, c) = (s[0], s[1]);
        let re = Tensor::from_fn(&[c, r], |ix| self.re.at(&[ix[1], ix[0]]));
        let im = Tensor::from_fn(&[c, r], |ix| -self.im.at(&[ix[1], ix[0]]));
        Ok(Self { re, im })
    }

    /// Plain complex matrix product of two 2-D complex matrices.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return Err(shape_err("complex matmul", format!("{a:?} x {b:?}")));
        }
        let (m, k, n) = (a[0], a[1], b[1]);
        let mut re = vec![T::zero(); m * n];
        let mut im = vec![T::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let (xr, xi) = (self.re.data()[i * k + p], self.im.data()[i * k + p]);
                for j in 0..n {
                    let (yr, yi) = (other.re.data()[p * n + j], other.im.data()[p * n + j]);
                    re[i * n + j] += xr * yr - xi * yi;
                    im[i * n + j] += xr * yi + xi * yr;
                }
            }
        }
        Ok(Self {
            re: Tensor::new(&[m, n], re)?,
            im: Tensor::new(&[m, n], im)?,
        })
    }

    pub fn abs2(&self) -> Tensor<T> {
        let data = self
            .re
            .data()
            .iter()
            .zip(self.im.data())
            .map(|(&r, &i)| r * r + i * i)
            .collect();
        Tensor::new(self.shape(), data).expect("shape preserved")
    }
}

/// Numpy-style broadcast of two shapes, aligned on trailing axes.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let ea = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let eb = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (ea, eb) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(NumericsError::Shape {
                    op: "broadcast",
                    detail: format!("{a:?} vs {b:?}"),
                })
            }
        };
    }
    Ok(out)
}

/// Strides of `shape` when read as a broadcast view of `out` (zero on broadcast axes).
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let pad = out.len() - shape.len();
    let mut strides = vec![0; out.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i + pad] = if shape[i] == 1 && out[i + pad] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Calls `f(out_index, a_offset, b_offset)` for every element of `out` in row-major order.
pub(crate) fn for_each_broadcast(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    for_each_run(out, sa, sb, |o, ia, ib, run| {
        for t in 0..run.len {
            f(o + t, ia + t * run.sa, ib + t * run.sb);
        }
    });
}

/// A contiguous stretch of the output with fixed operand steps.
#[derive(Copy, Clone, Debug)]
pub(crate) struct Run {
    pub len: usize,
    pub sa: usize,
    pub sb: usize,
}

/// Row-major walk over `out` in runs along the innermost axis, after
/// dropping unit axes and merging neighbours whose strides line up.
/// Calls `f(out_start, a_start, b_start, run)`.
pub(crate) fn for_each_run(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize, Run),
) {
    if out.iter().any(|&e| e == 0) {
        return;
    }
    // (extent, a stride, b stride), innermost first
    let mut dims: Vec<(usize, usize, usize)> = Vec::with_capacity(out.len());
    for ax in (0..out.len()).rev() {
        let (e, a, b) = (out[ax], sa[ax], sb[ax]);
        if e == 1 {
            continue;
        }
        match dims.last_mut() {
            Some(last) if a == last.1 * last.0 && b == last.2 * last.0 => last.0 *= e,
            _ => dims.push((e, a, b)),
        }
    }
    let Some(&(len, ra, rb)) = dims.first() else {
        f(0, 0, 0, Run { len: 1, sa: 0, sb: 0 });
        return;
    };
    let run = Run { len, sa: ra, sb: rb };
    let outer = &dims[1..];
    let mut idx = vec![0usize; outer.len()];
    let (mut oa, mut ob, mut o) = (0usize, 0usize, 0usize);
    loop {
        f(o, oa, ob, run);
        o += len;
        let mut ax = 0;
        loop {
            if ax == outer.len() {
                return;
            }
            let (e, a, b) = outer[ax];
            idx[ax] += 1;
            oa += a;
            ob += b;
            if idx[ax] < e {
                break;
            }
            oa -= a * e;
            ob -= b * e;
            idx[ax] = 0;
            ax += 1;
        }
    }
}

/// Splits `shape` around `axis` into (outer, extent, inner) element counts.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
