//! Reverse-mode computation tape over dense tensors.
//!
//! Every operation appends a node holding its value and the handles of its
//! inputs. Nodes can only reference earlier nodes, so the node order is a
//! topological order and [`Tape::backward`] simply walks it in reverse.

use crate::error::{shape_err, NumericsError, Result};
use crate::fft::{half_spectrum_len, RealFft};
use crate::gemm::{gemm, gemm_acc};
use crate::rng::{dropout_mask, DropoutKey};
use crate::scalar::{lit, Real};
use crate::tensor::{broadcast_shapes, broadcast_strides, for_each_broadcast, for_each_run, split_axis, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, T),
    Offset(Var),
    Exp(Var),
    Cos(Var),
    Sin(Var),
    Square(Var),
    Sqrt(Var),
    Gelu(Var),
    Matmul(Var, Var),
    Sum { input: Var, axis: usize },
    SumAll(Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Narrow { input: Var, axis: usize, start: usize },
    Softmax { input: Var, axis: usize },
    RfftRe(Var),
    RfftIm(Var),
    Conv1d { input: Var, weight: Var, bias: Option<Var>, padding: usize },
    AvgPool(Var),
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) needs_grad: bool,
}

/// Ordered record of primitive operations for reverse-mode replay.
pub struct Tape<T: Real> {
    pub(crate) nodes: Vec<Node<T>>,
    pub(crate) fft: RealFft<T>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fft: RealFft::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node; handles from before the call become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    /// Bytes held by node values and gradients. Used as a memory report.
    pub fn memory_bytes(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| {
                let g = n.value.grad().map_or(0, |g| g.len());
                (n.value.numel() + g) * T::BYTES
            })
            .sum()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Registers a differentiable leaf (a learnable parameter).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated by the last [`Tape::backward`], if the node was reached.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    /// Gradient as a tensor, zeros when the node was not reached.
    pub fn grad_tensor(&self, v: Var) -> Tensor<T> {
        let value = &self.nodes[v.0].value;
        match value.grad() {
            Some(g) => Tensor::new(value.shape(), g.to_vec()).expect("grad shaped like value"),
            None => Tensor::zeros(value.shape()),
        }
    }

    /// Resets every gradient buffer to zero.
    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    /// Fails with the given label when any element of `v` is NaN or infinite.
    pub fn ensure_finite(&self, v: Var, label: &str) -> Result<()> {
        if self.value(v).is_finite() {
            Ok(())
        } else {
            Err(NumericsError::NonFinite(label.to_string()))
        }
    }

    // ---- elementwise binary (broadcasting) ----

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (shape, data) = if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            (ta.shape().to_vec(), data)
        } else {
            let out = broadcast_shapes(ta.shape(), tb.shape())
                .map_err(|_| shape_err(name, format!("{:?} vs {:?}", ta.shape(), tb.shape())))?;
            let sa = broadcast_strides(ta.shape(), &out);
            let sb = broadcast_strides(tb.shape(), &out);
            let (da, db) = (ta.data(), tb.data());
            let mut data = Vec::with_capacity(out.iter().product());
            for_each_run(&out, &sa, &sb, |_, ia, ib, run| match (run.sa, run.sb) {
                (1, 1) => data.extend(da[ia..ia + run.len].iter().zip(&db[ib..ib + run.len]).map(|(&x, &y)| f(x, y))),
                (1, 0) => data.extend(da[ia..ia + run.len].iter().map(|&x| f(x, db[ib]))),
                (0, 1) => data.extend(db[ib..ib + run.len].iter().map(|&y| f(da[ia], y))),
                _ => data.extend((0..run.len).map(|t| f(da[ia + t * run.sa], db[ib + t * run.sb]))),
            });
            (out, data)
        };
        let needs = self.ng(a) || self.ng(b);
        let value = Tensor::new(&shape, data)?;
        Ok(self.push(value, op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    // ---- elementwise unary ----

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(a).map(f);
        let needs = self.ng(a);
        self.push(value, op, needs)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x + c, Op::Offset(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), Op::Exp(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.cos(), Op::Cos(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.sin(), Op::Sin(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.sqrt(), Op::Sqrt(a))
    }

    /// Exact GELU, `x·Φ(x)` with the Gaussian CDF.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, gelu_exact, Op::Gelu(a))
    }

    // ---- linear algebra ----

    /// Matrix product over the last two axes.
    ///
    /// Leading (batch) axes must be equal, or one operand must be a plain
    /// matrix that is then shared across the other's batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let plan = MatmulPlan::new(self.shape(a), self.shape(b))?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let out = plan.forward(da, db);
        let needs = self.ng(a) || self.ng(b);
        let value = Tensor::new(&plan.out_shape, out)?;
        Ok(self.push(value, Op::Matmul(a, b), needs))
    }

    // ---- reductions and shape ----

    /// Sum over `axis`, keeping it with extent 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(shape_err("sum_axis", format!("axis {axis} for {shape:?}")));
        }
        let (outer, ext, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for e in 0..ext {
                let base = (o * ext + e) * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        let mut oshape = shape;
        oshape[axis] = 1;
        let needs = self.ng(a);
        let value = Tensor::new(&oshape, out)?;
        Ok(self.push(value, Op::Sum { input: a, axis }, needs))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.sum_axis(a, axis)?;
        let n = self.shape(a)[axis];
        Ok(self.scale(s, T::one() / lit::<T>(n as f64)))
    }

    /// Sum of all elements as a shape-`[1]` tensor.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        let needs = self.ng(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), needs)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).numel();
        let s = self.sum_all(a);
        self.scale(s, T::one() / lit::<T>(n as f64))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        let needs = self.ng(a);
        Ok(self.push(value, Op::Reshape(a), needs))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(shape_err("permute", format!("{perm:?} for {shape:?}")));
        }
        let offsets = permute_offsets(&shape, perm);
        let src = self.value(a).data();
        let data: Vec<T> = offsets.iter().map(|&o| src[o]).collect();
        let oshape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let needs = self.ng(a);
        let value = Tensor::new(&oshape, data)?;
        Ok(self.push(value, Op::Permute(a, perm.to_vec()), needs))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let r = self.shape(a).len();
        if r < 2 {
            return Err(shape_err("transpose", "rank < 2"));
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(a, &perm)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", format!("axis {axis} for {base:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(shape_err("concat", format!("{s:?} vs {base:?}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let ext = self.shape(p)[axis];
                let src = self.value(p).data();
                data.extend_from_slice(&src[o * ext * inner..(o + 1) * ext * inner]);
            }
        }
        let mut oshape = base;
        oshape[axis] = total;
        let needs = parts.iter().any(|&p| self.ng(p));
        let value = Tensor::new(&oshape, data)?;
        Ok(self.push(value, Op::Concat(parts.to_vec(), axis), needs))
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(shape_err(
                "narrow",
                format!("[{start}, {}) on axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, ext, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * ext + start) * inner;
            data.extend_from_slice(&src[from..from + len * inner]);
        }
        let mut oshape = shape;
        oshape[axis] = len;
        let needs = self.ng(a);
        let value = Tensor::new(&oshape, data)?;
        Ok(self.push(value, Op::Narrow { input: a, axis, start }, needs))
    }

    // ---- neural-network primitives ----

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(shape_err("softmax", format!("axis {axis} for {shape:?}")));
        }
        let (outer, ext, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |e: usize| (o * ext + e) * inner + i;
                let mut max = T::neg_infinity();
                for e in 0..ext {
                    if src[at(e)] > max {
                        max = src[at(e)];
                    }
                }
                let mut sum = T::zero();
                for e in 0..ext {
                    let v = (src[at(e)] - max).exp();
                    out[at(e)] = v;
                    sum += v;
                }
                for e in 0..ext {
                    out[at(e)] = out[at(e)] / sum;
                }
            }
        }
        let needs = self.ng(a);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::Softmax { input: a, axis }, needs))
    }

    /// Inverted dropout. Identity (same handle) when not training or `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64, key: DropoutKey, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumericsError::Parameter {
                op: "dropout",
                detail: format!("rate {rate} outside [0, 1)"),
            });
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let shape = self.shape(a).to_vec();
        let mask: Vec<T> = dropout_mask(key, shape.iter().product(), rate);
        let m = self.constant(Tensor::new(&shape, mask)?);
        self.mul(a, m)
    }

    /// Real FFT along the last axis; returns (re, im) with last extent `⌊d/2⌋+1`.
    pub fn rfft_last_axis(&mut self, a: Var) -> Result<(Var, Var)> {
        let shape = self.shape(a).to_vec();
        let d = *shape
            .last()
            .ok_or_else(|| shape_err("rfft", "rank-0 input"))?;
        let (re, im) = {
            let src = self.nodes[a.0].value.data();
            self.fft.forward(src, d)
        };
        let mut oshape = shape;
        *oshape.last_mut().expect("non-empty") = half_spectrum_len(d);
        let needs = self.ng(a);
        let vre = self.push(Tensor::new(&oshape, re)?, Op::RfftRe(a), needs);
        let vim = self.push(Tensor::new(&oshape, im)?, Op::RfftIm(a), needs);
        Ok((vre, vim))
    }

    /// 1-D convolution (cross-correlation), stride 1, symmetric zero padding.
    ///
    /// `x: [B, C_in, T]`, `weight: [C_out, C_in, k]`, `bias: [C_out]`.
    pub fn conv1d(&mut self, x: Var, weight: Var, bias: Option<Var>, padding: usize) -> Result<Var> {
        let geo = ConvGeometry::new(self.shape(x), self.shape(weight), padding)?;
        if let Some(b) = bias {
            if self.shape(b) != [geo.c_out] {
                return Err(shape_err("conv1d", format!("bias {:?}", self.shape(b))));
            }
        }
        let xs = self.value(x).data();
        let w = self.value(weight).data();
        let mut out = vec![T::zero(); geo.batch * geo.c_out * geo.t_out];
        for b in 0..geo.batch {
            let cols = geo.im2col_t(&xs[b * geo.c_in * geo.t_in..(b + 1) * geo.c_in * geo.t_in]);
            let ob = &mut out[b * geo.c_out * geo.t_out..(b + 1) * geo.c_out * geo.t_out];
            gemm_acc(geo.c_out, geo.c_in * geo.k, geo.t_out, w, &cols, ob);
        }
        if let Some(bv) = bias {
            let bias_data = self.value(bv).data();
            for (row, chunk) in out.chunks_mut(geo.t_out).enumerate() {
                let bo = bias_data[row % geo.c_out];
                for v in chunk {
                    *v += bo;
                }
            }
        }
        let needs = self.ng(x) || self.ng(weight) || bias.is_some_and(|b| self.ng(b));
        let value = Tensor::new(&[geo.batch, geo.c_out, geo.t_out], out)?;
        Ok(self.push(value, Op::Conv1d { input: x, weight, bias, padding }, needs))
    }

    /// Adaptive average pooling of the last axis to `out_len` bins.
    ///
    /// Bin `i` averages `[⌊i·T/n⌋, ⌈(i+1)·T/n⌉)`.
    pub fn adaptive_avg_pool1d(&mut self, a: Var, out_len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let t = *shape.last().ok_or_else(|| shape_err("adaptive_avg_pool1d", "rank-0 input"))?;
        if out_len == 0 {
            return Err(shape_err("adaptive_avg_pool1d", "zero output length"));
        }
        let rows = self.value(a).numel() / t;
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(rows * out_len);
        for r in 0..rows {
            let row = &src[r * t..(r + 1) * t];
            for i in 0..out_len {
                let (s, e) = pool_bounds(i, t, out_len);
                let sum: T = row[s..e].iter().copied().sum();
                out.push(sum / lit::<T>((e - s) as f64));
            }
        }
        let mut oshape = shape;
        *oshape.last_mut().expect("non-empty") = out_len;
        let needs = self.ng(a);
        let value = Tensor::new(&oshape, out)?;
        Ok(self.push(value, Op::AvgPool(a), needs))
    }
}

pub(crate) fn gelu_exact<T: Real>(x: T) -> T {
    let half = lit::<T>(0.5);
    half * x * (T::one() + (x * lit::<T>(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let cdf = lit::<T>(0.5) * (T::one() + (x * lit::<T>(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * lit::<T>(0.5)).exp() * lit::<T>(0.398_942_280_401_432_7);
    cdf + x * pdf
}

pub(crate) fn pool_bounds(i: usize, t: usize, n: usize) -> (usize, usize) {
    let start = (i * t) / n;
    let end = ((i + 1) * t).div_ceil(n);
    (start, end)
}

/// Source offset for every output element of a permutation, in output order.
pub(crate) fn permute_offsets(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let rank = shape.len();
    let mut in_strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let zeros = vec![0; rank];
    let mut offsets = Vec::with_capacity(shape.iter().product());
    for_each_broadcast(&out_shape, &strides, &zeros, |_, ia, _| offsets.push(ia));
    offsets
}

/// Batch layout of a (possibly broadcast) matrix product.
pub(crate) struct MatmulPlan {
    pub(crate) batch: usize,
    pub(crate) m: usize,
    pub(crate) k: usize,
    pub(crate) n: usize,
    pub(crate) a_shared: bool,
    pub(crate) b_shared: bool,
    pub(crate) out_shape: Vec<usize>,
}

impl MatmulPlan {
    pub(crate) fn new(sa: &[usize], sb: &[usize]) -> Result<Self> {
        let bad = || shape_err("matmul", format!("{sa:?} x {sb:?}"));
        if sa.len() < 2 || sb.len() < 2 {
            return Err(bad());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(bad());
        }
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let (lead, a_shared, b_shared) = if ba == bb {
            (ba.to_vec(), false, false)
        } else if bb.is_empty() {
            (ba.to_vec(), false, true)
        } else if ba.is_empty() {
            (bb.to_vec(), true, false)
        } else {
            return Err(bad());
        };
        let batch = lead.iter().product();
        let mut out_shape = lead;
        out_shape.extend([m, n]);
        Ok(Self {
            batch,
            m,
            k,
            n,
            a_shared,
            b_shared,
            out_shape,
        })
    }

    pub(crate) fn forward<T: Real>(&self, a: &[T], b: &[T]) -> Vec<T> {
        let (m, k, n) = (self.m, self.k, self.n);
        if self.b_shared {
            return gemm(self.batch * m, k, n, a, b);
        }
        let mut out = vec![T::zero(); self.batch * m * n];
        for i in 0..self.batch {
            let ab = if self.a_shared { a } else { &a[i * m * k..(i + 1) * m * k] };
            let bb = &b[i * k * n..(i + 1) * k * n];
            gemm_acc(m, k, n, ab, bb, &mut out[i * m * n..(i + 1) * m * n]);
        }
        out
    }
}

pub(crate) struct ConvGeometry {
    pub(crate) batch: usize,
    pub(crate) c_in: usize,
    pub(crate) t_in: usize,
    pub(crate) c_out: usize,
    pub(crate) k: usize,
    pub(crate) pad: usize,
    pub(crate) t_out: usize,
}

impl ConvGeometry {
    pub(crate) fn new(xs: &[usize], ws: &[usize], pad: usize) -> Result<Self> {
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] {
            return Err(shape_err("conv1d", format!("input {xs:?}, kernel {ws:?}")));
        }
        let (batch, c_in, t_in) = (xs[0], xs[1], xs[2]);
        let (c_out, k) = (ws[0], ws[2]);
        if t_in + 2 * pad < k {
            return Err(shape_err("conv1d", format!("kernel {k} longer than padded input {t_in}+2·{pad}")));
        }
        Ok(Self {
            batch,
            c_in,
            t_in,
            c_out,
            k,
            pad,
            t_out: t_in + 2 * pad - k + 1,
        })
    }

    /// Column matrix `[C_in·k, T_out]` for one batch item.
    pub(crate) fn im2col_t<T: Real>(&self, x: &[T]) -> Vec<T> {
        let mut cols = vec![T::zero(); self.c_in * self.k * self.t_out];
        for c in 0..self.c_in {
            for j in 0..self.k {
                let row = &mut cols[(c * self.k + j) * self.t_out..(c * self.k + j + 1) * self.t_out];
                for (t, slot) in row.iter_mut().enumerate() {
                    let src = t + j;
                    if src >= self.pad && src - self.pad < self.t_in {
                        *slot = x[c * self.t_in + src - self.pad];
                    }
                }
            }
        }
        cols
    }

    /// Scatter-adds a column-matrix cotangent back onto one input item.
    pub(crate) fn col2im_t<T: Real>(&self, cols: &[T], gx: &mut [T]) {
        for c in 0..self.c_in {
            for j in 0..self.k {
                let row = &cols[(c * self.k + j) * self.t_out..(c * self.k + j + 1) * self.t_out];
                for (t, &g) in row.iter().enumerate() {
                    let src = t + j;
                    if src >= self.pad && src - self.pad < self.t_in {
                        gx[c * self.t_in + src - self.pad] += g;
                    }
                }
            }
        }
    }
}
