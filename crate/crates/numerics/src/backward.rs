use crate::error::{NumericsError, Result};
use crate::fft::RealFft;
use crate::gemm::{gemm, gemm_acc, transpose};
use crate::scalar::{lit, Real};
use crate::tape::{gelu_grad, permute_offsets, pool_bounds, ConvGeometry, MatmulPlan, Op, Tape, Var};
use crate::tensor::{broadcast_strides, for_each_run, split_axis, Run};

impl<T: Real> Tape<T> {
    /// Propagates `∂loss/∂node` to every node that depends on a leaf parameter.
    ///
    /// Gradients are stored on the nodes; read them with [`Tape::grad`].
    /// Calling again overwrites the previous gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss).to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(NumericsError::NotScalar(shape));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        grads[loss.0] = Some(vec![T::one()]);

        let mut fft = std::mem::take(&mut self.fft);
        let mut outcome = Ok(());
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].needs_grad {
                let op = self.nodes[i].op.clone();
                outcome = self.propagate(i, &op, &g, &mut grads, &mut fft);
                if outcome.is_err() {
                    break;
                }
            }
            self.nodes[i].value.set_grad(g)?;
        }
        self.fft = fft;
        outcome?;
        for node in &mut self.nodes[..n] {
            if node.value.grad().is_none() {
                node.value.zero_grad();
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, contrib: Vec<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, c) in acc.iter_mut().zip(contrib) {
                    *a += c;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    fn accumulate_with(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let len = self.value(v).numel();
        let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); len]);
        f(slot);
    }

    fn propagate(
        &self,
        i: usize,
        op: &Op<T>,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
        fft: &mut RealFft<T>,
    ) -> Result<()> {
        let out = &self.nodes[i].value;
        let unary = |a: Var, f: &dyn Fn(T, T, T) -> T| -> Vec<T> {
            let x = self.value(a).data();
            let y = out.data();
            (0..g.len()).map(|j| f(g[j], x[j], y[j])).collect()
        };
        match op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
                self.binary_backward(op, (*a, *b), out.shape(), g, grads);
            }
            Op::Neg(a) => self.accumulate(grads, *a, g.iter().map(|&v| -v).collect()),
            Op::Scale(a, c) => self.accumulate(grads, *a, g.iter().map(|&v| v * *c).collect()),
            Op::Offset(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::Exp(a) => {
                let c = unary(*a, &|g, _, y| g * y);
                self.accumulate(grads, *a, c)
            }
            Op::Cos(a) => {
                let c = unary(*a, &|g, x, _| -g * x.sin());
                self.accumulate(grads, *a, c)
            }
            Op::Sin(a) => {
                let c = unary(*a, &|g, x, _| g * x.cos());
                self.accumulate(grads, *a, c)
            }
            Op::Square(a) => {
                let c = unary(*a, &|g, x, _| g * lit::<T>(2.0) * x);
                self.accumulate(grads, *a, c)
            }
            Op::Sqrt(a) => {
                let c = unary(*a, &|g, _, y| g * lit::<T>(0.5) / y);
                self.accumulate(grads, *a, c)
            }
            Op::Gelu(a) => {
                let c = unary(*a, &|g, x, _| g * gelu_grad(x));
                self.accumulate(grads, *a, c)
            }
            Op::Matmul(a, b) => self.matmul_backward(*a, *b, g, grads)?,
            Op::Sum { input, axis } => {
                let (outer, ext, inner) = split_axis(self.shape(*input), *axis);
                self.accumulate_with(grads, *input, |gx| {
                    for o in 0..outer {
                        for e in 0..ext {
                            let base = (o * ext + e) * inner;
                            for k in 0..inner {
                                gx[base + k] += g[o * inner + k];
                            }
                        }
                    }
                });
            }
            Op::SumAll(a) => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, vec![g[0]; n]);
            }
            Op::Reshape(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::Permute(a, perm) => {
                let offsets = permute_offsets(self.shape(*a), perm);
                self.accumulate_with(grads, *a, |gx| {
                    for (o, &src) in offsets.iter().enumerate() {
                        gx[src] += g[o];
                    }
                });
            }
            Op::Concat(parts, axis) => {
                let (outer, total, inner) = split_axis(out.shape(), *axis);
                let mut at = 0;
                for &p in parts {
                    let ext = self.shape(p)[*axis];
                    let mut c = Vec::with_capacity(outer * ext * inner);
                    for o in 0..outer {
                        let from = (o * total + at) * inner;
                        c.extend_from_slice(&g[from..from + ext * inner]);
                    }
                    self.accumulate(grads, p, c);
                    at += ext;
                }
            }
            Op::Narrow { input, axis, start } => {
                let (outer, ext, inner) = split_axis(self.shape(*input), *axis);
                let len = out.shape()[*axis];
                self.accumulate_with(grads, *input, |gx| {
                    for o in 0..outer {
                        let to = (o * ext + start) * inner;
                        for k in 0..len * inner {
                            gx[to + k] += g[o * len * inner + k];
                        }
                    }
                });
            }
            Op::Softmax { input, axis } => {
                let (outer, ext, inner) = split_axis(out.shape(), *axis);
                let y = out.data();
                let mut c = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for k in 0..inner {
                        let at = |e: usize| (o * ext + e) * inner + k;
                        let dot: T = (0..ext).map(|e| g[at(e)] * y[at(e)]).sum();
                        for e in 0..ext {
                            c[at(e)] = y[at(e)] * (g[at(e)] - dot);
                        }
                    }
                }
                self.accumulate(grads, *input, c);
            }
            Op::RfftRe(a) | Op::RfftIm(a) => {
                let d = *self.shape(*a).last().expect("rank >= 1");
                let zeros = vec![T::zero(); g.len()];
                let c = match op {
                    Op::RfftRe(_) => fft.adjoint(g, &zeros, d),
                    _ => fft.adjoint(&zeros, g, d),
                };
                self.accumulate(grads, *a, c);
            }
            Op::Conv1d { input, weight, bias, padding } => {
                self.conv_backward(*input, *weight, *bias, *padding, g, grads)?;
            }
            Op::AvgPool(a) => {
                let t = *self.shape(*a).last().expect("rank >= 1");
                let n = *out.shape().last().expect("rank >= 1");
                let rows = out.numel() / n;
                self.accumulate_with(grads, *a, |gx| {
                    for r in 0..rows {
                        for b in 0..n {
                            let (s, e) = pool_bounds(b, t, n);
                            let share = g[r * n + b] / lit::<T>((e - s) as f64);
                            for v in &mut gx[r * t + s..r * t + e] {
                                *v += share;
                            }
                        }
                    }
                });
            }
        }
        Ok(())
    }

    fn binary_backward(
        &self,
        op: &Op<T>,
        (a, b): (Var, Var),
        out: &[usize],
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let (ta, tb) = (self.value(a), self.value(b));
        let (da, db) = (ta.data(), tb.data());
        let (sa, sb) = (broadcast_strides(ta.shape(), out), broadcast_strides(tb.shape(), out));
        // One pass per operand that needs a gradient; the op is matched once
        // and each run loops over plain offsets.
        let walk = |f: &mut dyn FnMut(usize, usize, usize, Run)| for_each_run(out, &sa, &sb, f);
        if self.nodes[a.0].needs_grad {
            let mut ga = vec![T::zero(); da.len()];
            match op {
                Op::Add(..) | Op::Sub(..) => walk(&mut |o, ia, _, r| {
                    for t in 0..r.len {
                        ga[ia + t * r.sa] += g[o + t];
                    }
                }),
                Op::Mul(..) => walk(&mut |o, ia, ib, r| {
                    for t in 0..r.len {
                        ga[ia + t * r.sa] += g[o + t] * db[ib + t * r.sb];
                    }
                }),
                Op::Div(..) => walk(&mut |o, ia, ib, r| {
                    for t in 0..r.len {
                        ga[ia + t * r.sa] += g[o + t] / db[ib + t * r.sb];
                    }
                }),
                _ => unreachable!("not a binary op"),
            }
            self.accumulate(grads, a, ga);
        }
        if self.nodes[b.0].needs_grad {
            let mut gb = vec![T::zero(); db.len()];
            match op {
                Op::Add(..) => walk(&mut |o, _, ib, r| {
                    for t in 0..r.len {
                        gb[ib + t * r.sb] += g[o + t];
                    }
                }),
                Op::Sub(..) => walk(&mut |o, _, ib, r| {
                    for t in 0..r.len {
                        gb[ib + t * r.sb] -= g[o + t];
                    }
                }),
                Op::Mul(..) => walk(&mut |o, ia, ib, r| {
                    for t in 0..r.len {
                        gb[ib + t * r.sb] += g[o + t] * da[ia + t * r.sa];
                    }
                }),
                Op::Div(..) => walk(&mut |o, ia, ib, r| {
                    for t in 0..r.len {
                        let y = db[ib + t * r.sb];
                        gb[ib + t * r.sb] -= g[o + t] * da[ia + t * r.sa] / (y * y);
                    }
                }),
                _ => unreachable!("not a binary op"),
            }
            self.accumulate(grads, b, gb);
        }
    }

    fn matmul_backward(&self, a: Var, b: Var, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let plan = MatmulPlan::new(self.shape(a), self.shape(b))?;
        let (m, k, n, batch) = (plan.m, plan.k, plan.n, plan.batch);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        if self.nodes[a.0].needs_grad {
            let mut ga = vec![T::zero(); da.len()];
            if plan.b_shared {
                let bt = transpose(k, n, db);
                gemm_acc(batch * m, n, k, g, &bt, &mut ga);
            } else {
                for i in 0..batch {
                    let bt = transpose(k, n, &db[i * k * n..(i + 1) * k * n]);
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let dst = if plan.a_shared { &mut ga[..] } else { &mut ga[i * m * k..(i + 1) * m * k] };
                    gemm_acc(m, n, k, gi, &bt, dst);
                }
            }
            self.accumulate(grads, a, ga);
        }
        if self.nodes[b.0].needs_grad {
            let mut gb = vec![T::zero(); db.len()];
            if plan.b_shared {
                let at = transpose(batch * m, k, da);
                gb = gemm(k, batch * m, n, &at, g);
            } else {
                for i in 0..batch {
                    let ai = if plan.a_shared { da } else { &da[i * m * k..(i + 1) * m * k] };
                    let at = transpose(m, k, ai);
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    gemm_acc(k, m, n, &at, gi, &mut gb[i * k * n..(i + 1) * k * n]);
                }
            }
            self.accumulate(grads, b, gb);
        }
        Ok(())
    }

    fn conv_backward(
        &self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        pad: usize,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) -> Result<()> {
        let geo = ConvGeometry::new(self.shape(x), self.shape(w), pad)?;
        let ck = geo.c_in * geo.k;
        let xs = self.value(x).data();
        let wd = self.value(w).data();
        let item_in = geo.c_in * geo.t_in;
        let item_out = geo.c_out * geo.t_out;
        if self.nodes[w.0].needs_grad {
            let mut gw = vec![T::zero(); wd.len()];
            for b in 0..geo.batch {
                let cols_t = geo.im2col_t(&xs[b * item_in..(b + 1) * item_in]);
                let cols = transpose(ck, geo.t_out, &cols_t);
                gemm_acc(geo.c_out, geo.t_out, ck, &g[b * item_out..(b + 1) * item_out], &cols, &mut gw);
            }
            self.accumulate(grads, w, gw);
        }
        if self.nodes[x.0].needs_grad {
            let wt = transpose(geo.c_out, ck, wd);
            let mut gx = vec![T::zero(); xs.len()];
            for b in 0..geo.batch {
                let gcols = gemm(ck, geo.c_out, geo.t_out, &wt, &g[b * item_out..(b + 1) * item_out]);
                geo.col2im_t(&gcols, &mut gx[b * item_in..(b + 1) * item_in]);
            }
            self.accumulate(grads, x, gx);
        }
        if let Some(bv) = bias {
            let mut gb = vec![T::zero(); geo.c_out];
            for (row, chunk) in g.chunks(geo.t_out).enumerate() {
                gb[row % geo.c_out] += chunk.iter().copied().sum::<T>();
            }
            self.accumulate(grads, bv, gb);
        }
        Ok(())
    }
}
