//! Multivariable coherence attention.
//!
//! Each wavelet atom acts as one head. Queries and keys are moved to the
//! frequency domain along the feature axis; their normalised spectral coherence
//! per time step becomes the attention profile that reweights the values.

use rand::Rng;
use sonnet_numerics::rng::xavier_uniform;
use sonnet_numerics::{lit, DropoutKey, Real, Tape, Tensor, Var};

use crate::error::{shape, Error, Result};

/// Stabiliser added to the coherence denominator.
pub const COHERENCE_EPS: f64 = 1e-6;

/// MVCA weights as values. `w_q`/`w_k` are absent when coherence is disabled,
/// the MLP when the residual mixer is disabled.
#[derive(Clone, Debug, PartialEq)]
pub struct MvcaWeights<T> {
    pub w_q: Option<Tensor<T>>,
    pub w_k: Option<Tensor<T>>,
    pub w_v: Tensor<T>,
    pub mlp: Option<MlpWeights<T>>,
    pub w_out: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpWeights<T> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

impl<T: Real> MvcaWeights<T> {
    /// Xavier-uniform matrices, zero biases.
    pub fn init(d: usize, coherence: bool, mlp: bool, rng: &mut impl Rng) -> Self {
        let mut sq = || xavier_uniform::<T>(&[d, d], d, d, &mut *rng);
        let (w_q, w_k) = if coherence { (Some(sq()), Some(sq())) } else { (None, None) };
        let w_v = sq();
        let mlp = mlp.then(|| MlpWeights {
            w1: sq(),
            b1: Tensor::zeros(&[d]),
            w2: sq(),
            b2: Tensor::zeros(&[d]),
        });
        let w_out = sq();
        Self {
            w_q,
            w_k,
            w_v,
            mlp,
            w_out,
        }
    }

    /// Binds every weight as a constant (no gradient).
    pub fn constants(&self, tape: &mut Tape<T>) -> MvcaVars {
        let mut c = |t: &Tensor<T>| tape.constant(t.clone());
        MvcaVars {
            w_q: self.w_q.as_ref().map(&mut c),
            w_k: self.w_k.as_ref().map(&mut c),
            w_v: c(&self.w_v),
            mlp: self.mlp.as_ref().map(|m| MlpVars {
                w1: c(&m.w1),
                b1: c(&m.b1),
                w2: c(&m.w2),
                b2: c(&m.b2),
            }),
            w_out: c(&self.w_out),
        }
    }
}

#[derive(Copy, Clone, Debug)]
pub struct MvcaVars {
    pub w_q: Option<Var>,
    pub w_k: Option<Var>,
    pub w_v: Var,
    pub mlp: Option<MlpVars>,
    pub w_out: Var,
}

#[derive(Copy, Clone, Debug)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

#[derive(Copy, Clone, Debug)]
pub struct MvcaOptions {
    pub dropout: f64,
    pub eps: f64,
    pub training: bool,
    /// Head `h` draws its dropout mask from `key.layer + h`.
    pub key: DropoutKey,
}

impl MvcaOptions {
    pub fn eval() -> Self {
        Self {
            dropout: 0.0,
            eps: COHERENCE_EPS,
            training: false,
            key: DropoutKey::new(0, 0, 0),
        }
    }
}

/// Normalised spectral coherence per time step: `[.., L, d]` × 2 → `[.., L]`.
pub fn spectral_coherence<T: Real>(tape: &mut Tape<T>, q: Var, k: Var, eps: f64) -> Result<Var> {
    let qs = tape.shape(q).to_vec();
    if qs != tape.shape(k) || qs.len() < 2 {
        return Err(shape("spectral_coherence", format!("{qs:?} vs {:?}", tape.shape(k))));
    }
    if eps <= 0.0 {
        return Err(Error::Config(format!("coherence eps must be positive, got {eps}")));
    }
    let last = qs.len() - 1;
    let qf = tape.rfft(q)?;
    let kf = tape.rfft(k)?;

    let cross = tape.cmul_conj(qf, kf)?;
    let cross_re = tape.mean_axis(cross.re, last)?;
    let cross_im = tape.mean_axis(cross.im, last)?;
    let pqq = tape.abs2(qf)?;
    let pqq = tape.mean_axis(pqq, last)?;
    let pkk = tape.abs2(kf)?;
    let pkk = tape.mean_axis(pkk, last)?;

    let re2 = tape.square(cross_re);
    let im2 = tape.square(cross_im);
    let num = tape.add(re2, im2)?;
    let den = tape.mul(pqq, pkk)?;
    let den = tape.offset(den, lit(eps));
    let c = tape.div(num, den)?;
    Ok(tape.reshape(c, &qs[..last])?)
}

fn check_square(tape: &Tape<impl Real>, w: Var, d: usize, name: &str) -> Result<()> {
    if tape.shape(w) != [d, d] {
        return Err(shape("mvca", format!("{name} must be [{d}, {d}], got {:?}", tape.shape(w))));
    }
    Ok(())
}

/// Attention over `[.., K, L, d]` with the K atoms as heads; output has the same shape.
pub fn mvca_forward<T: Real>(tape: &mut Tape<T>, p: Var, w: &MvcaVars, opts: &MvcaOptions) -> Result<Var> {
    let ps = tape.shape(p).to_vec();
    if ps.len() < 3 {
        return Err(shape("mvca", format!("expected [.., K, L, d], got {ps:?}")));
    }
    let rank = ps.len();
    let (heads, d) = (ps[rank - 3], ps[rank - 1]);
    check_square(tape, w.w_v, d, "W_v")?;
    check_square(tape, w.w_out, d, "W_out")?;

    let v = tape.matmul(p, w.w_v)?;
    let o_r = match (w.w_q, w.w_k) {
        (Some(wq), Some(wk)) => {
            check_square(tape, wq, d, "W_q")?;
            check_square(tape, wk, d, "W_k")?;
            let q = tape.matmul(p, wq)?;
            let k = tape.matmul(p, wk)?;
            let c = spectral_coherence(tape, q, k, opts.eps)?;
            let scaled = tape.scale(c, lit(1.0 / (d as f64).sqrt()));
            let a = tape.softmax(scaled, rank - 2)?;
            let a = head_dropout(tape, a, heads, opts)?;
            let mut col = ps[..rank - 1].to_vec();
            col.push(1);
            let a = tape.reshape(a, &col)?;
            tape.mul(a, v)?
        }
        (None, None) => v,
        _ => return Err(Error::Config("W_q and W_k must be both present or both absent".into())),
    };

    let o_m = match &w.mlp {
        Some(m) => {
            for (x, name) in [(m.w1, "MLP W1"), (m.w2, "MLP W2")] {
                check_square(tape, x, d, name)?;
            }
            let h = tape.matmul(o_r, m.w1)?;
            let h = tape.add(h, m.b1)?;
            let h = tape.gelu(h);
            let h = tape.matmul(h, m.w2)?;
            let h = tape.add(h, m.b2)?;
            tape.add(o_r, h)?
        }
        None => o_r,
    };
    Ok(tape.matmul(o_m, w.w_out)?)
}

/// Dropout on `[.., K, L]` attention weights with one mask stream per head.
fn head_dropout<T: Real>(tape: &mut Tape<T>, a: Var, heads: usize, opts: &MvcaOptions) -> Result<Var> {
    if !(0.0..1.0).contains(&opts.dropout) {
        return Err(Error::Config(format!("dropout rate {} outside [0, 1)", opts.dropout)));
    }
    if !opts.training || opts.dropout == 0.0 {
        return Ok(a);
    }
    let axis = tape.shape(a).len() - 2;
    let mut parts = Vec::with_capacity(heads);
    for h in 0..heads {
        let head = tape.narrow(a, axis, h, 1)?;
        let key = opts.key.with_layer(opts.key.layer + h as u64);
        parts.push(tape.dropout(head, opts.dropout, key, true)?);
    }
    Ok(tape.concat(&parts, axis)?)
}

/// Drop-in attention block for a plain `[.., u, v]` embedding: the feature axis is
/// split into `heads` equal slices, each slice runs as one head with `d = v / heads`,
/// and head outputs are concatenated back along the features.
pub fn mvca_2d_adapter<T: Real>(
    tape: &mut Tape<T>,
    e: Var,
    heads: usize,
    w: &MvcaVars,
    opts: &MvcaOptions,
) -> Result<Var> {
    let es = tape.shape(e).to_vec();
    if es.len() < 2 || heads == 0 {
        return Err(shape("mvca_2d_adapter", format!("expected [.., u, v], got {es:?}")));
    }
    let rank = es.len();
    let (u, v) = (es[rank - 2], es[rank - 1]);
    if v % heads != 0 {
        return Err(Error::Config(format!(
            "feature width {v} is not divisible by {heads} heads"
        )));
    }
    let width = v / heads;
    let lead = &es[..rank - 2];

    let mut split = lead.to_vec();
    split.extend([u, heads, width]);
    let x = tape.reshape(e, &split)?;
    let mut perm: Vec<usize> = (0..lead.len()).collect();
    perm.extend([rank - 1, rank - 2, rank]);
    let x = tape.permute(x, &perm)?;
    let o = mvca_forward(tape, x, w, opts)?;
    let o = tape.permute(o, &perm)?;
    Ok(tape.reshape(o, &es)?)
}
