//! Unitary Koopman operator rebuilt from `(S, p)` on every pass and applied
//! across the atom axis in one global step.

use rand::Rng;
use sonnet_numerics::rng::normal_tensor;
use sonnet_numerics::{qr_unitary, CVar, ComplexTensor, Real, Tape, Tensor, Var};

use crate::error::{shape, Error, Result};

/// Learnable seed matrix `S` (`[K, K]` complex) and phase vector `p` (`[K]`).
#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanParams<T> {
    pub s: ComplexTensor<T>,
    pub p: Tensor<T>,
}

impl<T: Real> KoopmanParams<T> {
    /// Real and imaginary parts of `S` ~ N(0, 1/K); `p = 0`.
    pub fn init(k: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / k as f64).sqrt();
        let re = normal_tensor(&[k, k], std, rng);
        let im = normal_tensor(&[k, k], std, rng);
        Self {
            s: ComplexTensor { re, im },
            p: Tensor::zeros(&[k]),
        }
    }

    /// `S = I`, `p = 0`, which yields the identity operator.
    pub fn identity(k: usize) -> Self {
        Self {
            s: ComplexTensor::eye(k),
            p: Tensor::zeros(&[k]),
        }
    }

    pub fn constants(&self, tape: &mut Tape<T>) -> KoopmanVars {
        KoopmanVars {
            s: tape.complex_constant(self.s.clone()),
            p: tape.constant(self.p.clone()),
        }
    }

    /// Evaluated operator `U D U†`.
    pub fn operator(&self) -> Result<ComplexTensor<T>> {
        let mut tape = Tape::new();
        let vars = self.constants(&mut tape);
        let op = build_operator(&mut tape, &vars)?;
        Ok(tape.complex_value(op))
    }
}

#[derive(Copy, Clone, Debug)]
pub struct KoopmanVars {
    pub s: CVar,
    pub p: Var,
}

/// `K = U D U†` with `U` the unitary QR factor of `S` and `D = diag(e^{i p})`.
pub fn build_operator<T: Real>(tape: &mut Tape<T>, vars: &KoopmanVars) -> Result<CVar> {
    let k = tape.shape(vars.p).to_vec();
    let ss = tape.shape(vars.s.re).to_vec();
    if k.len() != 1 || ss != [k[0], k[0]] {
        return Err(shape("build_operator", format!("S {ss:?} vs p {k:?}")));
    }
    if !tape.value(vars.s.re).is_finite() || !tape.value(vars.s.im).is_finite() {
        return Err(Error::NonFinite {
            layer: "koopman S".into(),
        });
    }
    let u = qr_unitary(tape, vars.s)?;
    let row = tape.reshape(vars.p, &[1, k[0]])?;
    let phase = CVar {
        re: tape.cos(row),
        im: tape.sin(row),
    };
    // U·D scales column j of U by e^{i p_j}
    let ud = tape.cmul(u, phase)?;
    let u_adj = tape.adjoint(u)?;
    Ok(tape.cmatmul(ud, u_adj)?)
}

/// Applies `K` along the atom axis of a real `[.., K, L, d]` state lifted to
/// complex (zero imaginary part), treating the trailing axes as `L·d` columns.
pub fn evolve<T: Real>(tape: &mut Tape<T>, o: Var, op: CVar) -> Result<CVar> {
    let os = tape.shape(o).to_vec();
    let k = tape.shape(op.re)[0];
    if os.len() < 3 || os[os.len() - 3] != k {
        return Err(shape("evolve", format!("state {os:?} vs operator of size {k}")));
    }
    let mut flat = os[..os.len() - 2].to_vec();
    flat.push(os[os.len() - 2] * os[os.len() - 1]);
    let cols = tape.reshape(o, &flat)?;
    // the imaginary part of O_c is zero, so K·O_c = (Re K·O, Im K·O)
    let re = tape.matmul(op.re, cols)?;
    let im = tape.matmul(op.im, cols)?;
    Ok(CVar {
        re: tape.reshape(re, &os)?,
        im: tape.reshape(im, &os)?,
    })
}
