//! Complex QR by Householder reflections, composed from tape primitives.
//!
//! The factorisation is written entirely in differentiable operations
//! (narrow, complex products, sqrt, division), so gradients reach the input
//! matrix through the reflection chain without a dedicated QR rule.
//!
//! Column phases are normalised so that `R` has a real, non-negative
//! diagonal; this makes the unitary factor unique for full-rank input.

use crate::complex::CVar;
use crate::error::{shape_err, NumericsError, Result};
use crate::scalar::Real;
use crate::tape::Tape;
use crate::tensor::{ComplexTensor, Tensor};

/// Unitary factor `U` and triangular factor `R = U†S` of a square complex matrix.
#[derive(Copy, Clone, Debug)]
pub struct QrFactors {
    pub unitary: CVar,
    pub triangular: CVar,
}

fn square_extent<T: Real>(tape: &Tape<T>, s: CVar) -> Result<usize> {
    let shape = tape.shape(s.re);
    if shape.len() != 2 || shape[0] != shape[1] || tape.shape(s.im) != shape {
        return Err(shape_err("qr_unitary", format!("expected a square matrix, got {shape:?}")));
    }
    Ok(shape[0])
}

/// Householder QR of `s`, returning both factors.
pub fn householder_qr<T: Real>(tape: &mut Tape<T>, s: CVar) -> Result<QrFactors> {
    let n = square_extent(tape, s)?;
    let mut a = s;
    let mut q = tape.complex_constant(ComplexTensor::eye(n));
    let two = tape.constant(Tensor::scalar(T::one() + T::one()));
    let mut col_phase = Vec::with_capacity(n);

    for j in 0..n {
        let below = tape.constant(Tensor::from_fn(&[n, 1], |ix| {
            if ix[0] >= j { T::one() } else { T::zero() }
        }));
        let unit = tape.constant(Tensor::from_fn(&[n, 1], |ix| {
            if ix[0] == j { T::one() } else { T::zero() }
        }));

        let column = tape.cnarrow(a, 1, j, 1)?;
        let x = tape.cmul_real(column, below)?;
        let pivot = tape.cnarrow(column, 0, j, 1)?;

        let x_abs2 = tape.abs2(x)?;
        let norm2 = tape.sum_all(x_abs2);
        if tape.value(norm2).item() <= T::min_positive_value() {
            return Err(NumericsError::RankDeficient(j));
        }
        let norm = tape.sqrt(norm2);

        // phase(x0) = x0 / |x0|, taken as 1 when the pivot is exactly zero
        let pivot_abs2 = tape.abs2(pivot)?;
        let phase = if tape.value(pivot_abs2).item() == T::zero() {
            tape.complex_constant(ComplexTensor::from_real(Tensor::ones(&[1, 1])))
        } else {
            let modulus = tape.sqrt(pivot_abs2);
            CVar {
                re: tape.div(pivot.re, modulus)?,
                im: tape.div(pivot.im, modulus)?,
            }
        };

        // alpha = -phase·‖x‖ ; v = x - alpha·e_j
        let alpha = tape.cmul_real(phase, norm)?;
        let alpha = CVar {
            re: tape.neg(alpha.re),
            im: tape.neg(alpha.im),
        };
        let shift = tape.cmul_real(alpha, unit)?;
        let v = tape.csub(x, shift)?;
        let v_abs2 = tape.abs2(v)?;
        let v_norm2 = tape.sum_all(v_abs2);
        let beta = tape.div(two, v_norm2)?;
        let v_scaled = tape.cmul_real(v, beta)?;
        let v_adj = tape.adjoint(v)?;

        // A ← A - β·v·(v†A)
        let w = tape.cmatmul(v_adj, a)?;
        let update = tape.cmatmul(v_scaled, w)?;
        a = tape.csub(a, update)?;

        // Q ← Q - β·(Qv)·v†
        let qv = tape.cmatmul(q, v_scaled)?;
        let update = tape.cmatmul(qv, v_adj)?;
        q = tape.csub(q, update)?;

        // R_jj = alpha; rescaling column j of Q by alpha/|alpha| = -phase makes it |alpha|.
        col_phase.push(CVar {
            re: tape.neg(phase.re),
            im: tape.neg(phase.im),
        });
    }

    let phases = tape.cconcat(&col_phase, 1)?;
    let unitary = tape.cmul(q, phases)?;
    let u_adj = tape.adjoint(unitary)?;
    let triangular = tape.cmatmul(u_adj, s)?;
    Ok(QrFactors {
        unitary,
        triangular,
    })
}

/// Unitary factor of the QR decomposition of a square complex matrix.
pub fn qr_unitary<T: Real>(tape: &mut Tape<T>, s: CVar) -> Result<CVar> {
    Ok(householder_qr(tape, s)?.unitary)
}

/// Convenience wrapper evaluating [`qr_unitary`] on plain values.
pub fn qr_unitary_value<T: Real>(s: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
    let mut tape = Tape::new();
    let sv = tape.complex_constant(s.clone());
    let u = qr_unitary(&mut tape, sv)?;
    Ok(tape.complex_value(u))
}

/// `max |(U†U - I)_ij|` for a square complex matrix.
pub fn unitarity_defect<T: Real>(u: &ComplexTensor<T>) -> Result<T> {
    let gram = u.adjoint()?.matmul(u)?;
    let n = gram.shape()[0];
    let mut worst = T::zero();
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { T::one() } else { T::zero() };
            let dr = (gram.re.at(&[i, j]) - target).abs();
            let di = gram.im.at(&[i, j]).abs();
            worst = worst.max(dr).max(di);
        }
    }
    Ok(worst)
}
