//! Complex tensors on the tape, carried as a pair of real nodes.
//!
//! Every complex operation below is a composition of real primitives, so
//! gradients reach the real and imaginary parts without extra rules.

use crate::error::Result;
use crate::scalar::Real;
use crate::tape::{Tape, Var};
use crate::tensor::{ComplexTensor, Tensor};

/// A complex tensor on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct CVar {
    pub re: Var,
    pub im: Var,
}

impl<T: Real> Tape<T> {
    pub fn complex_leaf(&mut self, value: ComplexTensor<T>) -> CVar {
        CVar {
            re: self.leaf(value.re),
            im: self.leaf(value.im),
        }
    }

    pub fn complex_constant(&mut self, value: ComplexTensor<T>) -> CVar {
        CVar {
            re: self.constant(value.re),
            im: self.constant(value.im),
        }
    }

    /// Lifts a real node to complex with an all-zero imaginary part.
    pub fn lift_complex(&mut self, re: Var) -> CVar {
        let im = self.constant(Tensor::zeros(self.shape(re)));
        CVar { re, im }
    }

    pub fn complex_value(&self, z: CVar) -> ComplexTensor<T> {
        ComplexTensor {
            re: self.value(z.re).clone(),
            im: self.value(z.im).clone(),
        }
    }

    pub fn cadd(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        Ok(CVar {
            re: self.add(a.re, b.re)?,
            im: self.add(a.im, b.im)?,
        })
    }

    pub fn csub(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        Ok(CVar {
            re: self.sub(a.re, b.re)?,
            im: self.sub(a.im, b.im)?,
        })
    }

    pub fn conj(&mut self, a: CVar) -> CVar {
        CVar {
            re: a.re,
            im: self.neg(a.im),
        }
    }

    /// Elementwise (broadcasting) complex product.
    pub fn cmul(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        let rr = self.mul(a.re, b.re)?;
        let ii = self.mul(a.im, b.im)?;
        let ri = self.mul(a.re, b.im)?;
        let ir = self.mul(a.im, b.re)?;
        Ok(CVar {
            re: self.sub(rr, ii)?,
            im: self.add(ri, ir)?,
        })
    }

    /// Elementwise `a ⊙ conj(b)`.
    pub fn cmul_conj(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        let rr = self.mul(a.re, b.re)?;
        let ii = self.mul(a.im, b.im)?;
        let ir = self.mul(a.im, b.re)?;
        let ri = self.mul(a.re, b.im)?;
        Ok(CVar {
            re: self.add(rr, ii)?,
            im: self.sub(ir, ri)?,
        })
    }

    /// Squared magnitude `re² + im²` as a real node.
    pub fn abs2(&mut self, a: CVar) -> Result<Var> {
        let r2 = self.square(a.re);
        let i2 = self.square(a.im);
        self.add(r2, i2)
    }

    /// Multiplies a complex node by a real node (broadcasting).
    pub fn cmul_real(&mut self, a: CVar, r: Var) -> Result<CVar> {
        Ok(CVar {
            re: self.mul(a.re, r)?,
            im: self.mul(a.im, r)?,
        })
    }

    pub fn cscale(&mut self, a: CVar, c: T) -> CVar {
        CVar {
            re: self.scale(a.re, c),
            im: self.scale(a.im, c),
        }
    }

    /// Complex matrix product over the last two axes, with the batch rules of [`Tape::matmul`].
    pub fn cmatmul(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        let rr = self.matmul(a.re, b.re)?;
        let ii = self.matmul(a.im, b.im)?;
        let ri = self.matmul(a.re, b.im)?;
        let ir = self.matmul(a.im, b.re)?;
        Ok(CVar {
            re: self.sub(rr, ii)?,
            im: self.add(ri, ir)?,
        })
    }

    /// Conjugate transpose of the last two axes.
    pub fn adjoint(&mut self, a: CVar) -> Result<CVar> {
        let re = self.transpose(a.re)?;
        let it = self.transpose(a.im)?;
        Ok(CVar {
            re,
            im: self.neg(it),
        })
    }

    pub fn cnarrow(&mut self, a: CVar, axis: usize, start: usize, len: usize) -> Result<CVar> {
        Ok(CVar {
            re: self.narrow(a.re, axis, start, len)?,
            im: self.narrow(a.im, axis, start, len)?,
        })
    }

    pub fn cconcat(&mut self, parts: &[CVar], axis: usize) -> Result<CVar> {
        let re: Vec<Var> = parts.iter().map(|p| p.re).collect();
        let im: Vec<Var> = parts.iter().map(|p| p.im).collect();
        Ok(CVar {
            re: self.concat(&re, axis)?,
            im: self.concat(&im, axis)?,
        })
    }

    pub fn csum_all(&mut self, a: CVar) -> CVar {
        CVar {
            re: self.sum_all(a.re),
            im: self.sum_all(a.im),
        }
    }

    pub fn creshape(&mut self, a: CVar, shape: &[usize]) -> Result<CVar> {
        Ok(CVar {
            re: self.reshape(a.re, shape)?,
            im: self.reshape(a.im, shape)?,
        })
    }

    /// Real FFT along the last axis as a complex node.
    pub fn rfft(&mut self, a: Var) -> Result<CVar> {
        let (re, im) = self.rfft_last_axis(a)?;
        Ok(CVar { re, im })
    }
}
