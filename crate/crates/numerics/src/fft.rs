//! Real-input FFT along the last axis, plus its adjoint for the backward pass.

use rustfft::num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use crate::scalar::Real;

/// Number of non-redundant bins of a length-`d` real FFT.
pub fn half_spectrum_len(d: usize) -> usize {
    d / 2 + 1
}

/// Cached FFT plans shared by every `rfft` call on one tape.
pub struct RealFft<T: Real> {
    planner: FftPlanner<T>,
}

impl<T: Real> Default for RealFft<T> {
    fn default() -> Self {
        Self {
            planner: FftPlanner::new(),
        }
    }
}

impl<T: Real> RealFft<T> {
    /// Transforms `rows` contiguous length-`d` rows; returns (re, im), each `rows × (d/2+1)`.
    pub fn forward(&mut self, x: &[T], d: usize) -> (Vec<T>, Vec<T>) {
        let rows = x.len() / d;
        let bins = half_spectrum_len(d);
        let fft = self.planner.plan_fft(d, FftDirection::Forward);
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(&mut buf, &mut scratch);
        let mut re = Vec::with_capacity(rows * bins);
        let mut im = Vec::with_capacity(rows * bins);
        for row in buf.chunks(d) {
            for c in &row[..bins] {
                re.push(c.re);
                im.push(c.im);
            }
        }
        (re, im)
    }

    /// Adjoint of [`RealFft::forward`]: maps half-spectrum cotangents back onto the input rows.
    ///
    /// `gx[j] = Re(Σ_k (gre[k] + i·gim[k])·e^{+2πi·jk/d})` over the retained bins.
    pub fn adjoint(&mut self, gre: &[T], gim: &[T], d: usize) -> Vec<T> {
        let bins = half_spectrum_len(d);
        let rows = gre.len() / bins;
        let ifft = self.planner.plan_fft(d, FftDirection::Inverse);
        let zero = Complex::new(T::zero(), T::zero());
        let mut buf = vec![zero; rows * d];
        for r in 0..rows {
            for k in 0..bins {
                buf[r * d + k] = Complex::new(gre[r * bins + k], gim[r * bins + k]);
            }
        }
        let mut scratch = vec![zero; ifft.get_inplace_scratch_len()];
        ifft.process_with_scratch(&mut buf, &mut scratch);
        buf.into_iter().map(|c| c.re).collect()
    }
}
