//! Numeric substrate: dense real and complex tensors, a reverse-mode tape,
//! real FFT, Householder QR, Adam and keyed random streams.

mod backward;
pub mod adam;
pub mod complex;
pub mod error;
pub mod fft;
mod gemm;
pub mod qr;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use complex::CVar;
pub use error::{NumericsError, Result};
pub use qr::{householder_qr, qr_unitary, qr_unitary_value, unitarity_defect, QrFactors};
pub use rng::DropoutKey;
pub use scalar::{lit, Real};
pub use tape::{Tape, Var};
pub use tensor::{ComplexTensor, Tensor};
