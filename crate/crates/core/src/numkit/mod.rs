//! Dense double-precision kernels.

mod bessel;
mod eig;
mod fft;
mod lstsq;
mod matrix;
mod rng;

pub use bessel::{bessel_j, bessel_j_table, MAX_ARGUMENT as BESSEL_MAX_ARGUMENT, MAX_ORDER as BESSEL_MAX_ORDER};
pub use eig::{sym_eig, EigenDecomposition};
pub use fft::{dft, dft2, idft, naive_dft, ComplexSpectrum};
pub use lstsq::lstsq;
pub(crate) use matrix::gemm;
pub use matrix::{dot, Matrix};
pub use num_complex::Complex64;
pub use rng::{Distribution, SeededRng};
