//! Torus lattice geometry, translation-invariant kernels and their Fourier
//! multipliers, discrete derivatives, and the measurement primitives
//! (support radius, positivity) everything else is built on.
//!
//! A kernel is one real value per lattice offset `x` on the discrete torus
//! `(Z/MZ)^d`; it is required to be even, `K(x) = K(-x)`, so its discrete
//! Fourier transform is real. Kernels are immutable after construction and
//! all operations are pure, so concurrent read access is safe.

mod fft;
mod geometry;
mod kernel;

pub use fft::{dft_backward, dft_forward};
pub use geometry::{SymbolTable, TorusGeometry};
pub use kernel::{forward_derivative, symbol, GridFn, Kernel, SpectralMultiplier, SupportRadius};
