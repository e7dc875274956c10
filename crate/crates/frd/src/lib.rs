//! Finite-range decompositions of fractional lattice resolvents.
//!
//! The library constructs, verifies and samples multiscale decompositions of
//! the torus kernel of `((-Δ)^{α/2} + m²)^{-1}` for `0 < α < 2`:
//!
//! ```text
//! G_α(x, m²) = Γ̃_{0,α}(x) + Γ̃_{1,α}(x) + ... + Γ̃_{J,α}(x) + remainder(x)
//! ```
//!
//! where each summand is positive definite (a valid Gaussian covariance),
//! vanishes identically beyond Euclidean distance `L^{j+1}`, and obeys
//! multiscale regularity bounds driven by the dimension `[φ] = (d - α)/2`.
//!
//! The pipeline has three layers:
//!
//! * [`weights`] — the scalar spectral weight `ρ_α(s, m²)` that expresses the
//!   fractional resolvent as an integral of ordinary resolvents
//!   `(-Δ + s)^{-1}` over `s`, plus the quadrature machinery for it.
//! * [`base`] — finite-range decompositions of the ordinary resolvent for a
//!   fixed mass `s`, built behind a strategy interface and certified by a
//!   contract harness (positivity, range, telescoping).
//! * [`frac`] — the fractional assembly: one shared quadrature rule applied
//!   node by node to the base family, rescaled views, coarse graining and
//!   the regularity / convergence reports.
//!
//! Everything is cross-checked against independent Fourier-space oracles
//! ([`oracle`]) and can be turned into Gaussian fluctuation fields
//! ([`sampler`]). The [`cli`] module and the `frd` binary expose the batch
//! front end; the `examples/` directory shows one runnable program per major
//! capability.

pub mod base;
pub mod cli;

pub mod error;
pub mod frac;


pub mod io;
pub mod lattice;
pub mod oracle;
pub mod report;
pub mod sampler;

pub mod tol;
pub mod weights;

pub use error::{Error, Result};
pub use lattice::{Kernel, SpectralMultiplier, TorusGeometry};
pub use weights::{QuadratureSpec, SpectralParams};
