//! Tolerances used by contract checks and verification reports.
//!
//! Every threshold asserted anywhere in the crate is named here, so the
//! acceptance surface is visible in one place.

/// Relative round-trip error allowed for the position ↔ Fourier transform pair.
pub const FFT_ROUNDTRIP_REL: f64 = 1e-12;

/// Positivity slack: a multiplier is accepted as nonnegative when
/// `min ≥ -PSD_REL · max`. Absorbs FFT round-off dust only.
pub const PSD_REL: f64 = 1e-12;

/// Relative sup-norm tolerance for the base telescoping sum against the
/// resolvent oracle.
pub const BASE_SUM_REL: f64 = 1e-10;

/// Relative sup-norm tolerance for the fractional sum against the fractional
/// resolvent oracle (limited by the spectral quadrature, not by round-off).
pub const FRAC_SUM_REL: f64 = 1e-6;

/// Support certification threshold for strategies with only approximate
/// finite range: values below `RANGE_TOL_BANDS · sup|K|` count as zero.
pub const RANGE_TOL_BANDS: f64 = 1e-10;

/// Relative accuracy of the exact scalar rescaling identity
/// `L^{-jα} ρ_α(s L^{-2j}, m²) = ρ_α(s, L^{jα} m²)`.
pub const RHO_RESCALE_REL: f64 = 1e-13;

/// Round-off slack for the pointwise weight bound `ρ_α ≤ c_α s^{α/2}/(s^α+m⁴)`;
/// the two sides are equal in exact arithmetic at α = 1.
pub const RHO_BOUND_SLACK: f64 = 1e-13;

/// Default relative tolerance for scalar quadratures.
pub const QUAD_REL_TOL_DEFAULT: f64 = 1e-8;

/// Default node budget for free-form scalar quadratures.
pub const QUAD_MAX_NODES_DEFAULT: usize = 6000;

/// Hard cap on the shared node set used for fractional decompositions.
pub const SHARED_NODE_CAP: usize = 400;

/// Relative tolerance for the m = 0 integral representation of the
/// fractional resolvent checked against the Laplacian resolvent family.
pub const M0_REPRESENTATION_REL: f64 = 1e-6;
