//! The scalar analytic layer: the target function `f_α`, the spectral
//! weight `ρ_α`, its bounds, the Kato–Yosida quadrature identity, the exact
//! rescaling law, and the bound integrals `F`, `F₀`.
//!
//! The central identity is
//!
//! ```text
//! f_α(t, m²) = (t^{α/2} + m²)^{-1} = ∫_0^∞ ρ_α(s, m²) / (s + t) ds
//! ```
//!
//! with the nonnegative weight
//!
//! ```text
//! ρ_α(s, m²) = sin(πα/2)/π · s^{α/2} / (s^α + m⁴ + 2 m² s^{α/2} cos(πα/2))
//! ```
//!
//! valid for `0 < α < 2`, any real mass (only `m²` enters), and `t > 0`.
//! It expresses the fractional resolvent as a weighted integral of ordinary
//! resolvents, which is what makes the whole decomposition pipeline linear
//! in well-understood objects.

pub mod quadrature;

use crate::error::{Error, Result};
use crate::tol;
use serde::{Deserialize, Serialize};

pub use quadrature::{NodeSet, QuadResult};

/// Parameters of the fractional resolvent: the exponent `α ∈ (0, 2)` and
/// the squared mass `m² ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    alpha: f64,
    m2: f64,
}

impl SpectralParams {
    pub fn new(alpha: f64, m2: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie strictly in (0, 2), got {alpha}"
            )));
        }
        if !(m2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "m² must be nonnegative, got {m2}"
            )));
        }
        Ok(Self { alpha, m2 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Same exponent, different mass.
    pub fn with_m2(&self, m2: f64) -> Result<Self> {
        Self::new(self.alpha, m2)
    }

    #[inline]
    pub(crate) fn half_angle(&self) -> (f64, f64) {
        let a = std::f64::consts::FRAC_PI_2 * self.alpha;
        (a.sin(), a.cos())
    }

    /// The weight-bound constant `c_α = sin(πα/2)/π / (1 - |cos(πα/2)|)`,
    /// finite on all of `(0, 2)` and blowing up at both endpoints.
    pub fn c_alpha(&self) -> f64 {
        let (sin, cos) = self.half_angle();
        sin / std::f64::consts::PI / (1.0 - cos.abs())
    }

    /// The denominator margin `c'_α = 1 - |cos(πα/2)| > 0`.
    pub fn c_alpha_prime(&self) -> f64 {
        let (_, cos) = self.half_angle();
        1.0 - cos.abs()
    }
}

/// Quadrature budget: target relative tolerance and a hard cap on the number
/// of integrand evaluations. The scheme is a log-substitution `s = e^u` with
/// adaptive Gauss–Legendre panels expanding outward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub max_nodes: usize,
}

impl QuadratureSpec {
    pub fn new(rel_tol: f64, max_nodes: usize) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol <= 1e-2) {
            return Err(Error::InvalidParameter(format!(
                "rel_tol must lie in (0, 1e-2], got {rel_tol}"
            )));
        }
        if max_nodes < 32 {
            return Err(Error::InvalidParameter(format!(
                "max_nodes must be at least 32, got {max_nodes}"
            )));
        }
        Ok(Self { rel_tol, max_nodes })
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: tol::QUAD_REL_TOL_DEFAULT,
            max_nodes: tol::QUAD_MAX_NODES_DEFAULT,
        }
    }
}

/// `f_α(t, m²) = (t^{α/2} + m²)^{-1}` for `t > 0`.
pub fn f_alpha(t: f64, params: &SpectralParams) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "f_alpha requires t > 0, got {t}"
        )));
    }
    Ok(1.0 / (t.powf(0.5 * params.alpha) + params.m2))
}

/// The spectral weight `ρ_α(s, m²)` for `s > 0`.
///
/// The denominator is evaluated as the cancellation-free sum of squares
/// `(s^{α/2} + m² cos(πα/2))² + (m² sin(πα/2))²`, which is algebraically
/// identical to `s^α + m⁴ + 2 m² s^{α/2} cos(πα/2)` but stays accurate
/// near α → 0 and α → 2 where the cosine term nearly cancels.
pub fn rho(s: f64, params: &SpectralParams) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rho requires s > 0, got {s}"
        )));
    }
    Ok(rho_unchecked(s, params))
}

#[inline]
pub(crate) fn rho_unchecked(s: f64, params: &SpectralParams) -> f64 {
    let (sin, cos) = params.half_angle();
    let u = s.powf(0.5 * params.alpha);
    let a = u + params.m2 * cos;
    let b = params.m2 * sin;
    sin / std::f64::consts::PI * u / (a * a + b * b)
}

/// The pointwise bound `c_α s^{α/2} / (s^α + m⁴)` on the weight; at α = 1
/// the bound and the weight coincide exactly.
pub fn rho_bound(s: f64, params: &SpectralParams) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rho_bound requires s > 0, got {s}"
        )));
    }
    let u = s.powf(0.5 * params.alpha);
    Ok(params.c_alpha() * u / (u * u + params.m2 * params.m2))
}

/// The exact rescaling law `L^{-jα} ρ_α(s L^{-2j}, m²) = ρ_α(s, L^{jα} m²)`.
///
/// Returns the left-hand side; the two evaluations agree to a few ulps and
/// the identity is asserted (in debug builds) at `1e-13` relative.
pub fn rho_rescaled(s: f64, j: u32, params: &SpectralParams, scale_base: usize) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rho_rescaled requires s > 0, got {s}"
        )));
    }
    let l = scale_base as f64;
    let lhs = l.powf(-(j as f64) * params.alpha) * rho(s * l.powi(-2 * j as i32), params)?;
    #[cfg(debug_assertions)]
    {
        let boosted = SpectralParams::new(params.alpha, l.powf(j as f64 * params.alpha) * params.m2)?;
        let rhs = rho(s, &boosted)?;
        let scale = lhs.abs().max(rhs.abs());
        debug_assert!(
            (lhs - rhs).abs() <= tol::RHO_RESCALE_REL * scale,
            "rescaling identity violated: lhs {lhs}, rhs {rhs}"
        );
    }
    Ok(lhs)
}

/// Numerically evaluate `∫_0^∞ ρ_α(s, m²)/(s + t) ds`, which must reproduce
/// `f_α(t, m²)` within twice the requested relative tolerance.
pub fn kato_yosida(t: f64, params: &SpectralParams, quad: &QuadratureSpec) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kato_yosida requires t > 0, got {t}"
        )));
    }
    let centers = scale_hints(params, &[t]);
    let p = *params;
    let r = quadrature::integrate_positive_axis(
        &move |s| rho_unchecked(s, &p) / (s + t),
        &centers,
        quad.rel_tol,
        quad.max_nodes,
    )?;
    Ok(r.value)
}

/// `F(m²) = ∫ s^{α/2}/(s^α + m⁴) (1+s)^{-2} ds`; finite for all `0 < α < 2`,
/// continuous and monotone decreasing in `m²`.
pub fn f_integral(params: &SpectralParams, quad: &QuadratureSpec) -> Result<f64> {
    bound_integral(params, quad, 2)
}

/// `F₀(m²) = ∫ s^{α/2}/(s^α + m⁴) (1+s)^{-1} ds`, same structure with a
/// first-order tail.
pub fn f0_integral(params: &SpectralParams, quad: &QuadratureSpec) -> Result<f64> {
    bound_integral(params, quad, 1)
}

fn bound_integral(params: &SpectralParams, quad: &QuadratureSpec, power: i32) -> Result<f64> {
    let centers = scale_hints(params, &[1.0]);
    let alpha = params.alpha;
    let m2 = params.m2;
    let r = quadrature::integrate_positive_axis(
        &move |s| {
            let u = s.powf(0.5 * alpha);
            u / (u * u + m2 * m2) * (1.0 + s).powi(-power)
        },
        &centers,
        quad.rel_tol,
        quad.max_nodes,
    )?;
    Ok(r.value)
}

/// Characteristic `s`-scales of the weight family: the provided probe scales
/// plus the mass crossover `s = (m²)^{2/α}` where `s^α = m⁴`.
pub(crate) fn scale_hints(params: &SpectralParams, probes: &[f64]) -> Vec<f64> {
    let mut centers: Vec<f64> = probes.iter().copied().filter(|&x| x > 0.0).collect();
    centers.push(1.0);
    if params.m2 > 0.0 {
        centers.push(params.m2.powf(2.0 / params.alpha));
    }
    centers
}
