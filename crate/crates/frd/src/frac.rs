//! Finite-range decomposition of the fractional resolvent
//! `((-Δ)^{α/2} + m²)^{-1}`.
//!
//! One validated quadrature rule `{(s_i, w_i)}` for the spectral-weight
//! identity is shared by every scale: the fractional scale multipliers are
//!
//! ```text
//! Γ̂_{j,α}(k) = Σ_i w_i ρ_α(s_i, m²) Γ̂_j(k; s_i),
//! ```
//!
//! so positivity is inherited from `ρ >= 0` and the base scales, the range
//! is inherited because the base ranges are mass-independent, and the
//! telescoping sum collapses per mode to the scalar quadrature
//! `Σ_i w_i ρ(s_i)/(λ + s_i) ≈ 1/(λ^{α/2} + m²)`. The remainder is the
//! quadrature image of the base remainders, hence nonnegative by
//! construction; the only gap to the true resolvent is the validated
//! scalar quadrature error.
//!
//! On top of the builder sit the rescaled views `Γ_{j,α}`, coarse graining
//! to base `L^r`, and the verification reports: regularity-bound ratios and
//! decay fits, coarse-graining constants, and the Cauchy-sequence check of
//! the rescaled views.

use crate::base::{
    cheb::ChebPoly, materialize_family, psd_check, telescoping_error, BaseStrategy, ContractReport,
    ScaleCheck, ScaleFamily,
};
use crate::error::{Error, Result};
use crate::lattice::{Kernel, SpectralMultiplier, SymbolTable, TorusGeometry};
use crate::oracle::{check_dimension, green_fractional, ZeroMode};
use crate::report::{mass_exponent, ols_slope, BoundReport, BoundRow};
use crate::tol;
use crate::weights::quadrature::{build_shared_nodes, NodeSet};
use crate::weights::{rho_unchecked, QuadratureSpec, SpectralParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Scaling dimension `[φ] = (d - α)/2` governing the per-scale decay
/// `L^{-2j[φ]}`.
pub fn phi_dimension(d: usize, alpha: f64) -> f64 {
    0.5 * (d as f64 - alpha)
}

/// A certified finite-range decomposition of the fractional resolvent.
pub struct FracDecomposition {
    pub params: SpectralParams,
    pub geom: TorusGeometry,
    pub strategy_name: String,
    pub range_tol: f64,
    /// Scale kernels `Γ̃_{j,α}`, `j = 0..=J`, declared range `L^{j+1}`.
    pub scales: Vec<Kernel>,
    pub remainder: Kernel,
    /// The shared quadrature rule (provenance of every scale).
    pub nodes: NodeSet,
    pub quad: QuadratureSpec,
    pub contract: ContractReport,
    /// Worst relative error of the per-mode sum identity
    /// `Σ_j Γ̂_{j,α}(k) + remainder̂(k) = 1/(λ(k)^{α/2} + m²)` over modes
    /// with `λ(k) > 0` (and the zero mode too when `m² > 0`).
    pub mode_identity_rel_err: f64,
    pub zero_mode_excluded: bool,
}

impl FracDecomposition {
    pub fn depth(&self) -> usize {
        self.scales.len() - 1
    }

    pub fn declared_range(&self, j: usize) -> f64 {
        (self.geom.scale_base() as f64).powi(j as i32 + 1)
    }
}

/// Node weights `w_i ρ_α(s_i, m²)` of the shared rule.
fn node_weights(nodes: &NodeSet, params: &SpectralParams) -> Vec<f64> {
    nodes
        .s
        .iter()
        .zip(&nodes.w)
        .map(|(&s, &w)| w * rho_unchecked(s, params))
        .collect()
}

/// Accumulated per-scale content over quadrature nodes.
enum FamilyAccumulator {
    Polynomials(Vec<ChebPoly>),
    Multipliers(Vec<Vec<f64>>),
}

impl FamilyAccumulator {
    fn accumulate(
        &mut self,
        family: &ScaleFamily,
        weight: f64,
        node: usize,
        geom: &TorusGeometry,
    ) -> Result<()> {
        match (self, family) {
            (FamilyAccumulator::Polynomials(acc), ScaleFamily::Polynomials(polys)) => {
                for (j, p) in polys.iter().enumerate() {
                    check_poly_node(p, j, node, geom)?;
                    if acc.len() <= j {
                        acc.push(ChebPoly::zero());
                    }
                    acc[j].add_scaled(p, weight);
                }
                Ok(())
            }
            (FamilyAccumulator::Multipliers(acc), ScaleFamily::Multipliers(mults)) => {
                for (j, m) in mults.iter().enumerate() {
                    let min = m.par_iter().copied().reduce(|| f64::INFINITY, f64::min);
                    let max = m.par_iter().copied().reduce(|| f64::NEG_INFINITY, f64::max);
                    if !(max >= 0.0 && min >= -tol::PSD_REL * max.max(0.0)) {
                        return Err(Error::ContractViolation {
                            invariant: "positive definiteness (base node)",
                            scale: j,
                            detail: format!("node {node}: min multiplier {min:.3e}"),
                        });
                    }
                    if acc.len() <= j {
                        acc.push(vec![0.0; m.len()]);
                    }
                    acc[j]
                        .par_iter_mut()
                        .zip(m.par_iter())
                        .for_each(|(a, &v)| *a += weight * v);
                }
                Ok(())
            }
            _ => Err(Error::InvalidParameter(
                "strategy changed its family kind between nodes".into(),
            )),
        }
    }

    fn into_family(self) -> ScaleFamily {
        match self {
            FamilyAccumulator::Polynomials(p) => ScaleFamily::Polynomials(p),
            FamilyAccumulator::Multipliers(m) => ScaleFamily::Multipliers(m),
        }
    }
}

/// Cheap per-node base-contract proxy for polynomial families: degree
/// budget plus a positivity scan on the symbol range.
fn check_poly_node(p: &ChebPoly, j: usize, node: usize, geom: &TorusGeometry) -> Result<()> {
    let budget = geom.range_budget(j) - 1.0;
    if p.degree() as f64 > budget {
        return Err(Error::ContractViolation {
            invariant: "finite range (base node)",
            scale: j,
            detail: format!("node {node}: degree {} > {budget}", p.degree()),
        });
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for t in 0..=64 {
        let x = -1.0 + 2.0 * t as f64 / 64.0;
        let v = p.eval(x);
        min = min.min(v);
        max = max.max(v);
    }
    if !(max >= 0.0 && min >= -tol::PSD_REL * max.max(0.0)) {
        return Err(Error::ContractViolation {
            invariant: "positive definiteness (base node)",
            scale: j,
            detail: format!("node {node}: polynomial minimum {min:.3e}"),
        });
    }
    Ok(())
}

fn shared_nodes_for(
    params: &SpectralParams,
    geom: &TorusGeometry,
    quad: &QuadratureSpec,
) -> Result<NodeSet> {
    build_shared_nodes(
        params,
        geom.symbol_min_positive(),
        geom.symbol_max(),
        quad.rel_tol,
        quad.max_nodes.min(tol::SHARED_NODE_CAP),
    )
}

/// Build and certify a fractional decomposition.
///
/// For `m² > 0` the full position-space sum is checked against the
/// fractional resolvent oracle; at `m² = 0` the divergent zero mode is
/// excluded and the telescoping identity is certified mode by mode on
/// `λ(k) > 0`.
pub fn decompose_fractional(
    params: &SpectralParams,
    geom: &TorusGeometry,
    strategy: &dyn BaseStrategy,
    quad: &QuadratureSpec,
) -> Result<FracDecomposition> {
    check_dimension(params, geom)?;
    let nodes = shared_nodes_for(params, geom, quad)?;
    let weights = node_weights(&nodes, params);

    let mut acc = match strategy.scale_family(nodes.s[0], geom)? {
        f @ ScaleFamily::Polynomials(_) => {
            let mut a = FamilyAccumulator::Polynomials(Vec::new());
            a.accumulate(&f, weights[0], 0, geom)?;
            a
        }
        f @ ScaleFamily::Multipliers(_) => {
            let mut a = FamilyAccumulator::Multipliers(Vec::new());
            a.accumulate(&f, weights[0], 0, geom)?;
            a
        }
    };
    for i in 1..nodes.len() {
        let family = strategy.scale_family(nodes.s[i], geom)?;
        acc.accumulate(&family, weights[i], i, geom)?;
    }

    let scales = materialize_family(&acc.into_family(), geom)?;
    finish_decomposition(params, geom, strategy, quad, nodes, scales)
}

fn finish_decomposition(
    params: &SpectralParams,
    geom: &TorusGeometry,
    strategy: &dyn BaseStrategy,
    quad: &QuadratureSpec,
    nodes: NodeSet,
    scales: Vec<Kernel>,
) -> Result<FracDecomposition> {
    let zero_mode_excluded = params.m2() == 0.0;
    let (remainder, qt_max, mode_identity_rel_err) =
        quadrature_remainder(params, geom, &nodes, &scales)?;
    let contract = certify(
        params,
        geom,
        strategy.range_tol(),
        &scales,
        &remainder,
        qt_max,
        mode_identity_rel_err,
    )?;
    if let Some((invariant, scale, detail)) = contract.first_violation() {
        return Err(Error::ContractViolation {
            invariant,
            scale,
            detail,
        });
    }
    Ok(FracDecomposition {
        params: *params,
        geom: *geom,
        strategy_name: strategy.name().to_string(),
        range_tol: strategy.range_tol(),
        scales,
        remainder,
        nodes,
        quad: *quad,
        contract,
        mode_identity_rel_err,
        zero_mode_excluded,
    })
}

/// The quadrature image of the resolvent: per-mode `QT(λ) = Σ w_i ρ_i/(λ+s_i)`,
/// the remainder multiplier `QT - Σ_j Γ̂_j`, and the worst relative error of
/// `QT` against the closed form. Returns (remainder kernel, max QT, error).
fn quadrature_remainder(
    params: &SpectralParams,
    geom: &TorusGeometry,
    nodes: &NodeSet,
    scales: &[Kernel],
) -> Result<(Kernel, f64, f64)> {
    let m2 = params.m2();
    let zero_mode_excluded = m2 == 0.0;
    let table = SymbolTable::new(geom);
    let n = geom.site_count();
    let weights = node_weights(nodes, params);
    let half_alpha = 0.5 * params.alpha();
    let mults: Vec<&[f64]> = scales.iter().map(|k| k.multiplier()).collect();
    let per_mode: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let lambda = table.at(i);
            let qt: f64 = nodes
                .s
                .iter()
                .zip(&weights)
                .map(|(&s, &w)| w / (lambda + s))
                .sum();
            let rem = if lambda == 0.0 && zero_mode_excluded {
                0.0
            } else {
                qt - mults.iter().map(|m| m[i]).sum::<f64>()
            };
            let rel_err = if lambda == 0.0 {
                if zero_mode_excluded {
                    0.0
                } else {
                    let exact = 1.0 / m2;
                    (qt - exact).abs() / exact
                }
            } else {
                let exact = 1.0 / (lambda.powf(half_alpha) + m2);
                (qt - exact).abs() / exact
            };
            (qt, rem, rel_err)
        })
        .collect();
    let qt_max = per_mode
        .par_iter()
        .map(|&(qt, _, _)| qt)
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let mode_identity_rel_err = per_mode
        .par_iter()
        .map(|&(_, _, e)| e)
        .reduce(|| 0.0, f64::max);
    let rem_mult: Vec<f64> = per_mode.iter().map(|&(_, r, _)| r).collect();
    let remainder = SpectralMultiplier::new(*geom, rem_mult)?.to_kernel();
    Ok((remainder, qt_max, mode_identity_rel_err))
}

/// Contract checks for a fractional decomposition: per-scale positivity and
/// range, remainder positivity at the quadrature scale, and the telescoping
/// check (position-space against the oracle for `m² > 0`, the per-mode
/// identity on `λ > 0` at `m² = 0`).
#[allow(clippy::too_many_arguments)]
fn certify(
    params: &SpectralParams,
    geom: &TorusGeometry,
    range_tol: f64,
    scales: &[Kernel],
    remainder: &Kernel,
    qt_max: f64,
    mode_identity_rel_err: f64,
) -> Result<ContractReport> {
    let zero_mode_excluded = params.m2() == 0.0;
    let mut checks = Vec::with_capacity(scales.len());
    for (j, k) in scales.iter().enumerate() {
        let declared = geom.range_budget(j);
        geom.assert_range_fits(declared)?;
        let (min, max, psd_ok) = psd_check(k);
        let sr = k.support_radius(range_tol);
        checks.push(ScaleCheck {
            j,
            min_multiplier: min,
            max_multiplier: max,
            psd_ok,
            support_radius: sr.radius,
            declared_range: declared,
            range_ok: sr.radius <= declared,
        });
    }
    let rmin = remainder.min_multiplier();
    let rmax = remainder.max_multiplier();
    let rpsd = rmin >= -tol::PSD_REL * qt_max.max(0.0);

    let sum_rel_err = if zero_mode_excluded {
        mode_identity_rel_err
    } else {
        let oracle = green_fractional(params, geom, ZeroMode::Include)?;
        telescoping_error(scales, remainder, &oracle, false)
    };

    Ok(ContractReport {
        scales: checks,
        remainder_min_multiplier: rmin,
        remainder_max_multiplier: rmax,
        remainder_psd_ok: rpsd,
        remainder_all_zero: remainder.support_radius(0.0).all_zero,
        sum_rel_err,
        sum_ok: sum_rel_err <= tol::FRAC_SUM_REL,
        zero_mode_excluded,
    })
}

/// Re-run the hard contract checks on a (typically reloaded) decomposition,
/// returning the fresh report and the per-mode identity error.
pub fn recertify(dec: &FracDecomposition) -> Result<(ContractReport, f64)> {
    let table = SymbolTable::new(&dec.geom);
    let weights = node_weights(&dec.nodes, &dec.params);
    let half_alpha = 0.5 * dec.params.alpha();
    let m2 = dec.params.m2();
    let n = dec.geom.site_count();
    // QT statistics from the stored node rule (the remainder itself is the
    // stored kernel, not recomputed)
    let (qt_max, mode_identity_rel_err) = (0..n)
        .into_par_iter()
        .map(|i| {
            let lambda = table.at(i);
            let qt: f64 = dec
                .nodes
                .s
                .iter()
                .zip(&weights)
                .map(|(&s, &w)| w / (lambda + s))
                .sum();
            let rel_err = if lambda == 0.0 {
                if m2 == 0.0 {
                    0.0
                } else {
                    let exact = 1.0 / m2;
                    (qt - exact).abs() / exact
                }
            } else {
                let exact = 1.0 / (lambda.powf(half_alpha) + m2);
                (qt - exact).abs() / exact
            };
            (qt, rel_err)
        })
        .reduce(
            || (f64::NEG_INFINITY, 0.0),
            |a, b| (a.0.max(b.0), a.1.max(b.1)),
        );
    let contract = certify(
        &dec.params,
        &dec.geom,
        dec.range_tol,
        &dec.scales,
        &dec.remainder,
        qt_max,
        mode_identity_rel_err,
    )?;
    Ok((contract, mode_identity_rel_err))
}

/// Build only the scale-`j` kernel of a fractional decomposition (used by
/// the Cauchy check, which needs one view per mass).
pub fn fractional_scale_kernel(
    params: &SpectralParams,
    geom: &TorusGeometry,
    strategy: &dyn BaseStrategy,
    quad: &QuadratureSpec,
    j: usize,
) -> Result<Kernel> {
    check_dimension(params, geom)?;
    if j > geom.depth() {
        return Err(Error::InvalidParameter(format!(
            "scale {j} out of range: depth is {}",
            geom.depth()
        )));
    }
    let nodes = shared_nodes_for(params, geom, quad)?;
    let weights = node_weights(&nodes, params);
    match strategy.scale_family(nodes.s[0], geom)? {
        ScaleFamily::Polynomials(_) => {
            let mut acc = ChebPoly::zero();
            for i in 0..nodes.len() {
                let ScaleFamily::Polynomials(polys) = strategy.scale_family(nodes.s[i], geom)?
                else {
                    unreachable!("family kind fixed per strategy");
                };
                check_poly_node(&polys[j], j, i, geom)?;
                acc.add_scaled(&polys[j], weights[i]);
            }
            crate::base::cheb::materialize(&acc, geom)
        }
        ScaleFamily::Multipliers(first) => {
            let mut acc = vec![0.0; geom.site_count()];
            acc.par_iter_mut()
                .zip(first[j].par_iter())
                .for_each(|(a, &v)| *a += weights[0] * v);
            for i in 1..nodes.len() {
                let ScaleFamily::Multipliers(mults) = strategy.scale_family(nodes.s[i], geom)?
                else {
                    unreachable!("family kind fixed per strategy");
                };
                acc.par_iter_mut()
                    .zip(mults[j].par_iter())
                    .for_each(|(a, &v)| *a += weights[i] * v);
            }
            Ok(SpectralMultiplier::new(*geom, acc)?.to_kernel())
        }
    }
}

/// The rescaled view `Γ_{j,α}(·, L^{jα} m²)` of a scale kernel: the same
/// lattice points relabelled with spacing `L^{-j}` and values multiplied by
/// `L^{2j[φ]}`. No interpolation is involved, so the view and the stored
/// kernel are two labellings of one array.
pub struct RescaledView {
    original: Kernel,
    pub j: usize,
    pub factor: f64,
    view_geom: TorusGeometry,
}

impl RescaledView {
    /// Sup-norm of the view, `L^{2j[φ]}·sup|Γ̃_{j,α}|`.
    pub fn sup_norm(&self) -> f64 {
        self.factor * self.original.sup_norm()
    }

    /// View value at the lattice site with index vector `n` (the point
    /// `y = n·L^{-j}`).
    pub fn value(&self, n: &[i64]) -> f64 {
        self.factor * self.original.at_offset(n)
    }

    /// Materialise the view as a kernel on the `L^{-j}`-spaced geometry.
    pub fn kernel(&self) -> Kernel {
        let values: Vec<f64> = self
            .original
            .values()
            .par_iter()
            .map(|&v| self.factor * v)
            .collect();
        Kernel::from_even_values(self.view_geom, values)
    }

    /// The exact inverse of the view map: the unrescaled kernel.
    pub fn unrescale(&self) -> &Kernel {
        &self.original
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.view_geom
    }
}

/// Rescaled view of scale `j`; the view's mass parameter is `L^{jα} m²`.
pub fn rescaled_view(dec: &FracDecomposition, j: usize) -> Result<RescaledView> {
    if j > dec.depth() {
        return Err(Error::InvalidParameter(format!(
            "view index {j} out of range: depth is {}",
            dec.depth()
        )));
    }
    Ok(view_of_kernel(
        dec.scales[j].clone(),
        j,
        dec.geom.scale_base(),
        phi_dimension(dec.geom.dim(), dec.params.alpha()),
    ))
}

fn view_of_kernel(kernel: Kernel, j: usize, scale_base: usize, phi: f64) -> RescaledView {
    let l = scale_base as f64;
    let factor = l.powf(2.0 * j as f64 * phi);
    let spacing = l.powi(-(j as i32));
    let view_geom = kernel.geometry().with_spacing(spacing);
    RescaledView {
        original: kernel,
        j,
        factor,
        view_geom,
    }
}

/// Regroup `r` consecutive scales into each coarse scale, yielding a
/// decomposition with base `L' = L^r`. Trailing scales that do not fill a
/// complete group are folded into the remainder. Positivity, ranges
/// `(L')^{j'+1}` and the telescoping sum are re-certified.
pub fn coarse_grain(dec: &FracDecomposition, r: usize) -> Result<FracDecomposition> {
    if r < 1 {
        return Err(Error::InvalidParameter("r must be >= 1".into()));
    }
    let fine_count = dec.scales.len();
    let groups = fine_count / r;
    if groups == 0 {
        return Err(Error::InvalidParameter(format!(
            "coarse factor {r} exceeds the number of scales {fine_count}"
        )));
    }
    let l = dec.geom.scale_base();
    let coarse_base = l.pow(r as u32);
    let coarse_geom = TorusGeometry::new(dec.geom.dim(), coarse_base, groups - 1, dec.geom.side())?;

    let mut scales = Vec::with_capacity(groups);
    for g in 0..groups {
        let mut acc = dec.scales[g * r].clone();
        for l_idx in 1..r {
            acc = acc.linear_comb(1.0, &dec.scales[g * r + l_idx], 1.0)?;
        }
        scales.push(acc);
    }
    let mut remainder = dec.remainder.clone();
    for k in dec.scales.iter().skip(groups * r) {
        remainder = remainder.linear_comb(1.0, k, 1.0)?;
    }

    // re-certify on the coarse geometry
    let mut checks = Vec::with_capacity(scales.len());
    for (j, k) in scales.iter().enumerate() {
        let declared = coarse_geom.range_budget(j);
        coarse_geom.assert_range_fits(declared)?;
        let (min, max, psd_ok) = psd_check(k);
        let sr = k.support_radius(dec.range_tol);
        checks.push(ScaleCheck {
            j,
            min_multiplier: min,
            max_multiplier: max,
            psd_ok,
            support_radius: sr.radius,
            declared_range: declared,
            range_ok: sr.radius <= declared,
        });
    }
    let rmin = remainder.min_multiplier();
    let rmax = remainder.max_multiplier();

    let sum_rel_err = if dec.zero_mode_excluded {
        dec.contract.sum_rel_err
    } else {
        let oracle = green_fractional(&dec.params, &dec.geom, ZeroMode::Include)?;
        telescoping_error(&scales, &remainder, &oracle, false)
    };
    let contract = ContractReport {
        scales: checks,
        remainder_min_multiplier: rmin,
        remainder_max_multiplier: rmax,
        remainder_psd_ok: rmin >= -tol::PSD_REL * rmax.max(0.0).max(dec.contract.remainder_max_multiplier),
        remainder_all_zero: remainder.support_radius(0.0).all_zero,
        sum_rel_err,
        sum_ok: sum_rel_err <= tol::FRAC_SUM_REL,
        zero_mode_excluded: dec.zero_mode_excluded,
    };
    if let Some((invariant, scale, detail)) = contract.first_violation() {
        return Err(Error::ContractViolation {
            invariant,
            scale,
            detail,
        });
    }
    Ok(FracDecomposition {
        params: dec.params,
        geom: coarse_geom,
        strategy_name: dec.strategy_name.clone(),
        range_tol: dec.range_tol,
        scales,
        remainder,
        nodes: dec.nodes.clone(),
        quad: dec.quad,
        contract,
        mode_identity_rel_err: dec.mode_identity_rel_err,
        zero_mode_excluded: dec.zero_mode_excluded,
    })
}

/// Measure every scale against the regularity bound shape
/// `(1 + L^{jα} m²)^{-e(j)} · L^{-(2[φ]+p)j}` and fit the per-scale decay
/// of the derivative sup-norms over `j = 1..=J`.
pub fn verify_regularity(dec: &FracDecomposition, p_max: u32) -> Result<BoundReport> {
    if p_max > 3 {
        return Err(Error::InvalidParameter(format!(
            "p_max must be <= 3, got {p_max}"
        )));
    }
    let geom = &dec.geom;
    let l = geom.scale_base() as f64;
    let alpha = dec.params.alpha();
    let m2 = dec.params.m2();
    let two_phi = 2.0 * phi_dimension(geom.dim(), alpha);
    let mut rows = Vec::new();
    for (j, kernel) in dec.scales.iter().enumerate() {
        for p in 0..=p_max {
            let sup = crate::base::derivative_sup(kernel, p)?;
            let exponent = mass_exponent(j);
            let mass_factor = (1.0 + l.powf(j as f64 * alpha) * m2).powi(-(exponent as i32));
            let bound_value = mass_factor * l.powf(-(two_phi + p as f64) * j as f64);
            rows.push(BoundRow {
                j,
                p,
                sup_norm: sup,
                bound_value,
                ratio: sup / bound_value,
                exponent,
            });
        }
    }
    let fits = crate::base::fit_rows(&rows, 1, geom.depth(), |p| {
        Some(-(two_phi + p as f64) * l.ln())
    });
    Ok(BoundReport { rows, fits })
}

/// Coarse-graining constants for a list of regroup factors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoarseReport {
    pub rows: Vec<CoarseRow>,
    /// `(1 - L^{-2[φ]})^{-1}` for the fine base `L`.
    pub geometric_factor: f64,
    /// Relative error of the truncated geometric series against the closed
    /// form (an arithmetic sanity anchor).
    pub series_check_rel_err: f64,
    /// Every `r > 1` constant is required to stay below
    /// `2 · c(r=1) · geometric_factor`.
    pub within_factor_two: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoarseRow {
    pub r: usize,
    pub constant: f64,
    pub coarse_scales: usize,
}

/// Extract empirical bound constants per coarse factor and check they stay
/// within a factor 2 of the `r = 1` constant times the geometric-series
/// factor `(1 - L^{-2[φ]})^{-1}`.
pub fn verify_coarse_graining(
    dec: &FracDecomposition,
    r_list: &[usize],
    p_max: u32,
) -> Result<CoarseReport> {
    let l = dec.geom.scale_base() as f64;
    let two_phi = 2.0 * phi_dimension(dec.geom.dim(), dec.params.alpha());
    let q = l.powf(-two_phi);
    let geometric_factor = 1.0 / (1.0 - q);

    // truncated series vs closed form
    let mut partial = 0.0;
    let mut term = 1.0;
    for _ in 0..2000 {
        partial += term;
        term *= q;
        if term < 1e-18 * partial {
            break;
        }
    }
    let series_check_rel_err = (partial - geometric_factor).abs() / geometric_factor;

    let mut rows = Vec::new();
    let mut c1: Option<f64> = None;
    for &r in r_list {
        let (constant, count) = if r == 1 {
            let report = verify_regularity(dec, p_max)?;
            (max_row_ratio(&report), dec.scales.len())
        } else {
            let coarse = coarse_grain(dec, r)?;
            let report = verify_regularity(&coarse, p_max)?;
            (max_row_ratio(&report), coarse.scales.len())
        };
        if r == 1 {
            c1 = Some(constant);
        }
        rows.push(CoarseRow {
            r,
            constant,
            coarse_scales: count,
        });
    }
    let c1 = c1.unwrap_or_else(|| rows.first().map(|r| r.constant).unwrap_or(f64::NAN));
    let cap = 2.0 * c1 * geometric_factor;
    let within_factor_two = rows.iter().all(|row| row.constant <= cap);
    Ok(CoarseReport {
        rows,
        geometric_factor,
        series_check_rel_err,
        within_factor_two,
    })
}

fn max_row_ratio(report: &BoundReport) -> f64 {
    report
        .rows
        .iter()
        .map(|r| r.ratio)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The Cauchy-sequence check of the rescaled views: the sup-norm distance
/// `d_j` between consecutive views `Γ_{j,α}` and `Γ_{j+1,α}`, both carrying
/// the same mass, compared on the common embedded lattice `(L^{-j} Z)^d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CauchyReport {
    pub rows: Vec<CauchyRow>,
    pub strictly_decreasing: bool,
    /// Fitted multiplicative decay of `d_j` per scale step.
    pub fitted_rate: f64,
    /// The reference rate `L^{-1/2}`; the comparison is report-only.
    pub reference_rate: f64,
    pub rate_within_factor_two: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CauchyRow {
    pub j: usize,
    pub d: f64,
}

/// Compute `d_j` for `j = 2 .. J-1` (each comparing views `j` and `j+1`).
///
/// For `m² > 0` each view requires its own build with mass `m²·L^{-jα}` so
/// that every view carries the same mass `m²`; at `m² = 0` all views come
/// from one build.
pub fn cauchy_check(
    params: &SpectralParams,
    geom: &TorusGeometry,
    strategy: &dyn BaseStrategy,
    quad: &QuadratureSpec,
) -> Result<CauchyReport> {
    let depth = geom.depth();
    if depth < 3 {
        return Err(Error::InvalidParameter(format!(
            "cauchy_check needs depth J >= 3, got {depth}"
        )));
    }
    let l = geom.scale_base() as f64;
    let phi = phi_dimension(geom.dim(), params.alpha());

    let view_for = |j: usize| -> Result<RescaledView> {
        let mass = params.m2() * l.powf(-(j as f64) * params.alpha());
        let build_params = SpectralParams::new(params.alpha(), mass)?;
        let kernel = fractional_scale_kernel(&build_params, geom, strategy, quad, j)?;
        Ok(view_of_kernel(kernel, j, geom.scale_base(), phi))
    };

    let mut rows = Vec::new();
    let mut prev = view_for(2)?;
    for j in 2..depth {
        let next = view_for(j + 1)?;
        rows.push(CauchyRow {
            j,
            d: view_distance(&prev, &next),
        });
        prev = next;
    }

    let strictly_decreasing = rows.windows(2).all(|w| w[1].d < w[0].d);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.d > 0.0)
        .map(|r| (r.j as f64, r.d.ln()))
        .collect();
    let fitted_rate = if pts.len() >= 2 {
        ols_slope(&pts).0.exp()
    } else {
        f64::NAN
    };
    let reference_rate = l.powf(-0.5);
    let rate_within_factor_two = fitted_rate.is_finite()
        && fitted_rate <= 2.0 * reference_rate
        && fitted_rate >= 0.5 * reference_rate;
    Ok(CauchyReport {
        rows,
        strictly_decreasing,
        fitted_rate,
        reference_rate,
        rate_within_factor_two,
    })
}

/// Sup distance between view `j` and view `j+1` over the common embedded
/// lattice, restricted to half the finer view's period.
fn view_distance(coarse: &RescaledView, fine: &RescaledView) -> f64 {
    let geom = coarse.unrescale().geometry();
    let l = geom.scale_base() as i64;
    let m = geom.side() as i64;
    let d = geom.dim();
    // common points: y = n·ε_j ↔ index n in the coarse view, index L·n in
    // the fine view; compare within half of the finer period |n| <= M/(2L)
    let half = m / (2 * l);
    let mut worst = 0.0f64;
    let mut idx = vec![-half; d];
    let coarse_k = coarse.unrescale();
    let fine_k = fine.unrescale();
    let (fa, fb) = (coarse.factor, fine.factor);
    loop {
        let fine_idx: Vec<i64> = idx.iter().map(|&c| c * l).collect();
        let diff = (fa * coarse_k.at_offset(&idx) - fb * fine_k.at_offset(&fine_idx)).abs();
        worst = worst.max(diff);
        // odometer
        let mut axis = 0;
        loop {
            if axis == d {
                return worst;
            }
            idx[axis] += 1;
            if idx[axis] <= half {
                break;
            }
            idx[axis] = -half;
            axis += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::ChebExact;
    use approx::assert_relative_eq;

    fn desk_geom() -> TorusGeometry {
        TorusGeometry::new(2, 3, 3, 324).unwrap()
    }

    fn quick_quad() -> QuadratureSpec {
        QuadratureSpec::new(1e-7, 4000).unwrap()
    }

    #[test]
    fn fractional_desk_build_certifies() {
        let params = SpectralParams::new(1.0, 1.0).unwrap();
        let dec =
            decompose_fractional(&params, &desk_geom(), &ChebExact::default(), &quick_quad())
                .unwrap();
        assert!(dec.contract.pass());
        assert!(dec.contract.sum_rel_err <= 1e-6);
        assert!(dec.mode_identity_rel_err <= 1e-6);
        assert_eq!(dec.scales.len(), 4);
        // zero-mode spot check: Σ_j Γ̂(0) + remainder̂(0) = 1/m²
        let total: f64 = dec
            .scales
            .iter()
            .map(|k| k.multiplier()[0])
            .sum::<f64>()
            + dec.remainder.multiplier()[0];
        assert_relative_eq!(total, 1.0, max_relative = 1e-6);
        // exact ranges
        for (j, k) in dec.scales.iter().enumerate() {
            let sr = k.support_radius(0.0);
            assert!(sr.radius <= dec.declared_range(j));
        }
    }

    #[test]
    fn fractional_massless_mode_identity() {
        let params = SpectralParams::new(1.0, 0.0).unwrap();
        let dec =
            decompose_fractional(&params, &desk_geom(), &ChebExact::default(), &quick_quad())
                .unwrap();
        assert!(dec.zero_mode_excluded);
        assert!(dec.mode_identity_rel_err <= 1e-6);
    }

    #[test]
    fn rescaled_view_roundtrip_and_scaling() {
        let params = SpectralParams::new(1.0, 1.0).unwrap();
        let dec =
            decompose_fractional(&params, &desk_geom(), &ChebExact::default(), &quick_quad())
                .unwrap();
        // j = 0: identity
        let v0 = rescaled_view(&dec, 0).unwrap();
        assert_eq!(v0.factor, 1.0);
        assert_eq!(v0.unrescale().values(), dec.scales[0].values());
        // j = 2: factor L^{2j[φ]}, exact unrescale, sup scaling
        let v2 = rescaled_view(&dec, 2).unwrap();
        let expect = 3f64.powf(2.0 * 2.0 * 0.5);
        assert_relative_eq!(v2.factor, expect, max_relative = 1e-14);
        assert_eq!(v2.unrescale().values(), dec.scales[2].values());
        assert_relative_eq!(
            v2.sup_norm(),
            expect * dec.scales[2].sup_norm(),
            max_relative = 1e-14
        );
        // view range <= L in view units: offsets n with |n·L^{-j}| > L vanish
        let k = v2.kernel();
        assert_eq!(k.geometry().spacing(), 3f64.powi(-2));
        let sr = dec.scales[2].support_radius(0.0);
        assert!(sr.radius <= 27.0); // L^{j+1} fine units = L in view units
        assert!(rescaled_view(&dec, 4).is_err());
    }

    #[test]
    fn coarse_grain_regroups_and_preserves() {
        let params = SpectralParams::new(1.0, 1.0).unwrap();
        let geom = desk_geom();
        let dec =
            decompose_fractional(&params, &geom, &ChebExact::default(), &quick_quad()).unwrap();
        // r = 1: identity on scales
        let same = coarse_grain(&dec, 1).unwrap();
        assert_eq!(same.scales.len(), dec.scales.len());
        for (a, b) in same.scales.iter().zip(&dec.scales) {
            assert_eq!(a.values(), b.values());
        }
        // r = 2 on 4 scales: 2 coarse scales, base 9
        let c2 = coarse_grain(&dec, 2).unwrap();
        assert_eq!(c2.scales.len(), 2);
        assert_eq!(c2.geom.scale_base(), 9);
        assert!(c2.contract.pass());
        // coarse scale 0 = fine 0 + fine 1, range <= L² = 9
        let sr = c2.scales[0].support_radius(0.0);
        assert!(sr.radius <= 9.0);
        // totals unchanged to round-off
        let total = |d: &FracDecomposition| -> f64 {
            d.scales
                .iter()
                .chain(std::iter::once(&d.remainder))
                .map(|k| k.values()[0])
                .sum()
        };
        assert_relative_eq!(total(&dec), total(&c2), max_relative = 1e-12);
        // r = 3 on 4 scales: 1 coarse scale, trailing scale folds into
        // the remainder
        let c3 = coarse_grain(&dec, 3).unwrap();
        assert_eq!(c3.scales.len(), 1);
        assert_relative_eq!(total(&dec), total(&c3), max_relative = 1e-12);
        assert!(coarse_grain(&dec, 0).is_err());
    }

    #[test]
    fn regularity_report_desk_scale() {
        let params = SpectralParams::new(1.0, 1.0).unwrap();
        let dec =
            decompose_fractional(&params, &desk_geom(), &ChebExact::default(), &quick_quad())
                .unwrap();
        let report = verify_regularity(&dec, 2).unwrap();
        assert_eq!(report.rows.len(), 4 * 3);
        for row in &report.rows {
            assert!(row.ratio.is_finite() && row.ratio >= 0.0);
            assert_eq!(row.exponent, mass_exponent(row.j));
        }
        let fit = report.fit_for(0).unwrap();
        assert_eq!(fit.expected_rate, Some(-(1.0) * 3f64.ln()));
    }

    #[test]
    fn mass_damping_of_scale_sups() {
        // larger m² pushes every scale down, consistent with the e(j) sign
        let geom = desk_geom();
        let small = decompose_fractional(
            &SpectralParams::new(1.0, 0.25).unwrap(),
            &geom,
            &ChebExact::default(),
            &quick_quad(),
        )
        .unwrap();
        let large = decompose_fractional(
            &SpectralParams::new(1.0, 100.0).unwrap(),
            &geom,
            &ChebExact::default(),
            &quick_quad(),
        )
        .unwrap();
        for (a, b) in small.scales.iter().zip(&large.scales) {
            assert!(b.sup_norm() < a.sup_norm());
        }
    }

    #[test]
    fn coarse_report_within_factor() {
        let params = SpectralParams::new(1.0, 0.0).unwrap();
        let dec =
            decompose_fractional(&params, &desk_geom(), &ChebExact::default(), &quick_quad())
                .unwrap();
        let report = verify_coarse_graining(&dec, &[1, 2], 1).unwrap();
        assert!(report.series_check_rel_err <= 1e-12);
        assert!(report.within_factor_two, "{report:?}");
    }
}
