//! Polynomial machinery for the exact finite-range strategy.
//!
//! Everything happens in the Chebyshev basis of the normalised walk
//! variable `x = 1 - λ/(2d) ∈ [-1, 1]`, where `λ` is the Laplacian symbol.
//! A polynomial of degree `n` in `x` is a polynomial of degree `n` in the
//! nearest-neighbour walk operator, so its kernel vanishes identically
//! beyond Euclidean distance `n`. That single fact carries the whole range
//! contract.
//!
//! The resolvent `1/(λ + s)` is approximated from below by a ladder of
//! Chebyshev semi-iterations. Stage `i` runs `n_i` iteration steps aimed at
//! the spectral window `[Λ_i, 4d]` with `Λ_i ∝ L^{-2i}`, producing a
//! solution polynomial `u_i` whose residual factor
//! `ρ_i = 1 - (λ+s)·u_i = T_{n_i}(ξ_i(λ))/T_{n_i}(ξ_i(-s))` has modulus at
//! most `η = L^{-2q}` on the window. The stage increment uses the *squared*
//! residual,
//!
//! ```text
//! scale j multiplier:  Γ̂_j = q̃_j · Π_{i<j} ρ_i²,   q̃_j = u_j (1 + ρ_j),
//! ```
//!
//! so that `1 - (λ+s)·(cumulative sum) = Π_{i<=j} ρ_i² >= 0` pointwise.
//! Each scale is therefore nonnegative (positive definite kernel), the
//! carried residual is a square, the telescoping sum is exact, and the
//! degree of scale `j` is `2·Σ_{i<=j} n_i - 1 <= L^{j+1} - 1`.

use crate::error::{Error, Result};
use crate::lattice::{Kernel, TorusGeometry};
use rayon::prelude::*;

/// A polynomial in the Chebyshev basis `p(x) = Σ c_n T_n(x)`.
#[derive(Debug, Clone)]
pub struct ChebPoly {
    c: Vec<f64>,
}

impl ChebPoly {
    pub fn constant(v: f64) -> Self {
        Self { c: vec![v] }
    }

    pub fn zero() -> Self {
        Self { c: vec![0.0] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn degree(&self) -> usize {
        self.c.len() - 1
    }

    /// Clenshaw evaluation at a single point.
    pub fn eval(&self, x: f64) -> f64 {
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &cn in self.c.iter().skip(1).rev() {
            let b0 = cn + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.c[0] + x * b1 - b2
    }

    pub fn add_scaled(&mut self, other: &ChebPoly, factor: f64) {
        if other.c.len() > self.c.len() {
            self.c.resize(other.c.len(), 0.0);
        }
        for (a, &b) in self.c.iter_mut().zip(&other.c) {
            *a += factor * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.c {
            *a *= factor;
        }
    }

    /// Multiply by an affine function of `x`: `(a·x + b)·p`, using
    /// `x·T_n = (T_{n+1} + T_{|n-1|})/2`.
    pub fn mul_affine(&self, a: f64, b: f64) -> ChebPoly {
        let n = self.c.len();
        let mut out = vec![0.0; n + 1];
        for (k, &ck) in self.c.iter().enumerate() {
            out[k] += b * ck;
            if k == 0 {
                out[1] += a * ck;
            } else {
                out[k + 1] += 0.5 * a * ck;
                out[k - 1] += 0.5 * a * ck;
            }
        }
        ChebPoly { c: out }
    }

    /// Full product via `T_m·T_n = (T_{m+n} + T_{|m-n|})/2`.
    pub fn mul(&self, other: &ChebPoly) -> ChebPoly {
        let mut out = vec![0.0; self.c.len() + other.c.len() - 1];
        for (m, &am) in self.c.iter().enumerate() {
            if am == 0.0 {
                continue;
            }
            for (n, &bn) in other.c.iter().enumerate() {
                let v = 0.5 * am * bn;
                out[m + n] += v;
                out[m.abs_diff(n)] += v;
            }
        }
        ChebPoly { c: out }
    }
}

/// Stage degrees `n_i = max(1, ⌊(L-1)·L^i/2⌋)`; the cumulative squared
/// degrees then fit the range budget: `2·Σ_{i<=j} n_i - 1 <= L^{j+1} - 1`.
pub fn stage_degrees(scale_base: usize, depth: usize) -> Vec<usize> {
    (0..=depth)
        .map(|i| ((scale_base - 1) * scale_base.pow(i as u32) / 2).max(1))
        .collect()
}

/// The per-stage spectral windows `[Λ_i, 4d]` with
/// `Λ_i = 4d·min(1/2, c₀·L^{-2i})` and `c₀ = (arccosh(L^q)/(L-1))²`.
/// `q` sets the per-stage damping `η ≈ L^{-2q}` of modes above the window.
pub fn stage_windows(geom: &TorusGeometry, damping_q: f64) -> Vec<f64> {
    let l = geom.scale_base() as f64;
    let lambda_max = geom.symbol_max();
    let c0 = (l.powf(damping_q).acosh() / (l - 1.0)).powi(2);
    (0..=geom.depth())
        .map(|i| lambda_max * (c0 * l.powi(-2 * i as i32)).min(0.5))
        .collect()
}

/// One stage of the ladder: the Chebyshev iteration polynomials for
/// `(λ + s)·u ≈ 1` on the window `[lo, hi]`, normalised so the residual is
/// exactly `T_n(ξ(λ))/T_n(ξ(-s))`.
///
/// Returns `(u, rho)` with `rho = 1 - (λ+s)·u`, both in the Chebyshev basis
/// of `x = 1 - λ/(2d)`.
fn stage_polys(n: usize, lo: f64, hi: f64, s: f64, two_d: f64) -> (ChebPoly, ChebPoly) {
    // ξ(λ) = (hi + lo - 2λ)/(hi - lo) as an affine function of x
    let width = hi - lo;
    let a = 2.0 * two_d / width;
    let b = (hi + lo - 2.0 * two_d) / width;
    let xi0 = (hi + lo + 2.0 * s) / width;

    let mut u_prev = ChebPoly::zero();
    let mut u_cur = ChebPoly::constant(2.0 / (width * xi0));
    let mut gamma_prev = 1.0 / xi0;
    if n == 1 {
        let rho = rho_from_u(&u_cur, s, two_d);
        return (u_cur, rho);
    }
    for _ in 1..n {
        let gamma = 1.0 / (2.0 * xi0 - gamma_prev);
        // u_{k+1} = 2γ·ξ(λ)·u_k - γ_{k-1}γ·u_{k-1} + 4γ/width
        let mut next = u_cur.mul_affine(2.0 * gamma * a, 2.0 * gamma * b);
        next.add_scaled(&u_prev, -gamma_prev * gamma);
        next.c[0] += 4.0 * gamma / width;
        u_prev = u_cur;
        u_cur = next;
        gamma_prev = gamma;
    }
    let rho = rho_from_u(&u_cur, s, two_d);
    (u_cur, rho)
}

/// `rho = 1 - (λ+s)·u` with `λ + s = (2d + s) - 2d·x`.
fn rho_from_u(u: &ChebPoly, s: f64, two_d: f64) -> ChebPoly {
    let mut sigma = u.mul_affine(-two_d, two_d + s);
    sigma.scale(-1.0);
    sigma.c[0] += 1.0;
    sigma
}

/// The complete ladder: one multiplier polynomial per scale `j = 0..=J`.
///
/// The polynomials satisfy, exactly in real arithmetic,
/// `1 - (λ+s)·Σ_{j<=J'} Γ̂_j(λ) = Π_{i<=J'} ρ_i(λ)² >= 0` for every
/// truncation `J'`, every `λ ∈ [0, 4d]` and every `s >= 0`.
pub fn scale_polynomials(s: f64, geom: &TorusGeometry, damping_q: f64) -> Result<Vec<ChebPoly>> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "base decomposition requires s >= 0, got {s}"
        )));
    }
    let two_d = 2.0 * geom.dim() as f64;
    let hi = geom.symbol_max();
    let degrees = stage_degrees(geom.scale_base(), geom.depth());
    let windows = stage_windows(geom, damping_q);

    let mut scales = Vec::with_capacity(degrees.len());
    let mut carried = ChebPoly::constant(1.0); // Π_{i<j} ρ_i²
    for (j, (&n, &lo)) in degrees.iter().zip(&windows).enumerate() {
        let (u, rho) = stage_polys(n, lo, hi, s, two_d);
        // q̃ = u·(1 + ρ)
        let mut one_plus_rho = rho.clone();
        one_plus_rho.c[0] += 1.0;
        let q_tilde = u.mul(&one_plus_rho);
        let gamma_j = q_tilde.mul(&carried);

        let budget = geom.scale_base().pow(j as u32 + 1) - 1;
        debug_assert!(
            gamma_j.degree() <= budget,
            "scale {j}: degree {} exceeds budget {budget}",
            gamma_j.degree()
        );
        if gamma_j.degree() > budget {
            return Err(Error::ContractViolation {
                invariant: "polynomial degree",
                scale: j,
                detail: format!("degree {} > budget {budget}", gamma_j.degree()),
            });
        }
        scales.push(gamma_j);
        if j + 1 < degrees.len() {
            carried = carried.mul(&rho.mul(&rho));
        }
    }
    Ok(scales)
}

/// Materialise a Chebyshev polynomial of the walk operator as a torus
/// kernel: `K = p(W)·δ` with `W = I - (-Δ)/(2d)`.
///
/// The three-term recurrence runs on a box of half-width `deg(p)`, which the
/// intermediate supports never leave, so every site beyond the degree is an
/// untouched exact zero. The box is then embedded into the torus (the
/// half-period guard makes the embedding collision-free).
pub fn materialize(poly: &ChebPoly, geom: &TorusGeometry) -> Result<Kernel> {
    let deg = poly.degree();
    geom.assert_range_fits(deg as f64)?;
    let d = geom.dim();
    let b = 2 * deg + 1;
    let n_box: usize = b.pow(d as u32);
    let c = poly.coeffs();

    let mut acc = vec![0.0f64; n_box];
    let center = center_index(b, d, deg);
    if deg == 0 {
        acc[center] = c[0];
        return embed(geom, &acc, b, deg);
    }

    let mut v0 = vec![0.0f64; n_box];
    v0[center] = 1.0;
    let mut v1 = vec![0.0f64; n_box];
    walk_apply(&v0, &mut v1, b, d);
    let inv2d = 1.0 / (2.0 * d as f64);
    v1.par_iter_mut().for_each(|x| *x *= inv2d);

    acc[center] = c[0];
    acc.par_iter_mut().zip(v1.par_iter()).for_each(|(a, &v)| *a += c[1] * v);

    let mut tmp = vec![0.0f64; n_box];
    for &cn in c.iter().skip(2) {
        // v2 = 2·W·v1 - v0 = (neighbour sum)/d - v0
        walk_apply(&v1, &mut tmp, b, d);
        let inv_d = 1.0 / d as f64;
        tmp.par_iter_mut()
            .zip(v0.par_iter())
            .for_each(|(t, &p)| *t = *t * inv_d - p);
        std::mem::swap(&mut v0, &mut v1);
        std::mem::swap(&mut v1, &mut tmp);
        acc.par_iter_mut()
            .zip(v1.par_iter())
            .for_each(|(a, &v)| *a += cn * v);
    }
    embed(geom, &acc, b, deg)
}

fn center_index(b: usize, d: usize, deg: usize) -> usize {
    let mut idx = 0;
    for _ in 0..d {
        idx = idx * b + deg;
    }
    idx
}

/// Neighbour sum with zero boundary: `out[i] = Σ_axes (in one step away)`.
fn walk_apply(input: &[f64], out: &mut [f64], b: usize, d: usize) {
    let rows = input.len() / b;
    // strides of the row index space (first d-1 coordinates)
    let mut row_strides = vec![1usize; d.saturating_sub(1)];
    for a in (0..d.saturating_sub(1)).rev() {
        if a + 1 < d - 1 {
            row_strides[a] = row_strides[a + 1] * b;
        }
    }
    out.par_chunks_mut(b).enumerate().for_each(|(r, out_row)| {
        out_row.fill(0.0);
        // transverse axes: whole-row adds from neighbouring rows
        for a in 0..d - 1 {
            let stride = row_strides[a];
            let coord = (r / stride) % b;
            if coord > 0 {
                let src = &input[(r - stride) * b..(r - stride) * b + b];
                for (o, &s) in out_row.iter_mut().zip(src) {
                    *o += s;
                }
            }
            if coord + 1 < b {
                let src = &input[(r + stride) * b..(r + stride) * b + b];
                for (o, &s) in out_row.iter_mut().zip(src) {
                    *o += s;
                }
            }
        }
        // last axis: shifted adds within the row
        let row = &input[r * b..r * b + b];
        for t in 1..b {
            out_row[t] += row[t - 1];
        }
        for t in 0..b - 1 {
            out_row[t] += row[t + 1];
        }
    });
    let _ = rows;
}

/// Copy the box (centred at the origin offset) onto the torus grid.
fn embed(geom: &TorusGeometry, boxed: &[f64], b: usize, deg: usize) -> Result<Kernel> {
    let d = geom.dim();
    let m = geom.side();
    let mut values = vec![0.0f64; geom.site_count()];
    let rows = boxed.len() / b;
    // per-row mapping: decode box row coords, wrap into torus
    for r in 0..rows {
        let mut torus_base = 0usize;
        for a in 0..d - 1 {
            let exp = (d - 2 - a) as u32;
            let stride = b.pow(exp);
            let coord = (r / stride) % b;
            let signed = coord as i64 - deg as i64;
            let wrapped = signed.rem_euclid(m as i64) as usize;
            torus_base = torus_base * m + wrapped;
        }
        let row = &boxed[r * b..(r + 1) * b];
        for (t, &v) in row.iter().enumerate() {
            if v != 0.0 {
                let signed = t as i64 - deg as i64;
                let wrapped = signed.rem_euclid(m as i64) as usize;
                values[torus_base * m + wrapped] = v;
            }
        }
    }
    Ok(Kernel::from_even_values(*geom, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cheb_algebra_matches_direct_evaluation() {
        // p = T_0 + 2 T_1 - 0.5 T_3
        let p = ChebPoly {
            c: vec![1.0, 2.0, 0.0, -0.5],
        };
        let q = p.mul_affine(0.7, -0.3);
        let r = p.mul(&p);
        for &x in &[-1.0, -0.37, 0.0, 0.5, 0.99, 1.0] {
            assert_relative_eq!(q.eval(x), (0.7 * x - 0.3) * p.eval(x), max_relative = 1e-13);
            assert_relative_eq!(r.eval(x), p.eval(x) * p.eval(x), max_relative = 1e-13);
        }
    }

    #[test]
    fn degrees_fit_budget() {
        for l in [2usize, 3, 4, 5, 9] {
            let deg = stage_degrees(l, 6);
            let mut cum = 0usize;
            for (j, &n) in deg.iter().enumerate() {
                cum += n;
                assert!(
                    2 * cum - 1 <= l.pow(j as u32 + 1) - 1,
                    "L={l} j={j}: degree {} budget {}",
                    2 * cum - 1,
                    l.pow(j as u32 + 1) - 1
                );
            }
        }
    }

    #[test]
    fn ladder_is_exact_and_nonnegative_on_the_symbol_range() {
        let geom = TorusGeometry::new(2, 3, 3, 324).unwrap();
        for &s in &[0.0, 0.1, 1.0, 10.0, 1e4] {
            let scales = scale_polynomials(s, &geom, 2.0).unwrap();
            for (j, p) in scales.iter().enumerate() {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for i in 0..=800 {
                    let lambda = 8.0 * i as f64 / 800.0;
                    let v = p.eval(1.0 - lambda / 4.0);
                    min = min.min(v);
                    max = max.max(v);
                }
                assert!(min >= -1e-12 * max, "scale {j} s={s}: min {min}, max {max}");
            }
            // cumulative undershoot: (λ+s)·Σ <= 1 (+ dust)
            for i in 0..=800 {
                let lambda = 8.0 * i as f64 / 800.0;
                let x = 1.0 - lambda / 4.0;
                let cum: f64 = scales.iter().map(|p| p.eval(x)).sum();
                let probe = (lambda + s) * cum;
                assert!(probe <= 1.0 + 1e-10, "overshoot {probe} at λ={lambda}, s={s}");
            }
        }
    }

    #[test]
    fn ladder_residual_is_small_past_all_windows() {
        // For λ above every stage window each stage damps by ≈ L^{-4}, so
        // after J+1 = 4 stages the residual sits near (L^{-4})^4.
        let geom = TorusGeometry::new(2, 3, 3, 324).unwrap();
        let s = 0.0;
        let scales = scale_polynomials(s, &geom, 2.0).unwrap();
        let lambda = 6.0; // windows[0] = 4 is the largest
        let x = 1.0 - lambda / 4.0;
        let cum: f64 = scales.iter().map(|p| p.eval(x)).sum();
        let residual = 1.0 - (lambda + s) * cum;
        assert!(residual >= 0.0);
        assert!(residual < 1e-6, "residual {residual}");
    }

    #[test]
    fn materialized_delta_polynomial() {
        let geom = TorusGeometry::new(2, 2, 0, 16).unwrap();
        let p = ChebPoly { c: vec![2.5] };
        let k = materialize(&p, &geom).unwrap();
        assert_eq!(k.at_offset(&[0, 0]), 2.5);
        let sr = k.support_radius(0.0);
        assert!(sr.radius > 0.0 && sr.radius <= 1.0);
    }

    #[test]
    fn materialized_kernel_multiplier_matches_poly() {
        let geom = TorusGeometry::new(2, 2, 1, 20).unwrap();
        let p = ChebPoly {
            c: vec![0.3, -0.2, 0.11, 0.05, -0.01],
        };
        let k = materialize(&p, &geom).unwrap();
        // multiplier at mode k must equal p(x(k))
        let table = crate::lattice::SymbolTable::new(&geom);
        let mult = k.multiplier();
        for i in (0..geom.site_count()).step_by(7) {
            let x = 1.0 - table.at(i) / 4.0;
            assert_relative_eq!(mult[i], p.eval(x), epsilon = 1e-12);
        }
        // exact zeros beyond the degree
        let sr = k.support_radius(0.0);
        assert!(sr.radius <= 4.0 + 1e-9);
        assert_eq!(k.at_offset(&[5, 0]), 0.0);
        assert_eq!(k.at_offset(&[3, 3]), 0.0);
    }

    #[test]
    fn materialized_kernel_in_3d() {
        let geom = TorusGeometry::new(3, 2, 0, 12).unwrap();
        let p = ChebPoly {
            c: vec![0.5, 0.25, 0.125],
        };
        let k = materialize(&p, &geom).unwrap();
        let table = crate::lattice::SymbolTable::new(&geom);
        let mult = k.multiplier();
        for i in (0..geom.site_count()).step_by(11) {
            let x = 1.0 - table.at(i) / 6.0;
            assert_relative_eq!(mult[i], p.eval(x), epsilon = 1e-12);
        }
        assert_eq!(k.at_offset(&[3, 0, 0]), 0.0);
        assert_eq!(k.at_offset(&[1, 1, 1]), 0.0); // ℓ¹ distance 3 > degree 2
    }
}
