//! Finite torus geometry shared by every kernel.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The cubic torus `(Z/MZ)^d` together with the multiscale parameters:
/// scale base `L`, number of scales `J` (scales run `j = 0..=J`), and a
/// lattice spacing (1 on the unit lattice, `L^{-j}` on rescaled views).
///
/// The side length must satisfy `M >= 4·L^{J+1}` so that every declared
/// finite range fits in half the torus and wrap-around can never mask a
/// range violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGeometry {
    d: usize,
    scale_base: usize,
    depth: usize,
    side: usize,
    spacing: f64,
}

impl TorusGeometry {
    pub fn new(d: usize, scale_base: usize, depth: usize, side: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension d must be >= 1".into()));
        }
        if scale_base < 2 {
            return Err(Error::InvalidParameter(format!(
                "scale base L must be >= 2, got {scale_base}"
            )));
        }
        if !is_power_of_three(scale_base) {
            log::warn!(
                "scale base L = {scale_base} is not a power of 3; the multiscale bounds are \
                 stated for L = 3^p and constants may drift for other bases"
            );
        }
        let required = checked_range(scale_base, depth + 1)?
            .checked_mul(4)
            .ok_or_else(|| Error::InvalidParameter("4·L^(J+1) overflows".into()))?;
        if side < required {
            return Err(Error::GeometryGuard { m: side, required });
        }
        // Keep the full grid addressable through signed arithmetic.
        if (side as u128).pow(d as u32) > usize::MAX as u128 {
            return Err(Error::InvalidParameter("M^d does not fit in usize".into()));
        }
        Ok(Self {
            d,
            scale_base,
            depth,
            side,
            spacing: 1.0,
        })
    }

    /// Geometry with the minimal admissible side length `M = 4·L^{J+1}`.
    pub fn minimal(d: usize, scale_base: usize, depth: usize) -> Result<Self> {
        let side = checked_range(scale_base, depth + 1)? * 4;
        Self::new(d, scale_base, depth, side)
    }

    /// Same lattice points relabelled with a different spacing (used by
    /// rescaled views). The multiscale parameters are untouched.
    pub fn with_spacing(mut self, spacing: f64) -> Self {
        debug_assert!(spacing > 0.0);
        self.spacing = spacing;
        self
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn scale_base(&self) -> usize {
        self.scale_base
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn site_count(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    /// Declared range of scale `j`: `L^{j+1}` (in lattice units).
    pub fn range_budget(&self, j: usize) -> f64 {
        (self.scale_base as f64).powi(j as i32 + 1)
    }

    /// Upper end of the Laplacian symbol range, `4d`.
    pub fn symbol_max(&self) -> f64 {
        4.0 * self.d as f64
    }

    /// Smallest positive value of the Laplacian symbol on this grid.
    pub fn symbol_min_positive(&self) -> f64 {
        2.0 * (1.0 - (2.0 * std::f64::consts::PI / self.side as f64).cos())
    }

    /// Row-major strides; the last axis is contiguous.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.d];
        for axis in (0..self.d.saturating_sub(1)).rev() {
            s[axis] = s[axis + 1] * self.side;
        }
        s
    }

    /// Signed minimal-image representative of a coordinate in `0..M`.
    #[inline]
    pub fn signed_coord(&self, c: usize) -> i64 {
        let m = self.side as i64;
        let c = c as i64;
        if 2 * c > m {
            c - m
        } else {
            c
        }
    }

    /// Squared Euclidean minimal-image distance of the site with flat index
    /// `flat`, in lattice units (spacing not applied).
    #[inline]
    pub fn min_image_dist2(&self, mut flat: usize) -> f64 {
        let mut acc = 0i64;
        for _ in 0..self.d {
            let c = flat % self.side;
            flat /= self.side;
            let s = self.signed_coord(c);
            acc += s * s;
        }
        acc as f64
    }

    /// Flat index of the offset with signed coordinates `x` (wrapped).
    pub fn flat_of_signed(&self, x: &[i64]) -> usize {
        assert_eq!(x.len(), self.d);
        let m = self.side as i64;
        let mut flat = 0usize;
        for &c in x {
            let w = c.rem_euclid(m) as usize;
            flat = flat * self.side + w;
        }
        flat
    }

    /// Enforce the half-period guard for a declared range.
    pub fn assert_range_fits(&self, range: f64) -> Result<()> {
        if 2.0 * range >= self.side as f64 {
            return Err(Error::GeometryGuard {
                m: self.side,
                required: (2.0 * range).ceil() as usize + 1,
            });
        }
        Ok(())
    }
}

fn checked_range(base: usize, exp: usize) -> Result<usize> {
    base.checked_pow(exp as u32)
        .ok_or_else(|| Error::InvalidParameter(format!("L^{exp} overflows for L = {base}")))
}

fn is_power_of_three(mut n: usize) -> bool {
    if n == 0 {
        return false;
    }
    while n % 3 == 0 {
        n /= 3;
    }
    n == 1
}

/// Per-axis table of the one-dimensional symbol `2(1 - cos(2πn/M))`, used to
/// evaluate the full Laplacian symbol mode by mode without trigonometry in
/// the hot loops.
pub struct SymbolTable {
    axis: Vec<f64>,
    geom: TorusGeometry,
}

impl SymbolTable {
    pub fn new(geom: &TorusGeometry) -> Self {
        let m = geom.side();
        let axis = (0..m)
            .map(|n| {
                let k = 2.0 * std::f64::consts::PI * n as f64 / m as f64;
                2.0 * (1.0 - k.cos())
            })
            .collect();
        Self { axis, geom: *geom }
    }

    /// Laplacian symbol at the mode with flat index `flat`.
    #[inline]
    pub fn at(&self, mut flat: usize) -> f64 {
        let m = self.geom.side();
        let mut acc = 0.0;
        for _ in 0..self.geom.dim() {
            acc += self.axis[flat % m];
            flat /= m;
        }
        acc
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geom
    }

    /// All symbol values as a dense per-mode array.
    pub fn dense(&self) -> Vec<f64> {
        (0..self.geom.site_count()).map(|i| self.at(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_rejects_small_torus() {
        assert!(TorusGeometry::new(2, 3, 3, 323).is_err());
        assert!(TorusGeometry::new(2, 3, 3, 324).is_ok());
    }

    #[test]
    fn minimal_side() {
        let g = TorusGeometry::minimal(2, 3, 3).unwrap();
        assert_eq!(g.side(), 324);
        assert_eq!(g.site_count(), 324 * 324);
    }

    #[test]
    fn signed_coords_wrap() {
        let g = TorusGeometry::new(1, 2, 0, 8).unwrap();
        assert_eq!(g.signed_coord(0), 0);
        assert_eq!(g.signed_coord(3), 3);
        assert_eq!(g.signed_coord(4), 4); // 2c == m keeps the positive image
        assert_eq!(g.signed_coord(5), -3);
        assert_eq!(g.signed_coord(7), -1);
    }

    #[test]
    fn symbol_table_matches_direct() {
        let g = TorusGeometry::new(2, 2, 0, 12).unwrap();
        let t = SymbolTable::new(&g);
        for flat in [0usize, 1, 13, 77] {
            let m = g.side();
            let (a, b) = (flat % m, flat / m);
            let k1 = 2.0 * std::f64::consts::PI * a as f64 / m as f64;
            let k2 = 2.0 * std::f64::consts::PI * b as f64 / m as f64;
            let direct = 2.0 * (1.0 - k1.cos()) + 2.0 * (1.0 - k2.cos());
            // The table is indexed with the last axis contiguous; `at`
            // only uses coordinate multiset so ordering does not matter.
            assert!((t.at(flat) - direct).abs() < 1e-14);
        }
    }
}
