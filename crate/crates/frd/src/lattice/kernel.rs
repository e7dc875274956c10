//! Kernels, spectral multipliers, and the measurement primitives.

use super::fft::{dft_backward, dft_forward};
use super::geometry::TorusGeometry;
use crate::error::{Error, Result};
use rayon::prelude::*;
use std::sync::OnceLock;

/// Fourier symbol of the lattice Laplacian at mode `k`, components in
/// `[-π, π)`: `Σ_i 2(1 - cos k_i)`, with range `[0, 4d]`.
pub fn symbol(k: &[f64]) -> f64 {
    k.iter().map(|&ki| 2.0 * (1.0 - ki.cos())).sum()
}

/// A plain real grid function on the torus. No evenness contract; this is
/// the output type of lattice derivatives and the input type of generic
/// grid measurements.
#[derive(Debug, Clone)]
pub struct GridFn {
    geom: TorusGeometry,
    values: Vec<f64>,
}

impl GridFn {
    pub fn new(geom: TorusGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.site_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                geom.site_count(),
                values.len()
            )));
        }
        Ok(Self { geom, values })
    }

    pub fn zeros(geom: TorusGeometry) -> Self {
        let n = geom.site_count();
        Self {
            geom,
            values: vec![0.0; n],
        }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geom
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .par_iter()
            .map(|v| v.abs())
            .reduce(|| 0.0, f64::max)
    }

    /// Value at a signed lattice offset (minimal image applied by wrapping).
    pub fn at_offset(&self, x: &[i64]) -> f64 {
        self.values[self.geom.flat_of_signed(x)]
    }
}

/// One forward lattice difference per application:
/// `f(x) -> (f(x + ε e_axis) - f(x)) / ε`, applied `order` times.
/// `order = 0` is the identity. The increment must equal the grid spacing.
pub fn forward_derivative(f: &GridFn, axis: usize, order: u32, increment: f64) -> Result<GridFn> {
    let geom = *f.geometry();
    if axis >= geom.dim() {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} out of range for dimension {}",
            geom.dim()
        )));
    }
    if increment <= 0.0 || increment != geom.spacing() {
        return Err(Error::InvalidParameter(format!(
            "increment {increment} must equal the grid spacing {}",
            geom.spacing()
        )));
    }
    let mut cur = f.values().to_vec();
    let strides = geom.strides();
    let m = geom.side();
    let stride = strides[axis];
    let axis_block = stride * m;
    let inv = 1.0 / increment;
    for _ in 0..order {
        let prev = cur;
        let mut next = vec![0.0; prev.len()];
        next.par_iter_mut().enumerate().for_each(|(i, out)| {
            let base = i - (i % axis_block);
            let neighbor = base + (i + stride) % axis_block;
            *out = (prev[neighbor] - prev[i]) * inv;
        });
        cur = next;
    }
    GridFn::new(geom, cur)
}

/// Result of a support-radius measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportRadius {
    /// Smallest `R` such that `|K(x)| <= tol·sup|K|` for all `|x| >= R`
    /// (Euclidean minimal-image distance).
    pub radius: f64,
    /// Set when the kernel is identically zero; the radius is then 0.
    pub all_zero: bool,
}

/// An even, real, translation-invariant function on the torus, stored in
/// position space with a lazily computed Fourier multiplier.
#[derive(Debug)]
pub struct Kernel {
    grid: GridFn,
    multiplier: OnceLock<Vec<f64>>,
}

impl Clone for Kernel {
    fn clone(&self) -> Self {
        let k = Kernel {
            grid: self.grid.clone(),
            multiplier: OnceLock::new(),
        };
        if let Some(m) = self.multiplier.get() {
            let _ = k.multiplier.set(m.clone());
        }
        k
    }
}

impl Kernel {
    /// Build from raw values, validating the shape and exact evenness.
    pub fn from_values(geom: TorusGeometry, values: Vec<f64>) -> Result<Self> {
        let grid = GridFn::new(geom, values)?;
        let k = Self {
            grid,
            multiplier: OnceLock::new(),
        };
        k.check_even()?;
        Ok(k)
    }

    /// Build from values known to be even by construction.
    pub(crate) fn from_even_values(geom: TorusGeometry, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), geom.site_count());
        Self {
            grid: GridFn::new(geom, values).expect("shape checked by caller"),
            multiplier: OnceLock::new(),
        }
    }

    pub fn delta(geom: TorusGeometry) -> Self {
        let mut values = vec![0.0; geom.site_count()];
        values[0] = 1.0;
        Self::from_even_values(geom, values)
    }

    pub fn zeros(geom: TorusGeometry) -> Self {
        Self::from_even_values(geom, vec![0.0; geom.site_count()])
    }

    fn check_even(&self) -> Result<()> {
        let geom = self.geometry();
        let m = geom.side() as i64;
        let d = geom.dim();
        let values = self.values();
        for (i, &v) in values.iter().enumerate() {
            let mut flat = i;
            let mut mirror = 0usize;
            let strides = geom.strides();
            // reconstruct coordinates (last axis contiguous)
            let mut coords = vec![0usize; d];
            for axis in (0..d).rev() {
                coords[axis] = flat % geom.side();
                flat /= geom.side();
            }
            for (axis, &c) in coords.iter().enumerate() {
                let neg = ((m - c as i64) % m) as usize;
                mirror += neg * strides[axis];
            }
            if values[mirror] != v {
                return Err(Error::InvalidParameter(format!(
                    "kernel is not even at flat index {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> &TorusGeometry {
        self.grid.geometry()
    }

    pub fn values(&self) -> &[f64] {
        self.grid.values()
    }

    pub fn as_grid_fn(&self) -> &GridFn {
        &self.grid
    }

    pub fn sup_norm(&self) -> f64 {
        self.grid.sup_norm()
    }

    pub fn at_offset(&self, x: &[i64]) -> f64 {
        self.grid.at_offset(x)
    }

    /// The cached real Fourier multiplier `K̂(k)` (unnormalised forward DFT).
    pub fn multiplier(&self) -> &[f64] {
        self.multiplier.get_or_init(|| {
            let modes = dft_forward(self.geometry(), self.values());
            real_symmetrized(self.geometry(), &modes)
        })
    }

    /// Largest imaginary component of the forward transform relative to the
    /// largest multiplier value; round-off dust for a genuinely even kernel.
    pub fn fourier_imag_dust(&self) -> f64 {
        let modes = dft_forward(self.geometry(), self.values());
        let max_im = modes.par_iter().map(|c| c.im.abs()).reduce(|| 0.0, f64::max);
        let max_re = modes.par_iter().map(|c| c.re.abs()).reduce(|| 0.0, f64::max);
        if max_re == 0.0 {
            max_im
        } else {
            max_im / max_re
        }
    }

    pub fn to_multiplier(&self) -> SpectralMultiplier {
        SpectralMultiplier {
            geom: *self.geometry(),
            values: self.multiplier().to_vec(),
        }
    }

    /// Minimum of `K̂(k)` over all modes; nonnegative iff the kernel is a
    /// valid Gaussian covariance.
    pub fn min_multiplier(&self) -> f64 {
        self.multiplier()
            .par_iter()
            .copied()
            .reduce(|| f64::INFINITY, f64::min)
    }

    pub fn max_multiplier(&self) -> f64 {
        self.multiplier()
            .par_iter()
            .copied()
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }

    /// Smallest `R` such that `|K(x)| <= tol·sup|K|` whenever the Euclidean
    /// minimal-image distance satisfies `|x| >= R`. With `tol = 0` this is
    /// the exact support radius. Returns the radius just above the farthest
    /// violating site, so `radius <= declared` certifies a declared range.
    pub fn support_radius(&self, tol: f64) -> SupportRadius {
        debug_assert!(tol >= 0.0);
        let sup = self.sup_norm();
        if sup == 0.0 {
            return SupportRadius {
                radius: 0.0,
                all_zero: true,
            };
        }
        let threshold = tol * sup;
        let geom = self.geometry();
        let values = self.values();
        let max_d2 = values
            .par_iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > threshold)
            .map(|(i, _)| geom.min_image_dist2(i))
            .reduce(|| 0.0, f64::max);
        SupportRadius {
            radius: next_up(max_d2.sqrt()),
            all_zero: false,
        }
    }

    pub fn forward_derivative(&self, axis: usize, order: u32, increment: f64) -> Result<GridFn> {
        forward_derivative(&self.grid, axis, order, increment)
    }

    /// Pointwise linear combination `a·self + b·other` (geometries must match).
    pub fn linear_comb(&self, a: f64, other: &Kernel, b: f64) -> Result<Kernel> {
        if self.geometry() != other.geometry() {
            return Err(Error::ShapeMismatch(
                "kernels live on different geometries".into(),
            ));
        }
        let values = self
            .values()
            .par_iter()
            .zip(other.values().par_iter())
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Kernel::from_even_values(*self.geometry(), values))
    }

    pub fn scale(&self, a: f64) -> Kernel {
        let values = self.values().par_iter().map(|v| a * v).collect();
        Kernel::from_even_values(*self.geometry(), values)
    }

    /// Radial profile: (Euclidean distance, mean value over that distance
    /// shell), sorted by distance, optionally truncated at `max_radius`.
    pub fn radial_profile(&self, max_radius: Option<f64>) -> Vec<(f64, f64)> {
        use std::collections::BTreeMap;
        let geom = self.geometry();
        let cutoff2 = max_radius.map(|r| r * r);
        let mut shells: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
        for (i, &v) in self.values().iter().enumerate() {
            let d2 = geom.min_image_dist2(i);
            if let Some(c2) = cutoff2 {
                if d2 > c2 {
                    continue;
                }
            }
            let key = d2 as u64; // squared distances are integers on the unit lattice
            let e = shells.entry(key).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
        shells
            .into_iter()
            .map(|(d2, (sum, n))| ((d2 as f64).sqrt() * geom.spacing(), sum / n as f64))
            .collect()
    }
}

/// A real function of the Fourier mode, `k -> -k` symmetric; the transform
/// side of a [`Kernel`].
#[derive(Debug, Clone)]
pub struct SpectralMultiplier {
    geom: TorusGeometry,
    values: Vec<f64>,
}

impl SpectralMultiplier {
    pub fn new(geom: TorusGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.site_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} modes, got {}",
                geom.site_count(),
                values.len()
            )));
        }
        Ok(Self { geom, values })
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geom
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Inverse transform; the result is symmetrised so the kernel is even
    /// exactly, and the given multiplier is installed as its cache.
    pub fn to_kernel(&self) -> Kernel {
        let modes: Vec<rustfft::num_complex::Complex64> = self
            .values
            .iter()
            .map(|&v| rustfft::num_complex::Complex64::new(v, 0.0))
            .collect();
        let back = dft_backward(&self.geom, &modes);
        let re: Vec<f64> = back.iter().map(|c| c.re).collect();
        let values = symmetrize(&self.geom, &re);
        let k = Kernel::from_even_values(self.geom, values);
        let _ = k.multiplier.set(self.values.clone());
        k
    }

    pub fn min(&self) -> f64 {
        self.values
            .par_iter()
            .copied()
            .reduce(|| f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .par_iter()
            .copied()
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }
}

/// Average a grid with its parity mirror so evenness holds bit-exactly.
fn symmetrize(geom: &TorusGeometry, values: &[f64]) -> Vec<f64> {
    let mirror = mirror_indices(geom);
    (0..values.len())
        .into_par_iter()
        .map(|i| 0.5 * (values[i] + values[mirror[i]]))
        .collect()
}

fn real_symmetrized(geom: &TorusGeometry, modes: &[rustfft::num_complex::Complex64]) -> Vec<f64> {
    let mirror = mirror_indices(geom);
    (0..modes.len())
        .into_par_iter()
        .map(|i| 0.5 * (modes[i].re + modes[mirror[i]].re))
        .collect()
}

fn mirror_indices(geom: &TorusGeometry) -> Vec<usize> {
    let m = geom.side();
    let d = geom.dim();
    let n = geom.site_count();
    (0..n)
        .into_par_iter()
        .map(|mut flat| {
            let mut mirror = 0usize;
            let mut place = 1usize;
            for _ in 0..d {
                let c = flat % m;
                flat /= m;
                let neg = (m - c) % m;
                mirror += neg * place;
                place *= m;
            }
            mirror
        })
        .collect()
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        f64::MIN_POSITIVE * f64::EPSILON
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_geom() -> TorusGeometry {
        TorusGeometry::new(2, 2, 0, 12).unwrap()
    }

    #[test]
    fn symbol_values() {
        use std::f64::consts::PI;
        assert_eq!(symbol(&[0.0, 0.0]), 0.0);
        assert_relative_eq!(symbol(&[PI, PI]), 8.0, max_relative = 1e-15);
        assert_relative_eq!(symbol(&[PI / 2.0]), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn delta_multiplier_is_one() {
        let k = Kernel::delta(small_geom());
        for &v in k.multiplier() {
            assert!((v - 1.0).abs() < 1e-13);
        }
        assert_relative_eq!(k.min_multiplier(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn constant_kernel_multiplier() {
        let g = small_geom();
        let c = 0.7;
        let k = Kernel::from_even_values(g, vec![c; g.site_count()]);
        let mult = k.multiplier();
        assert_relative_eq!(mult[0], c * g.site_count() as f64, max_relative = 1e-12);
        for &v in &mult[1..] {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn nn_laplacian_kernel_multiplier_is_symbol() {
        // kernel of -Δ: 2d at the origin, -1 at each nearest neighbour
        let g = small_geom();
        let mut values = vec![0.0; g.site_count()];
        values[g.flat_of_signed(&[0, 0])] = 4.0;
        for x in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            values[g.flat_of_signed(&x)] = -1.0;
        }
        let k = Kernel::from_values(g, values).unwrap();
        let mult = k.multiplier();
        let table = super::super::geometry::SymbolTable::new(&g);
        for i in 0..g.site_count() {
            assert!((mult[i] - table.at(i)).abs() < 1e-12);
        }
        // support on |x| <= 1
        let sr = k.support_radius(0.0);
        assert!(sr.radius <= 1.0 + 1e-12 && sr.radius > 1.0 - 1e-12);
    }

    #[test]
    fn roundtrip_multiplier_kernel() {
        let g = small_geom();
        let mut values = vec![0.0; g.site_count()];
        values[g.flat_of_signed(&[0, 0])] = 2.0;
        for x in [[2, 1], [-2, -1], [1, -2], [-1, 2], [2, -1], [-2, 1], [-1, -2], [1, 2]] {
            values[g.flat_of_signed(&x)] = 0.25;
        }
        let k = Kernel::from_values(g, values.clone()).unwrap();
        let back = k.to_multiplier().to_kernel();
        let sup = k.sup_norm();
        for (a, b) in k.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-12 * sup);
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = small_geom();
        let k = Kernel::from_even_values(g, vec![3.25; g.site_count()]);
        let d = k.forward_derivative(0, 1, 1.0).unwrap();
        assert_eq!(d.sup_norm(), 0.0);
    }

    #[test]
    fn derivative_of_coordinate_function() {
        // f(x) = x_0 as a plain grid function; forward difference is 1 away
        // from the wrap row.
        let g = small_geom();
        let m = g.side();
        let values: Vec<f64> = (0..g.site_count()).map(|i| (i / m) as f64).collect();
        let f = GridFn::new(g, values).unwrap();
        let df = forward_derivative(&f, 0, 1, 1.0).unwrap();
        for row in 0..m - 1 {
            for col in 0..m {
                assert_eq!(df.values()[row * m + col], 1.0);
            }
        }
    }

    #[test]
    fn derivative_order_zero_is_identity() {
        let g = small_geom();
        let k = Kernel::delta(g);
        let d = k.forward_derivative(1, 0, 1.0).unwrap();
        assert_eq!(d.values(), k.values());
    }

    #[test]
    fn invalid_axis_rejected() {
        let g = small_geom();
        let k = Kernel::delta(g);
        assert!(k.forward_derivative(2, 1, 1.0).is_err());
    }

    #[test]
    fn support_radius_of_delta() {
        let k = Kernel::delta(small_geom());
        let sr = k.support_radius(0.0);
        assert!(!sr.all_zero);
        assert!(sr.radius > 0.0 && sr.radius <= 1.0);
    }

    #[test]
    fn support_radius_flags_zero_kernel() {
        let k = Kernel::zeros(small_geom());
        let sr = k.support_radius(0.0);
        assert!(sr.all_zero);
        assert_eq!(sr.radius, 0.0);
    }

    #[test]
    fn resolvent_min_multiplier() {
        // kernel of (-Δ + s)^{-1}: min over modes is 1/(4d + s)
        let g = small_geom();
        let table = super::super::geometry::SymbolTable::new(&g);
        let s = 0.5;
        let values: Vec<f64> = (0..g.site_count()).map(|i| 1.0 / (table.at(i) + s)).collect();
        let mult = SpectralMultiplier::new(g, values).unwrap();
        let k = mult.to_kernel();
        assert_relative_eq!(k.min_multiplier(), 1.0 / (8.0 + s), max_relative = 1e-12);
        assert!(k.min_multiplier() > 0.0);
    }

    #[test]
    fn negative_delta_multiplier() {
        let k = Kernel::delta(small_geom()).scale(-1.0);
        assert_relative_eq!(k.min_multiplier(), -1.0, max_relative = 1e-12);
    }
}
