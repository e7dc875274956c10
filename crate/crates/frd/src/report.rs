//! Bound reports: measured derivative sup-norms per scale against the
//! multiscale bound shapes, with fitted decay rates.

use serde::{Deserialize, Serialize};

/// One measured row: scale `j`, derivative order `p`, the sup-norm of the
/// p-th forward derivative, the bound shape it is compared against, and
/// their ratio (the empirical constant).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRow {
    pub j: usize,
    pub p: u32,
    pub sup_norm: f64,
    pub bound_value: f64,
    pub ratio: f64,
    /// Mass-decay exponent selector: 2 for `j >= 2`, 1 for `j ∈ {0, 1}`.
    pub exponent: u8,
}

/// Least-squares fit of `ln sup_norm` against the scale index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub p: u32,
    /// Fitted slope of `ln sup` per unit `j` (negative for decay).
    pub fitted_rate: f64,
    /// The rate the multiscale bounds predict, when one is meaningful.
    pub expected_rate: Option<f64>,
    /// Scales used for the fit.
    pub j_range: (usize, usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub fits: Vec<DecayFit>,
}

/// `e(j)`: the mass-decay exponent, 2 for `j >= 2` and 1 for `j ∈ {0, 1}`.
pub fn mass_exponent(j: usize) -> u8 {
    if j >= 2 {
        2
    } else {
        1
    }
}

impl BoundReport {
    /// Maximum ratio over all rows with derivative order `p` and `j >= j_min`.
    pub fn max_ratio(&self, p: u32, j_min: usize) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.p == p && r.j >= j_min)
            .map(|r| r.ratio)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    /// Ratio spread max/min over rows with derivative order `p`, `j >= j_min`.
    pub fn ratio_spread(&self, p: u32, j_min: usize) -> Option<f64> {
        let ratios: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.p == p && r.j >= j_min && r.ratio > 0.0)
            .map(|r| r.ratio)
            .collect();
        if ratios.is_empty() {
            return None;
        }
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        Some(max / min)
    }

    pub fn fit_for(&self, p: u32) -> Option<&DecayFit> {
        self.fits.iter().find(|f| f.p == p)
    }

    /// CSV rendering: `j,p,sup_norm,bound,ratio`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,p,sup_norm,bound,ratio\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{:.16e}\n",
                r.j, r.p, r.sup_norm, r.bound_value, r.ratio
            ));
        }
        out
    }
}

/// Ordinary least squares slope (and intercept) of `y` against `x`.
pub fn ols_slope(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_line() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        let (slope, intercept) = ols_slope(&pts);
        assert!((slope + 2.0).abs() < 1e-12);
        assert!((intercept - 3.0).abs() < 1e-12);
    }

    #[test]
    fn exponent_selector() {
        assert_eq!(mass_exponent(0), 1);
        assert_eq!(mass_exponent(1), 1);
        assert_eq!(mass_exponent(2), 2);
        assert_eq!(mass_exponent(5), 2);
    }
}
