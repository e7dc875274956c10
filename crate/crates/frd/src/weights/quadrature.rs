//! Adaptive Gauss–Legendre quadrature on the positive axis.
//!
//! Integrals `∫_0^∞ g(s) ds` are transformed with `s = e^u` so that the
//! weight family's power-law endpoints become two-sided exponential decay in
//! `u`. The `u`-axis is covered by panels that are refined where the
//! embedded error estimate (order 16 vs order 32 on the same panel) is
//! large and extended outward until fresh panels stop contributing.

use crate::error::{Error, Result};
use crate::weights::{f_alpha, rho_unchecked, SpectralParams};
use serde::{Deserialize, Serialize};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence. Machine-precision for the orders used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess for the i-th root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub err_estimate: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    fine: f64,
    err: f64,
}

struct PanelRules {
    coarse_x: Vec<f64>,
    coarse_w: Vec<f64>,
    fine_x: Vec<f64>,
    fine_w: Vec<f64>,
}

impl PanelRules {
    fn new() -> Self {
        let (cx, cw) = gauss_legendre(16);
        let (fx, fw) = gauss_legendre(32);
        Self {
            coarse_x: cx,
            coarse_w: cw,
            fine_x: fx,
            fine_w: fw,
        }
    }

    /// Integrate `g(u) = f(e^u)·e^u` over `[a, b]` with both rules.
    fn eval<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64, evals: &mut usize) -> Panel {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let g = |u: f64| {
            let s = u.exp();
            f(s) * s
        };
        let coarse: f64 = self
            .coarse_x
            .iter()
            .zip(&self.coarse_w)
            .map(|(&x, &w)| w * g(mid + half * x))
            .sum::<f64>()
            * half;
        let fine: f64 = self
            .fine_x
            .iter()
            .zip(&self.fine_w)
            .map(|(&x, &w)| w * g(mid + half * x))
            .sum::<f64>()
            * half;
        *evals += self.coarse_x.len() + self.fine_x.len();
        Panel {
            a,
            b,
            fine,
            err: (fine - coarse).abs(),
        }
    }
}

/// Adaptive evaluation of `∫_0^∞ f(s) ds` to relative tolerance `rel_tol`.
///
/// `centers` are positive `s`-scales around which the integrand is expected
/// to have structure; they seed the initial panel layout. On failure the
/// error carries the achieved relative error estimate.
pub fn integrate_positive_axis<F: Fn(f64) -> f64>(
    f: &F,
    centers: &[f64],
    rel_tol: f64,
    max_evals: usize,
) -> Result<QuadResult> {
    let rules = PanelRules::new();
    let mut evals = 0usize;

    let mut knots: Vec<f64> = centers
        .iter()
        .filter(|&&c| c > 0.0 && c.is_finite())
        .map(|&c| c.ln())
        .collect();
    if knots.is_empty() {
        knots.push(0.0);
    }
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut lo = knots[0] - 4.0;
    let mut hi = *knots.last().unwrap() + 4.0;

    // initial cover: width <= 4 panels between lo and hi
    let mut panels: Vec<Panel> = Vec::new();
    let span = hi - lo;
    let count = (span / 4.0).ceil().max(1.0) as usize;
    let width = span / count as f64;
    for i in 0..count {
        let a = lo + i as f64 * width;
        let b = if i + 1 == count { hi } else { a + width };
        panels.push(rules.eval(f, a, b, &mut evals));
    }

    let total = |panels: &[Panel]| -> (f64, f64) {
        let v: f64 = panels.iter().map(|p| p.fine).sum();
        let e: f64 = panels.iter().map(|p| p.err).sum();
        (v, e)
    };

    let mut ext_width_lo = 4.0;
    let mut ext_width_hi = 4.0;
    let mut quiet_lo = 0;
    let mut quiet_hi = 0;

    loop {
        let (value, err) = total(&panels);
        let scale = value.abs().max(f64::MIN_POSITIVE);

        // outward extension: keep going until two consecutive panels on a
        // side are negligible
        let mut changed = false;
        if quiet_lo < 2 {
            let a = lo - ext_width_lo;
            let p = rules.eval(f, a, lo, &mut evals);
            lo = a;
            ext_width_lo = (ext_width_lo * 1.5).min(12.0);
            if p.fine.abs() <= rel_tol * scale / 16.0 {
                quiet_lo += 1;
            } else {
                quiet_lo = 0;
            }
            panels.push(p);
            changed = true;
        }
        if quiet_hi < 2 {
            let b = hi + ext_width_hi;
            let p = rules.eval(f, hi, b, &mut evals);
            hi = b;
            ext_width_hi = (ext_width_hi * 1.5).min(12.0);
            if p.fine.abs() <= rel_tol * scale / 16.0 {
                quiet_hi += 1;
            } else {
                quiet_hi = 0;
            }
            panels.push(p);
            changed = true;
        }

        // refine the worst panel until the summed estimate fits the budget
        if !changed && err <= rel_tol * scale * 0.5 {
            return Ok(QuadResult {
                value,
                err_estimate: err / scale,
                evals,
            });
        }
        if !changed {
            let worst = panels
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.err.partial_cmp(&b.1.err).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            let Panel { a, b, .. } = panels[worst];
            let mid = 0.5 * (a + b);
            panels[worst] = rules.eval(f, a, mid, &mut evals);
            let right = rules.eval(f, mid, b, &mut evals);
            panels.push(right);
        }

        if evals > max_evals {
            let (value, err) = total(&panels);
            return Err(Error::QuadratureNonConvergence {
                achieved: err / value.abs().max(f64::MIN_POSITIVE),
                target: rel_tol,
                nodes: evals,
            });
        }
    }
}

/// A fixed set of positive-axis nodes and weights, shared across every scale
/// of a fractional decomposition so that telescoping is inherited exactly
/// from the base builds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSet {
    pub s: Vec<f64>,
    pub w: Vec<f64>,
    /// Validated worst relative error of `Σ w_i ρ(s_i)/(s_i + λ)` against the
    /// closed form `f_α(λ)` over the probe range.
    pub achieved_rel_err: f64,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Apply the rule to an arbitrary integrand.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.s
            .iter()
            .zip(&self.w)
            .map(|(&s, &w)| w * f(s))
            .sum()
    }
}

/// Build a shared node set for the weight family `s ↦ ρ_α(s, m²)/(s + λ)`
/// accurate to `rel_tol` uniformly over `λ ∈ [lambda_min, lambda_max]`,
/// with at most `cap` nodes.
///
/// The layout is adapted against the two extreme members of the family and
/// then validated against the closed form on a log grid of probe values;
/// the worst panels are re-split until validation passes or the cap is hit.
pub fn build_shared_nodes(
    params: &SpectralParams,
    lambda_min: f64,
    lambda_max: f64,
    rel_tol: f64,
    cap: usize,
) -> Result<NodeSet> {
    assert!(lambda_min > 0.0 && lambda_max >= lambda_min);
    let rules = PanelRules::new();
    let mut evals = 0usize;
    let p = *params;
    // sum of the two extreme-λ integrands: structure at both scales
    let probe = move |s: f64| rho_unchecked(s, &p) * (1.0 / (s + lambda_min) + 1.0 / (s + lambda_max));

    let mut centers = crate::weights::scale_hints(params, &[lambda_min, lambda_max]);
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Analytic two-sided tail depths for the relative-error target: the
    // upper tail of ∫ ρ/(s+λ) ds relative to f_α scales like (λ/S)^{α/2},
    // the lower tail like (s₀/λ)^{1-α/2}.
    let alpha = params.alpha;
    let tail = rel_tol / 8.0;
    let u_hi = lambda_max.ln() + (-tail.ln()) * 2.0 / alpha + 4.0;
    let u_lo = lambda_min.ln() + tail.ln() * 2.0 / (2.0 - alpha) - 4.0;

    let mut panels: Vec<Panel> = Vec::new();
    let mut edges: Vec<f64> = vec![u_lo];
    // denser cover across the structured region, sparse in the tails
    let core_lo = centers[0].ln() - 3.0;
    let core_hi = centers[centers.len() - 1].ln() + 3.0;
    let mut u = u_lo;
    while u < u_hi {
        let w = if u >= core_lo && u <= core_hi { 3.0 } else { 8.0 };
        u = (u + w).min(u_hi);
        edges.push(u);
    }
    for pair in edges.windows(2) {
        panels.push(rules.eval(&probe, pair[0], pair[1], &mut evals));
    }

    let probes: Vec<f64> = log_grid(lambda_min, lambda_max, 25);
    loop {
        let nodes = materialize(&rules, &panels);
        if nodes.s.len() > cap {
            return Err(Error::QuadratureNonConvergence {
                achieved: validate(&nodes, params, &probes),
                target: rel_tol,
                nodes: nodes.s.len(),
            });
        }
        let worst = validate(&nodes, params, &probes);
        if worst <= rel_tol {
            return Ok(NodeSet {
                achieved_rel_err: worst,
                ..nodes
            });
        }
        // split the panel with the largest embedded error estimate
        let split = panels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.err.partial_cmp(&b.1.err).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let Panel { a, b, .. } = panels[split];
        let mid = 0.5 * (a + b);
        panels[split] = rules.eval(&probe, a, mid, &mut evals);
        panels.push(rules.eval(&probe, mid, b, &mut evals));
    }
}

fn materialize(rules: &PanelRules, panels: &[Panel]) -> NodeSet {
    let mut s = Vec::new();
    let mut w = Vec::new();
    let mut ordered: Vec<&Panel> = panels.iter().collect();
    ordered.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap());
    for p in ordered {
        let mid = 0.5 * (p.a + p.b);
        let half = 0.5 * (p.b - p.a);
        for (&x, &gw) in rules.coarse_x.iter().zip(&rules.coarse_w) {
            let u = mid + half * x;
            let sv = u.exp();
            s.push(sv);
            w.push(gw * half * sv); // includes the e^u Jacobian
        }
    }
    NodeSet {
        s,
        w,
        achieved_rel_err: f64::NAN,
    }
}

fn validate(nodes: &NodeSet, params: &SpectralParams, probes: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for &lambda in probes {
        let approx = nodes.integrate(|s| rho_unchecked(s, params) / (s + lambda));
        let exact = f_alpha(lambda, params).expect("probe is positive");
        worst = worst.max((approx - exact).abs() / exact);
    }
    worst
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || hi <= lo {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_low_orders() {
        let (x, w) = gauss_legendre(2);
        assert_relative_eq!(x[1], 1.0 / 3f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(w[0], 1.0, max_relative = 1e-14);
        let (x, w) = gauss_legendre(5);
        assert_relative_eq!(x[0], -0.906_179_845_938_664, max_relative = 1e-12);
        assert_relative_eq!(w[2], 128.0 / 225.0, max_relative = 1e-13);
        // polynomial exactness up to degree 2n-1
        let (x, w) = gauss_legendre(8);
        let integral: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(14)).sum();
        assert_relative_eq!(integral, 2.0 / 15.0, max_relative = 1e-12);
    }

    #[test]
    fn integrates_a_known_positive_axis_integral() {
        // ∫_0^∞ s^{-1/2} (1+s)^{-1} ds = π
        let r = integrate_positive_axis(
            &|s: f64| 1.0 / (s.sqrt() * (1.0 + s)),
            &[1.0],
            1e-10,
            20_000,
        )
        .unwrap();
        assert_relative_eq!(r.value, std::f64::consts::PI, max_relative = 1e-9);
    }

    #[test]
    fn reports_nonconvergence() {
        let err = integrate_positive_axis(&|s: f64| 1.0 / (1.0 + s * s), &[1.0], 1e-13, 96);
        match err {
            Err(crate::error::Error::QuadratureNonConvergence { nodes, .. }) => {
                assert!(nodes >= 96)
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn shared_nodes_reproduce_f_alpha() {
        let params = SpectralParams::new(1.0, 1.0).unwrap();
        let nodes = build_shared_nodes(&params, 3.7e-4, 8.0, 1e-7, 400).unwrap();
        assert!(nodes.len() <= 400);
        for &lambda in &[3.7e-4, 1e-2, 1.0, 8.0] {
            let approx = nodes.integrate(|s| rho_unchecked(s, &params) / (s + lambda));
            let exact = f_alpha(lambda, &params).unwrap();
            assert_relative_eq!(approx, exact, max_relative = 2e-7);
        }
    }

    #[test]
    fn shared_nodes_massless_extremes() {
        for &alpha in &[0.5, 1.5] {
            let params = SpectralParams::new(alpha, 0.0).unwrap();
            let nodes = build_shared_nodes(&params, 3.7e-4, 8.0, 1e-7, 400).unwrap();
            assert!(nodes.len() <= 400, "alpha={alpha}: {} nodes", nodes.len());
            assert!(nodes.achieved_rel_err <= 1e-7);
        }
    }
}
