use rayon::prelude::*;

use super::{
    breaking_terms_masked, heat_green, psi0_boundary, BreakingTerms, DerivativeScheme,
    OperatorParams,
};
use crate::error::{check, Error, Result};
use crate::params::{DerivedParams, HeatCoords, MgParams, PerturbParams};
use crate::quadrature::{gauss_legendre, pairwise_sum, Rule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Gauss-Legendre nodes per spatial axis.
    pub spatial_nodes: usize,
    pub time_nodes: usize,
    /// Spatial window half-width, in kernel standard deviations.
    pub half_width: f64,
    pub scheme: DerivativeScheme,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            spatial_nodes: 64,
            time_nodes: 64,
            half_width: 8.0,
            scheme: DerivativeScheme::default(),
            rel_tol: 1e-4,
            abs_tol: 1e-11,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.spatial_nodes >= 4, "spatial_nodes", self.spatial_nodes as f64, "must be >= 4")?;
        check(self.time_nodes >= 4, "time_nodes", self.time_nodes as f64, "must be >= 4")?;
        check(self.half_width >= 6.0 && self.half_width.is_finite(), "half_width", self.half_width, "must be >= 6")?;
        let h = self.scheme.h;
        check((1e-6..=1e-3).contains(&h), "fd_step", h, "must lie in [1e-6, 1e-3]")?;
        check(self.rel_tol > 0.0, "rel_tol", self.rel_tol, "must be > 0")?;
        check(self.abs_tol >= 0.0, "abs_tol", self.abs_tol, "must be >= 0")?;
        Ok(())
    }

    /// Same windows, twice the nodes on every axis.
    pub fn refined(&self) -> Self {
        Self { spatial_nodes: 2 * self.spatial_nodes, time_nodes: 2 * self.time_nodes, ..*self }
    }

    pub fn with_nodes(self, spatial_nodes: usize, time_nodes: usize) -> Self {
        Self { spatial_nodes, time_nodes, ..self }
    }
}

// Smoothstep map of [0, 1] onto [0, tau]; the vanishing Jacobian at both ends
// absorbs the square-root behaviour of the integrand there.
fn time_rule(n: usize, tau: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| {
            let u = 0.5 * (xi + 1.0);
            let t = tau * u * u * (3.0 - 2.0 * u);
            let jac = 6.0 * tau * u * (1.0 - u);
            (t, 0.5 * wi * jac)
        })
        .collect()
}

/// One quadrature pass for `psi1 = -int G D psi0` without a refinement check.
pub fn psi1_quadrature_single(
    coords: &HeatCoords,
    mg: &MgParams,
    pert: &PerturbParams,
    deriv: &DerivedParams,
    terms: &BreakingTerms,
    cfg: &QuadratureConfig,
) -> f64 {
    let HeatCoords { x, y, tau } = *coords;
    if tau <= 0.0 {
        return 0.0;
    }
    let op = OperatorParams::new(mg, pert, deriv);
    let (gx, gw) = gauss_legendre(cfg.spatial_nodes);
    let k = cfg.half_width;
    let h = cfg.scheme.h;
    let drift = deriv.r1.abs() + 1.0;

    let slices: Vec<f64> = time_rule(cfg.time_nodes, tau)
        .into_par_iter()
        .map(|(t, wt)| {
            let s = tau - t;
            // product of the propagator (variance 2s) and the source spike (variance 2t)
            let mx = x * t / tau;
            let lx = k * (2.0 * s * t / tau).sqrt() + t * drift + 2.0 * h;
            let my = y - 2.0 * deriv.b * s + s;
            let ly = k * (2.0 * s).sqrt() + s + 2.0 * h;
            let rx = Rule::mapped(&gx, &gw, mx - lx, mx + lx);
            let ry = Rule::mapped(&gx, &gw, my - ly, my + ly);
            let mut row = Vec::with_capacity(rx.nodes.len());
            for (&xp, &wx) in rx.nodes.iter().zip(&rx.weights) {
                let mut col = Vec::with_capacity(ry.nodes.len());
                for (&yp, &wy) in ry.nodes.iter().zip(&ry.weights) {
                    let g = heat_green(x, y, tau, xp, yp, t);
                    if g == 0.0 {
                        col.push(0.0);
                        continue;
                    }
                    let d = breaking_terms_masked(xp, yp, t, &op, deriv, &cfg.scheme, terms).weighted(terms);
                    col.push(wy * g * d);
                }
                row.push(wx * pairwise_sum(&col));
            }
            wt * pairwise_sum(&row)
        })
        .collect();
    -pairwise_sum(&slices)
}

/// `psi1` by quadrature, checked against a refined pass.
pub fn psi1_quadrature(
    coords: &HeatCoords,
    mg: &MgParams,
    pert: &PerturbParams,
    deriv: &DerivedParams,
    terms: &BreakingTerms,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    cfg.validate()?;
    let coarse = psi1_quadrature_single(coords, mg, pert, deriv, terms, cfg);
    let refined = psi1_quadrature_single(coords, mg, pert, deriv, terms, &cfg.refined());
    if (coarse - refined).abs() > cfg.rel_tol * refined.abs() + cfg.abs_tol || !refined.is_finite() {
        return Err(Error::QuadratureNotConverged { coarse, refined });
    }
    Ok(refined)
}

/// `psi0` rebuilt as the heat-kernel convolution of its boundary data.
pub fn reconstruct_psi0(coords: &HeatCoords, deriv: &DerivedParams, cfg: &QuadratureConfig) -> Result<f64> {
    cfg.validate()?;
    let HeatCoords { x, y, tau } = *coords;
    if tau <= 0.0 {
        return Ok(psi0_boundary(x, y, deriv));
    }
    let sd = (2.0 * tau).sqrt();
    let k = cfg.half_width;
    // the payoff is supported on X > 0 and tilted by exp((R1 + 1) X / 2)
    let cx = x + tau * (deriv.r1 + 1.0);
    let hi = cx + k * sd + tau * (deriv.r1.abs() + 1.0);
    let lo = (cx - k * sd - tau * (deriv.r1.abs() + 1.0)).max(0.0);
    if hi <= lo {
        return Ok(0.0);
    }
    let cy = y + tau * (deriv.r2 - 1.0);
    let rx = Rule::new(cfg.spatial_nodes, lo, hi);
    let ry = Rule::new(cfg.spatial_nodes, cy - k * sd, cy + k * sd);
    let row: Vec<f64> = rx
        .nodes
        .iter()
        .zip(&rx.weights)
        .map(|(&xp, &wx)| {
            let col: Vec<f64> = ry
                .nodes
                .iter()
                .zip(&ry.weights)
                .map(|(&yp, &wy)| wy * heat_green(x, y, tau, xp, yp, 0.0) * psi0_boundary(xp, yp, deriv))
                .collect();
            wx * pairwise_sum(&col)
        })
        .collect();
    Ok(pairwise_sum(&row))
}

/// Integral of the kernel over its quadrature window; should be 1.
pub fn green_mass(tau: f64, cfg: &QuadratureConfig) -> f64 {
    let sd = (2.0 * tau).sqrt();
    let r = Rule::new(cfg.spatial_nodes, -cfg.half_width * sd, cfg.half_width * sd);
    let row: Vec<f64> = r
        .nodes
        .iter()
        .zip(&r.weights)
        .map(|(&xp, &wx)| wx * r.integrate(|yp| heat_green(0.0, 0.0, tau, xp, yp, 0.0)))
        .collect();
    pairwise_sum(&row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat_kernel::{psi0_value, psi1_closed_form, YDerivatives};
    use crate::params::derive_params;

    fn setup() -> (MgParams, PerturbParams, DerivedParams) {
        let mg = MgParams::new(1.5, 0.08, 1.5, -0.5, 1.0, 0.0).unwrap();
        let pert = PerturbParams::linked(&mg, 0.1730).unwrap();
        let d = derive_params(&mg, &pert).unwrap();
        (mg, pert, d)
    }

    fn coords(x: f64, v: f64, days: f64, sigma: f64) -> HeatCoords {
        HeatCoords::new(x, v.ln(), 0.5 * sigma * sigma * days / 365.0)
    }

    #[test]
    fn kernel_mass_is_one() {
        let cfg = QuadratureConfig::default();
        for tau in [1e-6, 1e-3, 0.5, 3.0] {
            assert!((green_mass(tau, &cfg) - 1.0).abs() < 1e-8, "{tau}");
        }
    }

    #[test]
    fn convolution_reproduces_psi0() {
        let (_, pert, d) = setup();
        let cfg = QuadratureConfig::default();
        for &(x, v, days) in &[(0.0, 0.0324, 30.0), (0.1, 0.05, 90.0), (-0.1, 0.02, 60.0), (0.02, 0.3, 5.0)] {
            let c = coords(x, v, days, pert.sigma);
            let rebuilt = reconstruct_psi0(&c, &d, &cfg).unwrap();
            let exact = psi0_value(c.x, c.y, c.tau, &d);
            assert!((rebuilt - exact).abs() <= 1e-5 * exact, "{x} {days}: {rebuilt} vs {exact}");
        }
    }

    #[test]
    fn quadrature_matches_closed_form_psi1() {
        let (mg, pert, d) = setup();
        let cfg = QuadratureConfig::default();
        for &(x, v, days) in &[(0.0, 0.0324, 30.0), (0.03, 0.04, 14.0), (-0.05, 0.02, 60.0)] {
            let c = coords(x, v, days, pert.sigma);
            let q = psi1_quadrature(&c, &mg, &pert, &d, &BreakingTerms::C1_ONLY, &cfg).unwrap();
            let exact = psi1_closed_form(&c, &pert, &d);
            assert!((q - exact).abs() <= 1e-3 * exact.abs(), "{x} {days}: {q} vs {exact}");
        }
    }

    #[test]
    fn annihilating_terms_add_nothing() {
        let (mg, pert, d) = setup();
        let cfg = QuadratureConfig::default();
        let c = coords(0.01, 0.0324, 30.0, pert.sigma);
        let only_c1 = psi1_quadrature(&c, &mg, &pert, &d, &BreakingTerms::C1_ONLY, &cfg).unwrap();
        let all = psi1_quadrature(&c, &mg, &pert, &d, &BreakingTerms::ALL, &cfg).unwrap();
        assert!((all - only_c1).abs() <= 1e-10 * only_c1.abs());
        for i in 2..=4 {
            let single = psi1_quadrature_single(&c, &mg, &pert, &d, &BreakingTerms::only(i), &cfg);
            assert!(single.abs() <= 1e-10 * only_c1.abs(), "term {i}: {single}");
        }
    }

    #[test]
    fn finite_difference_y_route_agrees() {
        let (mg, pert, d) = setup();
        let mut cfg = QuadratureConfig::default().with_nodes(24, 24);
        let c = coords(0.0, 0.0324, 30.0, pert.sigma);
        let analytic = psi1_quadrature_single(&c, &mg, &pert, &d, &BreakingTerms::C1_ONLY, &cfg);
        cfg.scheme = DerivativeScheme { h: 1e-4, y: YDerivatives::FiniteDifference };
        let fd = psi1_quadrature_single(&c, &mg, &pert, &d, &BreakingTerms::ALL, &cfg);
        assert!((fd - analytic).abs() <= 1e-4 * analytic.abs(), "{fd} vs {analytic}");
    }

    #[test]
    fn refinement_converges_fast() {
        let (mg, pert, d) = setup();
        let c = coords(0.02, 0.0324, 30.0, pert.sigma);
        let base = QuadratureConfig::default();
        let at = |n| psi1_quadrature_single(&c, &mg, &pert, &d, &BreakingTerms::C1_ONLY, &base.with_nodes(n, n));
        let reference = at(128);
        let e1 = (at(8) - reference).abs();
        let e2 = (at(16) - reference).abs();
        let order = (e1 / e2).log2();
        assert!(order >= 2.0 || e2 <= 1e-12 * reference.abs(), "errors {e1} {e2}, order {order}");
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = QuadratureConfig::default();
        cfg.scheme.h = 1e-2;
        assert!(cfg.validate().is_err());
        let cfg = QuadratureConfig::default().with_nodes(2, 64);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unconverged_grid_is_reported() {
        let (mg, pert, d) = setup();
        let cfg = QuadratureConfig::default().with_nodes(8, 8);
        let c = coords(0.0, 0.0324, 30.0, pert.sigma);
        let err = psi1_quadrature(&c, &mg, &pert, &d, &BreakingTerms::C1_ONLY, &cfg).unwrap_err();
        assert!(matches!(err, Error::QuadratureNotConverged { .. }));
    }
}
