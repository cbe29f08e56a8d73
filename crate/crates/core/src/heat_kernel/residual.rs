use super::{apply_breaking_operator, psi1_closed_form, BreakingTerms, DerivativeScheme, YDerivatives};
use crate::params::{DerivedParams, HeatCoords, MgParams, PerturbParams};

/// Central-difference value of `(d/dtau - d2/dx2 - d2/dy2) f` with step `h`.
pub fn heat_residual(f: impl Fn(f64, f64, f64) -> f64, at: &HeatCoords, h: f64) -> f64 {
    let HeatCoords { x, y, tau } = *at;
    let c = f(x, y, tau);
    let dt = (f(x, y, tau + h) - f(x, y, tau - h)) / (2.0 * h);
    let dxx = (f(x + h, y, tau) - 2.0 * c + f(x - h, y, tau)) / (h * h);
    let dyy = (f(x, y + h, tau) - 2.0 * c + f(x, y - h, tau)) / (h * h);
    dt - dxx - dyy
}

/// Residual of the closed-form `psi1` against its source: should vanish as `h^2`.
pub fn psi1_residual(at: &HeatCoords, mg: &MgParams, pert: &PerturbParams, deriv: &DerivedParams, h: f64) -> f64 {
    let field = |x, y, tau| psi1_closed_form(&HeatCoords::new(x, y, tau), pert, deriv);
    let scheme = DerivativeScheme { h, y: YDerivatives::Analytic };
    let source = apply_breaking_operator(at, mg, pert, deriv, &BreakingTerms::C1_ONLY, &scheme);
    heat_residual(field, at, h) + source
}
