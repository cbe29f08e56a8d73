//! Heat-coordinate machinery used to verify the closed-form prices
//! independently: the symmetric solution `psi0`, the 2+1 Gaussian propagator,
//! the symmetry-breaking operator and a quadrature reconstruction of `psi1`.

mod oracle;
mod quadrature;
mod residual;

pub use oracle::{annihilation_ratios, oracle_row, write_oracle_csv, AnnihilationReport, OracleRow};
pub use quadrature::{
    green_mass, psi1_quadrature, psi1_quadrature_single, reconstruct_psi0, QuadratureConfig,
};
pub use residual::{heat_residual, psi1_residual};

use serde::Serialize;
use std::f64::consts::{PI, SQRT_2};

use crate::analytic::normal_cdf;
use crate::params::{DerivedParams, HeatCoords, MgParams, PerturbParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Psi0Eval {
    pub value: f64,
    pub x: f64,
    pub y: f64,
    pub tau: f64,
}

/// Symmetric solution in heat coordinates (call boundary condition).
pub fn psi0(coords: &HeatCoords, deriv: &DerivedParams) -> Psi0Eval {
    Psi0Eval {
        value: psi0_value(coords.x, coords.y, coords.tau, deriv),
        x: coords.x,
        y: coords.y,
        tau: coords.tau,
    }
}

/// Boundary function at `tau = 0`.
pub fn psi0_boundary(x: f64, y: f64, deriv: &DerivedParams) -> f64 {
    let r1 = deriv.r1;
    let bracket = (0.5 * (r1 + 1.0) * x).exp() - (0.5 * (r1 - 1.0) * x).exp();
    (0.5 * (deriv.r2 - 1.0) * y).exp() * bracket.max(0.0)
}

pub fn psi0_value(x: f64, y: f64, tau: f64, deriv: &DerivedParams) -> f64 {
    if tau <= 0.0 {
        return psi0_boundary(x, y, deriv);
    }
    let (r1, r2) = (deriv.r1, deriv.r2);
    let root = (2.0 * tau).sqrt();
    let d1 = x / root + 0.5 * root * (r1 + 1.0);
    let d2 = x / root + 0.5 * root * (r1 - 1.0);
    let y_factor = (0.5 * (r2 - 1.0) * (0.5 * tau * (r2 - 1.0) + y)).exp();
    let up = (0.5 * (r1 + 1.0) * x + 0.25 * (r1 + 1.0).powi(2) * tau).exp() * normal_cdf(d1);
    let down = (0.5 * (r1 - 1.0) * x + 0.25 * (r1 - 1.0).powi(2) * tau).exp() * normal_cdf(d2);
    (y_factor * (up - down)).max(0.0)
}

/// Exponential tilt `phi = exp(a x + b y + c tau)`; the price is `K phi psi`.
pub fn phi(coords: &HeatCoords, deriv: &DerivedParams) -> f64 {
    (deriv.a * coords.x + deriv.b * coords.y + deriv.c * coords.tau).exp()
}

/// Heat kernel `G(x, y, tau; x', y', t)`, zero unless `tau > t`.
pub fn heat_green(x: f64, y: f64, tau: f64, xp: f64, yp: f64, t: f64) -> f64 {
    let s = tau - t;
    if s <= 0.0 {
        return 0.0;
    }
    let d2 = (x - xp).powi(2) + (y - yp).powi(2);
    (-d2 / (4.0 * s)).exp() / (4.0 * PI * s)
}

/// Strength of each symmetry-breaking term; `1` restores the full model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakingTerms {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl BreakingTerms {
    pub const ALL: Self = Self { c1: 1.0, c2: 1.0, c3: 1.0, c4: 1.0 };
    pub const C1_ONLY: Self = Self { c1: 1.0, c2: 0.0, c3: 0.0, c4: 0.0 };

    /// Only term `index` (1..=4) switched on.
    pub fn only(index: usize) -> Self {
        let mut t = Self { c1: 0.0, c2: 0.0, c3: 0.0, c4: 0.0 };
        match index {
            1 => t.c1 = 1.0,
            2 => t.c2 = 1.0,
            3 => t.c3 = 1.0,
            4 => t.c4 = 1.0,
            _ => panic!("breaking term index must be 1..=4, got {index}"),
        }
        t
    }
}

/// Model constants entering the symmetry-breaking operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorParams {
    pub sigma: f64,
    pub xi0: f64,
    pub v0: f64,
    pub lambda: f64,
    pub xi: f64,
    pub rho: f64,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
}

impl OperatorParams {
    pub fn new(mg: &MgParams, pert: &PerturbParams, deriv: &DerivedParams) -> Self {
        Self {
            sigma: pert.sigma,
            xi0: pert.xi0,
            v0: pert.v0,
            lambda: mg.lambda(),
            xi: mg.xi,
            rho: mg.rho,
            alpha: mg.alpha,
            a: deriv.a,
            b: deriv.b,
        }
    }
}

/// How the derivatives of `psi0` are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YDerivatives {
    /// From the exponential `y`-factor: `d/dy psi0 = -b psi0`.
    Analytic,
    /// Fourth-order central differences in `y` as well.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeScheme {
    /// Central-difference step in `x` (and `y` when finite-differenced).
    pub h: f64,
    pub y: YDerivatives,
}

impl Default for DerivativeScheme {
    fn default() -> Self {
        Self { h: 1e-4, y: YDerivatives::Analytic }
    }
}

/// `psi0` and the derivatives the operator needs at one point.
#[derive(Debug, Clone, Copy)]
struct Jet {
    psi: f64,
    dx: f64,
    dxx: f64,
    dy: f64,
    dyy: f64,
    dxy: f64,
}

fn jet(x: f64, y: f64, t: f64, deriv: &DerivedParams, scheme: &DerivativeScheme) -> Jet {
    let h = scheme.h;
    let p = |xx: f64, yy: f64| psi0_value(xx, yy, t, deriv);
    let c = p(x, y);
    let xp = p(x + h, y);
    let xm = p(x - h, y);
    let dx = (xp - xm) / (2.0 * h);
    let dxx = (xp - 2.0 * c + xm) / (h * h);
    match scheme.y {
        YDerivatives::Analytic => {
            let b = deriv.b;
            Jet { psi: c, dx, dxx, dy: -b * c, dyy: b * b * c, dxy: -b * dx }
        }
        YDerivatives::FiniteDifference => {
            let (yp1, ym1, yp2, ym2) = (p(x, y + h), p(x, y - h), p(x, y + 2.0 * h), p(x, y - 2.0 * h));
            let dy = (8.0 * (yp1 - ym1) - (yp2 - ym2)) / (12.0 * h);
            let dyy = (-yp2 + 16.0 * yp1 - 30.0 * c + 16.0 * ym1 - ym2) / (12.0 * h * h);
            let dxy = (p(x + h, y + h) - p(x + h, y - h) - p(x - h, y + h) + p(x - h, y - h)) / (4.0 * h * h);
            Jet { psi: c, dx, dxx, dy, dyy, dxy }
        }
    }
}

/// Each symmetry-breaking term applied to `psi0`, with unit strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TermValues {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl TermValues {
    pub fn weighted(&self, terms: &BreakingTerms) -> f64 {
        terms.c1 * self.c1 + terms.c2 * self.c2 + terms.c3 * self.c3 + terms.c4 * self.c4
    }
}

pub fn breaking_terms(
    coords: &HeatCoords,
    op: &OperatorParams,
    deriv: &DerivedParams,
    scheme: &DerivativeScheme,
) -> TermValues {
    breaking_terms_masked(coords.x, coords.y, coords.tau, op, deriv, scheme, &BreakingTerms::ALL)
}

fn breaking_terms_masked(
    x: f64,
    y: f64,
    t: f64,
    op: &OperatorParams,
    deriv: &DerivedParams,
    scheme: &DerivativeScheme,
    mask: &BreakingTerms,
) -> TermValues {
    let j = jet(x, y, t, deriv, scheme);
    let (a, b) = (op.a, op.b);
    let mut out = TermValues { c1: 0.0, c2: 0.0, c3: 0.0, c4: 0.0 };
    if mask.c1 != 0.0 {
        let v = op.v0 * y.exp();
        out.c1 = 0.5 * (v - op.sigma * op.sigma) * ((a * a - a) * j.psi + (2.0 * a - 1.0) * j.dx + j.dxx);
    }
    if mask.c2 != 0.0 {
        out.c2 = op.lambda / op.v0 * (-y).exp() * (j.dy + b * j.psi);
    }
    if mask.c3 != 0.0 {
        let coeff = op.xi * op.xi * op.v0.powf(2.0 * op.alpha - 2.0) * ((2.0 * op.alpha - 2.0) * y).exp()
            - op.xi0 * op.xi0;
        out.c3 = coeff * ((b * b - b) * j.psi + (2.0 * b - 1.0) * j.dy + j.dyy);
    }
    if mask.c4 != 0.0 {
        let coeff = op.xi * op.rho * op.v0.powf(op.alpha - 0.5) * ((op.alpha - 0.5) * y).exp();
        out.c4 = coeff * (a * b * j.psi + b * j.dx + a * j.dy + j.dxy);
    }
    out
}

/// `D psi0` at `coords` with the selected term strengths.
pub fn apply_breaking_operator(
    coords: &HeatCoords,
    mg: &MgParams,
    pert: &PerturbParams,
    deriv: &DerivedParams,
    terms: &BreakingTerms,
    scheme: &DerivativeScheme,
) -> f64 {
    let op = OperatorParams::new(mg, pert, deriv);
    breaking_terms_masked(coords.x, coords.y, coords.tau, &op, deriv, scheme, terms).weighted(terms)
}

/// Leading-order `psi1` in closed form (only the `c1` term contributes).
pub fn psi1_closed_form(coords: &HeatCoords, pert: &PerturbParams, deriv: &DerivedParams) -> f64 {
    let HeatCoords { x, y, tau } = *coords;
    if tau <= 0.0 {
        return 0.0;
    }
    let (sigma, xi0, gamma) = (pert.sigma, pert.xi0, deriv.gamma);
    let g = SQRT_2 * gamma + sigma * xi0;
    let num = sigma * sigma * tau * g - sigma * xi0 * pert.v0 * y.exp() * (deriv.r2 * tau).exp_m1();
    let expo = gamma * gamma * tau / (2.0 * sigma * sigma * xi0 * xi0) - x * x / (4.0 * tau)
        + gamma * y / (SQRT_2 * sigma * xi0);
    num * expo.exp() / (4.0 * (PI * tau).sqrt() * g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{perturb_correction, price_symmetric};
    use crate::params::{derive_params, to_heat_coords, OptionKind, OptionSpec};

    fn setup(sigma: f64, r: f64) -> (MgParams, PerturbParams, DerivedParams) {
        let mg = MgParams::new(1.5, 0.08, 1.5, -0.5, 1.0, r).unwrap();
        let pert = PerturbParams::linked(&mg, sigma).unwrap();
        let d = derive_params(&mg, &pert).unwrap();
        (mg, pert, d)
    }

    #[test]
    fn boundary_clips_out_of_the_money() {
        let (_, _, d) = setup(0.2, 0.01);
        assert_eq!(psi0_value(-0.1, 0.3, 0.0, &d), 0.0);
        assert!(psi0_value(0.1, 0.3, 0.0, &d) > 0.0);
    }

    #[test]
    fn tilted_psi0_is_the_symmetric_price() {
        let (_, pert, d) = setup(0.25, 0.03);
        for spot in [80.0, 95.0, 100.0, 104.0, 125.0] {
            for days in [5.0, 30.0, 180.0, 720.0] {
                for var in [0.01, 0.0625, 0.3] {
                    let o = OptionSpec::from_days(spot, 100.0, days, OptionKind::Call, var).unwrap();
                    let h = to_heat_coords(&o, &pert).unwrap();
                    let via_heat = o.strike * phi(&h, &d) * psi0(&h, &d).value;
                    let bs = price_symmetric(&o, &pert, 0.03).unwrap();
                    assert!((via_heat - bs).abs() <= 1e-9 * bs.max(1e-3), "{spot} {days} {var}: {via_heat} vs {bs}");
                }
            }
        }
    }

    #[test]
    fn y_dependence_factorizes() {
        let (_, _, d) = setup(0.2, 0.0);
        for delta in [-0.7, 0.2, 1.3] {
            let ratio = psi0_value(0.05, -0.4 + delta, 0.01, &d) / psi0_value(0.05, -0.4, 0.01, &d);
            let expected = (0.5 * (d.r2 - 1.0) * delta).exp();
            assert!((ratio / expected - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn green_function_properties() {
        assert!((heat_green(0.3, -0.2, 1.0 / (4.0 * PI), 0.3, -0.2, 0.0) - 1.0).abs() < 1e-15);
        let g1 = heat_green(0.1, 0.2, 0.5, -0.3, 0.4, 0.1);
        let g2 = heat_green(-0.3, 0.4, 0.5, 0.1, 0.2, 0.1);
        assert_eq!(g1, g2);
        assert_eq!(heat_green(0.0, 0.0, 0.2, 0.0, 0.0, 0.2), 0.0);
        assert_eq!(heat_green(0.0, 0.0, 0.1, 0.0, 0.0, 0.2), 0.0);
    }

    #[test]
    fn c2_c3_c4_annihilate_psi0() {
        let (mg, pert, d) = setup(0.1730, 0.0);
        let op = OperatorParams::new(&mg, &pert, &d);
        for scheme in [
            DerivativeScheme::default(),
            DerivativeScheme { h: 1e-4, y: YDerivatives::FiniteDifference },
        ] {
            for &(x, v, days) in &[(0.0, 0.0324, 30.0), (0.05, 0.1, 10.0), (-0.08, 0.01, 60.0)] {
                let h = HeatCoords::new(x, (v / pert.v0).ln(), 0.5 * pert.sigma.powi(2) * days / 365.0);
                let t = breaking_terms(&h, &op, &d, &scheme);
                assert!(t.c1 != 0.0);
                // exact cancellation on the analytic route; truncation error of the
                // mixed difference on the finite-difference one
                let bound = match scheme.y {
                    YDerivatives::Analytic => 1e-12 * psi0_value(h.x, h.y, h.tau, &d) * (1.0 + d.b * d.b),
                    YDerivatives::FiniteDifference => 1e-4 * t.c1.abs(),
                };
                assert!(t.c2.abs() <= bound * mg.lambda() / v, "c2 {:?}", t);
                assert!(t.c3.abs() <= bound, "c3 {:?}", t);
                assert!(t.c4.abs() <= bound * mg.xi * v.sqrt(), "c4 {:?}", t);
            }
        }
    }

    #[test]
    fn c3_annihilation_away_from_alpha_one() {
        let mg = MgParams::new(2.0, 0.1, 0.7, 0.4, 0.6, 0.02).unwrap();
        let pert = PerturbParams::linked(&mg, 0.3).unwrap();
        let d = derive_params(&mg, &pert).unwrap();
        let op = OperatorParams::new(&mg, &pert, &d);
        let scheme = DerivativeScheme { h: 1e-3, y: YDerivatives::FiniteDifference };
        let h = HeatCoords::new(0.02, (0.05f64).ln(), 0.01);
        let t = breaking_terms(&h, &op, &d, &scheme);
        let coeff = (mg.xi * mg.xi * ((2.0 * mg.alpha - 2.0) * h.y).exp() - pert.xi0.powi(2)).abs();
        assert!(coeff > 0.1);
        assert!(t.c3.abs() <= 1e-5 * psi0_value(h.x, h.y, h.tau, &d) * coeff, "{t:?}");
    }

    #[test]
    fn closed_form_psi1_is_the_tilted_correction() {
        for (sigma, r) in [(0.1730, 0.0), (0.3, 0.04), (0.12, 0.01)] {
            let (_, pert, d) = setup(sigma, r);
            for spot in [88.0, 100.0, 111.0] {
                for var in [0.01, 0.05, 0.2] {
                    let o = OptionSpec::from_days(spot, 100.0, 45.0, OptionKind::Call, var).unwrap();
                    let h = to_heat_coords(&o, &pert).unwrap();
                    let via_heat = o.strike * phi(&h, &d) * psi1_closed_form(&h, &pert, &d);
                    let direct = perturb_correction(&o, &pert, &d, r).unwrap();
                    assert!((via_heat - direct).abs() <= 1e-11 * direct.abs().max(1e-12), "{via_heat} vs {direct}");
                }
            }
        }
    }
}
