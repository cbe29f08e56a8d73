//! Closed-form prices: the symmetric solution (identical to Black-Scholes with
//! volatility `sigma`), the leading-order correction, and implied volatility.

use serde::Serialize;
use libm::erfc;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{check, Error, Result};
use crate::params::{derive_params, DerivedParams, MgParams, OptionKind, OptionSpec, PerturbParams};

pub const IV_MIN: f64 = 1e-4;
pub const IV_MAX: f64 = 5.0;
pub const IV_MAX_ITER: usize = 100;
/// Accepted absolute price error of an implied-volatility solution.
pub const IV_PRICE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceBreakdown {
    pub c0: f64,
    pub c1: f64,
    pub total: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Standard normal CDF. Absolute error is at the level of double rounding on
/// `[-8, 8]`; clamps to exactly 0 or 1 beyond `|d| > 38`.
pub fn normal_cdf(d: f64) -> f64 {
    if d < -38.0 {
        0.0
    } else if d > 38.0 {
        1.0
    } else {
        0.5 * erfc(-d / SQRT_2)
    }
}

pub fn normal_pdf(d: f64) -> f64 {
    (-0.5 * d * d).exp() / (2.0 * PI).sqrt()
}

/// Black-Scholes `(d1, d2)`. At zero time to maturity the pair degenerates to
/// `+inf`, `-inf` or `0` depending on the sign of `log(S/K)`.
pub fn d1_d2(spot: f64, strike: f64, tau: f64, r: f64, sigma: f64) -> (f64, f64) {
    let x = (spot / strike).ln();
    let vol_t = sigma * tau.sqrt();
    if vol_t == 0.0 {
        let d = if x > 0.0 {
            f64::INFINITY
        } else if x < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        return (d, d);
    }
    let d1 = (x + (r + 0.5 * sigma * sigma) * tau) / vol_t;
    (d1, d1 - vol_t)
}

/// Black-Scholes price of a call or put; the put comes from parity.
pub fn black_scholes(kind: OptionKind, spot: f64, strike: f64, tau: f64, r: f64, sigma: f64) -> f64 {
    if tau == 0.0 {
        return kind.payoff(spot, strike);
    }
    let (d1, d2) = d1_d2(spot, strike, tau, r, sigma);
    let disc_strike = strike * (-r * tau).exp();
    let call = spot * normal_cdf(d1) - disc_strike * normal_cdf(d2);
    match kind {
        OptionKind::Call => call,
        OptionKind::Put => call - spot + disc_strike,
    }
}

pub fn black_scholes_vega(spot: f64, strike: f64, tau: f64, r: f64, sigma: f64) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    let (d1, _) = d1_d2(spot, strike, tau, r, sigma);
    spot * normal_pdf(d1) * tau.sqrt()
}

/// Price of the symmetric model: `C0` for calls and `C0 - S + K exp(-r tau)`
/// for puts. Returns the payoff at `tau_cal = 0`.
pub fn price_symmetric(opt: &OptionSpec, pert: &PerturbParams, r: f64) -> Result<f64> {
    opt.validate()?;
    pert.validate()?;
    Ok(black_scholes(opt.kind, opt.spot, opt.strike, opt.tau_cal, r, pert.sigma))
}

/// Leading-order correction `C1` (equal to `P1`).
///
/// Obtained by folding the `c1` symmetry-breaking source with the heat
/// kernel; `K phi psi1` from the quadrature oracle reproduces it. Evaluated
/// as one exponential of the log-prefactor so `(S/K)^(1/2 - r/sigma^2)`
/// cannot overflow on its own. Vanishes at `tau_cal = 0`.
pub fn perturb_correction(opt: &OptionSpec, pert: &PerturbParams, deriv: &DerivedParams, r: f64) -> Result<f64> {
    opt.validate()?;
    pert.validate()?;
    if opt.tau_cal == 0.0 {
        return Ok(0.0);
    }
    let s2 = pert.sigma * pert.sigma;
    let t = opt.tau_cal;
    let x = (opt.spot / opt.strike).ln();
    let r2 = deriv.r2;

    let log_prefactor = opt.strike.ln() + x * (0.5 - r / s2)
        - (4.0 * x * x + (2.0 * r + s2).powi(2) * t * t) / (8.0 * s2 * t);
    let scale = 2.0 * (2.0 * PI).sqrt() * (s2 * t).sqrt();
    // bracket / R2, with the 1/R2 of the prefactor folded in
    let bracket = -0.5 * s2 * s2 * t + opt.variance * (0.5 * s2 * r2 * t).exp_m1() / r2;
    Ok(-log_prefactor.exp() / scale * bracket)
}

/// Variance at which the correction changes sign for fixed other inputs.
pub fn correction_root_variance(pert: &PerturbParams, deriv: &DerivedParams, tau_cal: f64) -> f64 {
    let s2 = pert.sigma * pert.sigma;
    let m = 0.5 * s2 * deriv.r2;
    s2 * s2 * deriv.r2 * tau_cal / (2.0 * (m * tau_cal).exp_m1())
}

/// `C = C0 + C1` for the Merton-Garman model.
pub fn price_mg(opt: &OptionSpec, mg: &MgParams, pert: &PerturbParams) -> Result<PriceBreakdown> {
    let deriv = derive_params(mg, pert)?;
    price_with_derived(opt, pert, &deriv, mg.r)
}

pub fn price_with_derived(opt: &OptionSpec, pert: &PerturbParams, deriv: &DerivedParams, r: f64) -> Result<PriceBreakdown> {
    let c0 = price_symmetric(opt, pert, r)?;
    let c1 = perturb_correction(opt, pert, deriv, r)?;
    let (d1, d2) = d1_d2(opt.spot, opt.strike, opt.tau_cal, r, pert.sigma);
    Ok(PriceBreakdown { c0, c1, total: c0 + c1, d1, d2 })
}

/// No-arbitrage price range `[lower, upper)` for a European option.
pub fn arbitrage_bounds(opt: &OptionSpec, r: f64) -> (f64, f64) {
    let disc_strike = opt.strike * (-r * opt.tau_cal).exp();
    match opt.kind {
        OptionKind::Call => ((opt.spot - disc_strike).max(0.0), opt.spot),
        OptionKind::Put => ((disc_strike - opt.spot).max(0.0), disc_strike),
    }
}

/// Black-Scholes implied volatility on `[IV_MIN, IV_MAX]`: Newton steps on
/// vega, falling back to bisection whenever Newton leaves the bracket.
pub fn implied_vol(price: f64, opt: &OptionSpec, r: f64) -> Result<f64> {
    opt.validate()?;
    check(opt.tau_cal > 0.0, "tau_cal", opt.tau_cal, "implied volatility needs tau_cal > 0")?;
    let (lower, upper) = arbitrage_bounds(opt, r);
    if !(price >= lower && price < upper) {
        return Err(Error::OutOfBounds { price, lower, upper });
    }

    let (s, k, t, kind) = (opt.spot, opt.strike, opt.tau_cal, opt.kind);
    let f = |vol: f64| black_scholes(kind, s, k, t, r, vol) - price;

    let mut lo = IV_MIN;
    let mut hi = IV_MAX;
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo.abs() <= IV_PRICE_TOL {
        return Ok(lo);
    }
    if f_hi.abs() <= IV_PRICE_TOL {
        return Ok(hi);
    }
    if f_lo > 0.0 {
        return Err(Error::OutOfBounds { price, lower: price - f_lo, upper });
    }
    if f_hi < 0.0 {
        return Err(Error::OutOfBounds { price, lower, upper: price - f_hi });
    }

    // Manaster-Koehler starting point
    let mut vol = ((2.0 * ((s / k).ln() + r * t).abs() / t).sqrt()).clamp(0.1, 1.0);
    let mut residual = f(vol);
    for _ in 0..IV_MAX_ITER {
        if residual.abs() <= 1e-14 * price.max(1.0) {
            return Ok(vol);
        }
        if residual > 0.0 {
            hi = vol;
        } else {
            lo = vol;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let vega = black_scholes_vega(s, k, t, r, vol);
        let newton = vol - residual / vega;
        vol = if vega > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        residual = f(vol);
    }
    if residual.abs() <= IV_PRICE_TOL {
        Ok(vol)
    } else {
        Err(Error::NoConvergence { iterations: IV_MAX_ITER, residual: residual.abs() })
    }
}
