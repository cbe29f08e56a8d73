//! Parameter types and the change of variables onto the 2+1 heat equation.
//!
//! Units: every rate-like quantity is expressed per year. Variances `V`,
//! `theta`, `sigma^2`, `r`, `kappa` carry units of 1/year, `xi` carries
//! year^(alpha - 3/2) and `xi0` carries year^(-1/2). The heat coordinates
//! and the constants `R1`, `R2`, `a`, `b`, `c`, `eta` are dimensionless.

use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::error::{check, Error, Result};

/// Threshold on `|R2|` below which a parameter set is rejected.
pub const DEGENERATE_EPS: f64 = 1e-10;

/// Days per year used when converting CLI maturities.
pub const DAYS_PER_YEAR: f64 = 365.0;

/// Structural Merton-Garman parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgParams {
    /// Mean-reversion speed [1/year].
    pub kappa: f64,
    /// Long-run variance [1/year].
    pub theta: f64,
    /// Vol-of-vol [year^(alpha - 3/2)].
    pub xi: f64,
    /// Correlation between the two Brownian drivers.
    pub rho: f64,
    /// Variance exponent of the diffusion term.
    pub alpha: f64,
    /// Risk-free rate [1/year].
    pub r: f64,
}

impl MgParams {
    pub fn new(kappa: f64, theta: f64, xi: f64, rho: f64, alpha: f64, r: f64) -> Result<Self> {
        let p = Self { kappa, theta, xi, rho, alpha, r };
        p.validate()?;
        Ok(p)
    }

    /// Like [`MgParams::new`] but admits `xi = 0`, the constant-volatility
    /// limit. Only the simulator accepts such parameters.
    pub fn for_simulation(kappa: f64, theta: f64, xi: f64, rho: f64, alpha: f64, r: f64) -> Result<Self> {
        let p = Self { kappa, theta, xi, rho, alpha, r };
        p.validate_simulation()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.xi > 0.0, "xi", self.xi, "must be > 0")?;
        self.validate_simulation()
    }

    pub fn validate_simulation(&self) -> Result<()> {
        check(self.kappa > 0.0 && self.kappa.is_finite(), "kappa", self.kappa, "must be > 0")?;
        check(self.theta > 0.0 && self.theta.is_finite(), "theta", self.theta, "must be > 0")?;
        check(self.xi >= 0.0 && self.xi.is_finite(), "xi", self.xi, "must be >= 0")?;
        check(self.rho.abs() <= 1.0, "rho", self.rho, "must lie in [-1, 1]")?;
        check(self.alpha > 0.0 && self.alpha.is_finite(), "alpha", self.alpha, "must be > 0")?;
        check(self.r >= 0.0 && self.r.is_finite(), "r", self.r, "must be >= 0")?;
        Ok(())
    }

    /// Constant drift term `lambda = kappa * theta` [1/year^2].
    pub fn lambda(&self) -> f64 {
        self.kappa * self.theta
    }

    /// Linear drift coefficient `mu = -kappa` [1/year].
    pub fn mu(&self) -> f64 {
        -self.kappa
    }
}

/// Parameters introduced by the perturbative expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbParams {
    /// Averaged volatility [year^(-1/2)].
    pub sigma: f64,
    /// Vol-of-vol of the symmetric model [year^(-1/2)].
    pub xi0: f64,
    /// Reference variance scale [1/year]; prices do not depend on it.
    pub v0: f64,
}

impl PerturbParams {
    pub fn new(sigma: f64, xi0: f64, v0: f64) -> Result<Self> {
        let p = Self { sigma, xi0, v0 };
        p.validate()?;
        Ok(p)
    }

    /// `xi0 = xi * sigma^(2(alpha - 1))`, with `v0 = 1`.
    pub fn linked(mg: &MgParams, sigma: f64) -> Result<Self> {
        Self::from_structural(mg.xi, mg.alpha, sigma)
    }

    pub fn from_structural(xi: f64, alpha: f64, sigma: f64) -> Result<Self> {
        Self::new(sigma, linked_xi0(xi, alpha, sigma), 1.0)
    }

    pub fn with_v0(self, v0: f64) -> Result<Self> {
        Self::new(self.sigma, self.xi0, v0)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.sigma > 0.0 && self.sigma.is_finite(), "sigma", self.sigma, "must be > 0")?;
        check(self.xi0 > 0.0 && self.xi0.is_finite(), "xi0", self.xi0, "must be > 0")?;
        check(self.v0 > 0.0 && self.v0.is_finite(), "v0", self.v0, "must be > 0")?;
        Ok(())
    }
}

pub fn linked_xi0(xi: f64, alpha: f64, sigma: f64) -> f64 {
    xi * sigma.powf(2.0 * (alpha - 1.0))
}

/// Constants of the heat-equation transformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    /// `mu - xi0^2` [1/year].
    pub gamma: f64,
    /// `r - sigma^2 / 2` [1/year].
    pub omega: f64,
    /// `2 xi0^2 / sigma^2`.
    pub eta: f64,
    /// `2 r / sigma^2`.
    pub r1: f64,
    /// `1 + sqrt(2) gamma / (sigma xi0)`.
    pub r2: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl DerivedParams {
    /// Builds the constants from the only structural inputs they need.
    pub fn from_parts(kappa: f64, r: f64, pert: &PerturbParams) -> Result<Self> {
        pert.validate()?;
        check(kappa > 0.0 && kappa.is_finite(), "kappa", kappa, "must be > 0")?;
        check(r >= 0.0 && r.is_finite(), "r", r, "must be >= 0")?;
        let sigma = pert.sigma;
        let xi0 = pert.xi0;
        let s2 = sigma * sigma;
        let gamma = -kappa - xi0 * xi0;
        let r1 = 2.0 * r / s2;
        let r2 = 1.0 + SQRT_2 * gamma / (sigma * xi0);
        if !(r2.abs() >= DEGENERATE_EPS) {
            return Err(Error::DegenerateParams { r2: r2.abs(), threshold: DEGENERATE_EPS });
        }
        let (a, b, c) = tilt_constants(r1, r2);
        Ok(Self {
            gamma,
            omega: r - 0.5 * s2,
            eta: 2.0 * xi0 * xi0 / s2,
            r1,
            r2,
            a,
            b,
            c,
        })
    }
}

/// Exponential-tilt constants `(a, b, c)` of `phi = exp(a x + b y + c tau)`.
pub fn tilt_constants(r1: f64, r2: f64) -> (f64, f64, f64) {
    let a = -0.5 * (r1 - 1.0);
    let b = -0.5 * (r2 - 1.0);
    let c = -0.25 * ((r2 - 1.0).powi(2) + (r1 + 1.0).powi(2));
    (a, b, c)
}

pub fn derive_params(mg: &MgParams, pert: &PerturbParams) -> Result<DerivedParams> {
    mg.validate()?;
    DerivedParams::from_parts(mg.kappa, mg.r, pert)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn payoff(self, spot: f64, strike: f64) -> f64 {
        match self {
            OptionKind::Call => (spot - strike).max(0.0),
            OptionKind::Put => (strike - spot).max(0.0),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            OptionKind::Call => OptionKind::Put,
            OptionKind::Put => OptionKind::Call,
        }
    }
}

impl std::str::FromStr for OptionKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "call" | "c" => Ok(OptionKind::Call),
            "put" | "p" => Ok(OptionKind::Put),
            other => Err(format!("unknown option kind `{other}` (expected call or put)")),
        }
    }
}

impl std::fmt::Display for OptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        })
    }
}

/// A European contract together with the current instantaneous variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub spot: f64,
    pub strike: f64,
    /// Time to maturity `T - t` [years].
    pub tau_cal: f64,
    pub kind: OptionKind,
    /// Current instantaneous variance [1/year].
    pub variance: f64,
}

impl OptionSpec {
    pub fn new(spot: f64, strike: f64, tau_cal: f64, kind: OptionKind, variance: f64) -> Result<Self> {
        let o = Self { spot, strike, tau_cal, kind, variance };
        o.validate()?;
        Ok(o)
    }

    pub fn from_days(spot: f64, strike: f64, days: f64, kind: OptionKind, variance: f64) -> Result<Self> {
        Self::new(spot, strike, days / DAYS_PER_YEAR, kind, variance)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.spot > 0.0 && self.spot.is_finite(), "spot", self.spot, "must be > 0")?;
        check(self.strike > 0.0 && self.strike.is_finite(), "strike", self.strike, "must be > 0")?;
        check(self.tau_cal >= 0.0 && self.tau_cal.is_finite(), "tau_cal", self.tau_cal, "must be >= 0")?;
        check(self.variance >= 0.0 && self.variance.is_finite(), "variance", self.variance, "must be >= 0")?;
        Ok(())
    }

    pub fn with_kind(mut self, kind: OptionKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn payoff(&self) -> f64 {
        self.kind.payoff(self.spot, self.strike)
    }
}

/// Dimensionless coordinates `(x, y, tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatCoords {
    /// `log(S / K)`.
    pub x: f64,
    /// `log(V / V0)`.
    pub y: f64,
    /// `sigma^2 (T - t) / 2`.
    pub tau: f64,
}

impl HeatCoords {
    pub fn new(x: f64, y: f64, tau: f64) -> Self {
        Self { x, y, tau }
    }
}

pub fn to_heat_coords(opt: &OptionSpec, pert: &PerturbParams) -> Result<HeatCoords> {
    opt.validate()?;
    pert.validate()?;
    if !(opt.variance > 0.0) {
        return Err(Error::NonpositiveVariance(opt.variance));
    }
    Ok(HeatCoords {
        x: (opt.spot / opt.strike).ln(),
        y: (opt.variance / pert.v0).ln(),
        tau: 0.5 * pert.sigma * pert.sigma * opt.tau_cal,
    })
}

/// Inverse map: `(S, V)` from heat coordinates for a given strike and `V0`.
pub fn from_heat_coords(coords: &HeatCoords, strike: f64, v0: f64) -> (f64, f64) {
    (strike * coords.x.exp(), v0 * coords.y.exp())
}
