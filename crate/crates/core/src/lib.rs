//! Perturbative pricing of European options under the Merton-Garman
//! stochastic-volatility model, with Monte Carlo and heat-kernel oracles and
//! an implied-volatility calibration harness.

pub mod analytic;
pub mod calibration;
pub mod error;
pub mod heat_kernel;
pub mod monte_carlo;
pub mod params;
pub mod quadrature;
pub mod rng;

pub use analytic::{implied_vol, price_mg, PriceBreakdown};
pub use error::{Error, Result};
pub use params::{derive_params, DerivedParams, HeatCoords, MgParams, OptionKind, OptionSpec, PerturbParams};
