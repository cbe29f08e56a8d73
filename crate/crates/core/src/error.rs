use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// `R2 = 1 + sqrt(2) gamma / (sigma xi0)` is too close to zero; the
    /// leading-order correction divides by it.
    #[error("degenerate parameters: |R2| = {r2:e} is below {threshold:e}")]
    DegenerateParams { r2: f64, threshold: f64 },

    #[error("variance must be positive to form log(V/V0), got {0}")]
    NonpositiveVariance(f64),

    #[error("price {price} outside the no-arbitrage range [{lower}, {upper})")]
    OutOfBounds { price: f64, lower: f64, upper: f64 },

    #[error("implied volatility did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("quadrature not converged: coarse {coarse:e} vs refined {refined:e}")]
    QuadratureNotConverged { coarse: f64, refined: f64 },

    #[error("quote set is empty")]
    EmptyQuoteSet,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check(cond: bool, name: &'static str, value: f64, reason: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value, reason })
    }
}
