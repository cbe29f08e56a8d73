//! Implied-volatility RMSE objective and the Nelder-Mead fit of the
//! perturbative parameters `(kappa, xi, alpha, sigma)`.

mod experiments;

pub use experiments::{
    dataset_params, run_static_experiment, run_timeseries_experiment, write_figure_csv, write_table1_csv,
    write_table2_csv, write_table3_csv, FigurePoint, ParamSummary, StaticReport, StaticRow, StaticSetup,
    TimeSeriesReport,
};

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::Serialize;
use std::cell::RefCell;

use crate::analytic::{implied_vol, price_with_derived};
use crate::error::{check, Error, Result};
use crate::params::{DerivedParams, OptionSpec, PerturbParams};
use crate::quadrature::pairwise_sum;

/// Residual charged to a quote whose model price cannot be inverted (50 vol points).
pub const MODEL_IV_PENALTY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quote {
    pub opt: OptionSpec,
    pub price: f64,
    pub iv: f64,
}

/// Observed quotes sharing one rate. Quotes whose implied volatility cannot be
/// recovered are dropped at construction and counted.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSet {
    quotes: Vec<Quote>,
    pub r: f64,
    pub timestamp: f64,
    dropped: usize,
}

impl QuoteSet {
    pub fn from_prices(items: impl IntoIterator<Item = (OptionSpec, f64)>, r: f64, timestamp: f64) -> Result<Self> {
        let mut quotes = Vec::new();
        let mut dropped = 0;
        for (opt, price) in items {
            match implied_vol(price, &opt, r) {
                Ok(iv) if opt.variance > 0.0 && opt.tau_cal > 0.0 => quotes.push(Quote { opt, price, iv }),
                _ => dropped += 1,
            }
        }
        if quotes.is_empty() {
            return Err(Error::EmptyQuoteSet);
        }
        Ok(Self { quotes, r, timestamp, dropped })
    }

    pub fn quotes(&self) -> &[Quote] {
        &self.quotes
    }

    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Copy without quote `index`.
    pub fn without(&self, index: usize) -> Result<Self> {
        let mut quotes = self.quotes.clone();
        quotes.remove(index);
        if quotes.is_empty() {
            return Err(Error::EmptyQuoteSet);
        }
        Ok(Self { quotes, dropped: self.dropped + 1, ..*self })
    }

    pub fn merge(sets: impl IntoIterator<Item = QuoteSet>) -> Result<Self> {
        let mut out: Option<QuoteSet> = None;
        for s in sets {
            match &mut out {
                None => out = Some(s),
                Some(acc) => {
                    acc.quotes.extend(s.quotes);
                    acc.dropped += s.dropped;
                }
            }
        }
        out.ok_or(Error::EmptyQuoteSet)
    }
}

/// Perturbative parameter vector; `xi0` follows from `(xi, alpha, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PertTheta {
    pub kappa: f64,
    pub xi: f64,
    pub alpha: f64,
    pub sigma: f64,
}

impl PertTheta {
    pub fn validate(&self) -> Result<()> {
        check(self.kappa > 0.0 && self.kappa.is_finite(), "kappa", self.kappa, "must be > 0")?;
        check(self.xi > 0.0 && self.xi.is_finite(), "xi", self.xi, "must be > 0")?;
        check(self.alpha > 0.0 && self.alpha.is_finite(), "alpha", self.alpha, "must be > 0")?;
        check(self.sigma > 0.0 && self.sigma.is_finite(), "sigma", self.sigma, "must be > 0")?;
        Ok(())
    }

    pub fn model(&self, r: f64) -> Result<(PerturbParams, DerivedParams)> {
        self.validate()?;
        let pert = PerturbParams::from_structural(self.xi, self.alpha, self.sigma)?;
        let deriv = DerivedParams::from_parts(self.kappa, r, &pert)?;
        Ok((pert, deriv))
    }
}

/// `IV_obs - IV_model` per quote, penalized where the model side fails.
pub fn residuals(quotes: &QuoteSet, theta: &PertTheta) -> Result<Vec<f64>> {
    if quotes.is_empty() {
        return Err(Error::EmptyQuoteSet);
    }
    let (pert, deriv) = theta.model(quotes.r)?;
    Ok(quotes
        .quotes
        .par_iter()
        .map(|q| {
            price_with_derived(&q.opt, &pert, &deriv, quotes.r)
                .and_then(|p| implied_vol(p.total, &q.opt, quotes.r))
                .map(|iv| q.iv - iv)
                .unwrap_or(MODEL_IV_PENALTY)
        })
        .collect())
}

/// Root mean square of `residuals`; the sum runs over sorted squares so the
/// value does not depend on quote order.
pub fn rms(residuals: &[f64]) -> f64 {
    let mut sq: Vec<f64> = residuals.iter().map(|r| r * r).collect();
    sq.sort_by(f64::total_cmp);
    (pairwise_sum(&sq) / sq.len() as f64).sqrt()
}

pub fn ivrmse(quotes: &QuoteSet, theta: &PertTheta) -> Result<f64> {
    Ok(rms(&residuals(quotes, theta)?))
}

/// Which coordinates the search may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeParams {
    pub kappa: bool,
    pub xi: bool,
    pub alpha: bool,
    pub sigma: bool,
}

impl FreeParams {
    pub const ALL: Self = Self { kappa: true, xi: true, alpha: true, sigma: true };
    pub const SIGMA_ONLY: Self = Self { kappa: false, xi: false, alpha: false, sigma: true };

    fn mask(&self) -> [bool; 4] {
        [self.kappa, self.xi, self.alpha, self.sigma]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iters: u64,
    /// Stop once the standard deviation of the simplex values drops below this.
    pub spread_tol: f64,
    /// Initial simplex edge in search coordinates.
    pub step: f64,
    pub restart: bool,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iters: 500, spread_tol: 1e-6, step: 0.1, restart: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibResult {
    pub theta: PertTheta,
    pub ivrmse: f64,
    pub n_quotes_used: usize,
    pub iterations: u64,
    pub converged: bool,
    pub residuals: Vec<f64>,
    /// Best objective value after each evaluation.
    pub trace: Vec<f64>,
}

// search coordinates: log kappa, log xi, alpha, log sigma
fn to_search(t: &PertTheta) -> [f64; 4] {
    [t.kappa.ln(), t.xi.ln(), t.alpha, t.sigma.ln()]
}

fn from_search(u: &[f64; 4]) -> PertTheta {
    PertTheta { kappa: u[0].exp(), xi: u[1].exp(), alpha: u[2], sigma: u[3].exp() }
}

struct Objective<'a> {
    quotes: &'a QuoteSet,
    base: [f64; 4],
    free: Vec<usize>,
    trace: RefCell<Vec<f64>>,
}

impl Objective<'_> {
    fn full(&self, p: &[f64]) -> [f64; 4] {
        let mut u = self.base;
        for (&i, &v) in self.free.iter().zip(p) {
            u[i] = v;
        }
        u
    }

    fn value(&self, p: &[f64]) -> f64 {
        let theta = from_search(&self.full(p));
        // parameters the model cannot price are charged the full penalty
        let v = ivrmse(self.quotes, &theta).unwrap_or(MODEL_IV_PENALTY);
        let v = if v.is_finite() { v } else { MODEL_IV_PENALTY };
        let mut t = self.trace.borrow_mut();
        let best = t.last().map_or(v, |&b: &f64| b.min(v));
        t.push(best);
        v
    }
}

struct Problem<'a, 'b>(&'a Objective<'b>);

impl CostFunction for Problem<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.0.value(p))
    }
}

fn simplex(center: &[f64], step: f64) -> Vec<Vec<f64>> {
    let mut out = vec![center.to_vec()];
    for i in 0..center.len() {
        let mut v = center.to_vec();
        v[i] += step;
        out.push(v);
    }
    out
}

/// Nelder-Mead search over the free coordinates, restarted once from the best
/// vertex. The result is never worse than `initial`.
pub fn calibrate(quotes: &QuoteSet, initial: &PertTheta, free: FreeParams, opts: &NelderMeadOptions) -> Result<CalibResult> {
    initial.validate()?;
    let base = to_search(initial);
    let idx: Vec<usize> = free.mask().iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect();
    check(!idx.is_empty(), "free", 0.0, "at least one parameter must be free")?;
    let obj = Objective { quotes, base, free: idx.clone(), trace: RefCell::new(Vec::new()) };
    let start: Vec<f64> = idx.iter().map(|&i| base[i]).collect();
    let f0 = obj.value(&start);

    let mut best = (start.clone(), f0);
    let mut iterations = 0;
    let mut converged = true;
    let rounds = if opts.restart { 2 } else { 1 };
    for _ in 0..rounds {
        let solver = NelderMead::new(simplex(&best.0, opts.step))
            .with_sd_tolerance(opts.spread_tol)
            .map_err(|_| Error::InvalidParameter { name: "spread_tol", value: opts.spread_tol, reason: "rejected by optimizer" })?;
        let res = Executor::new(Problem(&obj), solver)
            .configure(|s| s.max_iters(opts.max_iters))
            .run()
            .map_err(|_| Error::NoConvergence { iterations: iterations as usize, residual: best.1 })?;
        let state = res.state();
        iterations += state.get_iter();
        converged &= matches!(
            state.get_termination_status(),
            TerminationStatus::Terminated(TerminationReason::SolverConverged)
        );
        if let Some(p) = state.get_best_param() {
            let c = state.get_best_cost();
            if c < best.1 {
                best = (p.clone(), c);
            }
        }
    }

    let theta = from_search(&obj.full(&best.0));
    let residuals = residuals(quotes, &theta).unwrap_or_else(|_| vec![MODEL_IV_PENALTY; quotes.len()]);
    Ok(CalibResult {
        theta,
        ivrmse: rms(&residuals),
        n_quotes_used: quotes.len(),
        iterations,
        converged,
        residuals,
        trace: obj.trace.into_inner(),
    })
}
