use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

use super::{correlate, price_surface, step_euler, McConfig};
use crate::error::{check, Result};
use crate::params::{MgParams, OptionKind, DAYS_PER_YEAR};
use crate::rng;

/// Layout of a synthetic option panel: latent sample paths observed at a
/// fixed interval, each observation carrying a maturity x strike grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesSpec {
    pub n_sample_paths: usize,
    pub n_obs: usize,
    pub obs_interval_days: u32,
    /// Ascending, in calendar days.
    pub maturities_days: Vec<u32>,
    /// Strike over spot.
    pub moneyness: Vec<f64>,
    pub s0: f64,
    pub v0: f64,
    /// Euler step for the latent paths.
    pub path_steps_per_day: usize,
    /// Per-observation option pricing.
    pub option_mc: McConfig,
}

impl TimeSeriesSpec {
    /// 10 paths, 12 weekly observations, 10^4 simulations per option.
    pub fn desk_scale() -> Self {
        Self {
            n_sample_paths: 10,
            n_obs: 12,
            obs_interval_days: 7,
            maturities_days: vec![7, 14, 30, 60, 90, 180],
            moneyness: (0..10).map(|i| 0.9 + 0.2 * i as f64 / 9.0).collect(),
            s0: 100.0,
            v0: 0.08,
            path_steps_per_day: 20,
            option_mc: McConfig {
                n_paths: 10_000,
                steps_per_day: 20,
                antithetic: true,
                stratified: true,
                n_strata: 50,
                seed: 0,
            },
        }
    }

    /// 100 paths, 52 weekly observations, 5 x 10^4 simulations per option.
    pub fn full_scale() -> Self {
        let desk = Self::desk_scale();
        Self {
            n_sample_paths: 100,
            n_obs: 52,
            option_mc: desk.option_mc.with_paths(50_000),
            ..desk
        }
    }

    pub fn validate(&self) -> Result<()> {
        check(self.n_sample_paths >= 1, "n_sample_paths", self.n_sample_paths as f64, "must be >= 1")?;
        check(self.n_obs >= 1, "n_obs", self.n_obs as f64, "must be >= 1")?;
        check(self.obs_interval_days >= 1, "obs_interval_days", self.obs_interval_days as f64, "must be >= 1")?;
        check(!self.maturities_days.is_empty(), "maturities_days", 0.0, "must not be empty")?;
        check(
            self.maturities_days.windows(2).all(|w| w[0] < w[1]) && self.maturities_days[0] >= 1,
            "maturities_days",
            self.maturities_days[0] as f64,
            "must be strictly ascending and >= 1",
        )?;
        check(!self.moneyness.is_empty(), "moneyness", 0.0, "must not be empty")?;
        for &m in &self.moneyness {
            check(m > 0.0 && m.is_finite(), "moneyness", m, "must be > 0")?;
        }
        check(self.s0 > 0.0, "s0", self.s0, "must be > 0")?;
        check(self.v0 > 0.0, "v0", self.v0, "must be > 0")?;
        check(self.path_steps_per_day >= 1, "path_steps_per_day", self.path_steps_per_day as f64, "must be >= 1")?;
        self.option_mc.validate()
    }

    pub fn options_per_observation(&self) -> usize {
        self.maturities_days.len() * self.moneyness.len()
    }
}

/// Calls at or above the spot, puts below: every quote is out of the money.
pub fn quote_kind(moneyness: f64) -> OptionKind {
    if moneyness < 1.0 {
        OptionKind::Put
    } else {
        OptionKind::Call
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PanelQuote {
    pub maturity_days: u32,
    pub strike: f64,
    pub moneyness: f64,
    pub mc_price: f64,
    pub mc_std_error: f64,
}

impl PanelQuote {
    pub fn kind(&self) -> OptionKind {
        quote_kind(self.moneyness)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub path_id: usize,
    pub obs_index: usize,
    pub obs_time_years: f64,
    pub spot: f64,
    pub v_true: f64,
    pub quotes: Vec<PanelQuote>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    /// Ordered by path, then observation.
    pub observations: Vec<Observation>,
}

impl Panel {
    pub fn path(&self, path_id: usize) -> impl Iterator<Item = &Observation> {
        self.observations.iter().filter(move |o| o.path_id == path_id)
    }
}

/// Latent `(S, V)` at each observation date; the first date is the start.
fn latent_path(spec: &TimeSeriesSpec, mg: &MgParams, seed: u64, path_id: usize) -> Vec<(f64, f64)> {
    let mut r = rng::stream(rng::derive_seed(seed, &[0, path_id as u64]), 0);
    let steps = spec.obs_interval_days as usize * spec.path_steps_per_day;
    let dt = 1.0 / (DAYS_PER_YEAR * spec.path_steps_per_day as f64);
    let (mut s, mut v) = (spec.s0, spec.v0);
    let mut out = Vec::with_capacity(spec.n_obs);
    out.push((s, v));
    for _ in 1..spec.n_obs {
        for _ in 0..steps {
            let z_v: f64 = StandardNormal.sample(&mut r);
            let z: f64 = StandardNormal.sample(&mut r);
            (s, v) = step_euler(s, v, dt, correlate(z_v, z, mg.rho), z_v, mg);
        }
        out.push((s, v));
    }
    out
}

/// Simulates the latent paths and prices the option grid at every observation.
pub fn generate_time_series(spec: &TimeSeriesSpec, mg: &MgParams, seed: u64) -> Result<Panel> {
    spec.validate()?;
    mg.validate_simulation()?;
    let jobs: Vec<(usize, usize, f64, f64)> = (0..spec.n_sample_paths)
        .flat_map(|p| {
            latent_path(spec, mg, seed, p)
                .into_iter()
                .enumerate()
                .map(move |(k, (s, v))| (p, k, s, v))
        })
        .collect();
    let observations: Result<Vec<Observation>> = jobs
        .into_par_iter()
        .map(|(path_id, obs_index, spot, v)| {
            let v_true = v.max(0.0);
            let cfg = spec.option_mc.with_seed(rng::derive_seed(seed, &[1, path_id as u64, obs_index as u64]));
            let contracts: Vec<(f64, OptionKind)> = spec.moneyness.iter().map(|&m| (m * spot, quote_kind(m))).collect();
            let surface = price_surface(spot, v_true, mg, &spec.maturities_days, &contracts, &cfg)?;
            let mut quotes = Vec::with_capacity(spec.options_per_observation());
            for (i, &d) in spec.maturities_days.iter().enumerate() {
                for (j, &m) in spec.moneyness.iter().enumerate() {
                    let p = surface[i][j];
                    quotes.push(PanelQuote {
                        maturity_days: d,
                        strike: contracts[j].0,
                        moneyness: m,
                        mc_price: p.estimate,
                        mc_std_error: p.std_error,
                    });
                }
            }
            Ok(Observation {
                path_id,
                obs_index,
                obs_time_years: (obs_index as u32 * spec.obs_interval_days) as f64 / DAYS_PER_YEAR,
                spot,
                v_true,
                quotes,
            })
        })
        .collect();
    Ok(Panel { observations: observations? })
}

#[derive(Serialize)]
struct PanelRow {
    path_id: usize,
    obs_index: usize,
    obs_time_years: f64,
    v_true: f64,
    maturity_days: u32,
    strike: f64,
    moneyness: f64,
    mc_price: f64,
    mc_std_error: f64,
}

pub fn write_panel_csv<W: Write>(out: W, panel: &Panel) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for o in &panel.observations {
        for q in &o.quotes {
            w.serialize(PanelRow {
                path_id: o.path_id,
                obs_index: o.obs_index,
                obs_time_years: o.obs_time_years,
                v_true: o.v_true,
                maturity_days: q.maturity_days,
                strike: q.strike,
                moneyness: q.moneyness,
                mc_price: q.mc_price,
                mc_std_error: q.mc_std_error,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{black_scholes_vega, implied_vol};
    use crate::params::OptionSpec;

    fn tiny() -> TimeSeriesSpec {
        let mut s = TimeSeriesSpec::desk_scale();
        s.n_sample_paths = 2;
        s.n_obs = 3;
        s.path_steps_per_day = 4;
        s.option_mc = McConfig { n_paths: 4000, steps_per_day: 2, ..s.option_mc };
        s
    }

    #[test]
    fn grid_shape() {
        let spec = TimeSeriesSpec::desk_scale();
        assert_eq!(spec.options_per_observation(), 60);
        assert!((spec.moneyness[9] - 1.1).abs() < 1e-15);
        assert!(spec.validate().is_ok());
        assert!(TimeSeriesSpec::full_scale().validate().is_ok());
        let mut bad = spec.clone();
        bad.maturities_days = vec![30, 7];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn panel_is_reproducible() {
        let mg = MgParams::new(1.1768, 0.0823, 0.3, -0.5459, 1.0, 0.0).unwrap();
        let a = generate_time_series(&tiny(), &mg, 5).unwrap();
        let b = generate_time_series(&tiny(), &mg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.observations.len(), 6);
        let mut buf = Vec::new();
        write_panel_csv(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "path_id,obs_index,obs_time_years,v_true,maturity_days,strike,moneyness,mc_price,mc_std_error\n"
        ));
        assert_eq!(text.lines().count(), 1 + 6 * 60);
    }

    #[test]
    fn flat_surface_without_vol_of_vol() {
        let mg = MgParams::for_simulation(1.1768, 0.0823, 0.0, 0.0, 1.0, 0.0).unwrap();
        let mut spec = tiny();
        spec.v0 = 0.0823;
        let panel = generate_time_series(&spec, &mg, 1).unwrap();
        for o in &panel.observations {
            assert!((o.v_true - 0.0823).abs() < 1e-12);
            for q in o.quotes.iter().filter(|q| q.maturity_days >= 30) {
                let opt = OptionSpec::from_days(o.spot, q.strike, q.maturity_days as f64, q.kind(), o.v_true).unwrap();
                let iv = implied_vol(q.mc_price, &opt, 0.0).unwrap();
                // price noise mapped to volatility through vega
                let vega = black_scholes_vega(o.spot, q.strike, opt.tau_cal, 0.0, iv);
                assert!((iv - 0.0823f64.sqrt()).abs() < 4.0 * q.mc_std_error / vega, "{q:?} iv {iv}");
            }
        }
    }
}
