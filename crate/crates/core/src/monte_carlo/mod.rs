//! Euler full-truncation simulation of the Merton-Garman system, used as the
//! pricing oracle and to generate the synthetic option panels.

mod timeseries;

pub use timeseries::{
    generate_time_series, quote_kind, write_panel_csv, Observation, Panel, PanelQuote, TimeSeriesSpec,
};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check, Result};
use crate::params::{MgParams, OptionKind, OptionSpec, DAYS_PER_YEAR};
use crate::quadrature::pairwise_sum;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub n_paths: usize,
    pub steps_per_day: usize,
    pub antithetic: bool,
    pub stratified: bool,
    pub n_strata: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { n_paths: 500_000, steps_per_day: 10, antithetic: true, stratified: true, n_strata: 50, seed: 20_240_917 }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.n_paths >= 2, "n_paths", self.n_paths as f64, "must be >= 2")?;
        if self.antithetic {
            check(self.n_paths % 2 == 0, "n_paths", self.n_paths as f64, "must be even with antithetic sampling")?;
        }
        check(self.steps_per_day >= 1, "steps_per_day", self.steps_per_day as f64, "must be >= 1")?;
        if self.stratified {
            check(self.n_strata >= 1, "n_strata", self.n_strata as f64, "must be >= 1")?;
            check(
                self.units() % self.n_strata == 0,
                "n_strata",
                self.n_strata as f64,
                "must divide the number of independent draws (n_paths, or n_paths / 2 with antithetic)",
            )?;
        }
        Ok(())
    }

    pub fn with_paths(self, n_paths: usize) -> Self {
        Self { n_paths, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn dt(&self) -> f64 {
        1.0 / (DAYS_PER_YEAR * self.steps_per_day as f64)
    }

    /// Independent draws: antithetic pairs count once.
    fn units(&self) -> usize {
        if self.antithetic {
            self.n_paths / 2
        } else {
            self.n_paths
        }
    }

    fn strata(&self) -> usize {
        if self.stratified {
            self.n_strata
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McPrice {
    pub estimate: f64,
    pub std_error: f64,
    pub n_effective: usize,
}

/// One full-truncation Euler step.
#[inline]
pub fn step_euler(s: f64, v: f64, dt: f64, z_s: f64, z_v: f64, mg: &MgParams) -> (f64, f64) {
    let vp = v.max(0.0);
    let s_next = s + mg.r * s * dt + s * (vp * dt).sqrt() * z_s;
    let v_next = v + mg.kappa * (mg.theta - vp) * dt + mg.xi * vol_power(vp, mg.alpha) * dt.sqrt() * z_v;
    (s_next, v_next)
}

#[inline]
fn vol_power(v: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        v
    } else if alpha == 0.5 {
        v.sqrt()
    } else {
        v.powf(alpha)
    }
}

/// `z_S = rho z_V + sqrt(1 - rho^2) z`.
#[inline]
pub fn correlate(z_v: f64, z: f64, rho: f64) -> f64 {
    rho * z_v + (1.0 - rho * rho).sqrt() * z
}

/// `n` correlated `(z_S, z_V)` increments, for checking the construction.
pub fn correlated_normals(n: usize, rho: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut r = rng::stream(seed, 0);
    (0..n)
        .map(|_| {
            let z_v: f64 = StandardNormal.sample(&mut r);
            let z: f64 = StandardNormal.sample(&mut r);
            (correlate(z_v, z, rho), z_v)
        })
        .collect()
}

/// Path `(S, V)` states recorded at the requested step counts.
struct Recorder<'a> {
    at_steps: &'a [usize],
}

impl Recorder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        s0: f64,
        v0: f64,
        dt: f64,
        mg: &MgParams,
        rng: &mut ChaCha8Rng,
        first_u: Option<f64>,
        sign: f64,
        out: &mut Vec<f64>,
    ) {
        let last = self.at_steps.iter().copied().max().unwrap_or(0);
        let (mut s, mut v) = (s0, v0);
        let mut next = 0;
        for step in 1..=last {
            let (z_s, z_v) = if step == 1 {
                // the first-step asset shock carries the stratified uniform
                let z_s = match first_u {
                    Some(u) => rng::normal_quantile(u),
                    None => StandardNormal.sample(rng),
                };
                let w: f64 = StandardNormal.sample(rng);
                (z_s, correlate(z_s, w, mg.rho))
            } else {
                let z_v: f64 = StandardNormal.sample(rng);
                let z: f64 = StandardNormal.sample(rng);
                (correlate(z_v, z, mg.rho), z_v)
            };
            (s, v) = step_euler(s, v, dt, sign * z_s, sign * z_v, mg);
            while next < self.at_steps.len() && self.at_steps[next] == step {
                out.push(s);
                next += 1;
            }
        }
        while next < self.at_steps.len() {
            out.push(s);
            next += 1;
        }
    }
}

/// Terminal spots for every path at each of `at_steps` (ascending), laid out
/// as `result[maturity][path]`. Antithetic partners sit at `2p` and `2p + 1`.
pub fn simulate_terminal(s0: f64, v0: f64, mg: &MgParams, at_steps: &[usize], dt: f64, cfg: &McConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    check(dt > 0.0 && dt.is_finite(), "dt", dt, "must be > 0")?;
    check(at_steps.windows(2).all(|w| w[0] <= w[1]), "at_steps", f64::NAN, "must be ascending")?;
    let m = at_steps.len();
    let strata = cfg.strata();
    let rec = Recorder { at_steps };
    let per_unit: Vec<Vec<f64>> = (0..cfg.units())
        .into_par_iter()
        .map(|unit| {
            let mut r = rng::stream(cfg.seed, unit as u64);
            let first_u = cfg.stratified.then(|| {
                let k = unit % strata;
                (k as f64 + rng::uniform(&mut r)) / strata as f64
            });
            let mut out = Vec::with_capacity(if cfg.antithetic { 2 * m } else { m });
            rec.run(s0, v0, dt, mg, &mut r.clone(), first_u, 1.0, &mut out);
            if cfg.antithetic {
                // the sign flip also mirrors the stratified draw into stratum K - 1 - k
                rec.run(s0, v0, dt, mg, &mut r, first_u, -1.0, &mut out);
            }
            out
        })
        .collect();
    let mut result = vec![Vec::with_capacity(cfg.n_paths); m];
    for unit in &per_unit {
        let copies = unit.len() / m.max(1);
        for c in 0..copies {
            for (j, col) in result.iter_mut().enumerate() {
                col.push(unit[c * m + j]);
            }
        }
    }
    Ok(result)
}

/// Mean and standard error of per-path values, respecting antithetic pairing
/// and first-step strata.
pub fn estimate(values: &[f64], cfg: &McConfig) -> McPrice {
    let units: Vec<f64> = if cfg.antithetic {
        values.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect()
    } else {
        values.to_vec()
    };
    let n = units.len();
    let mean = pairwise_sum(&units) / n as f64;
    let strata = cfg.strata();
    let per = n / strata;
    let std_error = if strata > 1 && per >= 2 {
        // equal allocation: Var = sum_k s_k^2 / (K^2 m)
        let mut acc = vec![0.0; strata];
        for (k, slot) in acc.iter_mut().enumerate() {
            let group: Vec<f64> = units.iter().skip(k).step_by(strata).copied().collect();
            let gm = pairwise_sum(&group) / group.len() as f64;
            let dev: Vec<f64> = group.iter().map(|x| (x - gm).powi(2)).collect();
            *slot = pairwise_sum(&dev) / (group.len() - 1) as f64;
        }
        (pairwise_sum(&acc) / (strata * strata * per) as f64).sqrt()
    } else {
        let dev: Vec<f64> = units.iter().map(|x| (x - mean).powi(2)).collect();
        (pairwise_sum(&dev) / ((n - 1).max(1) * n) as f64).sqrt()
    };
    McPrice { estimate: mean, std_error, n_effective: n }
}

fn steps_for(tau_cal: f64, steps_per_day: usize) -> usize {
    ((tau_cal * DAYS_PER_YEAR * steps_per_day as f64).round() as usize).max(1)
}

/// Discounted payoff mean for a single contract.
pub fn price_option_mc(opt: &OptionSpec, mg: &MgParams, cfg: &McConfig) -> Result<McPrice> {
    opt.validate()?;
    mg.validate_simulation()?;
    check(opt.tau_cal > 0.0, "tau_cal", opt.tau_cal, "must be > 0 for simulation")?;
    let n = steps_for(opt.tau_cal, cfg.steps_per_day);
    let paths = simulate_terminal(opt.spot, opt.variance, mg, &[n], opt.tau_cal / n as f64, cfg)?;
    Ok(price_from_terminal(&paths[0], opt.strike, opt.kind, opt.tau_cal, mg.r, cfg))
}

pub fn price_from_terminal(terminal: &[f64], strike: f64, kind: OptionKind, tau_cal: f64, r: f64, cfg: &McConfig) -> McPrice {
    let disc = (-r * tau_cal).exp();
    let payoffs: Vec<f64> = terminal.iter().map(|&s| disc * kind.payoff(s, strike)).collect();
    estimate(&payoffs, cfg)
}

/// Prices on a maturity x contract grid from one set of paths; `result[i][j]`
/// is maturity `i`, contract `j`.
pub fn price_surface(
    spot: f64,
    variance: f64,
    mg: &MgParams,
    maturities_days: &[u32],
    contracts: &[(f64, OptionKind)],
    cfg: &McConfig,
) -> Result<Vec<Vec<McPrice>>> {
    mg.validate_simulation()?;
    check(spot > 0.0, "spot", spot, "must be > 0")?;
    check(variance >= 0.0, "variance", variance, "must be >= 0")?;
    let steps: Vec<usize> = maturities_days.iter().map(|&d| d as usize * cfg.steps_per_day).collect();
    let terminal = simulate_terminal(spot, variance, mg, &steps, cfg.dt(), cfg)?;
    Ok(maturities_days
        .iter()
        .zip(&terminal)
        .map(|(&d, paths)| {
            contracts
                .iter()
                .map(|&(k, kind)| price_from_terminal(paths, k, kind, d as f64 / DAYS_PER_YEAR, mg.r, cfg))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::black_scholes;

    fn mg_const(theta: f64, r: f64) -> MgParams {
        MgParams::for_simulation(2.0, theta, 0.0, -0.5, 1.0, r).unwrap()
    }

    fn small(n: usize, seed: u64) -> McConfig {
        McConfig { n_paths: n, steps_per_day: 2, antithetic: true, stratified: true, n_strata: 10, seed }
    }

    #[test]
    fn fixed_point_and_truncation() {
        let mg = mg_const(0.04, 0.0);
        let (_, v) = step_euler(100.0, 0.04, 0.01, 0.3, -1.2, &mg);
        assert_eq!(v, 0.04);
        let mg = MgParams::new(1.5, 0.08, 1.5, -0.5, 1.0, 0.0).unwrap();
        let (s, v) = step_euler(100.0, -0.01, 0.01, 0.7, 2.0, &mg);
        assert_eq!(s, 100.0);
        assert!((v - (-0.01 + 1.5 * 0.08 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn config_rules() {
        assert!(McConfig { n_paths: 3, ..small(10, 1) }.validate().is_err());
        assert!(McConfig { n_strata: 3, ..small(10, 1) }.validate().is_err());
        assert!(McConfig { steps_per_day: 0, ..small(10, 1) }.validate().is_err());
        assert!(McConfig { n_paths: 3, antithetic: false, stratified: false, ..small(10, 1) }.validate().is_ok());
    }

    #[test]
    fn constant_vol_matches_black_scholes() {
        let mg = mg_const(0.04, 0.03);
        let opt = OptionSpec::from_days(100.0, 105.0, 60.0, OptionKind::Call, 0.04).unwrap();
        let mc = price_option_mc(&opt, &mg, &small(100_000, 7)).unwrap();
        let bs = black_scholes(OptionKind::Call, 100.0, 105.0, 60.0 / 365.0, 0.03, 0.2);
        assert!((mc.estimate - bs).abs() < 3.0 * mc.std_error, "{mc:?} vs {bs}");
    }

    #[test]
    fn deterministic_for_a_seed() {
        let mg = MgParams::new(1.5, 0.08, 1.5, -0.5, 1.0, 0.0).unwrap();
        let opt = OptionSpec::from_days(100.0, 100.0, 30.0, OptionKind::Put, 0.09).unwrap();
        let a = price_option_mc(&opt, &mg, &small(2000, 3)).unwrap();
        let b = price_option_mc(&opt, &mg, &small(2000, 3)).unwrap();
        let c = price_option_mc(&opt, &mg, &small(2000, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.estimate, c.estimate);
    }

    #[test]
    fn correlation_of_increments() {
        for rho in [-0.5459, 0.0, 0.8] {
            let z = correlated_normals(1_000_000, rho, 9);
            let n = z.len() as f64;
            let (ms, mv) = (z.iter().map(|p| p.0).sum::<f64>() / n, z.iter().map(|p| p.1).sum::<f64>() / n);
            let cov = z.iter().map(|p| (p.0 - ms) * (p.1 - mv)).sum::<f64>() / n;
            let vs = z.iter().map(|p| (p.0 - ms).powi(2)).sum::<f64>() / n;
            let vv = z.iter().map(|p| (p.1 - mv).powi(2)).sum::<f64>() / n;
            assert!((cov / (vs * vv).sqrt() - rho).abs() < 0.01);
        }
    }

    #[test]
    fn martingale_at_zero_rate() {
        let mg = MgParams::new(1.5, 0.08, 1.5, -0.5, 1.0, 0.0).unwrap();
        let cfg = small(100_000, 5);
        let t = simulate_terminal(100.0, 0.09, &mg, &[60], 0.5 / 365.0, &cfg).unwrap();
        let est = estimate(&t[0], &cfg);
        assert!((est.estimate / 100.0 - 1.0).abs() < 3.0 * est.std_error / 100.0, "{est:?}");
    }

    #[test]
    fn antithetic_reduces_error() {
        let mg = MgParams::new(1.5, 0.08, 1.5, -0.5, 1.0, 0.0).unwrap();
        let opt = OptionSpec::from_days(100.0, 100.0, 30.0, OptionKind::Call, 0.0324).unwrap();
        for seed in 0..20 {
            let on = McConfig { n_paths: 4000, steps_per_day: 1, antithetic: true, stratified: false, n_strata: 1, seed };
            let off = McConfig { antithetic: false, ..on };
            let (a, b) = (price_option_mc(&opt, &mg, &on).unwrap(), price_option_mc(&opt, &mg, &off).unwrap());
            assert!(a.std_error < b.std_error, "seed {seed}: {} vs {}", a.std_error, b.std_error);
        }
    }

    #[test]
    fn stratification_does_not_hurt() {
        let mg = MgParams::new(1.5, 0.08, 1.5, -0.5, 1.0, 0.0).unwrap();
        let opt = OptionSpec::from_days(100.0, 100.0, 30.0, OptionKind::Call, 0.0324).unwrap();
        for seed in 0..20 {
            let on = McConfig { n_paths: 8000, steps_per_day: 1, antithetic: false, stratified: true, n_strata: 40, seed };
            let off = McConfig { stratified: false, ..on };
            let (a, b) = (price_option_mc(&opt, &mg, &on).unwrap(), price_option_mc(&opt, &mg, &off).unwrap());
            assert!(a.std_error <= b.std_error, "seed {seed}: {} vs {}", a.std_error, b.std_error);
        }
    }

    #[test]
    fn error_shrinks_like_root_n() {
        let mg = MgParams::new(1.5, 0.08, 1.5, -0.5, 1.0, 0.0).unwrap();
        let opt = OptionSpec::from_days(100.0, 100.0, 30.0, OptionKind::Call, 0.0324).unwrap();
        let se: Vec<f64> = [4000, 16000, 64000]
            .iter()
            .map(|&n| price_option_mc(&opt, &mg, &small(n, 1)).unwrap().std_error)
            .collect();
        let slope = (se[2] / se[0]).ln() / 16f64.ln();
        assert!((slope + 0.5).abs() < 0.1, "{slope}");
    }

    #[test]
    fn halving_dt_is_consistent() {
        let mg = MgParams::new(1.5, 0.08, 1.5, -0.5, 1.0, 0.0).unwrap();
        let opt = OptionSpec::from_days(100.0, 100.0, 30.0, OptionKind::Call, 0.0324).unwrap();
        let coarse = price_option_mc(&opt, &mg, &McConfig { steps_per_day: 2, ..small(100_000, 2) }).unwrap();
        let fine = price_option_mc(&opt, &mg, &McConfig { steps_per_day: 4, ..small(100_000, 2) }).unwrap();
        let combined = coarse.std_error.hypot(fine.std_error);
        assert!((coarse.estimate - fine.estimate).abs() < 2.0 * combined, "{coarse:?} {fine:?}");
    }

    #[test]
    fn lower_bound_holds() {
        let mg = MgParams::new(1.5, 0.08, 1.5, -0.5, 1.0, 0.02).unwrap();
        for k in [80.0, 100.0, 120.0] {
            let opt = OptionSpec::from_days(100.0, k, 45.0, OptionKind::Call, 0.09).unwrap();
            let mc = price_option_mc(&opt, &mg, &small(20_000, 8)).unwrap();
            let lb = (100.0 - k * (-0.02f64 * 45.0 / 365.0).exp()).max(0.0);
            assert!(mc.estimate >= lb - 3.0 * mc.std_error);
        }
    }

    #[test]
    fn surface_matches_single_pricing() {
        let mg = MgParams::new(1.5, 0.08, 1.5, -0.5, 1.0, 0.0).unwrap();
        let cfg = small(2000, 12);
        let surf = price_surface(100.0, 0.09, &mg, &[7, 30], &[(95.0, OptionKind::Put), (100.0, OptionKind::Call)], &cfg).unwrap();
        let opt = OptionSpec::from_days(100.0, 100.0, 30.0, OptionKind::Call, 0.09).unwrap();
        let single = price_option_mc(&opt, &mg, &cfg).unwrap();
        assert!((surf[1][1].estimate - single.estimate).abs() < 1e-12 * single.estimate);
    }
}
