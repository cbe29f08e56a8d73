use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

use super::{calibrate, CalibResult, FreeParams, NelderMeadOptions, PertTheta, QuoteSet};
use crate::analytic::{implied_vol, price_with_derived};
use crate::error::{check, Result};
use crate::monte_carlo::{generate_time_series, price_surface, McConfig, Panel, TimeSeriesSpec};
use crate::params::{MgParams, OptionKind, OptionSpec, DAYS_PER_YEAR};
use crate::rng;

/// The static cross-section: one Monte Carlo surface per starting volatility.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticSetup {
    pub mg: MgParams,
    /// Initial instantaneous volatilities; the simulated variance is `v^2`.
    pub v_grid: Vec<f64>,
    pub maturity_days: u32,
    pub moneyness: Vec<f64>,
    pub spot: f64,
    pub mc: McConfig,
}

impl Default for StaticSetup {
    fn default() -> Self {
        Self {
            mg: MgParams { kappa: 1.5, theta: 0.08, xi: 1.5, rho: -0.5, alpha: 1.0, r: 0.0 },
            v_grid: vec![0.35, 0.25, 0.18, 0.10],
            maturity_days: 30,
            moneyness: (0..=20).map(|i| 0.9 + 0.01 * i as f64).collect(),
            spot: 100.0,
            mc: McConfig::default(),
        }
    }
}

impl StaticSetup {
    pub fn validate(&self) -> Result<()> {
        self.mg.validate()?;
        self.mc.validate()?;
        check(!self.v_grid.is_empty(), "v_grid", 0.0, "must not be empty")?;
        for &v in &self.v_grid {
            check(v > 0.0 && v.is_finite(), "v_grid", v, "volatilities must be > 0")?;
        }
        check(self.maturity_days >= 1, "maturity_days", self.maturity_days as f64, "must be >= 1")?;
        check(!self.moneyness.is_empty(), "moneyness", 0.0, "must not be empty")?;
        for &m in &self.moneyness {
            check(m > 0.0 && m.is_finite(), "moneyness", m, "must be > 0")?;
        }
        check(self.spot > 0.0, "spot", self.spot, "must be > 0")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StaticRow {
    pub v_init: f64,
    pub sigma_hat: f64,
    pub ivrmse: f64,
    pub n_quotes: usize,
    pub dropped: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FigurePoint {
    pub moneyness: f64,
    /// `log(C_MC / C_pert)` for the call.
    pub log_price_diff: f64,
    pub iv_mc: f64,
    pub iv_pert: f64,
    /// `C1 / (C0 + C1)` for the call.
    pub c1_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticReport {
    pub rows: Vec<StaticRow>,
    /// One curve per entry of the volatility grid.
    pub curves: Vec<Vec<FigurePoint>>,
}

/// Out-of-the-money convention used for every calibration quote.
fn otm_kind(moneyness: f64) -> OptionKind {
    crate::monte_carlo::quote_kind(moneyness)
}

pub fn run_static_experiment(setup: &StaticSetup, opts: &NelderMeadOptions) -> Result<StaticReport> {
    setup.validate()?;
    let mg = setup.mg;
    let tau = setup.maturity_days as f64 / DAYS_PER_YEAR;
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (i, &v) in setup.v_grid.iter().enumerate() {
        let var = v * v;
        let strikes: Vec<f64> = setup.moneyness.iter().map(|m| m * setup.spot).collect();
        let contracts: Vec<(f64, OptionKind)> = strikes
            .iter()
            .flat_map(|&k| [(k, OptionKind::Call), (k, OptionKind::Put)])
            .collect();
        let cfg = setup.mc.with_seed(rng::derive_seed(setup.mc.seed, &[2, i as u64]));
        let surface = price_surface(setup.spot, var, &mg, &[setup.maturity_days], &contracts, &cfg)?;
        let prices = &surface[0];
        let call = |j: usize| prices[2 * j].estimate;
        let quoted = |j: usize, m: f64| match otm_kind(m) {
            OptionKind::Call => prices[2 * j].estimate,
            OptionKind::Put => prices[2 * j + 1].estimate,
        };

        let items = setup.moneyness.iter().enumerate().map(|(j, &m)| {
            let opt = OptionSpec { spot: setup.spot, strike: strikes[j], tau_cal: tau, kind: otm_kind(m), variance: var };
            (opt, quoted(j, m))
        });
        let quotes = QuoteSet::from_prices(items, mg.r, 0.0)?;
        let initial = PertTheta { kappa: mg.kappa, xi: mg.xi, alpha: mg.alpha, sigma: v };
        let fit = calibrate(&quotes, &initial, FreeParams::SIGMA_ONLY, opts)?;
        rows.push(StaticRow {
            v_init: v,
            sigma_hat: fit.theta.sigma,
            ivrmse: fit.ivrmse,
            n_quotes: fit.n_quotes_used,
            dropped: quotes.dropped(),
            converged: fit.converged,
        });

        let (pert, deriv) = fit.theta.model(mg.r)?;
        let curve = setup
            .moneyness
            .iter()
            .enumerate()
            .map(|(j, &m)| {
                let call_opt = OptionSpec { spot: setup.spot, strike: strikes[j], tau_cal: tau, kind: OptionKind::Call, variance: var };
                let quote_opt = call_opt.with_kind(otm_kind(m));
                let c = price_with_derived(&call_opt, &pert, &deriv, mg.r)?;
                let q = price_with_derived(&quote_opt, &pert, &deriv, mg.r)?;
                Ok(FigurePoint {
                    moneyness: m,
                    log_price_diff: (call(j) / c.total).ln(),
                    iv_mc: implied_vol(quoted(j, m), &quote_opt, mg.r).unwrap_or(f64::NAN),
                    iv_pert: implied_vol(q.total, &quote_opt, mg.r).unwrap_or(f64::NAN),
                    c1_ratio: c.c1 / c.total,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        curves.push(curve);
    }
    Ok(StaticReport { rows, curves })
}

/// The four simulation truths; the rate is zero throughout.
pub fn dataset_params(id: u8) -> Result<MgParams> {
    let (theta, rho) = match id {
        1 => (0.0823, -0.5459),
        2 => (0.0823, 0.0),
        3 => (0.0823, 0.5459),
        4 => (0.1250, -0.5459),
        _ => return Err(crate::Error::InvalidParameter { name: "dataset", value: id as f64, reason: "must be 1, 2, 3 or 4" }),
    };
    MgParams::new(1.1768, theta, 0.3, rho, 1.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSummary {
    pub dataset: u8,
    pub param: &'static str,
    #[serde(rename = "true")]
    pub truth: Option<f64>,
    pub mean: f64,
    pub bias: Option<f64>,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesReport {
    pub dataset: u8,
    pub truth: MgParams,
    pub fits: Vec<CalibResult>,
    pub dropped_quotes: usize,
    pub params: Vec<ParamSummary>,
    pub ivrmse_mean: f64,
    pub ivrmse_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn path_quotes(panel: &Panel, path_id: usize, r: f64) -> Result<QuoteSet> {
    let items: Vec<(OptionSpec, f64)> = panel
        .path(path_id)
        .flat_map(|o| {
            o.quotes.iter().map(move |q| {
                let opt = OptionSpec {
                    spot: o.spot,
                    strike: q.strike,
                    tau_cal: q.maturity_days as f64 / DAYS_PER_YEAR,
                    kind: q.kind(),
                    variance: o.v_true,
                };
                (opt, q.mc_price)
            })
        })
        .collect();
    QuoteSet::from_prices(items, r, 0.0)
}

/// Simulated panel, one full calibration per sample path, and the summary
/// statistics across paths.
pub fn run_timeseries_experiment(dataset: u8, spec: &TimeSeriesSpec, seed: u64, opts: &NelderMeadOptions) -> Result<TimeSeriesReport> {
    let truth = dataset_params(dataset)?;
    let panel = generate_time_series(spec, &truth, seed)?;
    let initial = PertTheta { kappa: truth.kappa, xi: truth.xi, alpha: truth.alpha, sigma: spec.v0.sqrt() };
    let fitted: Result<Vec<(CalibResult, usize)>> = (0..spec.n_sample_paths)
        .into_par_iter()
        .map(|p| {
            let quotes = path_quotes(&panel, p, truth.r)?;
            Ok((calibrate(&quotes, &initial, FreeParams::ALL, opts)?, quotes.dropped()))
        })
        .collect();
    let fitted = fitted?;
    let dropped_quotes = fitted.iter().map(|f| f.1).sum();
    let fits: Vec<CalibResult> = fitted.into_iter().map(|f| f.0).collect();

    let column = |f: &dyn Fn(&PertTheta) -> f64| fits.iter().map(|c| f(&c.theta)).collect::<Vec<_>>();
    let summary = |param: &'static str, values: Vec<f64>, truth: Option<f64>| {
        let (mean, std) = mean_std(&values);
        ParamSummary { dataset, param, truth, mean, bias: truth.map(|t| mean - t), std }
    };
    let params = vec![
        summary("kappa", column(&|t| t.kappa), Some(truth.kappa)),
        summary("xi", column(&|t| t.xi), Some(truth.xi)),
        summary("alpha", column(&|t| t.alpha), Some(truth.alpha)),
        summary("sigma2", column(&|t| t.sigma * t.sigma), None),
    ];
    let (ivrmse_mean, ivrmse_std) = mean_std(&fits.iter().map(|f| f.ivrmse).collect::<Vec<_>>());
    Ok(TimeSeriesReport { dataset, truth, fits, dropped_quotes, params, ivrmse_mean, ivrmse_std })
}

pub fn write_table1_csv<W: Write>(out: W, rows: &[StaticRow]) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        v_init: f64,
        sigma_hat: f64,
        ivrmse: f64,
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(Row { v_init: r.v_init, sigma_hat: r.sigma_hat, ivrmse: r.ivrmse })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_figure_csv<W: Write>(out: W, curve: &[FigurePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table2_csv<W: Write>(out: W, rows: &[ParamSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table3_csv<W: Write>(out: W, reports: &[&TimeSeriesReport]) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        dataset: u8,
        ivrmse_mean: f64,
        ivrmse_std: f64,
    }
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(Row { dataset: r.dataset, ivrmse_mean: r.ivrmse_mean, ivrmse_std: r.ivrmse_std })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datasets() {
        assert_eq!(dataset_params(2).unwrap().rho, 0.0);
        assert_eq!(dataset_params(4).unwrap().theta, 0.125);
        assert!(dataset_params(5).is_err());
    }

    #[test]
    fn small_static_run() {
        let setup = StaticSetup {
            v_grid: vec![0.18],
            moneyness: vec![0.95, 1.0, 1.05],
            mc: McConfig { n_paths: 20_000, steps_per_day: 2, ..McConfig::default() },
            ..StaticSetup::default()
        };
        let report = run_static_experiment(&setup, &NelderMeadOptions::default()).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.curves[0].len(), 3);
        let row = report.rows[0];
        assert!((row.sigma_hat - 0.173).abs() < 0.03, "{row:?}");
        assert!(report.curves[0].iter().all(|p| p.c1_ratio.abs() < 0.05));
        let mut buf = Vec::new();
        write_table1_csv(&mut buf, &report.rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("v_init,sigma_hat,ivrmse\n"));
        let mut buf = Vec::new();
        write_figure_csv(&mut buf, &report.curves[0]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("moneyness,log_price_diff,iv_mc,iv_pert,c1_ratio\n"));
    }

    #[test]
    fn small_timeseries_run() {
        let mut spec = TimeSeriesSpec::desk_scale();
        spec.n_sample_paths = 2;
        spec.n_obs = 2;
        spec.maturities_days = vec![30, 60];
        spec.path_steps_per_day = 2;
        spec.option_mc = McConfig { n_paths: 4000, steps_per_day: 2, ..spec.option_mc };
        let opts = NelderMeadOptions { max_iters: 60, ..NelderMeadOptions::default() };
        let a = run_timeseries_experiment(1, &spec, 3, &opts).unwrap();
        let b = run_timeseries_experiment(1, &spec, 3, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fits.len(), 2);
        assert_eq!(a.params.len(), 4);
        let mut buf = Vec::new();
        write_table2_csv(&mut buf, &a.params).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("dataset,param,true,mean,bias,std\n"), "{text}");
        assert!(text.contains("\n1,sigma2,,"));
        let mut buf = Vec::new();
        write_table3_csv(&mut buf, &[&a]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("dataset,ivrmse_mean,ivrmse_std\n"));
    }
}
