use std::path::PathBuf;

use mgpert::analytic::price_with_derived;
use mgpert::calibration::{
    dataset_params, run_static_experiment, run_timeseries_experiment, write_figure_csv, write_table1_csv,
    write_table2_csv, write_table3_csv, NelderMeadOptions, StaticSetup, TimeSeriesReport,
};
use mgpert::heat_kernel::{
    heat_residual, oracle_row, psi0_value, psi1_quadrature_single, psi1_residual, write_oracle_csv,
    AnnihilationReport, BreakingTerms, DerivativeScheme, OracleRow, QuadratureConfig,
};
use mgpert::monte_carlo::{price_option_mc, McConfig, TimeSeriesSpec};
use mgpert::params::to_heat_coords;
use mgpert::{derive_params, implied_vol, HeatCoords, MgParams, OptionKind, OptionSpec, PerturbParams};

use crate::args::{ContractArgs, McArgs, McPriceArgs, ModelArgs, OracleArgs, PertArgs, PriceArgs, StaticArgs, TimeseriesArgs};
use crate::config::{pick, FileConfig, Record};
use crate::output::{ensure_dir, header_line, json_object, write_file};
use crate::CliError;

const DEFAULT_SEED: u64 = 20_240_917;
const DEFAULT_SIGMA: f64 = 0.18;
const ORACLE_REL_TOL: f64 = 1e-3;
const ORACLE_ABS_TOL: f64 = 5e-3;
const ANNIHILATION_TOL: f64 = 1e-6;
const MIN_ORDER: f64 = 1.9;

struct Model {
    kappa: f64,
    theta: f64,
    xi: f64,
    rho: f64,
    alpha: f64,
    rate: f64,
}

impl Model {
    fn resolve(a: &ModelArgs, f: &FileConfig) -> Self {
        Self {
            kappa: pick(&a.kappa, &f.kappa, 1.5),
            theta: pick(&a.theta, &f.theta, 0.08),
            xi: pick(&a.xi, &f.xi, 1.5),
            rho: pick(&a.rho, &f.rho, -0.5),
            alpha: pick(&a.alpha, &f.alpha, 1.0),
            rate: pick(&a.rate, &f.rate, 0.0),
        }
    }

    fn record(&self, rec: &mut Record) {
        rec.put("kappa", self.kappa);
        rec.put("theta", self.theta);
        rec.put("xi", self.xi);
        rec.put("rho", self.rho);
        rec.put("alpha", self.alpha);
        rec.put("rate", self.rate);
    }

    fn params(&self) -> mgpert::Result<MgParams> {
        MgParams::new(self.kappa, self.theta, self.xi, self.rho, self.alpha, self.rate)
    }

    fn simulation_params(&self) -> mgpert::Result<MgParams> {
        MgParams::for_simulation(self.kappa, self.theta, self.xi, self.rho, self.alpha, self.rate)
    }
}

struct Contract {
    spot: f64,
    strike: f64,
    days: f64,
    variance: f64,
    kind: OptionKind,
}

impl Contract {
    fn resolve(a: &ContractArgs, f: &FileConfig) -> Self {
        Self {
            spot: pick(&a.spot, &f.spot, 100.0),
            strike: pick(&a.strike, &f.strike, 100.0),
            days: pick(&a.days, &f.days, 30.0),
            variance: pick(&a.variance, &f.variance, 0.0324),
            kind: pick(&a.kind, &f.kind, OptionKind::Call),
        }
    }

    fn spec(&self) -> mgpert::Result<OptionSpec> {
        OptionSpec::from_days(self.spot, self.strike, self.days, self.kind, self.variance)
    }
}

fn resolve_mc(a: &McArgs, f: &FileConfig, default: McConfig) -> McConfig {
    McConfig {
        n_paths: pick(&a.paths, &f.paths, default.n_paths),
        steps_per_day: pick(&a.steps_per_day, &f.steps_per_day, default.steps_per_day),
        antithetic: pick(&a.antithetic, &f.antithetic, default.antithetic),
        stratified: pick(&a.stratified, &f.stratified, default.stratified),
        n_strata: pick(&a.n_strata, &f.n_strata, default.n_strata),
        seed: pick(&a.seed, &f.seed, default.seed),
    }
}

fn record_mc(cfg: &McConfig, rec: &mut Record) {
    rec.put("paths", cfg.n_paths);
    rec.put("steps_per_day", cfg.steps_per_day);
    rec.put("antithetic", cfg.antithetic);
    rec.put("stratified", cfg.stratified);
    rec.put("n_strata", cfg.n_strata);
    rec.put("seed", cfg.seed);
}

fn resolve_pert(a: &PertArgs, f: &FileConfig, mg: &MgParams) -> mgpert::Result<PerturbParams> {
    let sigma = pick(&a.sigma, &f.sigma, DEFAULT_SIGMA);
    PerturbParams::linked(mg, sigma)?.with_v0(pick(&a.v0, &f.v0, 1.0))
}

pub fn price(a: &PriceArgs, f: &FileConfig) -> Result<String, CliError> {
    let model = Model::resolve(&a.model, f);
    let contract = Contract::resolve(&a.contract, f);
    let mg = model.params()?;
    let opt = contract.spec()?;
    let pert = resolve_pert(&a.pert, f, &mg)?;
    let deriv = derive_params(&mg, &pert)?;
    let p = price_with_derived(&opt, &pert, &deriv, mg.r)?;
    let iv = if opt.tau_cal > 0.0 { implied_vol(p.total, &opt, mg.r).unwrap_or(f64::NAN) } else { f64::NAN };
    Ok(json_object(&[("c0", p.c0), ("c1", p.c1), ("total", p.total), ("d1", p.d1), ("d2", p.d2), ("implied_vol", iv)]) + "\n")
}

pub fn mc_price(a: &McPriceArgs, f: &FileConfig) -> Result<String, CliError> {
    let model = Model::resolve(&a.model, f);
    let contract = Contract::resolve(&a.contract, f);
    let cfg = resolve_mc(&a.mc, f, McConfig { n_paths: 100_000, seed: DEFAULT_SEED, ..McConfig::default() });
    let mg = model.simulation_params()?;
    let p = price_option_mc(&contract.spec()?, &mg, &cfg)?;
    Ok(json_object(&[("estimate", p.estimate), ("std_error", p.std_error)]) + "\n")
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Observed order from the L2 norms of residuals at steps `h` and `h / 2`.
fn observed_order(coarse: &[f64], fine: &[f64]) -> f64 {
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm(coarse) / norm(fine)).log2()
}

pub struct OracleOutcome {
    pub stdout: String,
    pub failures: Vec<String>,
}

pub fn oracle_check(a: &OracleArgs, f: &FileConfig) -> Result<OracleOutcome, CliError> {
    let model = Model::resolve(&a.model, f);
    let mg = model.params()?;
    let pert = resolve_pert(&a.pert, f, &mg)?;
    let deriv = derive_params(&mg, &pert)?;
    let spot = pick(&a.spot, &f.spot, 100.0);
    let days = pick(&a.days, &f.days, 30.0);
    let grid = pick(&a.grid, &f.grid, 5);
    let draws = pick(&a.draws, &f.draws, 10_000);
    let seed = pick(&a.seed, &f.seed, DEFAULT_SEED);
    let base = QuadratureConfig::default();
    let nodes = pick(&a.nodes, &f.nodes, base.spatial_nodes);
    let mut qcfg = QuadratureConfig {
        spatial_nodes: nodes,
        time_nodes: pick(&a.time_nodes, &f.time_nodes, nodes),
        half_width: pick(&a.half_width, &f.half_width, base.half_width),
        rel_tol: pick(&a.rel_tol, &f.rel_tol, base.rel_tol),
        ..base
    };
    qcfg.scheme.h = pick(&a.fd_step, &f.fd_step, base.scheme.h);
    qcfg.validate()?;
    if grid < 1 {
        return Err(CliError::Usage("--grid must be >= 1".into()));
    }

    let mut rec = Record::new("oracle-check");
    model.record(&mut rec);
    rec.put("sigma", pert.sigma);
    rec.put("v0", pert.v0);
    rec.put("spot", spot);
    rec.put("days", days);
    rec.put("grid", grid);
    rec.put("nodes", qcfg.spatial_nodes);
    rec.put("time_nodes", qcfg.time_nodes);
    rec.put("half_width", qcfg.half_width);
    rec.put("fd_step", qcfg.scheme.h);
    rec.put("rel_tol", qcfg.rel_tol);
    rec.put("draws", draws);
    rec.put("seed", seed);

    let mut rows: Vec<OracleRow> = Vec::new();
    let mut coords: Vec<HeatCoords> = Vec::new();
    for vol in linspace(0.10, 0.35, grid) {
        for m in linspace(0.9, 1.1, grid) {
            let opt = OptionSpec::from_days(spot, m * spot, days, OptionKind::Call, vol * vol)?;
            coords.push(to_heat_coords(&opt, &pert)?);
            rows.push(oracle_row(&opt, &mg, &pert, &qcfg)?);
        }
    }
    let mut failures = Vec::new();
    let mut worst_rel = 0.0f64;
    for r in &rows {
        let limit = (ORACLE_REL_TOL * r.c1_closed_form.abs()).max(ORACLE_ABS_TOL);
        worst_rel = worst_rel.max(r.abs_err / limit);
        if !(r.abs_err <= limit) {
            failures.push(format!("quadrature C1 off by {:e} at x={:.6} y={:.6}", r.abs_err, r.x, r.y));
        }
    }

    // residual orders; steps scale with tau so the difference quotients stay resolved
    let tau = coords[0].tau;
    let (h1, h2) = (tau / 8.0, tau / 16.0);
    let psi0_res = |h: f64| -> Vec<f64> {
        coords.iter().map(|c| heat_residual(|x, y, t| psi0_value(x, y, t, &deriv), c, h)).collect()
    };
    let psi1_res = |h: f64| -> Vec<f64> { coords.iter().map(|c| psi1_residual(c, &mg, &pert, &deriv, h)).collect() };
    let order0 = observed_order(&psi0_res(h1), &psi0_res(h2));
    let order1 = observed_order(&psi1_res(h1), &psi1_res(h2));
    for (name, order) in [("psi0", order0), ("psi1", order1)] {
        if !(order >= MIN_ORDER) {
            failures.push(format!("{name} residual order {order:.3} below {MIN_ORDER}"));
        }
    }

    let sweep = AnnihilationReport::sweep(draws, seed, &DerivativeScheme::default());
    if !sweep.passes(ANNIHILATION_TOL) {
        failures.push(format!(
            "symmetry-breaking terms not negligible: c2 {:e} c3 {:e} c4 {:e}",
            sweep.max_c2, sweep.max_c3, sweep.max_c4
        ));
    }

    // all four terms against c1 alone at the grid centre
    let centre = coords[coords.len() / 2];
    let all = psi1_quadrature_single(&centre, &mg, &pert, &deriv, &BreakingTerms::ALL, &qcfg);
    let c1_only = psi1_quadrature_single(&centre, &mg, &pert, &deriv, &BreakingTerms::C1_ONLY, &qcfg);
    let terms_gap = (all - c1_only).abs() / c1_only.abs().max(f64::MIN_POSITIVE);
    if !(terms_gap <= ANNIHILATION_TOL) {
        failures.push(format!("all-terms quadrature differs from c1-only by {terms_gap:e}"));
    }

    let summary = format!(
        "# summary rows={} worst_err_over_limit={:.6e} psi0_order={:.4} psi1_order={:.4} draws={} max_c2={:.3e} max_c3={:.3e} max_c4={:.3e} terms_gap={:.3e} status={}\n",
        rows.len(),
        worst_rel,
        order0,
        order1,
        sweep.draws,
        sweep.max_c2,
        sweep.max_c3,
        sweep.max_c4,
        terms_gap,
        if failures.is_empty() { "pass" } else { "fail" },
    );

    let out = a.out.clone().or_else(|| f.out.clone());
    let stdout = match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                ensure_dir(dir)?;
            }
            write_file(&path, &rec, |w| write_oracle_csv(w, &rows))?;
            summary
        }
        None => {
            let mut buf = header_line(&rec).into_bytes();
            write_oracle_csv(&mut buf, &rows)?;
            String::from_utf8(buf).expect("csv output is utf-8") + &summary
        }
    };
    Ok(OracleOutcome { stdout, failures })
}

fn out_dir(flag: &Option<PathBuf>, f: &FileConfig) -> Result<PathBuf, CliError> {
    let dir = pick(flag, &f.out, PathBuf::from("out"));
    ensure_dir(&dir)?;
    Ok(dir)
}

pub fn experiment_static(a: &StaticArgs, f: &FileConfig) -> Result<String, CliError> {
    let model = Model::resolve(&a.model, f);
    let base = StaticSetup::default();
    let setup = StaticSetup {
        mg: model.params()?,
        v_grid: pick(&a.v_grid, &f.v_grid, base.v_grid.clone()),
        maturity_days: pick(&a.maturity_days, &f.maturity_days, base.maturity_days),
        mc: resolve_mc(&a.mc, f, McConfig { seed: DEFAULT_SEED, ..base.mc }),
        ..base
    };
    setup.validate()?;
    let dir = out_dir(&a.out, f)?;
    let mut rec = Record::new("experiment static");
    model.record(&mut rec);
    rec.put("v_grid", &setup.v_grid);
    rec.put("maturity_days", setup.maturity_days);
    rec.put("moneyness", &setup.moneyness);
    rec.put("spot", setup.spot);
    record_mc(&setup.mc, &mut rec);

    let report = run_static_experiment(&setup, &NelderMeadOptions::default())?;
    write_file(&dir.join("table1.csv"), &rec, |w| write_table1_csv(w, &report.rows))?;
    for (v, curve) in setup.v_grid.iter().zip(&report.curves) {
        write_file(&dir.join(format!("figure_v{v:.2}.csv")), &rec, |w| write_figure_csv(w, curve))?;
    }

    let mut s = format!("{:>8} {:>10} {:>10} {:>7} {:>13}\n", "v_init", "sigma_hat", "ivrmse", "quotes", "max|C1/C|");
    for (row, curve) in report.rows.iter().zip(&report.curves) {
        let ratio = curve.iter().map(|p| p.c1_ratio.abs()).fold(0.0, f64::max);
        s += &format!(
            "{:>8.4} {:>10.6} {:>10.6} {:>7} {:>13.3e}\n",
            row.v_init, row.sigma_hat, row.ivrmse, row.n_quotes, ratio
        );
    }
    Ok(s)
}

pub fn experiment_timeseries(a: &TimeseriesArgs, f: &FileConfig) -> Result<String, CliError> {
    let datasets = pick(&a.dataset, &f.dataset, vec![1]);
    let full = if a.full {
        true
    } else if a.desk_scale {
        false
    } else {
        f.full.unwrap_or(false)
    };
    let mut spec = if full { TimeSeriesSpec::full_scale() } else { TimeSeriesSpec::desk_scale() };
    spec.n_sample_paths = pick(&a.sample_paths, &f.sample_paths, spec.n_sample_paths);
    spec.n_obs = pick(&a.obs, &f.obs, spec.n_obs);
    spec.option_mc.n_paths = pick(&a.sims, &f.sims, spec.option_mc.n_paths);
    let seed = pick(&a.seed, &f.seed, DEFAULT_SEED);
    spec.validate()?;
    for &d in &datasets {
        dataset_params(d)?;
    }
    let dir = out_dir(&a.out, f)?;

    let mut rec = Record::new("experiment timeseries");
    rec.put("dataset", &datasets);
    rec.put("sample_paths", spec.n_sample_paths);
    rec.put("obs", spec.n_obs);
    rec.put("obs_interval_days", spec.obs_interval_days);
    rec.put("maturities_days", &spec.maturities_days);
    rec.put("moneyness", &spec.moneyness);
    rec.put("s0", spec.s0);
    rec.put("v0", spec.v0);
    rec.put("path_steps_per_day", spec.path_steps_per_day);
    record_mc(&spec.option_mc, &mut rec);
    rec.put("seed", seed);

    let opts = NelderMeadOptions::default();
    let reports: Vec<TimeSeriesReport> =
        datasets.iter().map(|&d| run_timeseries_experiment(d, &spec, seed, &opts)).collect::<mgpert::Result<_>>()?;
    let params: Vec<_> = reports.iter().flat_map(|r| r.params.iter().copied()).collect();
    write_file(&dir.join("table2.csv"), &rec, |w| write_table2_csv(w, &params))?;
    let refs: Vec<&TimeSeriesReport> = reports.iter().collect();
    write_file(&dir.join("table3.csv"), &rec, |w| write_table3_csv(w, &refs))?;

    let mut s = format!("{:>7} {:>8} {:>10} {:>10} {:>10} {:>10}\n", "dataset", "param", "true", "mean", "bias", "std");
    for p in &params {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        s += &format!(
            "{:>7} {:>8} {:>10} {:>10.4} {:>10} {:>10.4}\n",
            p.dataset,
            p.param,
            opt(p.truth),
            p.mean,
            opt(p.bias),
            p.std
        );
    }
    s += &format!("{:>7} {:>12} {:>12} {:>8}\n", "dataset", "ivrmse_mean", "ivrmse_std", "dropped");
    for r in &reports {
        s += &format!("{:>7} {:>12.6} {:>12.6} {:>8}\n", r.dataset, r.ivrmse_mean, r.ivrmse_std, r.dropped_quotes);
    }
    Ok(s)
}
