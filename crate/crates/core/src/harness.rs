//! Monte-Carlo runners for the four experiments and the command-line front end.
//!
//! Every trial draws its data and estimator seeds from
//! `derive_key(base_seed, "harness/<figure>", [grid_index, trial])`, trials are
//! collected in index order and reduced sequentially, so results do not depend
//! on the number of worker threads.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    bound_mce_g, bound_mce_l, error_bound, optimize_alpha, rho_from_report, BoundInputs, RhoMode,
};
use crate::datagen::{
    gen_fir_dataset, gen_unit_dataset, noise_statistics, snr_db, NoiseModel, RegressionDataset,
};
use crate::error::{Error, Result};
use crate::estimators::{lad_fit, mce_fit, ols_fit, EstimatorConfig, FitResult, Init};
use crate::io;
use crate::kernels::LossSpec;
use crate::numkit::Regressors;
use crate::richness::{
    normalize_columns, rho_exact_2d, rho_sampled, rho_upper, richness_report, sigma_heuristic,
    sigma_lower, v_alpha, RichnessOptions, RichnessReport, SigmaSource,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

impl Figure {
    pub fn tag(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
        }
    }
}

/// Value of `r_x` plugged into the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RxMode {
    /// Equations read as divided by `||x_t||`, so `r_x = 1`.
    Unit,
    /// `min_t ||x_t||` of the generated data.
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub figure: Figure,
    pub trials: usize,
    /// Sweep values: epsilon (fig1, fig3), alpha (fig2) or N (fig4).
    pub grid: Vec<f64>,
    pub theta: Vec<f64>,
    /// Samples per dataset (fig1).
    pub n_samples: usize,
    /// Dense-noise level (fig4).
    pub epsilon: f64,
    pub outlier_frac: f64,
    /// Fixed kernel scales (fig1).
    pub gamma1: f64,
    pub gamma2: f64,
    /// `gamma * l(eps)` held fixed while gamma follows eps (fig3, fig4).
    pub z: f64,
    pub alpha: f64,
    /// Constants for the data-free bound curves (fig3).
    pub inlier_frac: f64,
    pub rho: f64,
    pub rho_mode: RhoMode,
    pub rx_mode: RxMode,
    /// `(n, N)` regressor designs (fig2).
    pub designs: Vec<(usize, usize)>,
    pub sigma_source: SigmaSource,
    /// Random directions for the sampled rho (fig2, `n >= 3`).
    pub n_directions: usize,
    pub estimator: EstimatorConfig,
    pub seed: u64,
}

fn decimal_grid(lo: u32, hi: u32, step: u32, scale: f64) -> Vec<f64> {
    (lo..=hi)
        .step_by(step as usize)
        .map(|k| k as f64 / scale)
        .collect()
}

impl ExperimentSpec {
    /// CI-sized defaults.
    pub fn desk(figure: Figure) -> Self {
        let mut s = Self {
            figure,
            trials: 100,
            grid: Vec::new(),
            theta: vec![0.5, -1.0, 0.2],
            n_samples: 300,
            epsilon: 0.05,
            outlier_frac: 0.1,
            gamma1: 0.5,
            gamma2: 0.25,
            z: 0.2,
            alpha: 0.6,
            inlier_frac: 0.8,
            rho: 0.8,
            rho_mode: RhoMode::Midpoint,
            rx_mode: RxMode::Unit,
            designs: vec![(2, 200), (3, 1000)],
            sigma_source: SigmaSource::Certified,
            n_directions: 10_000,
            estimator: EstimatorConfig::default(),
            seed: 0,
        };
        match figure {
            Figure::Fig1 => {
                s.grid = decimal_grid(0, 16, 2, 10.0);
                s.outlier_frac = 0.5;
            }
            Figure::Fig2 => s.grid = decimal_grid(5, 95, 5, 100.0),
            Figure::Fig3 => s.grid = decimal_grid(1, 16, 1, 10.0),
            Figure::Fig4 => s.grid = vec![200.0, 500.0, 1000.0, 2000.0],
        }
        s
    }

    /// Sizes used for the published figures.
    pub fn paper(figure: Figure) -> Self {
        let mut s = Self::desk(figure);
        s.trials = 1000;
        match figure {
            Figure::Fig1 => s.grid = decimal_grid(0, 16, 1, 10.0),
            Figure::Fig2 => s.designs = vec![(2, 200), (3, 6000)],
            Figure::Fig3 => {}
            Figure::Fig4 => s.grid = decimal_grid(500, 5000, 500, 1.0),
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidConfig(what));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if self.grid.iter().any(|g| !g.is_finite()) {
            return bad("grid values must be finite".into());
        }
        if self.theta.is_empty() {
            return bad("theta must be nonempty".into());
        }
        self.estimator.validate()?;
        match self.figure {
            Figure::Fig1 => NoiseModel::new(self.grid[0], self.outlier_frac).validate()?,
            Figure::Fig2 => {
                if self.designs.is_empty()
                    || self.designs.iter().any(|&(n, big_n)| n < 2 || big_n < n)
                {
                    return bad("fig2 designs need 2 <= n <= N".into());
                }
                if self.grid.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
                    return bad("fig2 alpha grid must lie in (0, 1)".into());
                }
            }
            Figure::Fig3 | Figure::Fig4 => {
                if !(self.z > 0.0) {
                    return bad("z must be > 0".into());
                }
                if !(self.alpha > 0.0 && self.alpha <= 1.0) {
                    return bad("alpha must lie in (0, 1]".into());
                }
            }
        }
        if self.figure == Figure::Fig3 && self.grid.iter().any(|e| !(*e > 0.0)) {
            return bad("fig3 epsilon grid must be > 0".into());
        }
        if self.figure == Figure::Fig4 {
            if !(self.epsilon > 0.0) {
                return bad("fig4 epsilon must be > 0".into());
            }
            NoiseModel::new(self.epsilon, self.outlier_frac).validate()?;
            if self
                .grid
                .iter()
                .any(|n| n.fract() != 0.0 || *n < self.theta.len() as f64)
            {
                return bad("fig4 grid holds sample sizes >= dim(theta)".into());
            }
        }
        Ok(())
    }
}

/// One CSV cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Empty,
    Int(u64),
    Num(f64),
}

impl Cell {
    pub fn as_f64(self) -> Option<f64> {
        match self {
            Cell::Empty => None,
            Cell::Int(v) => Some(v as f64),
            Cell::Num(v) => Some(v),
        }
    }

    fn render(self) -> String {
        match self {
            Cell::Empty => String::new(),
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => io::fmt_num(v),
        }
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub figure: Figure,
    pub trials: usize,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl MonteCarloResult {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k].as_f64()).collect())
    }

    pub fn to_csv(&self) -> String {
        let header: Vec<&str> = self.header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|c| c.render()).collect())
            .collect();
        io::render_csv(&header, &rows)
    }
}

/// Mean and 10/50/90% quantiles (linear interpolation between order statistics).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (sorted.len() - 1) as f64;
        let (lo, frac) = (h.floor() as usize, h - h.floor());
        let hi = (lo + 1).min(sorted.len() - 1);
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    };
    Some(Summary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        q10: q(0.1),
        q50: q(0.5),
        q90: q(0.9),
    })
}

pub fn trial_seed(base: u64, figure: Figure, grid_index: usize, trial: usize) -> u64 {
    rng::derive_key(
        base,
        &format!("harness/{}", figure.tag()),
        &[grid_index as u64, trial as u64],
    )
}

/// Tolerated objective drop per MM step (rounding only).
pub const MM_SLACK: f64 = 1e-12;

fn trial_config(spec: &ExperimentSpec, seed: u64) -> EstimatorConfig {
    EstimatorConfig {
        seed,
        ..spec.estimator.clone()
    }
}

/// Runs `f` for every trial, in parallel, returning results in trial order.
fn run_trials<T: Send>(
    spec: &ExperimentSpec,
    grid_index: usize,
    f: impl Fn(u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..spec.trials)
        .into_par_iter()
        .map(|k| f(trial_seed(spec.seed, spec.figure, grid_index, k)))
        .collect()
}

fn push_summary_columns(header: &mut Vec<String>, names: &[&str]) {
    for q in ["q10", "q50", "q90"] {
        for n in names {
            header.push(format!("{n}_{q}"));
        }
    }
}

fn summary_cells(summaries: &[Summary]) -> Vec<Cell> {
    let mut out = Vec::new();
    for pick in [
        |s: &Summary| s.q10,
        |s: &Summary| s.q50,
        |s: &Summary| s.q90,
    ] {
        out.extend(summaries.iter().map(|s| Cell::Num(pick(s))));
    }
    out
}

fn column(values: &[[f64; 3]], k: usize) -> Vec<f64> {
    values.iter().map(|v| v[k]).collect()
}

/// Errors of MCE-L, MCE-G and LAD against epsilon at a fixed outlier share.
pub fn run_fig1(spec: &ExperimentSpec) -> Result<MonteCarloResult> {
    spec.validate()?;
    let laplace = LossSpec::laplacian(spec.gamma1)?;
    let gauss = LossSpec::gaussian(spec.gamma2)?;
    let mut header: Vec<String> = ["epsilon", "snr_db", "err_mce_l", "err_mce_g", "err_lad"]
        .map(String::from)
        .to_vec();
    push_summary_columns(&mut header, &["err_mce_l", "err_mce_g", "err_lad"]);
    header.push("trials".into());
    header.push("mm_monotone".into());
    let mut rows = Vec::new();
    for (gi, &eps) in spec.grid.iter().enumerate() {
        let noise = NoiseModel::new(eps, spec.outlier_frac);
        let fits = run_trials(spec, gi, |seed| {
            let ds = gen_fir_dataset(&spec.theta, spec.n_samples, &noise, seed)?;
            let cfg = trial_config(spec, seed);
            let l = mce_fit(&ds, &laplace, &cfg)?;
            let g = mce_fit(&ds, &gauss, &cfg)?;
            let monotone = l.trace_monotone(MM_SLACK) && g.trace_monotone(MM_SLACK);
            Ok((
                [
                    l.error_to(&spec.theta),
                    g.error_to(&spec.theta),
                    lad_fit(&ds, &cfg)?.error_to(&spec.theta),
                ],
                monotone,
            ))
        })?;
        let errs: Vec<[f64; 3]> = fits.iter().map(|f| f.0).collect();
        let s: Vec<Summary> = (0..3)
            .map(|k| summarize(&column(&errs, k)).expect("trials >= 1"))
            .collect();
        let mut row = vec![Cell::Num(eps), Cell::Num(snr_db(&spec.theta, eps))];
        row.extend(s.iter().map(|s| Cell::Num(s.mean)));
        row.extend(summary_cells(&s));
        row.push(Cell::Int(spec.trials as u64));
        row.push(Cell::Int(fits.iter().all(|f| f.1) as u64));
        rows.push(row);
    }
    Ok(MonteCarloResult {
        figure: Figure::Fig1,
        trials: spec.trials,
        header,
        rows,
    })
}

/// FIR regressor matrix of size `n x N` from a unit Gaussian input.
fn fir_design(n: usize, big_n: usize, seed: u64) -> Result<Regressors> {
    Ok(gen_fir_dataset(&vec![1.0; n], big_n, &NoiseModel::default(), seed)?.x)
}

/// Bracket of rho_alpha against alpha for each design.
pub fn run_fig2(spec: &ExperimentSpec) -> Result<MonteCarloResult> {
    spec.validate()?;
    let header: Vec<String> = [
        "alpha",
        "v_alpha",
        "rho_upper",
        "rho_exact",
        "sigma_lower",
        "sigma_heuristic",
        "n",
        "N",
        "rho_sampled",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for (di, &(n, big_n)) in spec.designs.iter().enumerate() {
        let seed = trial_seed(spec.seed, Figure::Fig2, di, 0);
        let nr = normalize_columns(&fir_design(n, big_n, seed)?)?;
        let s_lo = sigma_lower(&nr);
        let s_hi = sigma_heuristic(&nr, 8, seed)?.max(s_lo);
        let sigma = match spec.sigma_source {
            SigmaSource::Certified => s_lo,
            SigmaSource::Heuristic => s_hi,
        };
        let per_alpha: Vec<Vec<Cell>> = spec
            .grid
            .iter()
            .map(|&alpha| {
                let v = match v_alpha(&nr, alpha, sigma) {
                    Ok(v) => Some(v),
                    Err(Error::AlphaExceedsSigma { .. }) => None,
                    Err(e) => return Err(e),
                };
                let exact = if n == 2 {
                    Some(rho_exact_2d(&nr, alpha)?)
                } else {
                    None
                };
                let sampled = if n >= 3 && spec.n_directions > 0 {
                    Some(rho_sampled(&nr, alpha, spec.n_directions, seed)?)
                } else {
                    None
                };
                Ok(vec![
                    Cell::Num(alpha),
                    v.into(),
                    Cell::Num(rho_upper(&nr, alpha)?),
                    exact.into(),
                    Cell::Num(s_lo),
                    Cell::Num(s_hi),
                    Cell::Int(n as u64),
                    Cell::Int(big_n as u64),
                    sampled.into(),
                ])
            })
            .collect::<Result<_>>()?;
        rows.extend(per_alpha);
    }
    Ok(MonteCarloResult {
        figure: Figure::Fig2,
        trials: 1,
        header,
        rows,
    })
}

/// Bound curves against epsilon with `gamma * l(eps)` held at `z`.
pub fn run_fig3(spec: &ExperimentSpec) -> Result<MonteCarloResult> {
    spec.validate()?;
    let header: Vec<String> = ["epsilon", "bound_mce_l", "bound_mce_g"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for &eps in &spec.grid {
        let l = bound_mce_l(
            spec.z / eps,
            eps,
            spec.inlier_frac,
            spec.rho,
            spec.alpha,
            1.0,
        )?;
        let g = bound_mce_g(
            spec.z / (eps * eps),
            eps,
            spec.inlier_frac,
            spec.rho,
            spec.alpha,
            1.0,
        )?;
        rows.push(vec![Cell::Num(eps), l.bound.into(), g.bound.into()]);
    }
    Ok(MonteCarloResult {
        figure: Figure::Fig3,
        trials: 1,
        header,
        rows,
    })
}

/// `rho_alpha` estimate used by the bound in the given mode.
pub fn rho_for_mode(x: &Regressors, alpha: f64, mode: RhoMode, seed: u64) -> Result<Option<f64>> {
    let options = RichnessOptions {
        sigma_source: match mode {
            RhoMode::Certified => SigmaSource::Certified,
            RhoMode::Midpoint => SigmaSource::Heuristic,
        },
        n_samples: 0,
        sigma_starts: 8,
        seed,
    };
    Ok(rho_from_report(&richness_report(x, alpha, &options)?, mode))
}

struct Fig4Trial {
    err: [f64; 2],
    bound: Option<[f64; 2]>,
    rho: Option<f64>,
    inlier_frac: f64,
    monotone: bool,
}

/// Empirical errors against the bounds as N grows.
pub fn run_fig4(spec: &ExperimentSpec) -> Result<MonteCarloResult> {
    spec.validate()?;
    let eps = spec.epsilon;
    let (g1, g2) = (spec.z / eps, spec.z / (eps * eps));
    let laplace = LossSpec::laplacian(g1)?;
    let gauss = LossSpec::gaussian(g2)?;
    let mut header: Vec<String> = [
        "N",
        "err_mce_l",
        "err_mce_g",
        "bound_mce_l",
        "bound_mce_g",
        "log10_err_mce_l",
        "log10_err_mce_g",
        "log10_bound_mce_l",
        "log10_bound_mce_g",
        "condition_frac",
        "rho",
        "inlier_frac",
    ]
    .map(String::from)
    .to_vec();
    push_summary_columns(&mut header, &["err_mce_l", "err_mce_g"]);
    header.push("trials".into());
    header.push("mm_monotone".into());
    let noise = NoiseModel::new(eps, spec.outlier_frac);
    let mut rows = Vec::new();
    for (gi, &n_f) in spec.grid.iter().enumerate() {
        let big_n = n_f as usize;
        let trials = run_trials(spec, gi, |seed| {
            let ds = gen_fir_dataset(&spec.theta, big_n, &noise, seed)?;
            let cfg = trial_config(spec, seed);
            let l = mce_fit(&ds, &laplace, &cfg)?;
            let g = mce_fit(&ds, &gauss, &cfg)?;
            let err = [l.error_to(&spec.theta), g.error_to(&spec.theta)];
            let monotone = l.trace_monotone(MM_SLACK) && g.trace_monotone(MM_SLACK);
            let rho = rho_for_mode(&ds.x, spec.alpha, spec.rho_mode, seed)?;
            let (inlier_frac, _) = noise_statistics(&ds, eps)?;
            let r_x = match spec.rx_mode {
                RxMode::Unit => 1.0,
                RxMode::Data => normalize_columns(&ds.x)?.r_x(),
            };
            let bound = match rho {
                Some(rho) => {
                    let l = bound_mce_l(g1, eps, inlier_frac, rho, spec.alpha, r_x)?.bound;
                    let g = bound_mce_g(g2, eps, inlier_frac, rho, spec.alpha, r_x)?.bound;
                    l.zip(g).map(|(l, g)| [l, g])
                }
                None => None,
            };
            Ok(Fig4Trial {
                err,
                bound,
                rho,
                inlier_frac,
                monotone,
            })
        })?;
        let m = trials.len() as f64;
        let errs: Vec<Summary> = (0..2)
            .map(|k| {
                summarize(&trials.iter().map(|t| t.err[k]).collect::<Vec<_>>())
                    .expect("trials >= 1")
            })
            .collect();
        let ok: Vec<[f64; 2]> = trials.iter().filter_map(|t| t.bound).collect();
        let bounds: [Option<f64>; 2] = [0, 1].map(|k| {
            (!ok.is_empty()).then(|| ok.iter().map(|b| b[k]).sum::<f64>() / ok.len() as f64)
        });
        let rhos: Vec<f64> = trials.iter().filter_map(|t| t.rho).collect();
        let mean_rho = (!rhos.is_empty()).then(|| rhos.iter().sum::<f64>() / rhos.len() as f64);
        let mut row = vec![
            Cell::Int(big_n as u64),
            Cell::Num(errs[0].mean),
            Cell::Num(errs[1].mean),
            bounds[0].into(),
            bounds[1].into(),
            Cell::Num(errs[0].mean.log10()),
            Cell::Num(errs[1].mean.log10()),
            bounds[0].map(f64::log10).into(),
            bounds[1].map(f64::log10).into(),
            Cell::Num(ok.len() as f64 / m),
            mean_rho.into(),
            Cell::Num(trials.iter().map(|t| t.inlier_frac).sum::<f64>() / m),
        ];
        row.extend(summary_cells(&errs));
        row.push(Cell::Int(spec.trials as u64));
        row.push(Cell::Int(trials.iter().all(|t| t.monotone) as u64));
        rows.push(row);
    }
    Ok(MonteCarloResult {
        figure: Figure::Fig4,
        trials: spec.trials,
        header,
        rows,
    })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<MonteCarloResult> {
    match spec.figure {
        Figure::Fig1 => run_fig1(spec),
        Figure::Fig2 => run_fig2(spec),
        Figure::Fig3 => run_fig3(spec),
        Figure::Fig4 => run_fig4(spec),
    }
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(
    name = "correntropy",
    version,
    about = "Maximum-correntropy robust regression toolkit"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat key-value config file; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV plus JSON sidecar).
    #[command(args_override_self = true)]
    Gen(GenArgs),
    /// Fit an estimator to a dataset CSV.
    #[command(args_override_self = true)]
    Fit(FitArgs),
    /// Informativity report for a regressor matrix.
    #[command(args_override_self = true)]
    Richness(RichnessArgs),
    /// Stability condition and error bound.
    #[command(args_override_self = true)]
    Bound(BoundArgs),
    /// Monte-Carlo reproduction of a figure as CSV.
    #[command(args_override_self = true)]
    Mc(McArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Design {
    Fir,
    Unit,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    theta: Vec<f64>,
    #[arg(long, default_value_t = 300)]
    n_samples: usize,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    outlier_frac: f64,
    #[arg(long, default_value_t = 50.0, allow_hyphen_values = true)]
    outlier_mean: f64,
    #[arg(long, default_value_t = 10.0)]
    outlier_sd: f64,
    /// Flip each outlier's sign with probability 1/2.
    #[arg(long)]
    symmetric_outliers: bool,
    /// Regressor noise standard deviation (errors-in-variables).
    #[arg(long, default_value_t = 0.0)]
    eiv_sd: f64,
    #[arg(long, value_enum, default_value_t = Design::Fir)]
    design: Design,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset CSV path; the sidecar goes next to it. Stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Mce,
    Lad,
    Ols,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitArg {
    Lad,
    Ols,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Sidecar JSON (default: input path with a .json extension, if present).
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Mce)]
    method: Method,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0.25)]
    gamma: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 4)]
    multistart: usize,
    #[arg(long, value_enum, default_value_t = InitArg::Lad)]
    init: InitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct RichnessArgs {
    /// Dataset CSV (`y,x1,...,xn`).
    #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
    input: Option<PathBuf>,
    /// Regressor-matrix CSV (`x1,...,xn`).
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    alpha: f64,
    /// Feed the certified sigma lower bound into v_alpha (default).
    #[arg(long, conflicts_with = "heuristic_sigma")]
    certified: bool,
    /// Feed the sampled sigma estimate into v_alpha; the result is not certified.
    #[arg(long)]
    heuristic_sigma: bool,
    #[arg(long, default_value_t = 10_000)]
    n_samples: usize,
    #[arg(long, default_value_t = 8)]
    sigma_starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RhoModeArg {
    Certified,
    Midpoint,
}

impl From<RhoModeArg> for RhoMode {
    fn from(m: RhoModeArg) -> Self {
        match m {
            RhoModeArg::Certified => RhoMode::Certified,
            RhoModeArg::Midpoint => RhoMode::Midpoint,
        }
    }
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    epsilon: f64,
    /// Inlier fraction; computed from the dataset's noise record when omitted.
    #[arg(long)]
    inlier_frac: Option<f64>,
    /// rho_alpha; computed from the dataset when omitted.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, required_unless_present = "alpha_grid")]
    alpha: Option<f64>,
    /// Search these alphas for the smallest bound.
    #[arg(long, value_delimiter = ',', conflicts_with = "alpha")]
    alpha_grid: Option<Vec<f64>>,
    /// `r_x`; 1 by default, the dataset's smallest regressor norm with --input.
    #[arg(long)]
    rx: Option<f64>,
    /// Dataset CSV supplying missing statistics.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RhoModeArg::Certified)]
    rho_mode: RhoModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long, value_enum)]
    figure: Figure,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Use the published sizes instead of the CI-sized defaults.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sweep values (epsilon, alpha or N depending on the figure).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    outlier_frac: Option<f64>,
    #[arg(long)]
    gamma1: Option<f64>,
    #[arg(long)]
    gamma2: Option<f64>,
    #[arg(long)]
    z: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    inlier_frac: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum)]
    rho_mode: Option<RhoModeArg>,
    #[arg(long, value_enum)]
    rx_mode: Option<RxMode>,
    #[arg(long)]
    heuristic_sigma: bool,
    #[arg(long)]
    n_directions: Option<usize>,
    #[arg(long)]
    multistart: Option<usize>,
}

/// Outcome of a subcommand that reached the data stage.
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

/// Moves `--config <path>` out of argv and splices the file's flags in right
/// after the subcommand name, so later explicit flags override them.
fn expand_config(argv: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config: Option<PathBuf> = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            let path = it.next().ok_or("--config needs a path")?;
            config = Some(PathBuf::from(path));
        } else if let Some(p) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let cfg = io::parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let subcommands = ["gen", "fit", "richness", "bound", "mc"];
    let at = rest
        .iter()
        .position(|a| subcommands.contains(&a.to_string_lossy().as_ref()))
        .map_or(rest.len(), |k| k + 1);
    let extra: Vec<OsString> = io::config_to_args(&cfg)
        .into_iter()
        .map(OsString::from)
        .collect();
    rest.splice(at..at, extra);
    Ok(rest)
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("serializable");
    s.push('\n');
    s
}

fn cmd_gen(a: &GenArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let noise = NoiseModel {
        epsilon: a.epsilon,
        outlier_frac: a.outlier_frac,
        outlier_mean: a.outlier_mean,
        outlier_sd: a.outlier_sd,
        eiv_sd: a.eiv_sd,
        symmetric_outliers: a.symmetric_outliers,
    };
    let ds = match a.design {
        Design::Fir => gen_fir_dataset(&a.theta, a.n_samples, &noise, a.seed)?,
        Design::Unit => gen_unit_dataset(&a.theta, a.n_samples, &noise, a.seed)?,
    };
    let csv = io::dataset_to_csv(&ds);
    let sidecar = io::sidecar_to_json(&io::Sidecar::from_dataset(&ds));
    match (&a.out, &a.sidecar) {
        (Some(p), side) => {
            std::fs::write(p, csv).map_err(Error::from)?;
            let side = side.clone().unwrap_or_else(|| io::sidecar_path(p));
            std::fs::write(side, sidecar).map_err(Error::from)?;
        }
        (None, side) => {
            stdout.write_all(csv.as_bytes()).map_err(Error::from)?;
            if let Some(side) = side {
                std::fs::write(side, sidecar).map_err(Error::from)?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FitOutput<'a> {
    theta: &'a [f64],
    objective: f64,
    iterations: usize,
    converged: bool,
    err: Option<f64>,
}

fn cmd_fit(a: &FitArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let ds = io::read_dataset(&a.input, a.sidecar.as_deref())?;
    let cfg = EstimatorConfig {
        max_iter: a.max_iter,
        tol: a.tol,
        multistart: a.multistart,
        seed: a.seed,
        init: match a.init {
            InitArg::Lad => Init::Lad,
            InitArg::Ols => Init::Ols,
        },
    };
    let fit: FitResult = match a.method {
        Method::Mce => mce_fit(&ds, &LossSpec::new(a.p, a.gamma)?, &cfg)?,
        Method::Lad => lad_fit(&ds, &cfg)?,
        Method::Ols => ols_fit(&ds)?,
    };
    let out = FitOutput {
        theta: &fit.theta,
        objective: fit.objective,
        iterations: fit.iterations,
        converged: fit.converged,
        err: ds.theta_true.as_deref().map(|t| fit.error_to(t)),
    };
    emit(&a.out, &json_line(&out), stdout)?;
    Ok(())
}

fn report_csv(r: &RichnessReport) -> String {
    let o = |v: Option<f64>| v.map(io::fmt_num).unwrap_or_default();
    let header = [
        "alpha",
        "r_x",
        "sigma_lower",
        "sigma_heuristic",
        "sigma_used",
        "v_alpha",
        "rho_upper",
        "rho_exact",
        "rho_sampled",
        "lambda_min",
        "lambda_max",
        "condition_number",
    ];
    let row = vec![
        io::fmt_num(r.alpha),
        io::fmt_num(r.r_x),
        io::fmt_num(r.sigma_lower),
        io::fmt_num(r.sigma_heuristic),
        match r.sigma_used {
            SigmaSource::Certified => "certified".into(),
            SigmaSource::Heuristic => "heuristic".into(),
        },
        o(r.v_alpha),
        io::fmt_num(r.rho_upper),
        o(r.rho_exact),
        o(r.rho_sampled),
        io::fmt_num(r.lambda_min),
        io::fmt_num(r.lambda_max),
        io::fmt_num(r.condition_number),
    ];
    io::render_csv(&header, &[row])
}

fn load_regressors(input: &Option<PathBuf>, matrix: &Option<PathBuf>) -> Result<Regressors> {
    match (input, matrix) {
        (Some(p), _) => Ok(io::parse_dataset_csv(&std::fs::read_to_string(p)?)?.0),
        (None, Some(p)) => io::parse_matrix_csv(&std::fs::read_to_string(p)?),
        (None, None) => Err(Error::InvalidConfig("need --input or --matrix".into())),
    }
}

fn cmd_richness(a: &RichnessArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let x = load_regressors(&a.input, &a.matrix)?;
    let options = RichnessOptions {
        sigma_source: if a.heuristic_sigma {
            SigmaSource::Heuristic
        } else {
            SigmaSource::Certified
        },
        n_samples: a.n_samples,
        sigma_starts: a.sigma_starts,
        seed: a.seed,
    };
    let report = richness_report(&x, a.alpha, &options)?;
    let text = match a.format {
        Format::Json => json_line(&report),
        Format::Csv => report_csv(&report),
    };
    emit(&a.out, &text, stdout)?;
    Ok(())
}

#[derive(Serialize)]
struct BoundOutput {
    condition_ok: bool,
    mu: f64,
    bound: Option<f64>,
    alpha: f64,
    rho: f64,
    inlier_frac: f64,
    r_x: f64,
    rho_mode: Option<RhoMode>,
}

fn cmd_bound(a: &BoundArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let spec = LossSpec::new(a.p, a.gamma)?;
    let ds: Option<RegressionDataset> = match &a.input {
        Some(p) => Some(io::read_dataset(p, a.sidecar.as_deref())?),
        None => None,
    };
    let need = |what: &str| Failure::Usage(format!("--{what} is required without --input"));
    let inlier_frac = match (a.inlier_frac, &ds) {
        (Some(f), _) => f,
        (None, Some(ds)) => noise_statistics(ds, a.epsilon)?.0,
        (None, None) => return Err(need("inlier-frac")),
    };
    let r_x = match (a.rx, &ds) {
        (Some(r), _) => r,
        (None, Some(ds)) => normalize_columns(&ds.x)?.r_x(),
        (None, None) => 1.0,
    };
    let mode: RhoMode = a.rho_mode.into();
    let rho_at = |alpha: f64| -> std::result::Result<Option<f64>, Failure> {
        match (a.rho, &ds) {
            (Some(r), _) => Ok(Some(r)),
            (None, Some(ds)) => Ok(rho_for_mode(&ds.x, alpha, mode, a.seed)?),
            (None, None) => Err(need("rho")),
        }
    };
    let grid: Vec<f64> = match (&a.alpha_grid, a.alpha) {
        (Some(g), _) => g.clone(),
        (None, Some(alpha)) => vec![alpha],
        (None, None) => return Err(Failure::Usage("--alpha or --alpha-grid is required".into())),
    };
    let mut pairs = Vec::with_capacity(grid.len());
    for &alpha in &grid {
        // an alpha without a usable rho cannot satisfy the condition
        pairs.push((alpha, rho_at(alpha)?.unwrap_or(0.0)));
    }
    let choice = if pairs.len() == 1 {
        let (alpha, rho) = pairs[0];
        let report = error_bound(&BoundInputs {
            spec,
            epsilon: a.epsilon,
            inlier_frac,
            rho,
            alpha,
            r_x,
        })?;
        crate::bounds::AlphaChoice { alpha, rho, report }
    } else {
        optimize_alpha(&spec, a.epsilon, inlier_frac, r_x, &pairs)?
    };
    let out = BoundOutput {
        condition_ok: choice.report.condition_ok,
        mu: choice.report.mu,
        bound: choice.report.bound,
        alpha: choice.alpha,
        rho: choice.rho,
        inlier_frac,
        r_x,
        rho_mode: (a.rho.is_none() && ds.is_some()).then_some(mode),
    };
    emit(&a.out, &json_line(&out), stdout)?;
    Ok(())
}

fn mc_spec(a: &McArgs) -> ExperimentSpec {
    let mut s = if a.paper_scale {
        ExperimentSpec::paper(a.figure)
    } else {
        ExperimentSpec::desk(a.figure)
    };
    s.seed = a.seed;
    if let Some(v) = a.trials {
        s.trials = v;
    }
    if let Some(v) = &a.grid {
        s.grid = v.clone();
    }
    if let Some(v) = &a.theta {
        s.theta = v.clone();
    }
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = a.$field { s.$field = v; })*};
    }
    set!(
        n_samples,
        epsilon,
        outlier_frac,
        gamma1,
        gamma2,
        z,
        alpha,
        inlier_frac,
        rho,
        n_directions
    );
    if let Some(m) = a.rho_mode {
        s.rho_mode = m.into();
    }
    if let Some(m) = a.rx_mode {
        s.rx_mode = m;
    }
    if a.heuristic_sigma {
        s.sigma_source = SigmaSource::Heuristic;
    }
    if let Some(m) = a.multistart {
        s.estimator.multistart = m;
    }
    s
}

fn cmd_mc(a: &McArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let result = run_experiment(&mc_spec(a))?;
    emit(&a.out, &result.to_csv(), stdout)?;
    Ok(())
}

/// Runs the CLI with explicit output streams. Returns the process exit code:
/// 0 on success, 1 on usage errors, 2 on data errors.
pub fn run_cli<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                1
            } else {
                let _ = write!(stdout, "{}", e.render());
                0
            };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start worker threads: {e}");
            return 2;
        }
    };
    let mut buffer: Vec<u8> = Vec::new();
    let outcome = pool.install(|| {
        let out: &mut dyn Write = &mut buffer;
        match &cli.command {
            Command::Gen(a) => cmd_gen(a, out),
            Command::Fit(a) => cmd_fit(a, out),
            Command::Richness(a) => cmd_richness(a, out),
            Command::Bound(a) => cmd_bound(a, out),
            Command::Mc(a) => cmd_mc(a, out),
        }
    });
    if stdout.write_all(&buffer).is_err() {
        return 2;
    }
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}

/// [`run_cli`] on the process streams.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = run_cli(argv, &mut out, &mut std::io::stderr());
    let _ = out.flush();
    code
}
