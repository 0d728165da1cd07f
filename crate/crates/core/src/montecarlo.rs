//! Replication harness: simulate, select bandwidths, fit paths and summarize
//! the estimation error on a fixed grid.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{default_b_grid, select_bandwidth, CvConfig};
use crate::error::{Error, Result};
use crate::estimator::{default_grid, fit_path_with, FitConfig, PathOptions};
use crate::kernel::KernelSpec;
use crate::models::{rng_stream, simulate_with, CovariateTransform, Dataset, Family, ModelSpec, ParamPath, SimOptions};

/// Default thinning of the held-out points when CV runs inside a replication.
pub const MC_CV_THIN: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed {
        b: f64,
    },
    /// Cross-validated over `grid` (default: [`default_b_grid`]).
    Cv {
        #[serde(default)]
        grid: Option<Vec<f64>>,
        #[serde(default)]
        leave_out: usize,
        #[serde(default = "default_thin")]
        thin: usize,
    },
}

fn default_thin() -> usize {
    MC_CV_THIN
}

impl BandwidthRule {
    pub fn cv() -> Self {
        Self::Cv {
            grid: None,
            leave_out: 0,
            thin: MC_CV_THIN,
        }
    }
}

/// Quasi-maximum likelihood or the kernel least-squares comparator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ml,
    /// Kernel-weighted least squares of `Y_t` on the intensity regressors,
    /// each term scaled by `(Ȳ + Σ_{i≥1} g_{t,i})^{-2}`. Uses the bandwidth chosen
    /// by likelihood CV at the same order.
    Ls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub name: String,
    pub method: Method,
    pub m: usize,
    pub bandwidth: BandwidthRule,
    #[serde(default)]
    pub kernel: KernelSpec,
}

impl EstimatorSpec {
    pub fn new(name: &str, method: Method, m: usize, bandwidth: BandwidthRule) -> Self {
        Self {
            name: name.to_string(),
            method,
            m,
            bandwidth,
            kernel: KernelSpec::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub label: String,
    pub model: ModelSpec,
    pub truth: ParamPath,
    pub n: usize,
    pub reps: usize,
    pub estimators: Vec<EstimatorSpec>,
    /// Metric grid inside `(0, 1)`; defaults to `t/n`, `t = window+1..n-1`.
    pub grid: Option<Vec<f64>>,
    pub seed: u64,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
    pub sim: SimOptions,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators configured".into()));
        }
        if self.truth.dim() != self.model.dim() {
            return Err(Error::InvalidConfig("true path dimension does not match the model".into()));
        }
        if let Some(g) = &self.grid {
            if g.is_empty() || g.iter().any(|u| !(*u > 0.0 && *u < 1.0)) || g.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidConfig("metric grid must be sorted and inside (0, 1)".into()));
            }
        }
        for e in &self.estimators {
            if e.method == Method::Ls && !matches!(self.model.family, Family::TvArch { .. } | Family::TvParx { .. }) {
                return Err(Error::Unsupported(format!("least squares comparator for {:?}", self.model.family)));
            }
            FitConfig::new(e.m, 0.5).validate(&self.model)?;
        }
        Ok(())
    }

    fn metric_grid(&self) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(|| default_grid(&self.model, self.n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMetrics {
    pub parameter: String,
    pub isb: f64,
    pub iv: f64,
    pub imse: f64,
    pub made_mean: f64,
    pub made_median: f64,
    /// `mean_r θ̂(u) − θ(u)` on the metric grid.
    pub bias: Vec<f64>,
    /// Across-replication variance of `θ̂(u)`.
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimator: EstimatorSpec,
    pub successful_reps: usize,
    pub failed_reps: usize,
    pub non_converged_points: usize,
    /// Bandwidth used in each successful replication.
    pub bandwidths: Vec<f64>,
    pub params: Vec<ParamMetrics>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub label: String,
    pub family: Family,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub results: Vec<EstimatorResult>,
    /// Set when any estimator lost more than 10% of its replications.
    pub unreliable: bool,
    pub notes: Vec<String>,
    /// Wall-clock seconds; kept out of the serialized report so that reruns
    /// are byte-identical.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl McReport {
    pub fn result(&self, name: &str) -> Option<&EstimatorResult> {
        self.results.iter().find(|r| r.estimator.name == name)
    }

    pub fn metrics(&self, estimator: &str, parameter: &str) -> Option<&ParamMetrics> {
        self.result(estimator)?.params.iter().find(|p| p.parameter == parameter)
    }

    /// One row per estimator × parameter × metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,method,m,parameter,metric,value\n");
        for r in &self.results {
            let method = match r.estimator.method {
                Method::Ml => "ml",
                Method::Ls => "ls",
            };
            for p in &r.params {
                for (metric, v) in [
                    ("isb", p.isb),
                    ("iv", p.iv),
                    ("imse", p.imse),
                    ("made_mean", p.made_mean),
                    ("made_median", p.made_median),
                ] {
                    let _ = writeln!(out, "{},{},{},{},{},{:e}", r.estimator.name, method, r.estimator.m, p.parameter, metric, v);
                }
            }
            let _ = writeln!(out, "{},{},{},,failed_reps,{}", r.estimator.name, method, r.estimator.m, r.failed_reps);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Outcome of one estimator in one replication.
enum RepOutcome {
    Ok {
        theta: Vec<Vec<f64>>,
        b: f64,
        non_converged: usize,
    },
    Failed(String),
}

/// Runs the experiment. Replication `r` draws its data from RNG stream
/// `(seed, r)`, and results are reduced in replication order, so the report
/// does not depend on the number of threads.
pub fn run_mc(cfg: &McConfig) -> Result<McReport> {
    cfg.validate()?;
    let start = Instant::now();
    let grid = cfg.metric_grid();
    let run = || -> Vec<Vec<RepOutcome>> {
        (0..cfg.reps)
            .into_par_iter()
            .map(|r| replicate(cfg, &grid, r))
            .collect()
    };
    let outcomes = match cfg.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let truth: Vec<Vec<f64>> = grid.iter().map(|u| cfg.truth.eval(*u)).collect();
    let names = cfg.model.family.param_names();
    let mut results = Vec::with_capacity(cfg.estimators.len());
    for (k, est) in cfg.estimators.iter().enumerate() {
        let mut fits = Vec::new();
        let mut bandwidths = Vec::new();
        let mut failures = Vec::new();
        let mut non_converged = 0;
        for (r, rep) in outcomes.iter().enumerate() {
            match &rep[k] {
                RepOutcome::Ok { theta, b, non_converged: nc } => {
                    fits.push(theta);
                    bandwidths.push(*b);
                    non_converged += nc;
                }
                RepOutcome::Failed(msg) => failures.push(format!("rep {r}: {msg}")),
            }
        }
        let params = if fits.is_empty() {
            Vec::new()
        } else {
            names
                .iter()
                .enumerate()
                .map(|(j, name)| param_metrics(name, j, &fits, &truth))
                .collect()
        };
        results.push(EstimatorResult {
            estimator: est.clone(),
            successful_reps: fits.len(),
            failed_reps: failures.len(),
            non_converged_points: non_converged,
            bandwidths,
            params,
            failures,
        });
    }
    let unreliable = results
        .iter()
        .any(|r| r.failed_reps as f64 > 0.1 * cfg.reps as f64 || r.successful_reps == 0);
    let mut notes = Vec::new();
    for e in &cfg.estimators {
        if let BandwidthRule::Cv { grid, leave_out, thin } = &e.bandwidth {
            let g = grid.clone().unwrap_or_else(|| default_b_grid(cfg.n));
            notes.push(format!(
                "{}: CV over {} bandwidths in [{:.4}, {:.4}], leave-{}-out, every {} held-out point(s)",
                e.name,
                g.len(),
                g.first().copied().unwrap_or(f64::NAN),
                g.last().copied().unwrap_or(f64::NAN),
                2 * leave_out + 1,
                thin
            ));
        }
        if e.method == Method::Ls {
            notes.push(format!(
                "{}: kernel least squares with (mean + lagged sum)^-2 weights, projected onto the parameter space; a stand-in for, not a copy of, the published WLS estimator",
                e.name
            ));
        }
    }
    Ok(McReport {
        label: cfg.label.clone(),
        family: cfg.model.family,
        n: cfg.n,
        reps: cfg.reps,
        seed: cfg.seed,
        grid,
        results,
        unreliable,
        notes,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

fn param_metrics(name: &str, j: usize, fits: &[&Vec<Vec<f64>>], truth: &[Vec<f64>]) -> ParamMetrics {
    let r = fits.len() as f64;
    let g = truth.len();
    let mut bias = vec![0.0; g];
    let mut variance = vec![0.0; g];
    for k in 0..g {
        let mean = fits.iter().map(|f| f[k][j]).sum::<f64>() / r;
        bias[k] = mean - truth[k][j];
        variance[k] = fits.iter().map(|f| (f[k][j] - mean).powi(2)).sum::<f64>() / r;
    }
    let mut made: Vec<f64> = fits
        .iter()
        .map(|f| (0..g).map(|k| (f[k][j] - truth[k][j]).abs()).sum::<f64>() / g as f64)
        .collect();
    let made_mean = made.iter().sum::<f64>() / r;
    made.sort_by(|a, b| a.total_cmp(b));
    let mid = made.len() / 2;
    let made_median = if made.len() % 2 == 1 {
        made[mid]
    } else {
        0.5 * (made[mid - 1] + made[mid])
    };
    let isb = bias.iter().map(|b| b * b).sum::<f64>() / g as f64;
    let iv = variance.iter().sum::<f64>() / g as f64;
    ParamMetrics {
        parameter: name.to_string(),
        isb,
        iv,
        imse: isb + iv,
        made_mean,
        made_median,
        bias,
        variance,
    }
}

fn replicate(cfg: &McConfig, grid: &[f64], r: usize) -> Vec<RepOutcome> {
    let failed_all = |msg: String| cfg.estimators.iter().map(|_| RepOutcome::Failed(msg.clone())).collect();
    let mut rng = rng_stream(cfg.seed, r as u64);
    let data = match simulate_with(&cfg.model, &cfg.truth, cfg.n, &mut rng, &cfg.sim) {
        Ok(d) => d,
        Err(e) => return failed_all(format!("simulation: {e}")),
    };
    // CV selections are shared between estimators with the same order and rule.
    let mut selected: Vec<(usize, KernelSpec, BandwidthRule, std::result::Result<f64, String>)> = Vec::new();
    cfg.estimators
        .iter()
        .map(|est| {
            let b = match &est.bandwidth {
                BandwidthRule::Fixed { b } => Ok(*b),
                rule @ BandwidthRule::Cv { grid: bg, leave_out, thin } => {
                    match selected.iter().find(|(m, k, rl, _)| *m == est.m && *k == est.kernel && rl == rule) {
                        Some((_, _, _, b)) => b.clone(),
                        None => {
                            let cv = CvConfig {
                                b_grid: bg.clone().unwrap_or_else(|| default_b_grid(cfg.n)),
                                leave_out: *leave_out,
                                thin: *thin,
                                m: est.m,
                                kernel: est.kernel,
                            };
                            let b = select_bandwidth(&cfg.model, &data, &cv)
                                .map(|s| s.b_star)
                                .map_err(|e| format!("bandwidth selection: {e}"));
                            selected.push((est.m, est.kernel, rule.clone(), b.clone()));
                            b
                        }
                    }
                }
            };
            let b = match b {
                Ok(b) => b,
                Err(msg) => return RepOutcome::Failed(msg),
            };
            let fit = match est.method {
                Method::Ml => fit_ml(&cfg.model, &data, grid, est, b),
                Method::Ls => fit_ls(&cfg.model, &data, grid, est, b).map(|t| (t, 0)),
            };
            match fit {
                Ok((theta, non_converged)) => RepOutcome::Ok { theta, b, non_converged },
                Err(e) => RepOutcome::Failed(e.to_string()),
            }
        })
        .collect()
}

fn fit_ml(model: &ModelSpec, data: &Dataset, grid: &[f64], est: &EstimatorSpec, b: f64) -> Result<(Vec<Vec<f64>>, usize)> {
    let cfg = FitConfig::new(est.m, b).with_kernel(est.kernel);
    let opts = PathOptions {
        attach_moments: false,
        reverse: false,
    };
    let path = fit_path_with(model, data, grid, &cfg, opts)?;
    let mut out = Vec::with_capacity(grid.len());
    for pt in &path.points {
        match &pt.fit {
            Some(f) => out.push(f.theta_hat.clone()),
            None => {
                return Err(Error::InvalidData(format!(
                    "fit failed at u = {}: {}",
                    pt.u,
                    pt.error.as_deref().unwrap_or("unknown")
                )))
            }
        }
    }
    Ok((out, path.non_converged))
}

/// Kernel-weighted local polynomial least squares of `Y_t` on the
/// intensity regressors, projected onto the parameter space. Each term is
/// divided by `(Ȳ + Σ_{i≥1} g_{t,i})²`, `g_t` the regressors, to tame the heavy tails of the regressors.
pub fn local_least_squares(model: &ModelSpec, data: &Dataset, u: f64, m: usize, b: f64, kernel: KernelSpec) -> Result<Vec<f64>> {
    let d = model.dim();
    let p = d * (m + 1);
    let n = data.n();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    let ybar = data.y.iter().sum::<f64>() / n as f64;
    let lo = ((u - b) * n as f64).floor().max(0.0) as usize;
    let hi = (((u + b) * n as f64).ceil() as usize).min(n);
    for t in lo.max(model.window())..hi {
        let v = ((t + 1) as f64 / n as f64 - u) / b;
        let w = kernel.eval(v);
        if w == 0.0 {
            continue;
        }
        let g = model
            .intensity_regressors(data, t)
            .ok_or_else(|| Error::Unsupported("least squares needs a linear intensity".into()))?;
        let mut pw = 1.0;
        for j in 0..=m {
            if j > 0 {
                pw *= v / j as f64;
            }
            for i in 0..d {
                row[j * d + i] = pw * g[i];
            }
        }
        let w = w / (ybar + g[1..].iter().sum::<f64>()).powi(2);
        let y = data.y[t];
        for a in 0..p {
            xty[a] += w * row[a] * y;
            for c in 0..p {
                xtx[(a, c)] += w * row[a] * row[c];
            }
        }
    }
    let svd = xtx.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max();
    if !(svd.singular_values.min() > tol) {
        return Err(Error::DegenerateHessian {
            condition: svd.singular_values.max() / svd.singular_values.min(),
        });
    }
    let beta = svd.solve(&xty, tol).map_err(|e| Error::InvalidData(e.to_string()))?;
    Ok(model.theta_space.project(&beta.as_slice()[..d]))
}

fn fit_ls(model: &ModelSpec, data: &Dataset, grid: &[f64], est: &EstimatorSpec, b: f64) -> Result<Vec<Vec<f64>>> {
    grid.iter()
        .map(|u| local_least_squares(model, data, *u, est.m, b, est.kernel))
        .collect()
}

/// Time-varying ARCH(1) design: `ω(u) = 0.7 − 0.5 cos 6πu`, `α(u) = 0.45 + 0.4 cos 6πu`.
pub fn table1_truth() -> ParamPath {
    let w = 6.0 * PI;
    ParamPath::with_derivatives(
        2,
        move |u| vec![-0.5 * (w * u).cos() + 0.7, 0.4 * (w * u).cos() + 0.45],
        move |u| vec![0.5 * w * (w * u).sin(), -0.4 * w * (w * u).sin()],
        move |u| vec![0.5 * w * w * (w * u).cos(), -0.4 * w * w * (w * u).cos()],
    )
}

/// Time-varying PARX(1) design with `exp(X_{t-1})`:
/// `ω = 0.7 − 0.5 sin 2πu`, `α = 0.5 + 0.4 sin 2πu`, `γ = 1 + 0.5 sin 2πu`.
pub fn table2_truth() -> ParamPath {
    let w = 2.0 * PI;
    ParamPath::with_derivatives(
        3,
        move |u| {
            let s = (w * u).sin();
            vec![0.7 - 0.5 * s, 0.5 + 0.4 * s, 1.0 + 0.5 * s]
        },
        move |u| {
            let c = w * (w * u).cos();
            vec![-0.5 * c, 0.4 * c, 0.5 * c]
        },
        move |u| {
            let s = -w * w * (w * u).sin();
            vec![-0.5 * s, 0.4 * s, 0.5 * s]
        },
    )
}

/// Covariate process `(ρ(u), σ(u))`: DGP 1 is `(0.5, 1)`, DGP 2 is
/// `(0.5 − 0.4 cos πu, 1 + 0.5 cos 2πu)`.
pub fn table2_covariate(dgp: u8) -> Result<ParamPath> {
    match dgp {
        1 => Ok(ParamPath::constant(vec![0.5, 1.0])),
        2 => Ok(ParamPath::closed_form(2, |u| {
            vec![0.5 - 0.4 * (PI * u).cos(), 1.0 + 0.5 * (2.0 * PI * u).cos()]
        })),
        other => Err(Error::InvalidConfig(format!("unknown covariate DGP {other}"))),
    }
}

/// Table-1 experiment at sample size `n`: ML and LS, local constant and
/// local linear, all with CV bandwidths.
pub fn table1_config(n: usize, reps: usize, seed: u64) -> McConfig {
    McConfig {
        label: format!("table1_n{n}"),
        model: ModelSpec::tv_arch(1),
        truth: table1_truth(),
        n,
        reps,
        estimators: vec![
            EstimatorSpec::new("ls_lc", Method::Ls, 0, BandwidthRule::cv()),
            EstimatorSpec::new("ls_ll", Method::Ls, 1, BandwidthRule::cv()),
            EstimatorSpec::new("ml_lc", Method::Ml, 0, BandwidthRule::cv()),
            EstimatorSpec::new("ml_ll", Method::Ml, 1, BandwidthRule::cv()),
        ],
        grid: None,
        seed,
        threads: None,
        sim: SimOptions::default(),
    }
}

pub fn table2_config(dgp: u8, n: usize, reps: usize, seed: u64) -> Result<McConfig> {
    let model = ModelSpec::tv_parx(1, CovariateTransform::Exp).with_covariate_process(table2_covariate(dgp)?);
    Ok(McConfig {
        label: format!("table2_dgp{dgp}_n{n}"),
        model,
        truth: table2_truth(),
        n,
        reps,
        estimators: vec![
            EstimatorSpec::new("ml_lc", Method::Ml, 0, BandwidthRule::cv()),
            EstimatorSpec::new("ml_ll", Method::Ml, 1, BandwidthRule::cv()),
        ],
        grid: None,
        seed,
        threads: None,
        sim: SimOptions::default(),
    })
}

/// Table-1 reports for each sample size.
pub fn table1(reps: usize, n_list: &[usize], seed: u64) -> Result<Vec<McReport>> {
    n_list.iter().map(|&n| run_mc(&table1_config(n, reps, seed))).collect()
}

/// Table-2 reports for both covariate designs at `n = 500`.
pub fn table2(reps: usize, seed: u64) -> Result<Vec<McReport>> {
    [1u8, 2].iter().map(|&dgp| run_mc(&table2_config(dgp, 500, reps, seed)?)).collect()
}
