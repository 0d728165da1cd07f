//! Local polynomial quasi-maximum-likelihood: the kernel-weighted objective
//! `Q_n(α|u)`, a safeguarded Newton solver over the coefficient space, and
//! the warm-started path fit.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{moments, KernelMoments, KernelSpec, Truncation};
use crate::models::{Dataset, Family, LatentState, ModelSpec, ObsEval, Order};
use crate::polybasis::CoeffSpace;
use crate::qp;

/// Solver and smoothing settings for one local fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub m: usize,
    pub b: f64,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_step_halving_max")]
    pub step_halving_max: usize,
    /// Starting points per coordinate of the level block.
    #[serde(default = "default_multistart_per_coord")]
    pub multistart_per_coord: usize,
    #[serde(default = "default_multistart_cap")]
    pub multistart_cap: usize,
}

fn default_newton_max_iter() -> usize {
    50
}
fn default_grad_tol() -> f64 {
    1e-8
}
fn default_step_halving_max() -> usize {
    30
}
fn default_multistart_per_coord() -> usize {
    5
}
fn default_multistart_cap() -> usize {
    2000
}

impl FitConfig {
    pub fn new(m: usize, b: f64) -> Self {
        Self {
            m,
            b,
            kernel: KernelSpec::default(),
            newton_max_iter: default_newton_max_iter(),
            grad_tol: default_grad_tol(),
            step_halving_max: default_step_halving_max(),
            multistart_per_coord: default_multistart_per_coord(),
            multistart_cap: default_multistart_cap(),
        }
    }

    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = kernel;
        self
    }

    /// Bandwidths above 1 are accepted so that a kernel covering the whole
    /// sample can serve as a constant-parameter surrogate.
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {}", self.b)));
        }
        if self.m > 2 {
            return Err(Error::InvalidConfig(format!("polynomial order {} not in {{0, 1, 2}}", self.m)));
        }
        if model.is_recursive() && self.m > 0 {
            return Err(Error::InvalidConfig(
                "recursive families only admit local constant estimation (m = 0)".into(),
            ));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidConfig("grad_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one local fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub u: f64,
    pub b: f64,
    pub m: usize,
    /// Coefficients on the `α` scale, `α = U_n β`.
    pub alpha_hat: Vec<f64>,
    pub theta_hat: Vec<f64>,
    /// `θ̂^(i)(u)` for `i = 1..=m`.
    pub deriv_hats: Vec<Vec<f64>>,
    pub objective: f64,
    /// Projected-gradient norm at the optimum; equals `‖S_n‖∞` at interior points.
    pub score_norm: f64,
    /// `H_n(α̂|u)`, row-major.
    pub hessian: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `Σ_t K((t/n - u)/b)`, roughly `n b` at interior points.
    pub n_eff: f64,
}

#[derive(Debug, Clone, Copy)]
struct Term {
    t: usize,
    /// `K_b(t/n - u)`.
    kb: f64,
    pw: [f64; 3],
}

/// Objective value with optional derivatives in `α`.
#[derive(Debug, Clone)]
pub struct LocalEval {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Row-major.
    pub hess: Vec<f64>,
}

/// The kernel-weighted problem at one time point.
pub struct LocalProblem<'a> {
    pub model: &'a ModelSpec,
    pub data: &'a Dataset,
    pub u: f64,
    pub b: f64,
    pub m: usize,
    pub space: CoeffSpace,
    g: DMatrix<f64>,
    h: DVector<f64>,
    terms: Vec<Term>,
    n: usize,
    lambda0: f64,
}

impl<'a> LocalProblem<'a> {
    /// Builds the problem; observations whose indices fall in `exclude` are
    /// dropped from the weighted sums but still serve as conditioning lags.
    pub fn new(
        model: &'a ModelSpec,
        data: &'a Dataset,
        u: f64,
        b: f64,
        m: usize,
        kernel: KernelSpec,
        exclude: Option<Range<usize>>,
    ) -> Result<Self> {
        let n = data.n();
        let nf = n as f64;
        // Only indices with |(t+1)/n - u| <= b can carry weight.
        let lo = (((u - b) * nf).floor() as i64 - 1).max(model.window() as i64) as usize;
        let hi = ((((u + b) * nf).ceil() as i64) + 1).clamp(0, n as i64) as usize;
        let mut terms = Vec::with_capacity(hi.saturating_sub(lo));
        for t in lo..hi {
            if let Some(r) = &exclude {
                if r.contains(&t) {
                    continue;
                }
            }
            let x = (t + 1) as f64 / nf - u;
            let v = x / b;
            let k = kernel.eval(v);
            if k > 0.0 {
                let mut pw = [1.0, 0.0, 0.0];
                if m >= 1 {
                    pw[1] = v;
                }
                if m >= 2 {
                    pw[2] = 0.5 * v * v;
                }
                terms.push(Term { t, kb: k / b, pw });
            }
        }
        if terms.is_empty() {
            return Err(Error::EmptyKernelWindow);
        }
        // Θ is enforced on the design points actually used plus the target u.
        let vs = terms.iter().map(|tm| ((tm.t + 1) as f64 / nf - u) / b);
        let vmin = vs.clone().fold(0.0, f64::min);
        let vmax = vs.fold(0.0, f64::max);
        let grid = match m {
            0 => vec![0.0],
            1 => vec![vmin, vmax],
            _ => (0..11).map(|i| vmin + (vmax - vmin) * i as f64 / 10.0).collect(),
        };
        let space = CoeffSpace::with_grid(model.theta_space.clone(), m, grid);
        let (rows, h) = space.constraints();
        let p = (m + 1) * model.dim();
        let g = DMatrix::from_fn(rows.len(), p, |r, c| rows[r][c]);
        Ok(Self {
            model,
            data,
            u,
            b,
            m,
            space,
            g,
            h: DVector::from_vec(h),
            terms,
            n,
            lambda0: model.initial_lambda(data),
        })
    }

    pub fn n_coef(&self) -> usize {
        (self.m + 1) * self.model.dim()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Indices of the observations carrying positive weight.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.iter().map(|tm| tm.t)
    }

    /// `Σ_t K((t/n - u)/b)`.
    pub fn n_eff(&self) -> f64 {
        self.terms.iter().map(|tm| tm.kb * self.b).sum()
    }

    fn theta_at(&self, pw: &[f64; 3], alpha: &[f64], out: &mut [f64]) {
        let d = out.len();
        for i in 0..d {
            let mut s = alpha[i];
            for j in 1..=self.m {
                s += pw[j] * alpha[j * d + i];
            }
            out[i] = s;
        }
    }

    /// Visits every weighted term with the per-observation evaluation.
    fn for_each_term<F>(&self, alpha: &[f64], order: Order, mut f: F) -> Result<()>
    where
        F: FnMut(&Term, &ObsEval),
    {
        let d = self.model.dim();
        let mut obs = ObsEval::new(d);
        if self.model.is_recursive() {
            let theta = &alpha[..d];
            let mut st = LatentState::initial(self.lambda0);
            let mut pos = 0;
            for tm in &self.terms {
                while pos < tm.t {
                    st = st.advance(theta, self.data.y[pos]);
                    pos += 1;
                }
                self.model.eval_into(self.data, tm.t, theta, Some(&st), order, &mut obs)?;
                f(tm, &obs);
            }
        } else {
            let mut theta = vec![0.0; d];
            for tm in &self.terms {
                self.theta_at(&tm.pw, alpha, &mut theta);
                self.model.eval_into(self.data, tm.t, &theta, None, order, &mut obs)?;
                f(tm, &obs);
            }
        }
        Ok(())
    }

    /// `Q_n(α|u)` and, depending on `order`, `S_n` and `H_n`.
    pub fn eval(&self, alpha: &[f64], order: Order) -> Result<LocalEval> {
        let d = self.model.dim();
        let p = self.n_coef();
        let mb = self.m + 1;
        let inv_n = 1.0 / self.n as f64;
        let mut out = LocalEval {
            value: 0.0,
            grad: vec![0.0; if order >= Order::Score { p } else { 0 }],
            hess: vec![0.0; if order >= Order::Hessian { p * p } else { 0 }],
        };
        self.for_each_term(alpha, order, |tm, obs| {
            let w = tm.kb * inv_n;
            out.value += w * obs.value;
            if order >= Order::Score {
                for j in 0..mb {
                    let wj = w * tm.pw[j];
                    for i in 0..d {
                        out.grad[j * d + i] += wj * obs.score[i];
                    }
                }
            }
            if order >= Order::Hessian {
                for j in 0..mb {
                    for k in 0..mb {
                        let wjk = w * tm.pw[j] * tm.pw[k];
                        for i in 0..d {
                            let row = (j * d + i) * p + k * d;
                            let hrow = &obs.hess[i * d..(i + 1) * d];
                            for (l, h) in hrow.iter().enumerate() {
                                out.hess[row + l] += wjk * h;
                            }
                        }
                    }
                }
            }
        })?;
        Ok(out)
    }

    /// `V̂ = (1/n) Σ K_b² D' s s' D`, row-major.
    pub fn score_outer(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        let d = self.model.dim();
        let p = self.n_coef();
        let mb = self.m + 1;
        let inv_n = 1.0 / self.n as f64;
        let mut out = vec![0.0; p * p];
        let mut ds = vec![0.0; p];
        self.for_each_term(alpha, Order::Score, |tm, obs| {
            for j in 0..mb {
                for i in 0..d {
                    ds[j * d + i] = tm.kb * tm.pw[j] * obs.score[i];
                }
            }
            for a in 0..p {
                for c in 0..p {
                    out[a * p + c] += inv_n * ds[a] * ds[c];
                }
            }
        })?;
        Ok(out)
    }

    fn value(&self, alpha: &[f64]) -> f64 {
        match self.eval(alpha, Order::Value) {
            Ok(e) if e.value.is_finite() => e.value,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Slack `h − gα` of the coefficient-space constraints.
    fn slack(&self, alpha: &[f64]) -> DVector<f64> {
        let a = DVector::from_column_slice(alpha);
        (&self.h - &self.g * a).map(|s| s.max(0.0))
    }

    /// `‖P(α + S) − α‖∞` with `P` the Euclidean projection onto the
    /// coefficient space; the first-order optimality measure.
    fn projected_gradient_norm(&self, alpha: &[f64], grad: &[f64]) -> f64 {
        let p = alpha.len();
        let step = qp::solve(
            &DMatrix::identity(p, p),
            &DVector::from_column_slice(grad),
            &self.g,
            &self.slack(alpha),
        );
        step.amax()
    }

    /// Level-block multistart over the model's search box.
    pub fn multistart(&self, per_coord: usize, cap: usize) -> Result<Vec<f64>> {
        let d = self.model.dim();
        let p = self.n_coef();
        let mut k = per_coord.max(1);
        while k > 1 && (k as f64).powi(d as i32) > cap as f64 {
            k -= 1;
        }
        let bx = self.model.search_box(self.data);
        let total = k.pow(d as u32);
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut alpha = vec![0.0; p];
        for idx in 0..total {
            let mut rem = idx;
            for (i, (lo, hi)) in bx.iter().enumerate() {
                let j = rem % k;
                rem /= k;
                alpha[i] = lo + (j as f64 + 0.5) / k as f64 * (hi - lo);
            }
            let Ok(start) = self.space.project_feasible(&alpha) else {
                continue;
            };
            let v = self.value(&start);
            if v.is_finite() && best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                best = Some((v, start));
            }
        }
        best.map(|(_, a)| a).ok_or(Error::EmptyCoefficientSpace)
    }

    /// Safeguarded Newton ascent from `start`. Each step maximizes the local
    /// quadratic model over the coefficient space, then halves until the
    /// objective increases.
    pub fn solve(&self, start: &[f64], cfg: &FitConfig) -> Result<LocalFit> {
        let mut alpha = self.space.project_feasible(start)?;
        let mut cur = self.eval(&alpha, Order::Hessian)?;
        if !cur.value.is_finite() {
            return Err(Error::InvalidData("objective not finite at the starting point".into()));
        }
        let mut converged = false;
        let mut iterations = 0;
        let mut pg = self.projected_gradient_norm(&alpha, &cur.grad);
        while iterations < cfg.newton_max_iter {
            if pg < cfg.grad_tol {
                converged = true;
                break;
            }
            iterations += 1;
            let dir = self.newton_step(&alpha, &cur);
            let next = self
                .line_search(&alpha, &cur, pg, &dir, cfg)
                .or_else(|| self.coordinate_search(&alpha, cur.value));
            match next {
                Some(a) => alpha = a,
                None => break,
            }
            cur = self.eval(&alpha, Order::Hessian)?;
            pg = self.projected_gradient_norm(&alpha, &cur.grad);
        }
        if !converged && pg < cfg.grad_tol {
            converged = true;
        }
        Ok(self.finish(alpha, cur, pg, converged, iterations))
    }

    fn finish(&self, alpha: Vec<f64>, cur: LocalEval, pg: f64, converged: bool, iterations: usize) -> LocalFit {
        let d = self.model.dim();
        let deriv_hats = (1..=self.m)
            .map(|j| alpha[j * d..(j + 1) * d].iter().map(|a| a / self.b.powi(j as i32)).collect())
            .collect();
        LocalFit {
            u: self.u,
            b: self.b,
            m: self.m,
            theta_hat: alpha[..d].to_vec(),
            deriv_hats,
            alpha_hat: alpha,
            objective: cur.value,
            score_norm: pg,
            hessian: cur.hess,
            converged,
            iterations,
            n_eff: self.n_eff(),
        }
    }

    /// Maximizer of `S'δ + ½δ'Hδ` over `α + δ ∈ A`, with `H` made negative
    /// definite (nonnegative eigenvalues flipped, ridge `1e-8`).
    fn newton_step(&self, alpha: &[f64], cur: &LocalEval) -> Vec<f64> {
        let p = alpha.len();
        let neg_h = DMatrix::from_fn(p, p, |r, c| -cur.hess[r * p + c]);
        let q = if neg_h.clone().cholesky().is_some() {
            neg_h
        } else {
            let eig = neg_h.symmetric_eigen();
            let lam = eig.eigenvalues.map(|e| e.abs() + 1e-8);
            &eig.eigenvectors * DMatrix::from_diagonal(&lam) * eig.eigenvectors.transpose()
        };
        let step = qp::solve(&q, &DVector::from_column_slice(&cur.grad), &self.g, &self.slack(alpha));
        step.iter().copied().collect()
    }

    fn line_search(&self, alpha: &[f64], cur: &LocalEval, pg: f64, dir: &[f64], cfg: &FitConfig) -> Option<Vec<f64>> {
        let mut step = 1.0;
        let mut first: Option<Vec<f64>> = None;
        for _ in 0..=cfg.step_halving_max {
            let trial: Vec<f64> = alpha.iter().zip(dir).map(|(a, d)| a + step * d).collect();
            if trial.as_slice() != alpha && self.space.is_feasible(&trial) {
                let v = self.value(&trial);
                if v > cur.value {
                    return Some(trial);
                }
                if first.is_none() {
                    first = Some(trial);
                }
            }
            step *= 0.5;
        }
        // Near the optimum rounding can hide the increase; accept a step that
        // keeps the value and reduces the optimality measure.
        let cand = first?;
        let e = self.eval(&cand, Order::Score).ok()?;
        let slack = 1e-12 * (1.0 + cur.value.abs());
        (e.value >= cur.value - slack && self.projected_gradient_norm(&cand, &e.grad) < pg).then_some(cand)
    }

    fn coordinate_search(&self, alpha: &[f64], value: f64) -> Option<Vec<f64>> {
        let mut trial = alpha.to_vec();
        for i in 0..alpha.len() {
            let scale = alpha[i].abs().max(1e-2);
            let mut h = 0.1 * scale;
            while h > 1e-10 * scale {
                for s in [1.0, -1.0] {
                    trial[i] = alpha[i] + s * h;
                    if self.space.is_feasible(&trial) && self.value(&trial) > value {
                        return Some(trial);
                    }
                }
                h *= 0.1;
            }
            trial[i] = alpha[i];
        }
        None
    }
}

/// `Q_n(α|u)`.
pub fn local_objective(model: &ModelSpec, data: &Dataset, u: f64, alpha: &[f64], cfg: &FitConfig) -> Result<f64> {
    let prob = LocalProblem::new(model, data, u, cfg.b, cfg.m, cfg.kernel, None)?;
    Ok(prob.eval(alpha, Order::Value)?.value)
}

/// `S_n(α|u)`.
pub fn local_score(model: &ModelSpec, data: &Dataset, u: f64, alpha: &[f64], cfg: &FitConfig) -> Result<Vec<f64>> {
    let prob = LocalProblem::new(model, data, u, cfg.b, cfg.m, cfg.kernel, None)?;
    Ok(prob.eval(alpha, Order::Score)?.grad)
}

/// `H_n(α|u)`, row-major.
pub fn local_hessian(model: &ModelSpec, data: &Dataset, u: f64, alpha: &[f64], cfg: &FitConfig) -> Result<Vec<f64>> {
    let prob = LocalProblem::new(model, data, u, cfg.b, cfg.m, cfg.kernel, None)?;
    Ok(prob.eval(alpha, Order::Hessian)?.hess)
}

/// Maximizes `Q_n(α|u)`. Without `init` the level block is searched over a
/// grid and the higher blocks start at zero.
pub fn fit_local(model: &ModelSpec, data: &Dataset, u: f64, cfg: &FitConfig, init: Option<&[f64]>) -> Result<LocalFit> {
    cfg.validate(model)?;
    model.check_data(data)?;
    let prob = LocalProblem::new(model, data, u, cfg.b, cfg.m, cfg.kernel, None)?;
    let start = match init {
        Some(a) if a.len() == prob.n_coef() => a.to_vec(),
        Some(a) => {
            return Err(Error::InvalidConfig(format!(
                "initial value has length {}, expected {}",
                a.len(),
                prob.n_coef()
            )))
        }
        None => prob.multistart(cfg.multistart_per_coord, cfg.multistart_cap)?,
    };
    prob.solve(&start, cfg)
}

/// Default fitting grid `t/n` for `t = window + 1, ..., n - 1`.
pub fn default_grid(model: &ModelSpec, n: usize) -> Vec<f64> {
    (model.window() + 1..n).map(|t| t as f64 / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub u: f64,
    pub fit: Option<LocalFit>,
    pub error: Option<String>,
    pub truncation: Truncation,
    /// Kernel moments for this point's integration region; shared with the
    /// interior constants when the region covers the support.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub moments: Option<KernelMoments>,
}

impl PathPoint {
    pub fn is_boundary(&self, kernel: KernelSpec) -> bool {
        !self.truncation.covers_support(kernel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFit {
    pub config: FitConfig,
    pub points: Vec<PathPoint>,
    pub failures: usize,
    pub non_converged: usize,
}

impl PathFit {
    pub fn theta_hat(&self) -> Vec<Option<Vec<f64>>> {
        self.points.iter().map(|p| p.fit.as_ref().map(|f| f.theta_hat.clone())).collect()
    }
}

/// Options for [`fit_path_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathOptions {
    pub attach_moments: bool,
    /// Sweep the grid from right to left.
    pub reverse: bool,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            attach_moments: true,
            reverse: false,
        }
    }
}

/// Sequential path fit with warm starts and staged orders.
pub fn fit_path(model: &ModelSpec, data: &Dataset, grid: &[f64], cfg: &FitConfig) -> Result<PathFit> {
    fit_path_with(model, data, grid, cfg, PathOptions::default())
}

pub fn fit_path_with(
    model: &ModelSpec,
    data: &Dataset,
    grid: &[f64],
    cfg: &FitConfig,
    opts: PathOptions,
) -> Result<PathFit> {
    cfg.validate(model)?;
    model.check_data(data)?;
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty fitting grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|u| !(*u > 0.0 && *u < 1.0)) {
        return Err(Error::InvalidConfig("grid must be sorted and inside (0, 1)".into()));
    }
    let interior = if opts.attach_moments {
        Some(moments(cfg.kernel, cfg.m, Truncation::WHOLE_LINE)?)
    } else {
        None
    };
    let order: Vec<usize> = if opts.reverse {
        (0..grid.len()).rev().collect()
    } else {
        (0..grid.len()).collect()
    };
    let mut points: Vec<Option<PathPoint>> = vec![None; grid.len()];
    let mut warm = Warm::default();
    let mut failures = 0;
    let mut non_converged = 0;
    for &k in &order {
        let u = grid[k];
        let truncation = Truncation::at(u, cfg.b);
        let result = fit_staged(model, data, u, cfg, &mut warm, None);
        let moments = match &interior {
            Some(int) if truncation.covers_support(cfg.kernel) => Some(int.clone()),
            Some(_) => moments(cfg.kernel, cfg.m, truncation).ok(),
            None => None,
        };
        let point = match result {
            Ok(fit) => {
                if !fit.converged {
                    non_converged += 1;
                }
                PathPoint {
                    u,
                    fit: Some(fit),
                    error: None,
                    truncation,
                    moments,
                }
            }
            Err(e) => {
                failures += 1;
                PathPoint {
                    u,
                    fit: None,
                    error: Some(e.to_string()),
                    truncation,
                    moments,
                }
            }
        };
        points[k] = Some(point);
    }
    if failures as f64 > 0.2 * grid.len() as f64 {
        return Err(Error::PathFitAborted {
            failed: failures,
            total: grid.len(),
        });
    }
    Ok(PathFit {
        config: cfg.clone(),
        points: points.into_iter().map(|p| p.expect("every grid point visited")).collect(),
        failures,
        non_converged,
    })
}

/// Warm-start memory for sequential sweeps: the last order-0 and order-m
/// solutions.
#[derive(Debug, Clone, Default)]
pub struct Warm {
    pub level: Option<Vec<f64>>,
    pub full: Option<Vec<f64>>,
}

/// One staged fit at `u`: order 0 warm-started from the neighbour (or by
/// multistart), then order `m` started from the better of `(θ̂_0, 0, ...)`
/// and the neighbour's order-`m` solution.
pub fn fit_staged(
    model: &ModelSpec,
    data: &Dataset,
    u: f64,
    cfg: &FitConfig,
    warm: &mut Warm,
    exclude: Option<Range<usize>>,
) -> Result<LocalFit> {
    let prob0 = LocalProblem::new(model, data, u, cfg.b, 0, cfg.kernel, exclude.clone())?;
    let start0 = match &warm.level {
        Some(a) => a.clone(),
        None => prob0.multistart(cfg.multistart_per_coord, cfg.multistart_cap)?,
    };
    let fit0 = prob0.solve(&start0, cfg)?;
    warm.level = Some(fit0.alpha_hat.clone());
    if cfg.m == 0 {
        return Ok(fit0);
    }
    let prob = LocalProblem::new(model, data, u, cfg.b, cfg.m, cfg.kernel, exclude)?;
    let mut start = vec![0.0; prob.n_coef()];
    start[..fit0.theta_hat.len()].copy_from_slice(&fit0.theta_hat);
    if let Some(prev) = &warm.full {
        if let Ok(p) = prob.space.project_feasible(prev) {
            if prob.value(&p) > prob.value(&start) {
                start = p;
            }
        }
    }
    let fit = prob.solve(&start, cfg)?;
    warm.full = Some(fit.alpha_hat.clone());
    Ok(fit)
}

/// Modified GAR score `s̄_t = (ε_t² − 1) ∂_θλ_t(θ)/λ_t(θ)` driven by the true
/// innovations of a simulated dataset. Diagnostics only.
pub fn gar_score_variant(
    model: &ModelSpec,
    data: &Dataset,
    t: usize,
    theta: &[f64],
    state: Option<&LatentState>,
) -> Result<Vec<f64>> {
    if !matches!(model.family, Family::TvGarch11) {
        return Err(Error::Unsupported("the modified score is defined for recursive families".into()));
    }
    let eps = data
        .innovations
        .as_ref()
        .ok_or_else(|| Error::InvalidData("modified score needs the simulated innovations".into()))?;
    let owned;
    let st = match state {
        Some(s) => s,
        None => {
            owned = model.garch_filter_to(data, theta, t);
            &owned
        }
    };
    if !(st.lambda > 0.0) {
        return Err(Error::InvalidIntensity { t, value: st.lambda });
    }
    let f = eps[t] * eps[t] - 1.0;
    Ok(st.dlambda.iter().map(|d| f * d / st.lambda).collect())
}
