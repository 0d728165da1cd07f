//! Model families and their per-observation quasi-log-likelihoods.
//!
//! All objectives are maximized. The tv-VAR criterion is the negative squared
//! residual so the four families share one contract. Scores and Hessians are
//! analytic; the GARCH variants advance `λ`, `∂λ` and `∂²λ` jointly through
//! [`LatentState`].

mod path;
mod sim;
mod space;

pub use path::ParamPath;
pub use sim::{
    coupled_deviation, poisson_sample, rng_stream, simulate, simulate_stationary, simulate_with,
    SimOptions, StationarySample, DEFAULT_BURN_IN,
};
pub use space::{LinearConstraint, ThetaSpace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar map applied to the lagged PARX covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovariateTransform {
    /// No covariate: a pure Poisson autoregression.
    None,
    /// `max(x, 0)`.
    #[default]
    PositivePart,
    /// `exp(x)`.
    Exp,
    /// `exp(-x)`.
    ExpNeg,
}

impl CovariateTransform {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Self::None => 0.0,
            Self::PositivePart => x.max(0.0),
            Self::Exp => x.exp(),
            Self::ExpNeg => (-x).exp(),
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "none" => Ok(Self::None),
            "positive" | "identity" | "positive_part" => Ok(Self::PositivePart),
            "exp" => Ok(Self::Exp),
            "exp_neg" | "expneg" => Ok(Self::ExpNeg),
            other => Err(Error::InvalidConfig(format!("unknown covariate transform '{other}'"))),
        }
    }
}

/// Model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `d`-dimensional VAR(q), `θ = (vec Φ_1, ..., vec Φ_q)` column-major.
    TvVar { d: usize, q: usize },
    /// ARCH(q) on squared returns `W_t`, `θ = (ω, α_1, ..., α_q)`.
    TvArch { q: usize },
    /// GARCH(1,1) on squared returns, `θ = (ω, α, β)`.
    TvGarch11,
    /// Poisson autoregression with optional covariate, `θ = (ω, α_1..α_q[, γ])`.
    TvParx { q: usize, covariate: CovariateTransform },
}

impl Family {
    pub fn dim(&self) -> usize {
        match *self {
            Family::TvVar { d, q } => d * d * q,
            Family::TvArch { q } => q + 1,
            Family::TvGarch11 => 3,
            Family::TvParx { q, covariate } => q + 1 + usize::from(covariate != CovariateTransform::None),
        }
    }

    /// Number of leading observations used only as conditioning lags.
    pub fn window(&self) -> usize {
        match *self {
            Family::TvVar { q, .. } | Family::TvArch { q } => q,
            Family::TvGarch11 => 1,
            Family::TvParx { q, covariate } => q.max(usize::from(covariate != CovariateTransform::None)),
        }
    }

    pub fn is_recursive(&self) -> bool {
        matches!(self, Family::TvGarch11)
    }

    /// Dimension of one observation `Y_t`.
    pub fn obs_dim(&self) -> usize {
        match *self {
            Family::TvVar { d, .. } => d,
            _ => 1,
        }
    }

    pub fn has_covariate(&self) -> bool {
        matches!(self, Family::TvParx { covariate, .. } if *covariate != CovariateTransform::None)
    }

    /// Parameter names in coordinate order.
    pub fn param_names(&self) -> Vec<String> {
        match *self {
            Family::TvVar { d, q } => {
                let mut out = Vec::with_capacity(d * d * q);
                for i in 0..q {
                    for c in 0..d {
                        for r in 0..d {
                            out.push(format!("phi{}_{}{}", i + 1, r + 1, c + 1));
                        }
                    }
                }
                out
            }
            Family::TvArch { q } => {
                let mut out = vec!["omega".to_string()];
                if q == 1 {
                    out.push("alpha".into());
                } else {
                    out.extend((1..=q).map(|i| format!("alpha{i}")));
                }
                out
            }
            Family::TvGarch11 => vec!["omega".into(), "alpha".into(), "beta".into()],
            Family::TvParx { q, covariate } => {
                let mut out = vec!["omega".to_string()];
                if q == 1 {
                    out.push("alpha".into());
                } else {
                    out.extend((1..=q).map(|i| format!("alpha{i}")));
                }
                if covariate != CovariateTransform::None {
                    out.push("gamma".into());
                }
                out
            }
        }
    }

    /// Default compact parameter space. Intercepts and loadings get positive
    /// lower bounds where the intensity must stay positive, and the
    /// autoregressive loadings satisfy `sum <= 1 - δ` with `δ = 10^-3`.
    pub fn default_theta_space(&self) -> ThetaSpace {
        const DELTA: f64 = 1e-3;
        let persistence = |dim: usize, idx: &[usize]| -> LinearConstraint {
            let mut a = vec![0.0; dim];
            for i in idx {
                a[*i] = 1.0;
            }
            LinearConstraint { a, c: 1.0 - DELTA }
        };
        let space = match *self {
            Family::TvVar { d, q } => {
                let p = d * d * q;
                ThetaSpace::new(vec![-10.0; p], vec![10.0; p], vec![], 0.0)
            }
            Family::TvArch { q } => {
                let mut lo = vec![0.0; q + 1];
                let mut hi = vec![1.0; q + 1];
                lo[0] = 1e-3;
                hi[0] = 1e3;
                let lin = if q > 1 {
                    vec![persistence(q + 1, &(1..=q).collect::<Vec<_>>())]
                } else {
                    hi[1] = 1.0 - DELTA;
                    vec![]
                };
                ThetaSpace::new(lo, hi, lin, DELTA)
            }
            Family::TvGarch11 => ThetaSpace::new(
                vec![1e-4, 0.0, 0.0],
                vec![1e3, 1.0, 1.0],
                vec![persistence(3, &[1, 2])],
                DELTA,
            ),
            Family::TvParx { q, covariate } => {
                let p = self.dim();
                let mut lo = vec![0.0; p];
                let mut hi = vec![1.0; p];
                lo[0] = 1e-3;
                hi[0] = 1e3;
                if covariate != CovariateTransform::None {
                    hi[p - 1] = 1e3;
                }
                let lin = if q > 1 {
                    vec![persistence(p, &(1..=q).collect::<Vec<_>>())]
                } else {
                    hi[1] = 1.0 - DELTA;
                    vec![]
                };
                ThetaSpace::new(lo, hi, lin, DELTA)
            }
        };
        space.expect("default parameter spaces are nonempty")
    }
}

/// A model family with its parameter space and, for VAR and PARX, the
/// auxiliary processes used only by the simulators.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub family: Family,
    pub theta_space: ThetaSpace,
    /// Initial latent intensity for the GARCH filter. `None` uses the sample
    /// mean of `W`.
    pub lambda0: Option<f64>,
    /// VAR noise loading `Σ(u)` (column-major `d × d`); identity when absent.
    pub noise: Option<ParamPath>,
    /// PARX covariate process `(ρ(u), σ(u))` with
    /// `X_t = ρ X_{t-1} + σ ε_t`; `(0.5, 1)` when absent.
    pub covariate_process: Option<ParamPath>,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        Self {
            theta_space: family.default_theta_space(),
            family,
            lambda0: None,
            noise: None,
            covariate_process: None,
        }
    }

    pub fn tv_var(d: usize, q: usize) -> Self {
        Self::new(Family::TvVar { d, q })
    }

    pub fn tv_arch(q: usize) -> Self {
        Self::new(Family::TvArch { q })
    }

    pub fn tv_garch11() -> Self {
        Self::new(Family::TvGarch11)
    }

    pub fn tv_parx(q: usize, covariate: CovariateTransform) -> Self {
        Self::new(Family::TvParx { q, covariate })
    }

    pub fn with_theta_space(mut self, space: ThetaSpace) -> Result<Self> {
        if space.dim() != self.family.dim() {
            return Err(Error::InvalidConfig(format!(
                "parameter space has dimension {}, family needs {}",
                space.dim(),
                self.family.dim()
            )));
        }
        self.theta_space = space;
        Ok(self)
    }

    pub fn with_noise(mut self, noise: ParamPath) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn with_covariate_process(mut self, cov: ParamPath) -> Self {
        self.covariate_process = Some(cov);
        self
    }

    pub fn with_lambda0(mut self, lambda0: f64) -> Self {
        self.lambda0 = Some(lambda0);
        self
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn window(&self) -> usize {
        self.family.window()
    }

    pub fn is_recursive(&self) -> bool {
        self.family.is_recursive()
    }

    /// Starting value of the GARCH filter for this dataset.
    pub fn initial_lambda(&self, data: &Dataset) -> f64 {
        self.lambda0.unwrap_or_else(|| {
            let n = data.n().max(1);
            (data.y.iter().sum::<f64>() / n as f64).max(1e-8)
        })
    }

    /// Checks that `data` can be consumed by this model.
    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        data.validate()?;
        if data.dim != self.family.obs_dim() {
            return Err(Error::InvalidData(format!(
                "observation dimension {} does not match model ({})",
                data.dim,
                self.family.obs_dim()
            )));
        }
        match self.family {
            Family::TvArch { .. } | Family::TvGarch11 => {
                if let Some(t) = data.y.iter().position(|w| *w < 0.0) {
                    return Err(Error::InvalidData(format!("negative squared return at t = {t}")));
                }
            }
            Family::TvParx { covariate, .. } => {
                if let Some(t) = data.y.iter().position(|y| *y < 0.0 || y.fract() != 0.0) {
                    return Err(Error::InvalidData(format!(
                        "count at t = {t} is not a nonnegative integer"
                    )));
                }
                if covariate != CovariateTransform::None && data.x.is_none() {
                    return Err(Error::InvalidData("PARX covariate column missing".into()));
                }
            }
            Family::TvVar { .. } => {}
        }
        if data.n() < 2 * self.window() + 1 {
            return Err(Error::InvalidData("series too short for the model's lag window".into()));
        }
        Ok(())
    }

    /// Search box used by multistart grids: the parameter box with intercept
    /// scales tied to the data.
    pub fn search_box(&self, data: &Dataset) -> Vec<(f64, f64)> {
        let space = &self.theta_space;
        let mean_y = data.y.iter().sum::<f64>() / data.y.len().max(1) as f64;
        let clamp = |i: usize, lo: f64, hi: f64| -> (f64, f64) {
            let l = lo.max(space.lower[i]);
            let h = hi.min(space.upper[i]);
            if h > l {
                (l, h)
            } else {
                (space.lower[i], space.upper[i])
            }
        };
        (0..self.dim())
            .map(|i| match self.family {
                Family::TvVar { .. } => clamp(i, -1.0, 1.0),
                Family::TvArch { .. } | Family::TvGarch11 | Family::TvParx { .. } => {
                    if i == 0 {
                        clamp(i, space.lower[0], 2.0 * mean_y.max(1e-3))
                    } else if self.family.has_covariate() && i == self.dim() - 1 {
                        let xbar = data
                            .x
                            .as_ref()
                            .map(|x| {
                                let cov = match self.family {
                                    Family::TvParx { covariate, .. } => covariate,
                                    _ => CovariateTransform::None,
                                };
                                x.iter().map(|v| cov.apply(*v)).sum::<f64>() / x.len().max(1) as f64
                            })
                            .unwrap_or(1.0)
                            .max(1e-3);
                        clamp(i, 0.0, 2.0 * mean_y.max(1e-3) / xbar)
                    } else {
                        clamp(i, space.lower[i], space.upper[i])
                    }
                }
            })
            .collect()
    }

    /// Regressors `g_t` with `λ_t = g_t'θ`, for the families whose intensity
    /// is linear in `θ` (ARCH and PARX).
    pub fn intensity_regressors(&self, data: &Dataset, t: usize) -> Option<Vec<f64>> {
        match self.family {
            Family::TvArch { .. } | Family::TvParx { .. } if t >= self.window() => {
                let mut g = vec![0.0; self.dim()];
                self.lagged_regressors(data, t, &mut g);
                Some(g)
            }
            _ => None,
        }
    }

    fn lagged_regressors(&self, data: &Dataset, t: usize, g: &mut [f64]) {
        match self.family {
            Family::TvArch { q } => {
                g[0] = 1.0;
                for i in 1..=q {
                    g[i] = data.y[t - i];
                }
            }
            Family::TvParx { q, covariate } => {
                g[0] = 1.0;
                for i in 1..=q {
                    g[i] = data.y[t - i];
                }
                if covariate != CovariateTransform::None {
                    let x = data.x.as_ref().expect("validated covariate");
                    g[q + 1] = covariate.apply(x[t - 1]);
                }
            }
            _ => unreachable!("only linear-intensity families use regressors"),
        }
    }

    /// Evaluates the quasi-log-likelihood contribution at observation `t`
    /// (0-based) and, depending on `order`, its score and Hessian.
    ///
    /// For GARCH `state` must hold `(λ_t(θ), ∂λ_t, ∂²λ_t)`; when it is `None`
    /// the filter is run from `t = 0`.
    pub fn eval_into(
        &self,
        data: &Dataset,
        t: usize,
        theta: &[f64],
        state: Option<&LatentState>,
        order: Order,
        out: &mut ObsEval,
    ) -> Result<()> {
        let p = self.dim();
        debug_assert!(t >= self.window());
        out.resize(p);
        match self.family {
            Family::TvVar { d, q } => {
                let y = &data.y;
                let mut sq = 0.0;
                let mut resid = [0.0f64; 16];
                let mut resid_vec;
                let e: &mut [f64] = if d <= 16 {
                    &mut resid[..d]
                } else {
                    resid_vec = vec![0.0; d];
                    &mut resid_vec
                };
                for r in 0..d {
                    let mut fit = 0.0;
                    for i in 0..q {
                        let lag = &y[(t - i - 1) * d..(t - i) * d];
                        for c in 0..d {
                            fit += theta[i * d * d + c * d + r] * lag[c];
                        }
                    }
                    e[r] = y[t * d + r] - fit;
                    sq += e[r] * e[r];
                }
                out.value = -sq;
                if order >= Order::Score {
                    for i in 0..q {
                        let lag = &y[(t - i - 1) * d..(t - i) * d];
                        for c in 0..d {
                            for r in 0..d {
                                out.score[i * d * d + c * d + r] = 2.0 * e[r] * lag[c];
                            }
                        }
                    }
                }
                if order >= Order::Hessian {
                    out.hess.iter_mut().for_each(|h| *h = 0.0);
                    for i in 0..q {
                        let li = &y[(t - i - 1) * d..(t - i) * d];
                        for j in 0..q {
                            let lj = &y[(t - j - 1) * d..(t - j) * d];
                            for c in 0..d {
                                for c2 in 0..d {
                                    let v = -2.0 * li[c] * lj[c2];
                                    for r in 0..d {
                                        let a = i * d * d + c * d + r;
                                        let b = j * d * d + c2 * d + r;
                                        out.hess[a * p + b] = v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Family::TvArch { .. } => {
                let mut g = [0.0f64; 32];
                let g = &mut g[..p];
                self.lagged_regressors(data, t, g);
                let lambda: f64 = g.iter().zip(theta).map(|(a, b)| a * b).sum();
                if !(lambda > 0.0) {
                    return Err(Error::InvalidIntensity { t, value: lambda });
                }
                let w = data.y[t];
                out.value = -lambda.ln() - w / lambda;
                if order >= Order::Score {
                    let s = (w / lambda - 1.0) / lambda;
                    for i in 0..p {
                        out.score[i] = s * g[i];
                    }
                }
                if order >= Order::Hessian {
                    let c = 1.0 / (lambda * lambda) - 2.0 * w / (lambda * lambda * lambda);
                    outer_into(c, g, &mut out.hess);
                }
            }
            Family::TvParx { .. } => {
                let mut g = [0.0f64; 32];
                let g = &mut g[..p];
                self.lagged_regressors(data, t, g);
                let lambda: f64 = g.iter().zip(theta).map(|(a, b)| a * b).sum();
                if !(lambda > 0.0) {
                    return Err(Error::InvalidIntensity { t, value: lambda });
                }
                let y = data.y[t];
                out.value = y * lambda.ln() - lambda;
                if order >= Order::Score {
                    let s = y / lambda - 1.0;
                    for i in 0..p {
                        out.score[i] = s * g[i];
                    }
                }
                if order >= Order::Hessian {
                    outer_into(-y / (lambda * lambda), g, &mut out.hess);
                }
            }
            Family::TvGarch11 => {
                let owned;
                let st = match state {
                    Some(s) => s,
                    None => {
                        owned = self.garch_filter_to(data, theta, t);
                        &owned
                    }
                };
                let lambda = st.lambda;
                if !(lambda > 0.0) {
                    return Err(Error::InvalidIntensity { t, value: lambda });
                }
                let w = data.y[t];
                out.value = -lambda.ln() - w / lambda;
                if order >= Order::Score {
                    let l1 = (w / lambda - 1.0) / lambda;
                    for i in 0..3 {
                        out.score[i] = l1 * st.dlambda[i];
                    }
                    if order >= Order::Hessian {
                        let l2 = 1.0 / (lambda * lambda) - 2.0 * w / (lambda * lambda * lambda);
                        for i in 0..3 {
                            for j in 0..3 {
                                out.hess[i * 3 + j] =
                                    l1 * st.d2lambda[i * 3 + j] + l2 * st.dlambda[i] * st.dlambda[j];
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Runs the GARCH filter from the initial value up to observation `t`.
    pub fn garch_filter_to(&self, data: &Dataset, theta: &[f64], t: usize) -> LatentState {
        let mut st = LatentState::initial(self.initial_lambda(data));
        for s in 1..=t {
            st = st.advance(theta, data.y[s - 1]);
        }
        st
    }

    pub fn eval_t(
        &self,
        data: &Dataset,
        t: usize,
        theta: &[f64],
        state: Option<&LatentState>,
        order: Order,
    ) -> Result<ObsEval> {
        let mut out = ObsEval::new(self.dim());
        self.eval_into(data, t, theta, state, order, &mut out)?;
        Ok(out)
    }

    pub fn loglik_t(&self, data: &Dataset, t: usize, theta: &[f64], state: Option<&LatentState>) -> Result<f64> {
        Ok(self.eval_t(data, t, theta, state, Order::Value)?.value)
    }

    pub fn score_t(&self, data: &Dataset, t: usize, theta: &[f64], state: Option<&LatentState>) -> Result<Vec<f64>> {
        Ok(self.eval_t(data, t, theta, state, Order::Score)?.score)
    }

    /// Row-major `d_θ × d_θ` Hessian of `loglik_t`.
    pub fn hessian_t(&self, data: &Dataset, t: usize, theta: &[f64], state: Option<&LatentState>) -> Result<Vec<f64>> {
        Ok(self.eval_t(data, t, theta, state, Order::Hessian)?.hess)
    }

    /// Third derivative `∂h_t/∂θ_i` as a flat `(i, j, k)` array, for the
    /// families whose intensity is linear in `θ`. GARCH returns `None`.
    pub fn third_derivative_t(&self, data: &Dataset, t: usize, theta: &[f64]) -> Result<Option<Vec<f64>>> {
        let p = self.dim();
        match self.family {
            Family::TvVar { .. } => Ok(Some(vec![0.0; p * p * p])),
            Family::TvArch { .. } | Family::TvParx { .. } => {
                let mut g = vec![0.0; p];
                self.lagged_regressors(data, t, &mut g);
                let lambda: f64 = g.iter().zip(theta).map(|(a, b)| a * b).sum();
                if !(lambda > 0.0) {
                    return Err(Error::InvalidIntensity { t, value: lambda });
                }
                let y = data.y[t];
                let l3 = match self.family {
                    Family::TvArch { .. } => -2.0 / lambda.powi(3) + 6.0 * y / lambda.powi(4),
                    _ => 2.0 * y / lambda.powi(3),
                };
                let mut out = vec![0.0; p * p * p];
                for i in 0..p {
                    for j in 0..p {
                        for k in 0..p {
                            out[(i * p + j) * p + k] = l3 * g[i] * g[j] * g[k];
                        }
                    }
                }
                Ok(Some(out))
            }
            Family::TvGarch11 => Ok(None),
        }
    }

    /// Time derivative `∂_u h_t` of the Hessian with `θ` held fixed, given the
    /// derivative process `dy` (same layout as `data.y`). For GARCH, `state`
    /// and `tangent` are the filter and its tangent in the direction `dy`.
    pub fn hessian_time_derivative(
        &self,
        data: &Dataset,
        dy: &[f64],
        t: usize,
        theta: &[f64],
        garch: Option<(&LatentState, &LatentTangent)>,
    ) -> Result<Vec<f64>> {
        let p = self.dim();
        let mut out = vec![0.0; p * p];
        match self.family {
            Family::TvVar { d, q } => {
                let y = &data.y;
                for i in 0..q {
                    for j in 0..q {
                        for c in 0..d {
                            for c2 in 0..d {
                                let li = y[(t - i - 1) * d + c];
                                let lj = y[(t - j - 1) * d + c2];
                                let dli = dy[(t - i - 1) * d + c];
                                let dlj = dy[(t - j - 1) * d + c2];
                                let v = -2.0 * (dli * lj + li * dlj);
                                for r in 0..d {
                                    out[(i * d * d + c * d + r) * p + (j * d * d + c2 * d + r)] = v;
                                }
                            }
                        }
                    }
                }
            }
            Family::TvArch { q } => {
                let mut g = vec![0.0; p];
                self.lagged_regressors(data, t, &mut g);
                let mut dg = vec![0.0; p];
                for i in 1..=q {
                    dg[i] = dy[t - i];
                }
                let lambda: f64 = g.iter().zip(theta).map(|(a, b)| a * b).sum();
                let dlambda: f64 = dg.iter().zip(theta).map(|(a, b)| a * b).sum();
                let w = data.y[t];
                let dw = dy[t];
                let c = 1.0 / lambda.powi(2) - 2.0 * w / lambda.powi(3);
                let dc = (-2.0 / lambda.powi(3) + 6.0 * w / lambda.powi(4)) * dlambda - 2.0 * dw / lambda.powi(3);
                for i in 0..p {
                    for j in 0..p {
                        out[i * p + j] = dc * g[i] * g[j] + c * (dg[i] * g[j] + g[i] * dg[j]);
                    }
                }
            }
            Family::TvGarch11 => {
                let (st, tan) = garch.ok_or_else(|| {
                    Error::InvalidConfig("GARCH time derivative needs the filter state and tangent".into())
                })?;
                let lambda = st.lambda;
                let w = data.y[t];
                let dw = dy[t];
                let dl = tan.lambda;
                let l1 = w / lambda.powi(2) - 1.0 / lambda;
                let l2 = 1.0 / lambda.powi(2) - 2.0 * w / lambda.powi(3);
                let dl1 = dw / lambda.powi(2) + (-2.0 * w / lambda.powi(3) + 1.0 / lambda.powi(2)) * dl;
                let dl2 = -2.0 * dw / lambda.powi(3) + (-2.0 / lambda.powi(3) + 6.0 * w / lambda.powi(4)) * dl;
                for i in 0..3 {
                    for j in 0..3 {
                        out[i * 3 + j] = dl1 * st.d2lambda[i * 3 + j]
                            + l1 * tan.d2lambda[i * 3 + j]
                            + dl2 * st.dlambda[i] * st.dlambda[j]
                            + l2 * (tan.dlambda[i] * st.dlambda[j] + st.dlambda[i] * tan.dlambda[j]);
                    }
                }
            }
            Family::TvParx { .. } => {
                return Err(Error::Unsupported(
                    "the derivative process of count data is not defined".into(),
                ))
            }
        }
        Ok(out)
    }
}

/// How much of the likelihood derivative stack to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Score,
    Hessian,
}

/// Output buffer for [`ModelSpec::eval_into`]; the Hessian is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsEval {
    pub value: f64,
    pub score: Vec<f64>,
    pub hess: Vec<f64>,
}

impl ObsEval {
    pub fn new(p: usize) -> Self {
        Self {
            value: 0.0,
            score: vec![0.0; p],
            hess: vec![0.0; p * p],
        }
    }

    fn resize(&mut self, p: usize) {
        if self.score.len() != p {
            self.score = vec![0.0; p];
            self.hess = vec![0.0; p * p];
        }
    }
}

#[inline]
fn outer_into(c: f64, g: &[f64], out: &mut [f64]) {
    let p = g.len();
    for i in 0..p {
        let ci = c * g[i];
        for j in 0..p {
            out[i * p + j] = ci * g[j];
        }
    }
}

/// GARCH filter state `(λ_t(θ), ∂_θ λ_t(θ), ∂²_θθ λ_t(θ))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentState {
    pub lambda: f64,
    pub dlambda: [f64; 3],
    pub d2lambda: [f64; 9],
}

impl LatentState {
    pub fn initial(lambda0: f64) -> Self {
        Self {
            lambda: lambda0,
            dlambda: [0.0; 3],
            d2lambda: [0.0; 9],
        }
    }

    /// One step of `λ_t = ω + α W_{t-1} + β λ_{t-1}` with its derivatives.
    #[inline]
    pub fn advance(&self, theta: &[f64], w_prev: f64) -> Self {
        let (omega, alpha, beta) = (theta[0], theta[1], theta[2]);
        let lambda = omega + alpha * w_prev + beta * self.lambda;
        let dl = &self.dlambda;
        let dlambda = [1.0 + beta * dl[0], w_prev + beta * dl[1], self.lambda + beta * dl[2]];
        let mut d2lambda = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                let mut v = beta * self.d2lambda[i * 3 + j];
                if i == 2 {
                    v += dl[j];
                }
                if j == 2 {
                    v += dl[i];
                }
                d2lambda[i * 3 + j] = v;
            }
        }
        Self {
            lambda,
            dlambda,
            d2lambda,
        }
    }
}

/// Tangent of the GARCH filter in the direction of a data perturbation; the
/// filter is linear in `(W, state)` so the tangent obeys the homogeneous recursion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatentTangent {
    pub lambda: f64,
    pub dlambda: [f64; 3],
    pub d2lambda: [f64; 9],
}

impl LatentTangent {
    #[inline]
    pub fn advance(&self, theta: &[f64], dw_prev: f64) -> Self {
        let (alpha, beta) = (theta[1], theta[2]);
        let lambda = alpha * dw_prev + beta * self.lambda;
        let dl = &self.dlambda;
        let dlambda = [beta * dl[0], dw_prev + beta * dl[1], self.lambda + beta * dl[2]];
        let mut d2lambda = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                let mut v = beta * self.d2lambda[i * 3 + j];
                if i == 2 {
                    v += dl[j];
                }
                if j == 2 {
                    v += dl[i];
                }
                d2lambda[i * 3 + j] = v;
            }
        }
        Self {
            lambda,
            dlambda,
            d2lambda,
        }
    }
}

/// Observations `y` (row-major `n × dim`), optional covariate `x`, and, for
/// simulated data, the innovations that generated them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dim: usize,
    pub y: Vec<f64>,
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub innovations: Option<Vec<f64>>,
}

impl Dataset {
    pub fn univariate(y: Vec<f64>) -> Self {
        Self {
            dim: 1,
            y,
            x: None,
            innovations: None,
        }
    }

    pub fn multivariate(dim: usize, y: Vec<f64>) -> Result<Self> {
        let ds = Self {
            dim,
            y,
            x: None,
            innovations: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_covariate(mut self, x: Vec<f64>) -> Result<Self> {
        self.x = Some(x);
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.y.len() / self.dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.y.len() % self.dim != 0 {
            return Err(Error::InvalidData("observation array does not match dimension".into()));
        }
        if let Some(x) = &self.x {
            if x.len() != self.n() {
                return Err(Error::InvalidData("covariate length differs from observations".into()));
            }
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite observation".into()));
        }
        Ok(())
    }

    /// Observation `t` as a slice of length `dim`.
    pub fn obs(&self, t: usize) -> &[f64] {
        &self.y[t * self.dim..(t + 1) * self.dim]
    }
}

#[cfg(test)]
mod tests;
