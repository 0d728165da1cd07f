//! Plug-in standard errors, pointwise normal bands, and the bias/variance
//! constants computed by long stationary simulation.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::{LocalFit, LocalProblem, PathFit};
use crate::kernel::{moments, raw_moment, KernelMoments, KernelSpec, Truncation};
use crate::models::{simulate_stationary, Dataset, Family, LatentState, LatentTangent, ModelSpec, Order, ParamPath};

/// Largest accepted condition number of the local Hessian.
pub const MAX_CONDITION: f64 = 1e12;

/// `Var(α̂) ≈ Ĥ⁻¹ V̂ Ĥ⁻¹ / n` for the full coefficient vector, with `Ĥ` the
/// local Hessian at the optimum and `V̂` the kernel-squared score outer product.
/// The `j`-th derivative block of `θ` is this block scaled by `b^{-2j}`.
pub fn sandwich_variance(model: &ModelSpec, data: &Dataset, fit: &LocalFit, kernel: KernelSpec) -> Result<DMatrix<f64>> {
    let prob = LocalProblem::new(model, data, fit.u, fit.b, fit.m, kernel, None)?;
    let p = prob.n_coef();
    if fit.alpha_hat.len() != p || fit.hessian.len() != p * p {
        return Err(Error::InvalidConfig("fit does not match the local problem".into()));
    }
    let h = DMatrix::from_row_slice(p, p, &fit.hessian);
    let v = DMatrix::from_row_slice(p, p, &prob.score_outer(&fit.alpha_hat)?);
    let hinv = checked_inverse(&h)?;
    let var = &hinv * v * &hinv / data.n() as f64;
    Ok(symmetrize(var))
}

/// Covariance of `θ̂(u)` alone: the level block of [`sandwich_variance`].
pub fn theta_variance(model: &ModelSpec, data: &Dataset, fit: &LocalFit, kernel: KernelSpec) -> Result<DMatrix<f64>> {
    let d = model.dim();
    Ok(sandwich_variance(model, data, fit, kernel)?.view((0, 0), (d, d)).into_owned())
}

fn checked_inverse(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = h.clone().singular_values();
    let condition = sv.max() / sv.min();
    if !(condition.is_finite() && condition <= MAX_CONDITION) {
        return Err(Error::DegenerateHessian { condition });
    }
    h.clone().try_inverse().ok_or(Error::DegenerateHessian { condition })
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Two-sided standard normal multiplier `z_{1-a/2}` for `level = 1 - a`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("level {level} outside (0, 1)")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferencePoint {
    pub u: f64,
    pub theta_hat: Option<Vec<f64>>,
    /// Covariance of `θ̂(u)`.
    pub variance: Option<DMatrix<f64>>,
    pub se: Option<Vec<f64>>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub truncation: Truncation,
    pub boundary: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub moments: Option<KernelMoments>,
    /// Oracle bias of `θ̂(u)`, attached only when an analytic path is known.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bias: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathInference {
    pub level: f64,
    pub z: f64,
    pub points: Vec<InferencePoint>,
}

/// Pointwise bands `θ̂_j(u) ± z·se_j(u)`, not bias corrected. Points whose
/// fit or variance failed keep their error message and carry no band.
pub fn confidence_bands(model: &ModelSpec, data: &Dataset, path: &PathFit, level: f64) -> Result<PathInference> {
    let z = normal_quantile(level)?;
    let kernel = path.config.kernel;
    let points = path
        .points
        .iter()
        .map(|pt| {
            let mut out = InferencePoint {
                u: pt.u,
                theta_hat: pt.fit.as_ref().map(|f| f.theta_hat.clone()),
                variance: None,
                se: None,
                lo: None,
                hi: None,
                truncation: pt.truncation,
                boundary: pt.is_boundary(kernel),
                moments: pt.moments.clone(),
                bias: None,
                error: pt.error.clone(),
            };
            let Some(fit) = &pt.fit else {
                return out;
            };
            match theta_variance(model, data, fit, kernel) {
                Ok(var) => {
                    let se: Vec<f64> = (0..var.nrows()).map(|i| var[(i, i)].max(0.0).sqrt()).collect();
                    out.lo = Some(fit.theta_hat.iter().zip(&se).map(|(t, s)| t - z * s).collect());
                    out.hi = Some(fit.theta_hat.iter().zip(&se).map(|(t, s)| t + z * s).collect());
                    out.se = Some(se);
                    out.variance = Some(var);
                }
                Err(e) => out.error = Some(e.to_string()),
            }
            out
        })
        .collect();
    Ok(PathInference { level, z, points })
}

/// Settings for the stationary-simulation oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Kept draws per replicate.
    pub n_sim: usize,
    pub reps: usize,
    pub seed: u64,
    pub burn_in: usize,
    #[serde(default)]
    pub kernel: KernelSpec,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_sim: 200_000,
            reps: 20,
            seed: 0,
            burn_in: 10_000,
            kernel: KernelSpec::default(),
        }
    }
}

/// Replicate mean of a matrix quantity and its Monte Carlo standard error.
/// Vectors are stored as single columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: DMatrix<f64>,
    pub se: DMatrix<f64>,
}

impl Estimate {
    fn from_reps(draws: &[DMatrix<f64>]) -> Self {
        let r = draws.len() as f64;
        let (nr, nc) = draws[0].shape();
        let mean = draws.iter().fold(DMatrix::zeros(nr, nc), |acc, d| acc + d) / r;
        let se = if draws.len() > 1 {
            let ss = draws
                .iter()
                .fold(DMatrix::zeros(nr, nc), |acc, d| acc + (d - &mean).map(|x| x * x));
            (ss / (r - 1.0) / r).map(f64::sqrt)
        } else {
            DMatrix::zeros(nr, nc)
        };
        Self { mean, se }
    }
}

/// Bias and variance constants at `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasOracle {
    pub u: f64,
    pub m: usize,
    /// `H(u) = E[h*_t]`.
    pub h: Estimate,
    /// `Ω(u) = E[s*_t s*_t']`.
    pub omega: Estimate,
    /// `∂_u H(u)`; unavailable for count data.
    pub dh_du: Option<Estimate>,
    /// `∂H(u)/∂θ_i` for each `i`.
    pub dh_dtheta: Vec<Estimate>,
    /// Local constant bias functional `Bias₀(u)`.
    pub bias0: Option<Estimate>,
    /// `H⁻¹ Bias₀`: the local constant bias of `θ̂(u)` divided by `b²`.
    pub bias0_theta: Option<Estimate>,
    /// Leading order-`m` bias of `θ̂(u)` divided by `b^{m+1}`, from the
    /// interior kernel constants. Zero for `m = 0`.
    pub leading: Option<Vec<f64>>,
}

impl BiasOracle {
    /// Predicted bias of `θ̂(u)` at bandwidth `b`: `b² H⁻¹ Bias₀` for the
    /// local constant fit, `b^{m+1}` times the leading term otherwise.
    pub fn predicted_bias(&self, b: f64) -> Option<Vec<f64>> {
        if self.m == 0 {
            self.bias0_theta
                .as_ref()
                .map(|e| e.mean.iter().map(|x| b * b * x).collect())
        } else {
            let s = b.powi(self.m as i32 + 1);
            self.leading.as_ref().map(|l| l.iter().map(|x| s * x).collect())
        }
    }
}

struct RepMoments {
    h: DMatrix<f64>,
    omega: DMatrix<f64>,
    dh_du: Option<DMatrix<f64>>,
    dh_dtheta: Vec<DMatrix<f64>>,
}

/// Estimates `H`, `Ω`, `∂_u H` and `∂_θ H` at `θ(u)` from `reps` independent
/// stationary simulations and assembles the bias constants. Path derivatives
/// that the path does not supply leave the corresponding terms empty.
pub fn bias_oracle(model: &ModelSpec, path: &ParamPath, u: f64, m: usize, cfg: &OracleConfig) -> Result<BiasOracle> {
    if model.is_recursive() && m >= 1 {
        return Err(Error::Unsupported(
            "bias constants for recursive models are only available for local constant fits".into(),
        ));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidConfig(format!("u = {u} outside (0, 1)")));
    }
    if cfg.reps == 0 || cfg.n_sim == 0 {
        return Err(Error::InvalidConfig("oracle needs at least one replicate and one draw".into()));
    }
    let d1 = path.derivative(1, u);
    let d2 = path.derivative(2, u);
    let with_deriv = d1.is_some() && !matches!(model.family, Family::TvParx { .. });
    let reps: Vec<RepMoments> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| replicate(model, path, u, cfg, r as u64, with_deriv))
        .collect::<Result<_>>()?;

    let h_draws: Vec<_> = reps.iter().map(|r| r.h.clone()).collect();
    let o_draws: Vec<_> = reps.iter().map(|r| r.omega.clone()).collect();
    let p = model.dim();
    let dh_dtheta = (0..p)
        .map(|i| Estimate::from_reps(&reps.iter().map(|r| r.dh_dtheta[i].clone()).collect::<Vec<_>>()))
        .collect();
    let dh_du = with_deriv.then(|| {
        Estimate::from_reps(&reps.iter().map(|r| r.dh_du.clone().expect("derivative run")).collect::<Vec<_>>())
    });

    let (mut bias0, mut bias0_theta) = (None, None);
    if let (true, Some(t1), Some(t2)) = (with_deriv, d1.as_ref(), d2.as_ref()) {
        let k10 = raw_moment(cfg.kernel, 2, Truncation::WHOLE_LINE)?;
        let t1 = DMatrix::from_column_slice(p, 1, t1);
        let t2 = DMatrix::from_column_slice(p, 1, t2);
        let mut b_draws = Vec::with_capacity(reps.len());
        let mut bt_draws = Vec::with_capacity(reps.len());
        for r in &reps {
            let mut curv = DMatrix::zeros(p, p);
            for i in 0..p {
                curv += &r.dh_dtheta[i] * t1[i];
            }
            let b0 = (&r.h * &t2 * 0.5 + r.dh_du.as_ref().expect("derivative run") * &t1 + curv * &t1 * 0.5) * k10;
            let hinv = checked_inverse(&r.h)?;
            bt_draws.push(hinv * &b0);
            b_draws.push(b0);
        }
        bias0 = Some(Estimate::from_reps(&b_draws));
        bias0_theta = Some(Estimate::from_reps(&bt_draws));
    }

    let leading = match m {
        0 => Some(vec![0.0; p]),
        1 => d2.as_ref().map(|t2| leading_term(cfg.kernel, 1, t2)).transpose()?,
        _ => None,
    };

    Ok(BiasOracle {
        u,
        m,
        h: Estimate::from_reps(&h_draws),
        omega: Estimate::from_reps(&o_draws),
        dh_du,
        dh_dtheta,
        bias0,
        bias0_theta,
        leading,
    })
}

/// `Ω(u) + c·H(u)` with its standard error computed replicate by replicate,
/// so the correlation between the two estimates is accounted for. The
/// information-type identities say this is zero with `c = Var(ε²)` for
/// Gaussian ARCH and `c = 1` for Poisson models.
pub fn moment_identity(model: &ModelSpec, path: &ParamPath, u: f64, c: f64, cfg: &OracleConfig) -> Result<Estimate> {
    if cfg.reps == 0 || cfg.n_sim == 0 {
        return Err(Error::InvalidConfig("oracle needs at least one replicate and one draw".into()));
    }
    let draws: Vec<DMatrix<f64>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| replicate(model, path, u, cfg, r as u64, false).map(|m| m.omega + m.h * c))
        .collect::<Result<_>>()?;
    Ok(Estimate::from_reps(&draws))
}

/// `(K1⁻¹ μ1)_0 θ^{(m+1)} / (m+1)!` with interior moments.
fn leading_term(kernel: KernelSpec, m: usize, deriv: &[f64]) -> Result<Vec<f64>> {
    let km = moments(kernel, m, Truncation::WHOLE_LINE)?;
    let k = km
        .kappa1(0)
        .ok_or_else(|| Error::InvalidConfig("singular kernel moment matrix".into()))?;
    let fact: f64 = (1..=m + 1).map(|i| i as f64).product();
    Ok(deriv.iter().map(|x| k * x / fact).collect())
}

fn replicate_seed(seed: u64, r: u64) -> u64 {
    seed.wrapping_add((r + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn replicate(model: &ModelSpec, path: &ParamPath, u: f64, cfg: &OracleConfig, r: u64, with_deriv: bool) -> Result<RepMoments> {
    let theta = path.eval(u);
    let p = model.dim();
    let skip = cfg.burn_in.max(model.window());
    let sample = simulate_stationary(model, u, path, cfg.n_sim + skip, replicate_seed(cfg.seed, r), with_deriv)?;
    let data = &sample.data;
    let n = data.n();
    let inv = 1.0 / (n - skip) as f64;
    let lambda_start = sample.intensity.as_ref().map_or(1.0, |l| l[0]);
    let is_garch = matches!(model.family, Family::TvGarch11);

    let mut h = DMatrix::zeros(p, p);
    let mut omega = DMatrix::zeros(p, p);
    let mut dh_du = with_deriv.then(|| DMatrix::zeros(p, p));
    let mut dh_dtheta = vec![DMatrix::zeros(p, p); p];

    let mut st = LatentState::initial(lambda_start);
    let mut tan = LatentTangent {
        lambda: sample.derivative_intensity.as_ref().map_or(0.0, |l| l[0]),
        ..Default::default()
    };
    for t in 0..n {
        if is_garch && t > 0 {
            st = st.advance(&theta, data.y[t - 1]);
            if with_deriv {
                let dy = sample.derivative.as_ref().expect("derivative run");
                tan = tan.advance(&theta, dy[t - 1]);
            }
        }
        if t < skip {
            continue;
        }
        let state = is_garch.then_some(&st);
        let ev = model.eval_t(data, t, &theta, state, Order::Hessian)?;
        for i in 0..p {
            for j in 0..p {
                h[(i, j)] += inv * ev.hess[i * p + j];
                omega[(i, j)] += inv * ev.score[i] * ev.score[j];
            }
        }
        if let Some(acc) = dh_du.as_mut() {
            let dy = sample.derivative.as_ref().expect("derivative run");
            let garch = is_garch.then_some((&st, &tan));
            let dh = model.hessian_time_derivative(data, dy, t, &theta, garch)?;
            for k in 0..p * p {
                acc[(k / p, k % p)] += inv * dh[k];
            }
        }
        if !is_garch {
            let d3 = model.third_derivative_t(data, t, &theta)?.expect("closed-form third derivative");
            for i in 0..p {
                for j in 0..p {
                    for k in 0..p {
                        dh_dtheta[i][(j, k)] += inv * d3[(i * p + j) * p + k];
                    }
                }
            }
        }
    }
    if is_garch {
        for (i, slot) in dh_dtheta.iter_mut().enumerate() {
            let step = 1e-5 * theta[i].abs().max(1.0);
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += step;
            tm[i] -= step;
            let hp = garch_mean_hessian(model, data, &tp, skip, lambda_start)?;
            let hm = garch_mean_hessian(model, data, &tm, skip, lambda_start)?;
            *slot = (hp - hm) / (2.0 * step);
        }
    }
    Ok(RepMoments {
        h: symmetrize(h),
        omega: symmetrize(omega),
        dh_du: dh_du.map(symmetrize),
        dh_dtheta: dh_dtheta.into_iter().map(symmetrize).collect(),
    })
}

fn garch_mean_hessian(model: &ModelSpec, data: &Dataset, theta: &[f64], skip: usize, lambda0: f64) -> Result<DMatrix<f64>> {
    let p = model.dim();
    let n = data.n();
    let inv = 1.0 / (n - skip) as f64;
    let mut st = LatentState::initial(lambda0);
    let mut h = DMatrix::zeros(p, p);
    for t in 0..n {
        if t > 0 {
            st = st.advance(theta, data.y[t - 1]);
        }
        if t < skip {
            continue;
        }
        let hess = model.hessian_t(data, t, theta, Some(&st))?;
        for k in 0..p * p {
            h[(k / p, k % p)] += inv * hess[k];
        }
    }
    Ok(h)
}
