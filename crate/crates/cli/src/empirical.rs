//! Constant-parameter PARX lag selection and the time-varying follow-up fit.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use tvlik::estimator::{fit_local, FitConfig};
use tvlik::{CovariateTransform, Dataset, KernelSpec, ModelSpec};

use crate::error::{CliError, CliResult, ErrorKind};

/// `−2 logL + 2k`.
pub fn aic(loglik: f64, k: usize) -> f64 {
    -2.0 * loglik + 2.0 * k as f64
}

/// `−2 logL + k ln n`.
pub fn bic(loglik: f64, k: usize, n: usize) -> f64 {
    -2.0 * loglik + k as f64 * (n as f64).ln()
}

/// Free parameters of PARX(p): intercept, `p` lags and the covariate loading.
pub fn parx_free_params(p: usize, covariate: CovariateTransform) -> usize {
    p + 1 + usize::from(covariate != CovariateTransform::None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    pub p: usize,
    pub k: usize,
    /// Likelihood terms; the same for every `p` in one report.
    pub n: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    /// Probability integral transform test; not computed.
    pub pit: String,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantFitReport {
    pub covariate: CovariateTransform,
    pub fits: Vec<ConstantFit>,
    pub aic_choice: usize,
    pub bic_choice: usize,
}

/// Full-sample Poisson ML for each `p`. All orders are evaluated on the
/// common sample `t = max p, ..., n - 1`, so the criteria are comparable.
/// The fit is the local estimator at `u = 1/2` with a uniform kernel of
/// bandwidth 2, which weights every observation equally.
pub fn constant_fits(data: &Dataset, p_list: &[usize], covariate: CovariateTransform) -> CliResult<ConstantFitReport> {
    if p_list.is_empty() || p_list.contains(&0) {
        return Err(CliError::config("empirical.p_list must contain lag orders >= 1"));
    }
    let p_max = *p_list.iter().max().expect("nonempty");
    let n = data.n();
    if n < 10 * (p_max + 2) {
        return Err(CliError::new(
            ErrorKind::ModelDataMismatch,
            format!("{n} observations are too few for lag order {p_max} (need {})", 10 * (p_max + 2)),
        ));
    }
    let cfg = FitConfig::new(0, 2.0).with_kernel(KernelSpec::Uniform);
    let mut fits = Vec::with_capacity(p_list.len());
    for &p in p_list {
        let model = ModelSpec::tv_parx(p, covariate);
        let start = p_max - p;
        let sub = Dataset {
            dim: 1,
            y: data.y[start..].to_vec(),
            x: data.x.as_ref().filter(|_| covariate != CovariateTransform::None).map(|x| x[start..].to_vec()),
            innovations: None,
        };
        model.check_data(&sub)?;
        let fit = fit_local(&model, &sub, 0.5, &cfg, None)?;
        if !fit.converged {
            return Err(CliError::new(
                ErrorKind::Numerical,
                format!("constant PARX({p}) fit did not converge"),
            ));
        }
        let mut loglik = 0.0;
        for t in p..sub.n() {
            loglik += model.loglik_t(&sub, t, &fit.theta_hat, None)? - ln_gamma(sub.y[t] + 1.0);
        }
        let k = parx_free_params(p, covariate);
        let terms = sub.n() - p;
        fits.push(ConstantFit {
            p,
            k,
            n: terms,
            loglik,
            aic: aic(loglik, k),
            bic: bic(loglik, k, terms),
            pit: "n/a".into(),
            names: model.family.param_names(),
            estimates: fit.theta_hat,
        });
    }
    let argmin = |f: fn(&ConstantFit) -> f64| {
        fits.iter()
            .min_by(|a, b| f(a).total_cmp(&f(b)))
            .map(|c| c.p)
            .expect("nonempty")
    };
    Ok(ConstantFitReport {
        covariate,
        aic_choice: argmin(|c| c.aic),
        bic_choice: argmin(|c| c.bic),
        fits,
    })
}
