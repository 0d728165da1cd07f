//! Leave-(2l+1)-out cross-validation of the bandwidth. The criterion is the
//! summed quasi-log-likelihood of the held-out observations, so larger is
//! better.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_staged, FitConfig, Warm};
use crate::kernel::KernelSpec;
use crate::models::{Dataset, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub b_grid: Vec<f64>,
    /// Half-width `l` of the deleted block; 0 is leave-one-out.
    #[serde(default)]
    pub leave_out: usize,
    /// Evaluate every `thin`-th held-out point.
    #[serde(default = "one")]
    pub thin: usize,
    pub m: usize,
    #[serde(default)]
    pub kernel: KernelSpec,
}

fn one() -> usize {
    1
}

impl CvConfig {
    pub fn new(b_grid: Vec<f64>, m: usize) -> Self {
        Self {
            b_grid,
            leave_out: 0,
            thin: 1,
            m,
            kernel: KernelSpec::default(),
        }
    }

    pub fn with_thin(mut self, thin: usize) -> Self {
        self.thin = thin;
        self
    }

    pub fn with_leave_out(mut self, l: usize) -> Self {
        self.leave_out = l;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.b_grid.is_empty() {
            return Err(Error::InvalidConfig("bandwidth grid is empty".into()));
        }
        if let Some(b) = self.b_grid.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return Err(Error::InvalidConfig(format!("bandwidth {b} outside (0, 1]")));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        Ok(())
    }

    fn fit_config(&self, b: f64) -> FitConfig {
        FitConfig::new(self.m, b).with_kernel(self.kernel)
    }
}

/// `count` log-spaced points between `lo` and `hi`, clipped to `(0, 1]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo.min(1.0)];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut out: Vec<f64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().min(1.0))
        .collect();
    out.dedup();
    out
}

/// Twelve log-spaced bandwidths on `[0.25, 2.5] n^{-1/5}`.
pub fn default_b_grid(n: usize) -> Vec<f64> {
    let r = (n as f64).powf(-0.2);
    log_grid(0.25 * r, 2.5 * r, 12)
}

/// Held-out indices evaluated by [`cv_score`].
pub fn cv_targets(model: &ModelSpec, n: usize, thin: usize) -> Vec<usize> {
    (model.window()..n).step_by(thin.max(1)).collect()
}

/// Detailed CV outcome at one bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub b: f64,
    pub score: Option<f64>,
    pub evaluated: usize,
    pub skipped: usize,
    pub error: Option<String>,
}

/// `CV(b) = Σ_{t₀} ℓ_{t₀}(θ̂_{-t₀}(t₀/n))`, where `θ̂_{-t₀}` is fit with the
/// block `t₀ - l, ..., t₀ + l` removed from the weighted sums.
pub fn cv_score(model: &ModelSpec, data: &Dataset, b: f64, cfg: &CvConfig) -> Result<f64> {
    let p = cv_point(model, data, b, cfg);
    match (p.score, p.error) {
        (Some(s), _) => Ok(s),
        (None, _) if p.skipped > 0 => Err(Error::CvUnstable {
            bandwidth: b,
            skipped: p.skipped,
            evaluated: p.evaluated,
        }),
        (None, Some(e)) => Err(Error::InvalidConfig(e)),
        (None, None) => Err(Error::AllBandwidthsUnstable),
    }
}

fn cv_point(model: &ModelSpec, data: &Dataset, b: f64, cfg: &CvConfig) -> CvPoint {
    let fail = |msg: String| CvPoint {
        b,
        score: None,
        evaluated: 0,
        skipped: 0,
        error: Some(msg),
    };
    if let Err(e) = cfg.validate() {
        return fail(e.to_string());
    }
    let fit_cfg = cfg.fit_config(b);
    if let Err(e) = fit_cfg.validate(model).and_then(|_| model.check_data(data)) {
        return fail(e.to_string());
    }
    let n = data.n();
    let targets = cv_targets(model, n, cfg.thin);
    let l = cfg.leave_out;
    let mut warm = Warm::default();
    let mut total = 0.0;
    let mut skipped = 0;
    for &t0 in &targets {
        let u0 = (t0 + 1) as f64 / n as f64;
        let excl = t0.saturating_sub(l)..(t0 + l + 1);
        let value = fit_staged(model, data, u0, &fit_cfg, &mut warm, Some(excl))
            .and_then(|fit| {
                if fit.converged {
                    model.loglik_t(data, t0, &fit.theta_hat, None)
                } else {
                    Err(Error::DegenerateHessian { condition: f64::NAN })
                }
            })
            .ok()
            .filter(|v| v.is_finite());
        match value {
            Some(v) => total += v,
            None => skipped += 1,
        }
    }
    let evaluated = targets.len();
    let unstable = skipped as f64 > 0.1 * evaluated as f64;
    CvPoint {
        b,
        score: (!unstable).then_some(total),
        evaluated,
        skipped,
        error: unstable.then(|| {
            Error::CvUnstable {
                bandwidth: b,
                skipped,
                evaluated,
            }
            .to_string()
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub b_star: f64,
    pub curve: Vec<CvPoint>,
}

/// Grid maximizer of the CV criterion; ties go to the larger bandwidth.
/// Candidates are evaluated in parallel.
pub fn select_bandwidth(model: &ModelSpec, data: &Dataset, cfg: &CvConfig) -> Result<BandwidthSelection> {
    cfg.validate()?;
    model.check_data(data)?;
    let curve: Vec<CvPoint> = cfg.b_grid.par_iter().map(|b| cv_point(model, data, *b, cfg)).collect();
    let mut best: Option<(f64, f64)> = None;
    for p in &curve {
        if let Some(s) = p.score {
            let better = match best {
                None => true,
                Some((bs, bb)) => s > bs || (s == bs && p.b > bb),
            };
            if better {
                best = Some((s, p.b));
            }
        }
    }
    match best {
        Some((_, b_star)) => Ok(BandwidthSelection { b_star, curve }),
        None => Err(Error::AllBandwidthsUnstable),
    }
}
