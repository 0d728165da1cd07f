//! Simulators for the triangular-array processes, their fixed-`u` stationary
//! approximations and the derivative processes `∂_u Y*_t(u)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use super::{CovariateTransform, Dataset, Family, ModelSpec, ParamPath};
use crate::error::{Error, Result};

const OVERFLOW: f64 = 1e12;

/// Default number of steps run at frozen `θ(0)` before the sample starts.
pub const DEFAULT_BURN_IN: usize = 500;

/// Independent RNG stream `stream` of the generator seeded by `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub burn_in: usize,
    /// First `window` observations (oldest first, row-major). When given the
    /// burn-in is skipped and the recursion starts from these values.
    pub init: Option<Vec<f64>>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            burn_in: DEFAULT_BURN_IN,
            init: None,
        }
    }
}

/// Draws from Poisson(`lambda`): inversion below 30, PTRS rejection above.
pub fn poisson_sample<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if lambda < 30.0 {
        let u: f64 = rng.gen();
        let mut p = (-lambda).exp();
        let mut s = p;
        let mut k = 0u32;
        while u > s && k < 1000 {
            k += 1;
            p *= lambda / k as f64;
            s += p;
        }
        return k as f64;
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -lambda + k * loglam - ln_gamma(k + 1.0) {
            return k;
        }
    }
}

/// Running state of one simulated path. Every series holds the pre-sample
/// history first; `offset` counts those entries.
struct Recursion<'a> {
    model: &'a ModelSpec,
    d: usize,
    y: Vec<f64>,
    lam: Vec<f64>,
    x: Vec<f64>,
    eps: Vec<f64>,
    offset: usize,
}

fn normals_per_step(family: &Family) -> usize {
    match *family {
        Family::TvVar { d, .. } => d,
        _ => 1,
    }
}

impl<'a> Recursion<'a> {
    fn new(model: &'a ModelSpec, theta0: &[f64], init: Option<&[f64]>) -> Result<Self> {
        let d = model.family.obs_dim();
        let w = model.window().max(1);
        let mut rec = Self {
            model,
            d,
            y: Vec::new(),
            lam: Vec::new(),
            x: Vec::new(),
            eps: Vec::new(),
            offset: 0,
        };
        if let Some(init) = init {
            if init.len() != model.window() * d {
                return Err(Error::InvalidConfig(format!(
                    "initial values need {} entries",
                    model.window() * d
                )));
            }
            rec.y.extend_from_slice(init);
            rec.offset = 0;
            let start_lam = match model.family {
                Family::TvGarch11 => init.first().copied().unwrap_or(1.0).max(1e-8),
                _ => 0.0,
            };
            rec.lam.extend(std::iter::repeat(start_lam).take(model.window()));
            rec.x.extend(std::iter::repeat(0.0).take(model.window()));
            rec.eps.extend(std::iter::repeat(0.0).take(model.window() * normals_per_step(&model.family)));
            return Ok(rec);
        }
        let level = match model.family {
            Family::TvVar { .. } => 0.0,
            Family::TvArch { q } | Family::TvParx { q, .. } => {
                let s: f64 = theta0[1..=q].iter().sum();
                theta0[0] / (1.0 - s).max(1e-3)
            }
            Family::TvGarch11 => theta0[0] / (1.0 - theta0[1] - theta0[2]).max(1e-3),
        };
        let level = if matches!(model.family, Family::TvParx { .. }) {
            level.round()
        } else {
            level
        };
        rec.y.extend(std::iter::repeat(level).take(w * d));
        rec.lam.extend(std::iter::repeat(level).take(w));
        rec.x.extend(std::iter::repeat(0.0).take(w));
        rec.eps.extend(std::iter::repeat(0.0).take(w * normals_per_step(&model.family)));
        rec.offset = w;
        Ok(rec)
    }

    fn len(&self) -> usize {
        self.y.len() / self.d
    }

    /// Appends one observation using parameter `theta`, auxiliary path values
    /// (`noise` for VAR, `cov` for PARX) and pre-drawn normals `z`.
    fn step<R: Rng + ?Sized>(
        &mut self,
        theta: &[f64],
        noise: Option<&[f64]>,
        cov: Option<&[f64]>,
        z: &[f64],
        rng: &mut R,
        t_report: usize,
    ) -> Result<()> {
        let t = self.len();
        let d = self.d;
        match self.model.family {
            Family::TvVar { q, .. } => {
                for r in 0..d {
                    let mut v = 0.0;
                    for i in 0..q {
                        let lag = &self.y[(t - i - 1) * d..(t - i) * d];
                        for c in 0..d {
                            v += theta[i * d * d + c * d + r] * lag[c];
                        }
                    }
                    v += match noise {
                        Some(s) => (0..d).map(|c| s[c * d + r] * z[c]).sum::<f64>(),
                        None => z[r],
                    };
                    if !(v.abs() <= OVERFLOW) {
                        return Err(Error::SimulationOverflow { t: t_report });
                    }
                    self.y.push(v);
                }
                self.eps.extend_from_slice(&z[..d]);
            }
            Family::TvArch { q } => {
                let mut lam = theta[0];
                for i in 1..=q {
                    lam += theta[i] * self.y[t - i];
                }
                let w = lam * z[0] * z[0];
                if !(lam.abs() <= OVERFLOW && w <= OVERFLOW) {
                    return Err(Error::SimulationOverflow { t: t_report });
                }
                self.lam.push(lam);
                self.y.push(w);
                self.eps.push(z[0]);
            }
            Family::TvGarch11 => {
                let lam = theta[0] + theta[1] * self.y[t - 1] + theta[2] * self.lam[t - 1];
                let w = lam * z[0] * z[0];
                if !(lam.abs() <= OVERFLOW && w <= OVERFLOW) {
                    return Err(Error::SimulationOverflow { t: t_report });
                }
                self.lam.push(lam);
                self.y.push(w);
                self.eps.push(z[0]);
            }
            Family::TvParx { q, covariate } => {
                let mut lam = theta[0];
                for i in 1..=q {
                    lam += theta[i] * self.y[t - i];
                }
                if covariate != CovariateTransform::None {
                    lam += theta[q + 1] * covariate.apply(self.x[t - 1]);
                }
                let (rho, sigma) = match cov {
                    Some(c) => (c[0], c[1]),
                    None => (0.5, 1.0),
                };
                let x = rho * self.x[t - 1] + sigma * z[0];
                if !(lam.abs() <= OVERFLOW && x.abs() <= OVERFLOW) {
                    return Err(Error::SimulationOverflow { t: t_report });
                }
                let y = poisson_sample(lam, rng);
                self.lam.push(lam);
                self.x.push(x);
                self.y.push(y);
            }
        }
        Ok(())
    }

    fn into_dataset(self, keep: usize) -> Dataset {
        let total = self.len();
        let start = total - keep;
        let d = self.d;
        let k = normals_per_step(&self.model.family);
        let has_cov = self.model.family.has_covariate();
        let innovations = match self.model.family {
            Family::TvParx { .. } => None,
            _ => Some(self.eps[start * k..].to_vec()),
        };
        Dataset {
            dim: d,
            y: self.y[start * d..].to_vec(),
            x: has_cov.then(|| self.x[start..].to_vec()),
            innovations,
        }
    }
}

fn draw_normals<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for z in out.iter_mut() {
        *z = rng.sample(StandardNormal);
    }
}

fn check_path(model: &ModelSpec, path: &ParamPath) -> Result<()> {
    if path.dim() != model.dim() {
        return Err(Error::InvalidConfig(format!(
            "path dimension {} does not match model dimension {}",
            path.dim(),
            model.dim()
        )));
    }
    Ok(())
}

/// Simulates `n` observations with `θ_{n,t} = θ(t/n)` on stream 0 of `seed`.
pub fn simulate(model: &ModelSpec, path: &ParamPath, n: usize, seed: u64, burn_in: usize) -> Result<Dataset> {
    let opts = SimOptions { burn_in, init: None };
    simulate_with(model, path, n, &mut rng_stream(seed, 0), &opts)
}

/// Simulation with an explicit RNG stream. Observation `i` (0-based) uses
/// `θ((i + 1) / n)`.
pub fn simulate_with<R: Rng + ?Sized>(
    model: &ModelSpec,
    path: &ParamPath,
    n: usize,
    rng: &mut R,
    opts: &SimOptions,
) -> Result<Dataset> {
    check_path(model, path)?;
    if n < 2 * model.window() || n == 0 {
        return Err(Error::InvalidConfig("sample too short for the model window".into()));
    }
    let theta0 = path.eval(0.0);
    let mut rec = Recursion::new(model, &theta0, opts.init.as_deref())?;
    let mut z = vec![0.0; normals_per_step(&model.family)];
    let aux = |u: f64| {
        (
            model.noise.as_ref().map(|p| p.eval(u)),
            model.covariate_process.as_ref().map(|p| p.eval(u)),
        )
    };
    let first = if opts.init.is_some() {
        model.window()
    } else {
        let (noise0, cov0) = aux(0.0);
        for _ in 0..opts.burn_in {
            draw_normals(rng, &mut z);
            rec.step(&theta0, noise0.as_deref(), cov0.as_deref(), &z, rng, 0)?;
        }
        0
    };
    for i in first..n {
        let u = (i + 1) as f64 / n as f64;
        let theta = path.eval(u);
        let (noise, cov) = aux(u);
        draw_normals(rng, &mut z);
        rec.step(&theta, noise.as_deref(), cov.as_deref(), &z, rng, i)?;
    }
    Ok(rec.into_dataset(n))
}

/// Output of [`simulate_stationary`].
#[derive(Debug, Clone, PartialEq)]
pub struct StationarySample {
    pub data: Dataset,
    /// Intensities `λ*_t(u)` for the ARCH, GARCH and PARX families.
    pub intensity: Option<Vec<f64>>,
    /// Derivative process `∂_u Y*_t(u)`, laid out like `data.y`.
    pub derivative: Option<Vec<f64>>,
    /// `∂_u λ*_t(u)` for ARCH and GARCH.
    pub derivative_intensity: Option<Vec<f64>>,
}

/// Simulates the stationary approximation at fixed `u` after a burn-in of
/// [`DEFAULT_BURN_IN`] steps and, when `derivatives` is set, the derivative
/// process on the same draws. Count data have no derivative process.
pub fn simulate_stationary(
    model: &ModelSpec,
    u: f64,
    path: &ParamPath,
    n: usize,
    seed: u64,
    derivatives: bool,
) -> Result<StationarySample> {
    check_path(model, path)?;
    let mut rng = rng_stream(seed, 0);
    let theta = path.eval(u);
    let dtheta = if derivatives {
        if matches!(model.family, Family::TvParx { .. }) {
            return Err(Error::Unsupported(
                "the derivative process of count data is not defined".into(),
            ));
        }
        Some(path.derivative(1, u).ok_or_else(|| {
            Error::InvalidConfig("derivative output requires θ'(u) on the path".into())
        })?)
    } else {
        None
    };
    let noise = model.noise.as_ref().map(|p| p.eval(u));
    let dnoise = match (&model.noise, derivatives) {
        (Some(p), true) => Some(p.derivative(1, u).ok_or_else(|| {
            Error::InvalidConfig("derivative output requires Σ'(u) on the noise path".into())
        })?),
        _ => None,
    };
    let cov = model.covariate_process.as_ref().map(|p| p.eval(u));
    let d = model.family.obs_dim();
    let mut rec = Recursion::new(model, &theta, None)?;
    let mut dy: Vec<f64> = vec![0.0; rec.y.len()];
    let mut dlam: Vec<f64> = vec![0.0; rec.lam.len()];
    let mut z = vec![0.0; normals_per_step(&model.family)];
    let total = DEFAULT_BURN_IN + n;
    for s in 0..total {
        draw_normals(&mut rng, &mut z);
        let t = rec.len();
        rec.step(&theta, noise.as_deref(), cov.as_deref(), &z, &mut rng, s.saturating_sub(DEFAULT_BURN_IN))?;
        let Some(dth) = dtheta.as_deref() else {
            continue;
        };
        match model.family {
            Family::TvVar { q, .. } => {
                for r in 0..d {
                    let mut v = 0.0;
                    for i in 0..q {
                        for c in 0..d {
                            let k = i * d * d + c * d + r;
                            let idx = (t - i - 1) * d + c;
                            v += dth[k] * rec.y[idx] + theta[k] * dy[idx];
                        }
                    }
                    if let Some(ds) = dnoise.as_deref() {
                        v += (0..d).map(|c| ds[c * d + r] * z[c]).sum::<f64>();
                    }
                    dy.push(v);
                }
            }
            Family::TvArch { q } => {
                let mut dl = dth[0];
                for i in 1..=q {
                    dl += dth[i] * rec.y[t - i] + theta[i] * dy[t - i];
                }
                dlam.push(dl);
                dy.push(dl * z[0] * z[0]);
            }
            Family::TvGarch11 => {
                let dl = dth[0]
                    + dth[1] * rec.y[t - 1]
                    + theta[1] * dy[t - 1]
                    + dth[2] * rec.lam[t - 1]
                    + theta[2] * dlam[t - 1];
                dlam.push(dl);
                dy.push(dl * z[0] * z[0]);
            }
            Family::TvParx { .. } => unreachable!(),
        }
    }
    let keep_from = rec.len() - n;
    let intensity = match model.family {
        Family::TvVar { .. } => None,
        _ => Some(rec.lam[keep_from..].to_vec()),
    };
    let derivative = dtheta.as_ref().map(|_| dy[keep_from * d..].to_vec());
    let derivative_intensity = match (dtheta.is_some(), model.family) {
        (true, Family::TvArch { .. } | Family::TvGarch11) => Some(dlam[keep_from..].to_vec()),
        _ => None,
    };
    Ok(StationarySample {
        data: rec.into_dataset(n),
        intensity,
        derivative,
        derivative_intensity,
    })
}

/// Mean and standard error over `reps` replications of
/// `‖Y_{n,t} − Y*_t(u)‖` at `t = ⌊un⌋`, where the triangular-array path and
/// the stationary approximation at `u` share every innovation (including the
/// burn-in). PARX is not supported because Poisson draws do not couple through
/// shared normals.
pub fn coupled_deviation(
    model: &ModelSpec,
    path: &ParamPath,
    u: f64,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_path(model, path)?;
    if matches!(model.family, Family::TvParx { .. }) {
        return Err(Error::Unsupported("coupling is defined for Gaussian-driven families".into()));
    }
    let target = ((u * n as f64).floor() as usize).clamp(1, n) - 1;
    let theta0 = path.eval(0.0);
    let theta_u = path.eval(u);
    let noise0 = model.noise.as_ref().map(|p| p.eval(0.0));
    let noise_u = model.noise.as_ref().map(|p| p.eval(u));
    let d = model.family.obs_dim();
    let mut devs = Vec::with_capacity(reps);
    for r in 0..reps {
        let mut rng = rng_stream(seed, r as u64);
        let mut tv = Recursion::new(model, &theta0, None)?;
        let mut st = Recursion::new(model, &theta_u, None)?;
        let mut z = vec![0.0; normals_per_step(&model.family)];
        for _ in 0..DEFAULT_BURN_IN {
            draw_normals(&mut rng, &mut z);
            tv.step(&theta0, noise0.as_deref(), None, &z, &mut rng, 0)?;
            st.step(&theta_u, noise_u.as_deref(), None, &z, &mut rng, 0)?;
        }
        for i in 0..=target {
            let ui = (i + 1) as f64 / n as f64;
            let theta = path.eval(ui);
            let noise = model.noise.as_ref().map(|p| p.eval(ui));
            draw_normals(&mut rng, &mut z);
            tv.step(&theta, noise.as_deref(), None, &z, &mut rng, i)?;
            st.step(&theta_u, noise_u.as_deref(), None, &z, &mut rng, i)?;
        }
        let a = &tv.y[tv.y.len() - d..];
        let b = &st.y[st.y.len() - d..];
        devs.push(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
    }
    let m = devs.iter().sum::<f64>() / reps as f64;
    let var = if reps > 1 {
        devs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64
    } else {
        0.0
    };
    Ok((m, (var / reps as f64).sqrt()))
}
