//! Run configuration: a single JSON document. Every block is optional and
//! unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tvlik::models::ThetaSpace;
use tvlik::{CovariateTransform, Family, KernelSpec, ModelSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Fit,
    Cv,
    Infer,
    Mc,
    Empirical,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Fit => "fit",
            Self::Cv => "cv",
            Self::Infer => "infer",
            Self::Mc => "mc",
            Self::Empirical => "empirical",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; results never depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub estimator: EstimatorBlock,
    #[serde(default)]
    pub io: IoBlock,
    #[serde(default)]
    pub simulate: SimulateBlock,
    #[serde(default)]
    pub mc: McBlock,
    #[serde(default)]
    pub empirical: EmpiricalBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// `tv_var`, `tv_arch`, `tv_garch11` or `tv_parx`; `tv_arch` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default = "one")]
    pub q: usize,
    /// VAR dimension.
    #[serde(default = "one")]
    pub d: usize,
    /// PARX covariate transform: `none`, `positive`, `exp`, `exp_neg`.
    #[serde(default = "none_name")]
    pub covariate: String,
    /// Replacement box for the parameter space; stationarity constraints are kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    /// GARCH filter start; sample mean when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            family: None,
            q: 1,
            d: 1,
            covariate: none_name(),
            lower: None,
            upper: None,
            lambda0: None,
        }
    }
}

fn one() -> usize {
    1
}

fn none_name() -> String {
    "none".into()
}

impl ModelBlock {
    pub fn family(&self) -> CliResult<Family> {
        let covariate = CovariateTransform::from_name(&self.covariate)?;
        let name = self.family.as_deref().unwrap_or("tv_arch");
        let family = match name {
            "tv_var" | "var" => Family::TvVar { d: self.d, q: self.q },
            "tv_arch" | "arch" => Family::TvArch { q: self.q },
            "tv_garch11" | "garch11" | "garch" => Family::TvGarch11,
            "tv_parx" | "parx" => Family::TvParx { q: self.q, covariate },
            other => return Err(CliError::config(format!("unknown model family '{other}'"))),
        };
        if self.q == 0 || self.d == 0 {
            return Err(CliError::config("model.q and model.d must be at least 1"));
        }
        Ok(family)
    }

    pub fn build(&self) -> CliResult<ModelSpec> {
        let mut model = ModelSpec::new(self.family()?);
        if self.lower.is_some() || self.upper.is_some() {
            let base = model.theta_space.clone();
            let space = ThetaSpace::new(
                self.lower.clone().unwrap_or(base.lower),
                self.upper.clone().unwrap_or(base.upper),
                base.linear,
                base.margin,
            )?;
            model = model.with_theta_space(space)?;
        }
        if let Some(l) = self.lambda0 {
            model = model.with_lambda0(l);
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorBlock {
    #[serde(default = "one")]
    pub m: usize,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    /// Fixed bandwidth; cross-validated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default)]
    pub cv: CvBlock,
    /// Confidence level of the pointwise bands.
    #[serde(default = "default_level")]
    pub level: f64,
    /// Fitting grid in `(0, 1)`; `t/n` for `t = window+1..n-1` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
}

impl Default for EstimatorBlock {
    fn default() -> Self {
        Self {
            m: 1,
            kernel: default_kernel(),
            b: None,
            cv: CvBlock::default(),
            level: default_level(),
            grid: None,
        }
    }
}

fn default_kernel() -> String {
    "epanechnikov".into()
}

fn default_level() -> f64 {
    0.95
}

impl EstimatorBlock {
    pub fn kernel(&self) -> CliResult<KernelSpec> {
        Ok(KernelSpec::from_name(&self.kernel)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvBlock {
    /// Candidate bandwidths; twelve log-spaced points on `[0.25, 2.5] n^{-1/5}` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub leave_out: usize,
    #[serde(default = "one")]
    pub thin: usize,
}

impl Default for CvBlock {
    fn default() -> Self {
        Self {
            grid: None,
            leave_out: 0,
            thin: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoBlock {
    /// Dataset CSV for `fit`, `cv`, `infer` and `empirical`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Separate covariate CSV (`t,x`), merged on `t`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate_input: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for IoBlock {
    fn default() -> Self {
        Self {
            input: None,
            covariate_input: None,
            output_dir: default_out(),
            formats: default_formats(),
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

impl IoBlock {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dgp {
    /// Time-varying ARCH(1) Monte Carlo design.
    #[default]
    Table1,
    /// Time-varying PARX(1) with the constant covariate process.
    Table2Dgp1,
    /// Time-varying PARX(1) with the time-varying covariate process.
    Table2Dgp2,
    /// Constant `theta` for the model block.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub dgp: Dgp,
    /// Parameter vector for `dgp = constant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    /// PARX covariate process `(ρ, σ)` for `dgp = constant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate_process: Option<[f64; 2]>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        Self {
            n: default_n(),
            dgp: Dgp::default(),
            theta: None,
            covariate_process: None,
            burn_in: default_burn_in(),
        }
    }
}

fn default_n() -> usize {
    500
}

fn default_burn_in() -> usize {
    tvlik::models::DEFAULT_BURN_IN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    /// 1: tv-ARCH(1) design; 2: tv-PARX(1) designs.
    #[serde(default = "one_u8")]
    pub table: u8,
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Sample sizes; `[250, 500, 1000]` for table 1 and `[500]` for table 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    /// Covariate designs for table 2.
    #[serde(default = "default_dgps")]
    pub dgp: Vec<u8>,
    /// Thinning of the held-out points in the CV criterion; 1 is full CV.
    #[serde(default = "default_mc_thin")]
    pub cv_thin: usize,
}

impl Default for McBlock {
    fn default() -> Self {
        Self {
            table: 1,
            reps: default_reps(),
            n: None,
            dgp: default_dgps(),
            cv_thin: default_mc_thin(),
        }
    }
}

fn one_u8() -> u8 {
    1
}

fn default_reps() -> usize {
    50
}

fn default_dgps() -> Vec<u8> {
    vec![1, 2]
}

fn default_mc_thin() -> usize {
    tvlik::montecarlo::MC_CV_THIN
}

impl McBlock {
    pub fn sizes(&self) -> Vec<usize> {
        self.n.clone().unwrap_or_else(|| match self.table {
            1 => vec![250, 500, 1000],
            _ => vec![500],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalBlock {
    /// Lag orders of the constant-parameter comparison.
    #[serde(default = "default_p_list")]
    pub p_list: Vec<usize>,
    /// Lag order of the time-varying fit; AIC choice when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default = "default_empirical_covariate")]
    pub covariate: String,
}

impl Default for EmpiricalBlock {
    fn default() -> Self {
        Self {
            p_list: default_p_list(),
            p: None,
            covariate: default_empirical_covariate(),
        }
    }
}

fn default_p_list() -> Vec<usize> {
    vec![1, 3, 6]
}

fn default_empirical_covariate() -> String {
    "exp_neg".into()
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config JSON")
    }

    /// SHA-256 of the canonical JSON with the output directory and thread
    /// count removed, so that neither changes artifact bytes.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = None;
        c.io.output_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config JSON");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
