//! Local likelihood estimation of time-varying parameters in locally
//! stationary models: kernels, local polynomial designs, model families,
//! estimation, bandwidth selection, inference and Monte Carlo drivers.

pub mod bandwidth;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod kernel;
pub mod models;
pub mod montecarlo;
pub mod polybasis;
mod qp;

pub use error::{Error, Result};
pub use kernel::KernelSpec;
pub use models::{CovariateTransform, Dataset, Family, ModelSpec, ParamPath, ThetaSpace};
pub use polybasis::{Basis, CoeffSpace};
