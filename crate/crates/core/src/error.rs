use thiserror::Error;

/// Errors raised by estimation, simulation and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty kernel window")]
    EmptyKernelWindow,

    #[error("empty coefficient space")]
    EmptyCoefficientSpace,

    #[error("invalid intensity {value} at t = {t}")]
    InvalidIntensity { t: usize, value: f64 },

    #[error("simulation overflow at t = {t}")]
    SimulationOverflow { t: usize },

    #[error("degenerate Hessian (condition number {condition:.3e})")]
    DegenerateHessian { condition: f64 },

    #[error("CV unstable at b = {bandwidth}: {skipped} of {evaluated} leave-out fits failed")]
    CvUnstable {
        bandwidth: f64,
        skipped: usize,
        evaluated: usize,
    },

    #[error("all candidate bandwidths are unstable")]
    AllBandwidthsUnstable,

    #[error("path fit aborted: {failed} of {total} grid points failed")]
    PathFitAborted { failed: usize, total: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
