use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::ThetaSpace;

type PathFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum Repr {
    Closed {
        value: PathFn,
        d1: Option<PathFn>,
        d2: Option<PathFn>,
    },
    Grid {
        u: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

/// A parameter curve `θ : [0, 1] → R^d`, either in closed form (optionally
/// with analytic first and second derivatives) or as a piecewise-linear grid.
#[derive(Clone)]
pub struct ParamPath {
    dim: usize,
    repr: Repr,
}

impl fmt::Debug for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.repr {
            Repr::Closed { d1, d2, .. } => format!(
                "closed-form(d1: {}, d2: {})",
                d1.is_some(),
                d2.is_some()
            ),
            Repr::Grid { u, .. } => format!("grid({} points)", u.len()),
        };
        f.debug_struct("ParamPath")
            .field("dim", &self.dim)
            .field("repr", &kind)
            .finish()
    }
}

impl ParamPath {
    pub fn closed_form<F>(dim: usize, value: F) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            repr: Repr::Closed {
                value: Arc::new(value),
                d1: None,
                d2: None,
            },
        }
    }

    /// Closed-form path with analytic `θ'` and `θ''`.
    pub fn with_derivatives<F, G, H>(dim: usize, value: F, d1: G, d2: H) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        G: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        H: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            repr: Repr::Closed {
                value: Arc::new(value),
                d1: Some(Arc::new(d1)),
                d2: Some(Arc::new(d2)),
            },
        }
    }

    pub fn constant(theta: Vec<f64>) -> Self {
        let dim = theta.len();
        let zeros = vec![0.0; dim];
        let z2 = zeros.clone();
        Self::with_derivatives(dim, move |_| theta.clone(), move |_| zeros.clone(), move |_| z2.clone())
    }

    /// Linear path `a + s u`.
    pub fn linear(a: Vec<f64>, s: Vec<f64>) -> Self {
        let dim = a.len();
        let s1 = s.clone();
        let zeros = vec![0.0; dim];
        Self::with_derivatives(
            dim,
            move |u| a.iter().zip(&s).map(|(ai, si)| ai + si * u).collect(),
            move |_| s1.clone(),
            move |_| zeros.clone(),
        )
    }

    /// Piecewise-linear interpolation of sampled values on increasing `u`.
    pub fn from_grid(u: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if u.len() < 2 || u.len() != values.len() {
            return Err(Error::InvalidConfig("grid path needs >= 2 matching points".into()));
        }
        if u.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig("grid path abscissae must increase".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidConfig("grid path values have mixed dimension".into()));
        }
        Ok(Self {
            dim,
            repr: Repr::Grid { u, values },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, u: f64) -> Vec<f64> {
        match &self.repr {
            Repr::Closed { value, .. } => value(u),
            Repr::Grid { u: us, values } => {
                let (k, w) = locate(us, u);
                values[k]
                    .iter()
                    .zip(&values[k + 1])
                    .map(|(a, b)| a + w * (b - a))
                    .collect()
            }
        }
    }

    /// `θ^(order)(u)` for `order ∈ {0, 1, 2}`; `None` when unavailable.
    pub fn derivative(&self, order: usize, u: f64) -> Option<Vec<f64>> {
        match (order, &self.repr) {
            (0, _) => Some(self.eval(u)),
            (1, Repr::Closed { d1, .. }) => d1.as_ref().map(|f| f(u)),
            (2, Repr::Closed { d2, .. }) => d2.as_ref().map(|f| f(u)),
            (1, Repr::Grid { u: us, values }) => {
                let (k, _) = locate(us, u);
                let h = us[k + 1] - us[k];
                Some(
                    values[k]
                        .iter()
                        .zip(&values[k + 1])
                        .map(|(a, b)| (b - a) / h)
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// Checks `θ(u) ∈ Θ` on a 1001-point grid of `[0, 1]`.
    pub fn validate(&self, space: &ThetaSpace) -> Result<()> {
        if space.dim() != self.dim {
            return Err(Error::InvalidConfig(format!(
                "path dimension {} does not match parameter space dimension {}",
                self.dim,
                space.dim()
            )));
        }
        for i in 0..=1000 {
            let u = i as f64 / 1000.0;
            let th = self.eval(u);
            if !space.contains(&th) {
                return Err(Error::InvalidConfig(format!(
                    "path leaves the parameter space at u = {u}: {th:?}"
                )));
            }
        }
        Ok(())
    }
}

fn locate(us: &[f64], u: f64) -> (usize, f64) {
    let n = us.len();
    if u <= us[0] {
        return (0, 0.0);
    }
    if u >= us[n - 1] {
        return (n - 2, 1.0);
    }
    let k = us.partition_point(|x| *x <= u) - 1;
    let k = k.min(n - 2);
    (k, (u - us[k]) / (us[k + 1] - us[k]))
}
