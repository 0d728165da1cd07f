use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-12;

/// A linear inequality `a' theta <= c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub a: Vec<f64>,
    pub c: f64,
}

/// Compact parameter set: a box plus optional linear inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub linear: Vec<LinearConstraint>,
    /// Margin `delta` used when the constraint set was built from a
    /// stationarity bound such as `sum(alpha) <= 1 - delta`.
    #[serde(default)]
    pub margin: f64,
}

impl ThetaSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, linear: Vec<LinearConstraint>, margin: f64) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidConfig("theta space bounds have mismatched length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidConfig("theta space box has empty interior".into()));
        }
        if linear.iter().any(|lc| lc.a.len() != lower.len()) {
            return Err(Error::InvalidConfig("linear constraint has wrong dimension".into()));
        }
        let space = Self {
            lower,
            upper,
            linear,
            margin,
        };
        // Nonempty interior: the projected centre must be strictly feasible after a small pull.
        let centre = space.project(&space.center());
        if !space.contains(&centre) {
            return Err(Error::EmptyCoefficientSpace);
        }
        Ok(space)
    }

    /// Box-only space.
    pub fn from_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::new(lower, upper, Vec::new(), 0.0)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *x >= l - FEAS_TOL && *x <= u + FEAS_TOL)
            && self
                .linear
                .iter()
                .all(|lc| dot(&lc.a, theta) <= lc.c + FEAS_TOL)
    }

    /// Strict interior membership with slack `eps`.
    pub fn contains_interior(&self, theta: &[f64], eps: f64) -> bool {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *x > l + eps && *x < u - eps)
            && self.linear.iter().all(|lc| dot(&lc.a, theta) < lc.c - eps)
    }

    fn clip(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| x.clamp(*l, *u))
            .collect()
    }

    /// Euclidean projection onto the set. Exact for a box with at most one
    /// linear constraint; Dykstra's alternating projections otherwise.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        if self.contains(y) {
            return y.to_vec();
        }
        match self.linear.len() {
            0 => self.clip(y),
            1 => self.project_box_halfspace(y, &self.linear[0]),
            _ => self.dykstra(y),
        }
    }

    fn project_box_halfspace(&self, y: &[f64], lc: &LinearConstraint) -> Vec<f64> {
        let clipped = self.clip(y);
        if dot(&lc.a, &clipped) <= lc.c {
            return clipped;
        }
        // a' clip(y - mu a) is nonincreasing in mu; bisect for the active multiplier.
        let at = |mu: f64| -> Vec<f64> {
            let shifted: Vec<f64> = y.iter().zip(&lc.a).map(|(yi, ai)| yi - mu * ai).collect();
            self.clip(&shifted)
        };
        let norm2 = dot(&lc.a, &lc.a).max(1e-300);
        let mut hi = 1.0_f64;
        while dot(&lc.a, &at(hi)) > lc.c && hi < 1e12 {
            hi *= 2.0;
        }
        hi = hi.max(1.0 / norm2);
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dot(&lc.a, &at(mid)) > lc.c {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * hi.max(1.0) {
                break;
            }
        }
        at(hi)
    }

    fn dykstra(&self, y: &[f64]) -> Vec<f64> {
        let d = y.len();
        let k = self.linear.len() + 1;
        let mut x = y.to_vec();
        let mut incr = vec![vec![0.0; d]; k];
        for _ in 0..10_000 {
            let prev = x.clone();
            for (set, inc) in incr.iter_mut().enumerate() {
                let z: Vec<f64> = x.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
                let p = if set == 0 {
                    self.clip(&z)
                } else {
                    let lc = &self.linear[set - 1];
                    let viol = dot(&lc.a, &z) - lc.c;
                    if viol <= 0.0 {
                        z.clone()
                    } else {
                        let s = viol / dot(&lc.a, &lc.a);
                        z.iter().zip(&lc.a).map(|(zi, ai)| zi - s * ai).collect()
                    }
                };
                for i in 0..d {
                    inc[i] = z[i] - p[i];
                }
                x = p;
            }
            let moved: f64 = x.iter().zip(&prev).map(|(a, b)| (a - b).abs()).sum();
            if moved < 1e-15 && self.contains(&x) {
                break;
            }
        }
        x
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn arch_like() -> ThetaSpace {
        ThetaSpace::new(
            vec![0.0, 0.0, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![LinearConstraint {
                a: vec![0.0, 1.0, 1.0],
                c: 0.9,
            }],
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn projection_onto_box_and_halfspace() {
        let s = arch_like();
        let p = s.project(&[0.5, 0.8, 0.8]);
        assert!(s.contains(&p));
        assert_abs_diff_eq!(p[1], 0.45, epsilon = 1e-9);
        assert_abs_diff_eq!(p[2], 0.45, epsilon = 1e-9);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn dykstra_handles_two_constraints() {
        let s = ThetaSpace::new(
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![
                LinearConstraint { a: vec![1.0, 0.0], c: 0.5 },
                LinearConstraint { a: vec![0.0, 1.0], c: 0.5 },
            ],
            0.0,
        )
        .unwrap();
        let p = s.project(&[2.0, 0.2]);
        assert!(s.contains(&p));
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], 0.2, epsilon = 1e-9);
    }

    #[test]
    fn rejects_empty_box() {
        assert!(ThetaSpace::from_box(vec![1.0], vec![1.0]).is_err());
        let empty = ThetaSpace::new(
            vec![0.5],
            vec![1.0],
            vec![LinearConstraint { a: vec![1.0], c: 0.1 }],
            0.0,
        );
        assert_eq!(empty.unwrap_err(), Error::EmptyCoefficientSpace);
    }
}
