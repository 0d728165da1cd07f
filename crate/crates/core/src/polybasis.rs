//! Local polynomial design: `D(v) = [1, v, v^2/2, ..., v^m/m!] ⊗ I`, the
//! bandwidth rescaling `U_n`, and the constrained coefficient space.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ThetaSpace;

/// Polynomial basis of order `m` for a `d_theta`-dimensional parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis {
    pub m: usize,
    pub d_theta: usize,
}

impl Basis {
    pub fn new(m: usize, d_theta: usize) -> Self {
        Self { m, d_theta }
    }

    /// Number of polynomial coefficients, `(m + 1) d_theta`.
    pub fn n_coef(&self) -> usize {
        (self.m + 1) * self.d_theta
    }

    /// Scalar weights `[1, v, v^2/2, ..., v^m/m!]`.
    #[inline]
    pub fn weights(&self, v: f64) -> Vec<f64> {
        poly_weights(v, self.m)
    }

    /// `D(v)` as a dense `d_theta × (m+1) d_theta` matrix.
    pub fn design(&self, v: f64) -> DMatrix<f64> {
        let d = self.d_theta;
        let w = self.weights(v);
        let mut out = DMatrix::zeros(d, self.n_coef());
        for (j, wj) in w.iter().enumerate() {
            for i in 0..d {
                out[(i, j * d + i)] = *wj;
            }
        }
        out
    }

    /// `D_b(v) = D(v / b)`.
    pub fn design_scaled(&self, v: f64, b: f64) -> DMatrix<f64> {
        self.design(v / b)
    }

    /// `D(v) alpha` without forming the matrix.
    #[inline]
    pub fn apply(&self, v: f64, alpha: &[f64], out: &mut [f64]) {
        apply_weights(&poly_weights(v, self.m), self.d_theta, alpha, out);
    }
}

#[inline]
pub(crate) fn poly_weights(v: f64, m: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(m + 1);
    let mut term = 1.0;
    w.push(term);
    for j in 1..=m {
        term *= v / j as f64;
        w.push(term);
    }
    w
}

#[inline]
pub(crate) fn apply_weights(w: &[f64], d: usize, alpha: &[f64], out: &mut [f64]) {
    for i in 0..d {
        out[i] = w.iter().enumerate().map(|(j, wj)| wj * alpha[j * d + i]).sum();
    }
}

/// `U_n = diag(1, b, ..., b^m) ⊗ I`, mapping `beta` to `alpha = U_n beta`.
pub fn rescale_matrix(m: usize, d_theta: usize, b: f64) -> DMatrix<f64> {
    let p = (m + 1) * d_theta;
    let mut out = DMatrix::zeros(p, p);
    for j in 0..=m {
        let s = b.powi(j as i32);
        for i in 0..d_theta {
            out[(j * d_theta + i, j * d_theta + i)] = s;
        }
    }
    out
}

/// The coefficient space `{alpha : D(v) alpha ∈ Θ for v in the check grid}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffSpace {
    pub theta_space: ThetaSpace,
    pub m: usize,
    pub check_grid: Vec<f64>,
}

impl CoeffSpace {
    /// For `m <= 1` the constraints are linear in `v`, so the support endpoints
    /// suffice; higher orders use an 11-point grid on `[-1, 1]`.
    pub fn new(theta_space: ThetaSpace, m: usize) -> Self {
        let check_grid = if m <= 1 {
            vec![-1.0, 1.0]
        } else {
            (0..11).map(|i| -1.0 + 0.2 * i as f64).collect()
        };
        Self::with_grid(theta_space, m, check_grid)
    }

    pub fn with_grid(theta_space: ThetaSpace, m: usize, check_grid: Vec<f64>) -> Self {
        Self {
            theta_space,
            m,
            check_grid,
        }
    }

    pub fn basis(&self) -> Basis {
        Basis::new(self.m, self.theta_space.dim())
    }

    pub fn is_feasible(&self, alpha: &[f64]) -> bool {
        let basis = self.basis();
        let d = basis.d_theta;
        if alpha.len() != basis.n_coef() {
            return false;
        }
        if !self.theta_space.contains(&alpha[..d]) {
            return false;
        }
        if self.m == 0 {
            return true;
        }
        let mut theta = vec![0.0; d];
        self.check_grid.iter().all(|v| {
            basis.apply(*v, alpha, &mut theta);
            self.theta_space.contains(&theta)
        })
    }

    /// The space as a polytope `{α : g α <= h}`: one row per grid point and
    /// box bound or linear constraint, duplicates removed.
    pub fn constraints(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let d = self.theta_space.dim();
        let p = (self.m + 1) * d;
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut push = |row: Vec<f64>, h: f64| {
            if !rows.iter().any(|(r, hh)| *hh == h && *r == row) {
                rows.push((row, h));
            }
        };
        let grid: &[f64] = if self.m == 0 { &[0.0] } else { &self.check_grid };
        for &v in grid {
            let w = poly_weights(v, self.m);
            for i in 0..d {
                let mut up = vec![0.0; p];
                for (j, wj) in w.iter().enumerate() {
                    up[j * d + i] = *wj;
                }
                let down: Vec<f64> = up.iter().map(|x| -x).collect();
                push(up, self.theta_space.upper[i]);
                push(down, -self.theta_space.lower[i]);
            }
            for lc in &self.theta_space.linear {
                let mut row = vec![0.0; p];
                for (j, wj) in w.iter().enumerate() {
                    for i in 0..d {
                        row[j * d + i] = wj * lc.a[i];
                    }
                }
                push(row, lc.c);
            }
        }
        rows.into_iter().unzip()
    }

    /// Moves `alpha` into the space: the level block is projected onto Θ, then
    /// every higher-order block is scaled by the largest `λ ∈ [0, 1]` keeping
    /// all grid images in Θ. Feasible inputs come back unchanged.
    pub fn project_feasible(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if self.is_feasible(alpha) {
            return Ok(alpha.to_vec());
        }
        let d = self.theta_space.dim();
        let mut out = alpha.to_vec();
        let level = self.theta_space.project(&alpha[..d]);
        if !self.theta_space.contains(&level) {
            return Err(Error::EmptyCoefficientSpace);
        }
        out[..d].copy_from_slice(&level);
        if self.m == 0 || self.is_feasible(&out) {
            return Ok(out);
        }
        let scaled = |lam: f64| -> Vec<f64> {
            let mut a = out.clone();
            for x in a[d..].iter_mut() {
                *x *= lam;
            }
            a
        };
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if self.is_feasible(&scaled(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let res = scaled(lo);
        if !self.is_feasible(&res) {
            return Err(Error::EmptyCoefficientSpace);
        }
        Ok(res)
    }
}
