//! Compactly supported smoothing kernels and their moment functionals.
//!
//! Every moment matrix accepts an integration region. For a fit at time
//! point `u` with bandwidth `b` the region is `[(0 - u)/b, (1 - u)/b]`,
//! which coincides with the full support whenever `u` lies in `[b, 1 - b]`,
//! so boundary and interior constants come out of the same code path.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used for every kernel moment integral.
pub const MOMENT_TOL: f64 = 1e-10;

/// Kernel family. Only nonnegative, symmetric kernels supported on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelSpec {
    #[default]
    Epanechnikov,
    Triangular,
    /// Flat weights; with `b >= 2` every observation gets the same weight,
    /// which is how constant-parameter fits are run.
    Uniform,
}

impl KernelSpec {
    /// Parses the CLI name of a kernel. Gaussian and higher-order kernels are
    /// rejected because the coefficient space needs compact support and `K >= 0`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(Self::Epanechnikov),
            "triangular" => Ok(Self::Triangular),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::InvalidConfig(format!(
                "unsupported kernel '{other}' (expected epanechnikov | triangular | uniform)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Epanechnikov => "epanechnikov",
            Self::Triangular => "triangular",
            Self::Uniform => "uniform",
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    /// `K(v)`; exactly zero outside the support.
    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        if !(-1.0..=1.0).contains(&v) {
            return 0.0;
        }
        match self {
            Self::Epanechnikov => 0.75 * (1.0 - v * v),
            Self::Triangular => 1.0 - v.abs(),
            Self::Uniform => 0.5,
        }
    }

    /// `K_b(x) = K(x / b) / b`.
    #[inline]
    pub fn eval_scaled(&self, x: f64, b: f64) -> f64 {
        self.eval(x / b) / b
    }
}

/// Convenience wrapper matching the free-function form.
pub fn eval_kernel(spec: KernelSpec, v: f64) -> f64 {
    spec.eval(v)
}

/// Integration region for moment functionals. Infinite endpoints are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub lo: f64,
    pub hi: f64,
}

impl Truncation {
    pub const WHOLE_LINE: Truncation = Truncation {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// Region seen by a fit at `u` with bandwidth `b` on the unit interval.
    pub fn at(u: f64, b: f64) -> Self {
        Self {
            lo: (0.0 - u) / b,
            hi: (1.0 - u) / b,
        }
    }

    /// True when the region covers the whole kernel support.
    pub fn covers_support(&self, spec: KernelSpec) -> bool {
        let (a, b) = spec.support();
        self.lo <= a && self.hi >= b
    }
}

/// Kernel moment matrices for local polynomial order `m`, using the scaled
/// basis `[1, v, v^2/2, ..., v^m/m!]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    pub m: usize,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub mu1: DVector<f64>,
    pub mu2: DVector<f64>,
    pub trunc: Truncation,
}

impl KernelMoments {
    /// `K1^{-1} K2 K1^{-1}`.
    pub fn sandwich(&self) -> Option<DMatrix<f64>> {
        let inv = self.k1.clone().try_inverse()?;
        Some(&inv * &self.k2 * &inv)
    }

    /// The i-th entry of `K1^{-1} mu1`.
    pub fn kappa1(&self, i: usize) -> Option<f64> {
        let inv = self.k1.clone().try_inverse()?;
        Some((inv * &self.mu1)[i])
    }

    /// The (i, i) entry of `K1^{-1} K2 K1^{-1}`.
    pub fn kappa2(&self, i: usize) -> Option<f64> {
        self.sandwich().map(|s| s[(i, i)])
    }
}

fn scaled_basis(v: f64, m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m + 1);
    let mut term = 1.0;
    out.push(term);
    for j in 1..=m {
        term *= v / j as f64;
        out.push(term);
    }
    out
}

/// Computes `K1`, `K2`, `mu1` and `mu2` over `support ∩ trunc`.
pub fn moments(spec: KernelSpec, m: usize, trunc: Truncation) -> Result<KernelMoments> {
    let (s_lo, s_hi) = spec.support();
    let lo = trunc.lo.max(s_lo);
    let hi = trunc.hi.min(s_hi);
    if !(hi - lo > 1e-12) {
        return Err(Error::EmptyKernelWindow);
    }
    let p = m + 1;
    let mut k1 = DMatrix::zeros(p, p);
    let mut k2 = DMatrix::zeros(p, p);
    let mut mu1 = DVector::zeros(p);
    let mut mu2 = DVector::zeros(p);

    for i in 0..p {
        for j in i..p {
            let f1 = |v: f64| {
                let d = scaled_basis(v, m);
                spec.eval(v) * d[i] * d[j]
            };
            let f2 = |v: f64| {
                let d = scaled_basis(v, m);
                let k = spec.eval(v);
                k * k * d[i] * d[j]
            };
            let a = integrate_kernel_region(f1, lo, hi);
            let b = integrate_kernel_region(f2, lo, hi);
            k1[(i, j)] = a;
            k1[(j, i)] = a;
            k2[(i, j)] = b;
            k2[(j, i)] = b;
        }
        let g1 = |v: f64| spec.eval(v) * v.powi(m as i32 + 1) * scaled_basis(v, m)[i];
        let g2 = |v: f64| spec.eval(v) * v.powi(m as i32 + 2) * scaled_basis(v, m)[i];
        mu1[i] = integrate_kernel_region(g1, lo, hi);
        mu2[i] = integrate_kernel_region(g2, lo, hi);
    }

    Ok(KernelMoments {
        m,
        k1,
        k2,
        mu1,
        mu2,
        trunc,
    })
}

/// `∫ K(v) v^j dv` over `support ∩ trunc`.
pub fn raw_moment(spec: KernelSpec, power: i32, trunc: Truncation) -> Result<f64> {
    let (s_lo, s_hi) = spec.support();
    let lo = trunc.lo.max(s_lo);
    let hi = trunc.hi.min(s_hi);
    if !(hi - lo > 1e-12) {
        return Err(Error::EmptyKernelWindow);
    }
    Ok(integrate_kernel_region(
        |v| spec.eval(v) * v.powi(power),
        lo,
        hi,
    ))
}

// The triangular kernel has a kink at 0; splitting there keeps each panel smooth.
fn integrate_kernel_region<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    if lo < 0.0 && hi > 0.0 {
        adaptive_gk(&f, lo, 0.0, MOMENT_TOL / 2.0, 0) + adaptive_gk(&f, 0.0, hi, MOMENT_TOL / 2.0, 0)
    } else {
        adaptive_gk(&f, lo, hi, MOMENT_TOL, 0)
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature to absolute tolerance `tol`.
pub fn adaptive_gk<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (val, err) = gk15(f, a, b);
    if err <= tol || depth >= 40 || (b - a).abs() < 1e-14 {
        return val;
    }
    let mid = 0.5 * (a + b);
    adaptive_gk(f, a, mid, tol / 2.0, depth + 1) + adaptive_gk(f, mid, b, tol / 2.0, depth + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_values() {
        assert_eq!(eval_kernel(KernelSpec::Epanechnikov, 0.0), 0.75);
        assert_eq!(eval_kernel(KernelSpec::Epanechnikov, 1.2), 0.0);
        assert_eq!(eval_kernel(KernelSpec::Triangular, -0.5), 0.5);
        assert_eq!(eval_kernel(KernelSpec::Triangular, -1.0001), 0.0);
    }

    #[test]
    fn rejects_unbounded_kernels() {
        assert!(KernelSpec::from_name("gaussian").is_err());
        assert_eq!(
            KernelSpec::from_name("Triangular").unwrap(),
            KernelSpec::Triangular
        );
    }

    #[test]
    fn kernels_integrate_to_one() {
        for spec in [KernelSpec::Epanechnikov, KernelSpec::Triangular, KernelSpec::Uniform] {
            let total = raw_moment(spec, 0, Truncation::WHOLE_LINE).unwrap();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn epanechnikov_local_constant_moments() {
        let mm = moments(KernelSpec::Epanechnikov, 0, Truncation::WHOLE_LINE).unwrap();
        assert_abs_diff_eq!(mm.k1[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mm.k2[(0, 0)], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(mm.mu1[0], 0.0, epsilon = 1e-12);
        // kappa_{1,0} in the local-constant bias is the second moment.
        let k10 = raw_moment(KernelSpec::Epanechnikov, 2, Truncation::WHOLE_LINE).unwrap();
        assert_abs_diff_eq!(k10, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn epanechnikov_local_linear_k1_is_diagonal() {
        let mm = moments(KernelSpec::Epanechnikov, 1, Truncation::WHOLE_LINE).unwrap();
        assert_abs_diff_eq!(mm.k1[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mm.k1[(0, 1)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mm.k1[(1, 1)], 0.2, epsilon = 1e-12);
        // kappa_{1,0} = 0.2 for local linear, kappa_{1,1} = 0 (m - i even).
        assert_abs_diff_eq!(mm.kappa1(0).unwrap(), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(mm.kappa1(1).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn truncated_region_matches_antiderivative() {
        // F(v) = 3/4 (v - v^3/3); ∫_{-0.5}^{1} K = F(1) - F(-0.5).
        let antider = |v: f64| 0.75 * (v - v * v * v / 3.0);
        let exact = antider(1.0) - antider(-0.5);
        assert_abs_diff_eq!(exact, 0.84375, epsilon = 1e-15);
        let mm = moments(
            KernelSpec::Epanechnikov,
            0,
            Truncation::new(-0.5, f64::INFINITY),
        )
        .unwrap();
        assert_abs_diff_eq!(mm.k1[(0, 0)], 0.84375, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_region_is_an_error() {
        let err = moments(KernelSpec::Epanechnikov, 0, Truncation::new(1.0, 3.0)).unwrap_err();
        assert_eq!(err, Error::EmptyKernelWindow);
        assert_eq!(err.to_string(), "empty kernel window");
    }

    #[test]
    fn moments_nest_across_orders() {
        for spec in [KernelSpec::Epanechnikov, KernelSpec::Triangular] {
            for m in 0..2 {
                let lo = moments(spec, m, Truncation::WHOLE_LINE).unwrap();
                let hi = moments(spec, m + 1, Truncation::WHOLE_LINE).unwrap();
                for i in 0..=m {
                    for j in 0..=m {
                        assert_abs_diff_eq!(lo.k1[(i, j)], hi.k1[(i, j)], epsilon = 1e-12);
                        assert_abs_diff_eq!(lo.k2[(i, j)], hi.k2[(i, j)], epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn truncated_moments_converge_monotonically() {
        let full = moments(KernelSpec::Epanechnikov, 1, Truncation::WHOLE_LINE).unwrap();
        let mut prev_gap = f64::INFINITY;
        for k in 0..=10 {
            let c = k as f64 / 10.0;
            let mm = moments(KernelSpec::Epanechnikov, 1, Truncation::new(-c, f64::INFINITY)).unwrap();
            let gap = (&full.k1 - &mm.k1).norm();
            assert!(gap <= prev_gap + 1e-14);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-10);
    }

    #[test]
    fn at_reproduces_interior_case() {
        let t = Truncation::at(0.5, 0.2);
        assert!(t.covers_support(KernelSpec::Epanechnikov));
        let t = Truncation::at(0.1, 0.2);
        assert!(!t.covers_support(KernelSpec::Epanechnikov));
        assert_abs_diff_eq!(t.lo, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn triangular_second_moment() {
        // ∫(1-|v|)v^2 = 1/6, ∫(1-|v|)^2 = 2/3.
        let mm = moments(KernelSpec::Triangular, 1, Truncation::WHOLE_LINE).unwrap();
        assert_abs_diff_eq!(mm.k1[(1, 1)], 1.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mm.k2[(0, 0)], 2.0 / 3.0, epsilon = 1e-12);
    }
}
