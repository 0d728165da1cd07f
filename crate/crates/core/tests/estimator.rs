use nalgebra::{DMatrix, DVector};
use tvlik::estimator::{
    fit_local, fit_path, fit_path_with, fit_staged, gar_score_variant, local_hessian, local_objective, local_score,
    FitConfig, PathOptions, Warm,
};
use tvlik::kernel::KernelSpec;
use tvlik::models::{
    rng_stream, simulate, simulate_stationary, simulate_with, CovariateTransform, Dataset, ModelSpec, ParamPath,
    SimOptions,
};

fn arch_data(n: usize, seed: u64) -> (ModelSpec, Dataset) {
    let model = ModelSpec::tv_arch(1);
    let path = ParamPath::linear(vec![0.4, 0.2], vec![0.6, 0.5]);
    (model.clone(), simulate(&model, &path, n, seed, 500).unwrap())
}

#[test]
fn single_observation_window() {
    let (model, data) = arch_data(200, 1);
    let n = 200.0;
    let t = 80usize;
    let u = (t + 1) as f64 / n;
    let cfg = FitConfig::new(0, 1.0 / n);
    let theta = [0.5, 0.3];
    let q = local_objective(&model, &data, u, &theta, &cfg).unwrap();
    let l = model.loglik_t(&data, t, &theta, None).unwrap();
    assert!((q - 0.75 * l).abs() < 1e-12, "{q} vs {l}");
}

#[test]
fn local_derivatives_match_finite_differences() {
    let (model, data) = arch_data(400, 2);
    for m in 0..=2 {
        let cfg = FitConfig::new(m, 0.2);
        let alpha: Vec<f64> = match m {
            0 => vec![0.6, 0.3],
            1 => vec![0.6, 0.3, 0.05, -0.02],
            _ => vec![0.6, 0.3, 0.05, -0.02, 0.01, 0.01],
        };
        let u = 0.43;
        let s = local_score(&model, &data, u, &alpha, &cfg).unwrap();
        let h = local_hessian(&model, &data, u, &alpha, &cfg).unwrap();
        let p = alpha.len();
        for i in 0..p {
            let e = 1e-6;
            let mut ap = alpha.clone();
            let mut am = alpha.clone();
            ap[i] += e;
            am[i] -= e;
            let fd = (local_objective(&model, &data, u, &ap, &cfg).unwrap()
                - local_objective(&model, &data, u, &am, &cfg).unwrap())
                / (2.0 * e);
            assert!((s[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "m={m} score {i}: {} vs {fd}", s[i]);
            let sp = local_score(&model, &data, u, &ap, &cfg).unwrap();
            let sm = local_score(&model, &data, u, &am, &cfg).unwrap();
            for j in 0..p {
                let fd = (sp[j] - sm[j]) / (2.0 * e);
                assert!((h[j * p + i] - fd).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }
}

/// Local constant VAR is weighted least squares.
#[test]
fn local_constant_var_equals_weighted_least_squares() {
    let model = ModelSpec::tv_var(2, 1);
    let path = ParamPath::linear(vec![0.3, 0.1, -0.2, 0.2], vec![0.2, 0.0, 0.1, 0.3]);
    let n = 600;
    let data = simulate(&model, &path, n, 4, 500).unwrap();
    let (u, b) = (0.37, 0.15);
    let fit = fit_local(&model, &data, u, &FitConfig::new(0, b), None).unwrap();
    assert!(fit.converged);

    let mut xx = DMatrix::<f64>::zeros(2, 2);
    let mut xy = DMatrix::<f64>::zeros(2, 2);
    for t in 1..n {
        let k = KernelSpec::Epanechnikov.eval(((t + 1) as f64 / n as f64 - u) / b);
        let x = DVector::from_column_slice(data.obs(t - 1));
        let y = DVector::from_column_slice(data.obs(t));
        xx += k * &x * x.transpose();
        xy += k * &y * x.transpose();
    }
    // Y_t = Φ X_t, Φ = (Σ Y X')(Σ X X')⁻¹; θ = vec Φ column-major.
    let phi = xy * xx.try_inverse().unwrap();
    for (a, b) in fit.theta_hat.iter().zip(phi.as_slice()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

fn rotation_path() -> ParamPath {
    ParamPath::linear(vec![0.8, 0.6, -0.6, 0.8], vec![0.0, -0.1, 0.1, 0.0])
}

fn noiseless_rotation(n: usize) -> (ModelSpec, Dataset) {
    let model = ModelSpec::tv_var(2, 1).with_noise(ParamPath::constant(vec![0.0; 4]));
    let opts = SimOptions {
        burn_in: 0,
        init: Some(vec![1.0, 0.0]),
    };
    let data = simulate_with(&model, &rotation_path(), n, &mut rng_stream(0, 0), &opts).unwrap();
    (model, data)
}

#[test]
fn noiseless_linear_path_is_recovered_exactly() {
    let (model, data) = noiseless_rotation(300);
    for u in [0.1, 0.5, 0.83] {
        let fit = fit_local(&model, &data, u, &FitConfig::new(1, 0.1), None).unwrap();
        let truth = rotation_path().eval(u);
        let slope = rotation_path().derivative(1, u).unwrap();
        for i in 0..4 {
            assert!((fit.theta_hat[i] - truth[i]).abs() < 1e-8);
            assert!((fit.deriv_hats[0][i] - slope[i]).abs() < 1e-8);
        }
    }
}

/// Plain Nelder–Mead used as an independent optimizer.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], scale: f64) -> Vec<f64> {
    let p = start.len();
    let mut best = start.to_vec();
    for _restart in 0..6 {
        let mut simplex: Vec<Vec<f64>> = vec![best.clone()];
        for i in 0..p {
            let mut v = best.clone();
            v[i] += scale;
            simplex.push(v);
        }
        let mut vals: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
        for _ in 0..20_000 {
            let mut idx: Vec<usize> = (0..=p).collect();
            idx.sort_by(|a, b| vals[*a].partial_cmp(&vals[*b]).unwrap());
            simplex = idx.iter().map(|i| simplex[*i].clone()).collect();
            vals = idx.iter().map(|i| vals[*i]).collect();
            if (vals[p] - vals[0]).abs() < 1e-16 * (1.0 + vals[0].abs()) {
                break;
            }
            let centroid: Vec<f64> = (0..p).map(|j| simplex[..p].iter().map(|x| x[j]).sum::<f64>() / p as f64).collect();
            let along = |t: f64| -> Vec<f64> { (0..p).map(|j| centroid[j] + t * (simplex[p][j] - centroid[j])).collect() };
            let xr = along(-1.0);
            let fr = f(&xr);
            if fr < vals[0] {
                let xe = along(-2.0);
                let fe = f(&xe);
                if fe < fr {
                    simplex[p] = xe;
                    vals[p] = fe;
                } else {
                    simplex[p] = xr;
                    vals[p] = fr;
                }
            } else if fr < vals[p - 1] {
                simplex[p] = xr;
                vals[p] = fr;
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                if fc < vals[p] {
                    simplex[p] = xc;
                    vals[p] = fc;
                } else {
                    for i in 1..=p {
                        simplex[i] = (0..p).map(|j| 0.5 * (simplex[0][j] + simplex[i][j])).collect();
                        vals[i] = f(&simplex[i]);
                    }
                }
            }
        }
        best = simplex[0].clone();
    }
    best
}

#[test]
fn wide_kernel_fit_matches_derivative_free_optimizer() {
    let n = 1500;
    let (u, b) = (0.5, 2.0);
    let weight = |t: usize| KernelSpec::Epanechnikov.eval(((t + 1) as f64 / n as f64 - u) / b);

    let arch = ModelSpec::tv_arch(1);
    let data = simulate(&arch, &ParamPath::constant(vec![0.5, 0.4]), n, 6, 500).unwrap();
    let w = &data.y;
    let negll = |th: &[f64]| -> f64 {
        if th[0] <= 0.0 || th[1] < 0.0 {
            return f64::INFINITY;
        }
        -(1..n)
            .map(|t| {
                let lam = th[0] + th[1] * w[t - 1];
                weight(t) * (-lam.ln() - w[t] / lam)
            })
            .sum::<f64>()
    };
    let fit = fit_local(&arch, &data, u, &FitConfig::new(0, b), None).unwrap();
    let nm = nelder_mead(negll, &[0.3, 0.3], 0.1);
    for i in 0..2 {
        assert!((fit.theta_hat[i] - nm[i]).abs() < 1e-6, "{:?} vs {:?}", fit.theta_hat, nm);
    }

    let garch = ModelSpec::tv_garch11();
    let data = simulate(&garch, &ParamPath::constant(vec![0.3, 0.15, 0.6]), n, 7, 500).unwrap();
    let w = data.y.clone();
    let lam0 = w.iter().sum::<f64>() / n as f64;
    let negll = |th: &[f64]| -> f64 {
        if th[0] <= 0.0 || th[1] < 0.0 || th[2] < 0.0 || th[1] + th[2] >= 1.0 {
            return f64::INFINITY;
        }
        let mut lam = lam0;
        let mut s = 0.0;
        for t in 1..n {
            lam = th[0] + th[1] * w[t - 1] + th[2] * lam;
            s += weight(t) * (-lam.ln() - w[t] / lam);
        }
        -s
    };
    let fit = fit_local(&garch, &data, u, &FitConfig::new(0, b), None).unwrap();
    let nm = nelder_mead(negll, &[0.2, 0.1, 0.5], 0.05);
    for i in 0..3 {
        assert!((fit.theta_hat[i] - nm[i]).abs() < 1e-6, "{:?} vs {:?}", fit.theta_hat, nm);
    }
}

#[test]
fn warm_start_direction_does_not_matter() {
    let model = ModelSpec::tv_var(2, 1);
    let path = ParamPath::linear(vec![0.5, 0.2, -0.1, 0.4], vec![0.1, 0.0, 0.0, -0.2]);
    let data = simulate(&model, &path, 400, 3, 500).unwrap();
    let grid: Vec<f64> = (1..40).map(|i| i as f64 / 40.0).collect();
    let cfg = FitConfig::new(1, 0.2);
    let lr = fit_path_with(&model, &data, &grid, &cfg, PathOptions { attach_moments: false, reverse: false }).unwrap();
    let rl = fit_path_with(&model, &data, &grid, &cfg, PathOptions { attach_moments: false, reverse: true }).unwrap();
    for (a, b) in lr.theta_hat().iter().zip(rl.theta_hat()) {
        let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() < 1e-6);
        }
    }
}

#[test]
fn one_point_grid_is_a_local_fit() {
    let (model, data) = arch_data(300, 8);
    let cfg = FitConfig::new(0, 0.2);
    let path = fit_path(&model, &data, &[0.4], &cfg).unwrap();
    let single = fit_local(&model, &data, 0.4, &cfg, None).unwrap();
    let a = &path.points[0].fit.as_ref().unwrap().theta_hat;
    for i in 0..2 {
        assert!((a[i] - single.theta_hat[i]).abs() < 1e-9);
    }
    assert!(path.points[0].moments.is_some());
}

#[test]
fn var_estimates_scale_equivariantly() {
    let model = ModelSpec::tv_var(2, 1);
    let path = ParamPath::linear(vec![0.5, 0.2, -0.1, 0.4], vec![0.1, 0.0, 0.0, -0.2]);
    let data = simulate(&model, &path, 300, 9, 500).unwrap();
    let scaled = Dataset {
        y: data.y.iter().map(|v| 3.7 * v).collect(),
        ..data.clone()
    };
    let cfg = FitConfig::new(1, 0.25);
    let a = fit_local(&model, &data, 0.6, &cfg, None).unwrap();
    let b = fit_local(&model, &scaled, 0.6, &cfg, None).unwrap();
    for i in 0..4 {
        assert!((a.theta_hat[i] - b.theta_hat[i]).abs() < 1e-8);
    }
}

#[test]
fn staged_fit_never_lowers_the_objective() {
    let (model, data) = arch_data(500, 10);
    let cfg = FitConfig::new(1, 0.15);
    for u in [0.05, 0.3, 0.7, 0.98] {
        let mut warm = Warm::default();
        let ll = fit_staged(&model, &data, u, &cfg, &mut warm, None).unwrap();
        let lc = fit_local(&model, &data, u, &FitConfig::new(0, 0.15), Some(warm.level.as_ref().unwrap())).unwrap();
        assert!(ll.objective >= lc.objective - 1e-14, "{} < {}", ll.objective, lc.objective);
    }
}

#[test]
fn converged_fits_satisfy_first_order_conditions() {
    let (model, data) = arch_data(800, 11);
    let cfg = FitConfig::new(1, 0.2);
    let path = fit_path(&model, &data, &[0.2, 0.5, 0.8], &cfg).unwrap();
    for p in &path.points {
        let f = p.fit.as_ref().unwrap();
        assert!(f.converged);
        assert!(f.score_norm < cfg.grad_tol);
        let s = local_score(&model, &data, f.u, &f.alpha_hat, &cfg).unwrap();
        let interior = model.theta_space.contains_interior(&f.theta_hat, 1e-6);
        if interior {
            assert!(s.iter().all(|x| x.abs() < cfg.grad_tol));
        }
    }
}

#[test]
fn arch_path_tracks_the_truth() {
    let model = ModelSpec::tv_arch(1);
    let path = ParamPath::linear(vec![0.4, 0.2], vec![0.6, 0.5]);
    let data = simulate(&model, &path, 4000, 12, 500).unwrap();
    let fit = fit_local(&model, &data, 0.5, &FitConfig::new(1, 0.2), None).unwrap();
    let truth = path.eval(0.5);
    assert!((fit.theta_hat[0] - truth[0]).abs() < 0.15, "{:?}", fit.theta_hat);
    assert!((fit.theta_hat[1] - truth[1]).abs() < 0.15, "{:?}", fit.theta_hat);
}

#[test]
fn recursive_families_reject_higher_orders() {
    let model = ModelSpec::tv_garch11();
    let data = simulate(&model, &ParamPath::constant(vec![0.3, 0.1, 0.5]), 200, 1, 500).unwrap();
    assert!(fit_local(&model, &data, 0.5, &FitConfig::new(1, 0.2), None).is_err());
}

#[test]
fn parx_fit_runs_with_covariate() {
    let model = ModelSpec::tv_parx(1, CovariateTransform::Exp);
    let path = ParamPath::constant(vec![0.7, 0.4, 0.8]);
    let data = simulate(&model, &path, 1500, 13, 500).unwrap();
    let fit = fit_local(&model, &data, 0.5, &FitConfig::new(1, 0.3), None).unwrap();
    assert!(fit.converged);
    assert!((fit.theta_hat[1] - 0.4).abs() < 0.15, "{:?}", fit.theta_hat);
}

#[test]
fn modified_score_reduces_to_arch_form() {
    let garch = ModelSpec::tv_garch11();
    let data = simulate(&garch, &ParamPath::constant(vec![0.4, 0.3, 0.0]), 300, 14, 500).unwrap();
    let arch = ModelSpec::tv_arch(1);
    let eps = data.innovations.clone().unwrap();
    for t in [5usize, 50, 250] {
        let sbar = gar_score_variant(&garch, &data, t, &[0.4, 0.3, 0.0], None).unwrap();
        let lam = 0.4 + 0.3 * data.y[t - 1];
        let expect = [(eps[t] * eps[t] - 1.0) / lam, (eps[t] * eps[t] - 1.0) * data.y[t - 1] / lam];
        assert!((sbar[0] - expect[0]).abs() < 1e-12);
        assert!((sbar[1] - expect[1]).abs() < 1e-12);
        // At the truth the ordinary ARCH score coincides.
        let s = arch.score_t(&data, t, &[0.4, 0.3], None).unwrap();
        assert!((s[0] - sbar[0]).abs() < 1e-12 && (s[1] - sbar[1]).abs() < 1e-12);
    }
    assert!(gar_score_variant(&arch, &data, 5, &[0.4, 0.3], None).is_err());
}

#[test]
fn modified_score_is_a_martingale_difference() {
    let garch = ModelSpec::tv_garch11();
    let path = ParamPath::linear(vec![0.2, 0.1, 0.6], vec![0.3, 0.1, -0.2]);
    let n = 5000;
    let data = simulate(&garch, &path, n, 15, 500).unwrap();
    let mut cols = vec![Vec::new(); 3];
    for t in 200..n {
        let th = path.eval((t + 1) as f64 / n as f64);
        let s = gar_score_variant(&garch, &data, t, &th, None).unwrap();
        for i in 0..3 {
            cols[i].push(s[i]);
        }
    }
    for c in cols {
        let m = c.iter().sum::<f64>() / c.len() as f64;
        let sd = (c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (c.len() - 1) as f64).sqrt();
        assert!(m.abs() < 5.0 * sd / (c.len() as f64).sqrt());
    }
}

#[test]
fn modified_score_second_moment() {
    let garch = ModelSpec::tv_garch11().with_lambda0(1.0);
    let theta = vec![0.3, 0.1, 0.5];
    let s = simulate_stationary(&garch, 0.5, &ParamPath::constant(theta.clone()), 60_000, 16, false).unwrap();
    let data = s.data;
    let mut st = tvlik::models::LatentState::initial(1.0);
    let (mut lhs, mut rhs) = (vec![0.0; 9], vec![0.0; 9]);
    let mut lhs_sq = vec![0.0; 9];
    let burn = 500;
    let mut count = 0.0;
    for t in 1..data.n() {
        st = st.advance(&theta, data.y[t - 1]);
        if t < burn {
            continue;
        }
        let sb = gar_score_variant(&garch, &data, t, &theta, Some(&st)).unwrap();
        let v: Vec<f64> = st.dlambda.iter().map(|d| d / st.lambda).collect();
        for i in 0..3 {
            for j in 0..3 {
                let x = sb[i] * sb[j];
                lhs[i * 3 + j] += x;
                lhs_sq[i * 3 + j] += x * x;
                rhs[i * 3 + j] += 2.0 * v[i] * v[j];
            }
        }
        count += 1.0;
    }
    for k in 0..9 {
        let m = lhs[k] / count;
        let se = ((lhs_sq[k] / count - m * m) / count).sqrt();
        let r = rhs[k] / count;
        assert!((m - r).abs() < 4.0 * se + 1e-12, "{k}: {m} vs {r} (se {se})");
    }
}
