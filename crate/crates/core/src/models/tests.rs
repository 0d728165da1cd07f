use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn loglik_examples() {
    let arch = ModelSpec::tv_arch(1);
    let data = Dataset::univariate(vec![1.0, 1.0]);
    assert_abs_diff_eq!(arch.loglik_t(&data, 1, &[0.5, 0.5], None).unwrap(), -1.0, epsilon = 1e-15);

    let var = ModelSpec::tv_var(1, 1);
    let data = Dataset::univariate(vec![1.0, 0.2]);
    assert_abs_diff_eq!(var.loglik_t(&data, 1, &[0.2], None).unwrap(), 0.0, epsilon = 1e-15);

    let parx = ModelSpec::tv_parx(1, CovariateTransform::None);
    let data = Dataset::univariate(vec![1.0, 2.0]);
    let v = parx.loglik_t(&data, 1, &[1.0, 1.0], None).unwrap();
    assert_abs_diff_eq!(v, 2.0 * 2f64.ln() - 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(v, -0.6137, epsilon = 1e-4);
}

#[test]
fn arch_score_vanishes_when_observation_equals_intensity() {
    let arch = ModelSpec::tv_arch(1);
    let data = Dataset::univariate(vec![2.0, 0.3 + 0.4 * 2.0]);
    let s = arch.score_t(&data, 1, &[0.3, 0.4], None).unwrap();
    assert!(s.iter().all(|x| x.abs() < 1e-15));
}

#[test]
fn negative_intensity_is_reported() {
    let arch = ModelSpec::tv_arch(1);
    let data = Dataset::univariate(vec![1.0, 1.0]);
    let err = arch.loglik_t(&data, 1, &[-2.0, 0.5], None).unwrap_err();
    assert!(matches!(err, Error::InvalidIntensity { t: 1, .. }));
}

fn random_theta(model: &ModelSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match model.family {
        Family::TvVar { d, q } => (0..d * d * q).map(|_| rng.gen_range(-0.4..0.4) / q as f64).collect(),
        Family::TvArch { q } => {
            let mut th = vec![rng.gen_range(0.2..2.0)];
            th.extend((0..q).map(|_| rng.gen_range(0.0..0.9) / q as f64));
            th
        }
        Family::TvGarch11 => {
            let a = rng.gen_range(0.02..0.4);
            let b = rng.gen_range(0.0..(0.95 - a));
            vec![rng.gen_range(0.1..1.5), a, b]
        }
        Family::TvParx { q, covariate } => {
            let mut th = vec![rng.gen_range(0.3..3.0)];
            th.extend((0..q).map(|_| rng.gen_range(0.0..0.8) / q as f64));
            if covariate != CovariateTransform::None {
                th.push(rng.gen_range(0.1..1.5));
            }
            th
        }
    }
}

fn families() -> Vec<ModelSpec> {
    vec![
        ModelSpec::tv_var(2, 2),
        ModelSpec::tv_arch(2),
        ModelSpec::tv_garch11(),
        ModelSpec::tv_parx(2, CovariateTransform::Exp),
    ]
}

/// Central differences of the value (for the score) and of the score (for the
/// Hessian) at 100 random admissible points per family.
#[test]
fn derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for model in families() {
        let tol = if model.is_recursive() { 1e-5 } else { 1e-6 };
        let p = model.dim();
        for k in 0..100 {
            let truth = random_theta(&model, &mut rng);
            let data = simulate(&model, &ParamPath::constant(truth.clone()), 60, 1000 + k, 50).unwrap();
            let theta: Vec<f64> = random_theta(&model, &mut rng);
            let t = rng.gen_range(model.window()..60);
            let ev = model.eval_t(&data, t, &theta, None, Order::Hessian).unwrap();
            for i in 0..p {
                let h = 1e-6 * theta[i].abs().max(1e-2);
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (model.loglik_t(&data, t, &tp, None).unwrap() - model.loglik_t(&data, t, &tm, None).unwrap())
                    / (2.0 * h);
                assert!(
                    rel_close(ev.score[i], fd, tol),
                    "{:?} score[{i}] {} vs {fd}",
                    model.family,
                    ev.score[i]
                );
                let sp = model.score_t(&data, t, &tp, None).unwrap();
                let sm = model.score_t(&data, t, &tm, None).unwrap();
                for j in 0..p {
                    let fd = (sp[j] - sm[j]) / (2.0 * h);
                    assert!(
                        rel_close(ev.hess[j * p + i], fd, tol),
                        "{:?} hess[{j},{i}] {} vs {fd}",
                        model.family,
                        ev.hess[j * p + i]
                    );
                }
            }
        }
    }
}

#[test]
fn third_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for model in [ModelSpec::tv_arch(2), ModelSpec::tv_parx(1, CovariateTransform::PositivePart)] {
        let p = model.dim();
        let truth = random_theta(&model, &mut rng);
        let data = simulate(&model, &ParamPath::constant(truth), 40, 3, 50).unwrap();
        let theta = random_theta(&model, &mut rng);
        let t = 20;
        let d3 = model.third_derivative_t(&data, t, &theta).unwrap().unwrap();
        for i in 0..p {
            let h = 1e-6;
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let hp = model.hessian_t(&data, t, &tp, None).unwrap();
            let hm = model.hessian_t(&data, t, &tm, None).unwrap();
            for jk in 0..p * p {
                let fd = (hp[jk] - hm[jk]) / (2.0 * h);
                assert!(rel_close(d3[i * p * p + jk], fd, 1e-5));
            }
        }
    }
    assert!(ModelSpec::tv_garch11()
        .third_derivative_t(&Dataset::univariate(vec![1.0; 5]), 2, &[0.1, 0.1, 0.1])
        .unwrap()
        .is_none());
}

#[test]
fn garch_without_beta_reproduces_arch1() {
    let arch = ModelSpec::tv_arch(1);
    let garch = ModelSpec::tv_garch11();
    let data = simulate(&arch, &ParamPath::constant(vec![0.5, 0.4]), 200, 9, 100).unwrap();
    let theta = [0.6, 0.3, 0.0];
    let mut state = LatentState::initial(garch.initial_lambda(&data));
    for t in 1..data.n() {
        state = state.advance(&theta, data.y[t - 1]);
        let a = arch.eval_t(&data, t, &theta[..2], None, Order::Hessian).unwrap();
        let g = garch.eval_t(&data, t, &theta, Some(&state), Order::Hessian).unwrap();
        assert!((a.value - g.value).abs() < 1e-12);
        for i in 0..2 {
            assert!((a.score[i] - g.score[i]).abs() < 1e-12);
            for j in 0..2 {
                assert!((a.hess[i * 2 + j] - g.hess[i * 3 + j]).abs() < 1e-12);
            }
        }
    }
}

/// `∂_u h_t` against a central difference in the data direction `dy`.
#[test]
fn hessian_time_derivative_matches_data_perturbation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for model in [ModelSpec::tv_var(2, 1), ModelSpec::tv_arch(2), ModelSpec::tv_garch11()] {
        let p = model.dim();
        let theta = random_theta(&model, &mut rng);
        let data = simulate(&model, &ParamPath::constant(theta.clone()), 50, 4, 50).unwrap();
        let dy: Vec<f64> = data.y.iter().map(|_| rng.gen_range(-0.5..0.5)).collect();
        let model = model.with_lambda0(1.0);
        let t = 30;
        let (mut st, mut tan) = (LatentState::initial(1.0), LatentTangent::default());
        for s in 1..=t {
            st = st.advance(&theta, data.y[s - 1]);
            tan = tan.advance(&theta, dy[s - 1]);
        }
        let dh = model
            .hessian_time_derivative(&data, &dy, t, &theta, Some((&st, &tan)))
            .unwrap();
        let h = 1e-6;
        let shift = |s: f64| Dataset {
            y: data.y.iter().zip(&dy).map(|(a, b)| a + s * b).collect(),
            ..data.clone()
        };
        let hp = model.hessian_t(&shift(h), t, &theta, None).unwrap();
        let hm = model.hessian_t(&shift(-h), t, &theta, None).unwrap();
        for k in 0..p * p {
            let fd = (hp[k] - hm[k]) / (2.0 * h);
            assert!(rel_close(dh[k], fd, 1e-5), "{:?} {k}: {} vs {fd}", model.family, dh[k]);
        }
    }
    let parx = ModelSpec::tv_parx(1, CovariateTransform::None);
    let data = Dataset::univariate(vec![1.0, 2.0, 3.0]);
    assert!(parx.hessian_time_derivative(&data, &[0.0; 3], 2, &[1.0, 0.5], None).is_err());
}

#[test]
fn noiseless_var_is_a_power_recursion() {
    let model = ModelSpec::tv_var(1, 1).with_noise(ParamPath::constant(vec![0.0]));
    let opts = SimOptions {
        burn_in: 0,
        init: Some(vec![2.0]),
    };
    let data = simulate_with(&model, &ParamPath::constant(vec![0.9]), 30, &mut rng_stream(1, 0), &opts).unwrap();
    for t in 0..30 {
        assert_abs_diff_eq!(data.y[t], 2.0 * 0.9f64.powi(t as i32), epsilon = 1e-12);
    }
}

fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Standard error from independent replications, robust to serial correlation.
fn replicated_means<F: Fn(u64) -> f64>(reps: u64, f: F) -> (f64, f64) {
    let means: Vec<f64> = (0..reps).map(f).collect();
    mean_and_se(&means)
}

#[test]
fn arch_sample_mean_matches_stationary_mean() {
    let model = ModelSpec::tv_arch(1);
    let path = ParamPath::constant(vec![0.5, 0.3]);
    let (m, se) = replicated_means(40, |r| {
        let d = simulate(&model, &path, 5000, r, 500).unwrap();
        d.y.iter().sum::<f64>() / d.n() as f64
    });
    assert!((m - 0.5 / 0.7).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn parx_sample_mean_matches_stationary_mean() {
    let model = ModelSpec::tv_parx(1, CovariateTransform::None);
    let path = ParamPath::constant(vec![1.5, 0.4]);
    let (m, se) = replicated_means(40, |r| {
        let d = simulate(&model, &path, 5000, r, 500).unwrap();
        d.y.iter().sum::<f64>() / d.n() as f64
    });
    assert!((m - 1.5 / 0.6).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn poisson_sampler_moments() {
    let mut rng = rng_stream(3, 0);
    for lam in [0.3, 4.0, 29.0, 31.0, 250.0] {
        let draws: Vec<f64> = (0..40_000).map(|_| poisson_sample(lam, &mut rng)).collect();
        let (m, se) = mean_and_se(&draws);
        let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((m - lam).abs() < 4.0 * se, "λ = {lam}: mean {m}");
        assert!((v / lam - 1.0).abs() < 0.05, "λ = {lam}: var {v}");
        assert!(draws.iter().all(|x| *x >= 0.0 && x.fract() == 0.0));
    }
}

#[test]
fn stationary_derivative_vanishes_for_constant_path() {
    let model = ModelSpec::tv_var(2, 1);
    let s = simulate_stationary(&model, 0.3, &ParamPath::constant(vec![0.3, 0.1, -0.2, 0.4]), 200, 8, true).unwrap();
    assert!(s.derivative.unwrap().iter().all(|x| *x == 0.0));
    let arch = ModelSpec::tv_arch(1);
    let s = simulate_stationary(&arch, 0.3, &ParamPath::constant(vec![0.3, 0.4]), 200, 8, true).unwrap();
    assert!(s.derivative.unwrap().iter().all(|x| *x == 0.0));
}

#[test]
fn stationary_intensity_mean() {
    let model = ModelSpec::tv_arch(1);
    let path = ParamPath::linear(vec![0.4, 0.1], vec![0.4, 0.5]);
    let u = 0.5;
    let (m, se) = replicated_means(40, |r| {
        let s = simulate_stationary(&model, u, &path, 4000, r, false).unwrap();
        let lam = s.intensity.unwrap();
        lam.iter().sum::<f64>() / lam.len() as f64
    });
    assert!((m - 0.6 / 0.65).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn stationary_derivative_matches_difference_quotient() {
    // Same seed at u ± h: the draws coincide, so the difference quotient of the
    // stationary paths converges to the derivative process.
    let model = ModelSpec::tv_garch11();
    let path = ParamPath::linear(vec![0.3, 0.1, 0.5], vec![0.4, 0.1, 0.2]);
    let (u, h) = (0.4, 1e-6);
    let s = simulate_stationary(&model, u, &path, 300, 2, true).unwrap();
    let p = simulate_stationary(&model, u + h, &path, 300, 2, false).unwrap();
    let m = simulate_stationary(&model, u - h, &path, 300, 2, false).unwrap();
    let dy = s.derivative.unwrap();
    for t in 0..300 {
        let fd = (p.data.y[t] - m.data.y[t]) / (2.0 * h);
        assert!(rel_close(dy[t], fd, 1e-5), "{t}: {} vs {fd}", dy[t]);
    }
}

#[test]
fn coupling_error_decays_with_sample_size() {
    let model = ModelSpec::tv_arch(1);
    let path = ParamPath::with_derivatives(
        2,
        |u| vec![0.7 - 0.5 * (6.0 * std::f64::consts::PI * u).cos(), 0.45 + 0.4 * (6.0 * std::f64::consts::PI * u).cos()],
        |_| vec![0.0, 0.0],
        |_| vec![0.0, 0.0],
    );
    let (e500, _) = coupled_deviation(&model, &path, 0.5, 500, 400, 77).unwrap();
    let (e2000, _) = coupled_deviation(&model, &path, 0.5, 2000, 400, 77).unwrap();
    assert!(e2000 < 0.6 * e500, "{e2000} vs {e500}");

    let var = ModelSpec::tv_var(1, 1);
    let path = ParamPath::linear(vec![-0.5], vec![1.0]);
    let (e500, _) = coupled_deviation(&var, &path, 0.7, 500, 400, 78).unwrap();
    let (e2000, _) = coupled_deviation(&var, &path, 0.7, 2000, 400, 78).unwrap();
    assert!(e2000 < 0.6 * e500, "{e2000} vs {e500}");
}

#[test]
fn score_is_a_martingale_difference_at_the_truth() {
    let paths: Vec<(ModelSpec, ParamPath)> = vec![
        (ModelSpec::tv_var(1, 1), ParamPath::linear(vec![-0.3], vec![0.8])),
        (ModelSpec::tv_arch(1), ParamPath::linear(vec![0.3, 0.1], vec![0.5, 0.5])),
        (
            ModelSpec::tv_parx(1, CovariateTransform::Exp),
            ParamPath::linear(vec![0.5, 0.2, 0.5], vec![0.5, 0.3, 0.3]),
        ),
    ];
    for (model, path) in paths {
        let n = 4000;
        let data = simulate(&model, &path, n, 12, 500).unwrap();
        let p = model.dim();
        let mut rows = vec![Vec::new(); p];
        for t in model.window()..n {
            let th = path.eval((t + 1) as f64 / n as f64);
            let s = model.score_t(&data, t, &th, None).unwrap();
            for i in 0..p {
                rows[i].push(s[i]);
            }
        }
        for r in rows {
            let (m, se) = mean_and_se(&r);
            assert!(m.abs() < 5.0 * se, "{:?}: {m} vs se {se}", model.family);
        }
    }
}

#[test]
fn simulation_is_deterministic_and_overflow_is_caught() {
    let model = ModelSpec::tv_garch11();
    let path = ParamPath::constant(vec![0.2, 0.1, 0.8]);
    let a = simulate(&model, &path, 100, 5, 500).unwrap();
    let b = simulate(&model, &path, 100, 5, 500).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.innovations.as_ref().unwrap().len(), 100);

    let var = ModelSpec::tv_var(1, 1);
    let err = simulate(&var, &ParamPath::constant(vec![3.0]), 200, 1, 0).unwrap_err();
    assert!(matches!(err, Error::SimulationOverflow { .. }));
}

#[test]
fn data_validation() {
    let parx = ModelSpec::tv_parx(1, CovariateTransform::None);
    assert!(parx.check_data(&Dataset::univariate(vec![1.0, 2.5, 3.0])).is_err());
    assert!(parx.check_data(&Dataset::univariate(vec![1.0, 2.0, 3.0])).is_ok());
    let arch = ModelSpec::tv_arch(1);
    assert!(arch.check_data(&Dataset::univariate(vec![1.0, -2.0, 3.0])).is_err());
    assert!(Dataset::multivariate(2, vec![1.0, 2.0, 3.0]).is_err());
    let cov = ModelSpec::tv_parx(1, CovariateTransform::Exp);
    assert!(cov.check_data(&Dataset::univariate(vec![1.0, 2.0, 3.0])).is_err());
}
