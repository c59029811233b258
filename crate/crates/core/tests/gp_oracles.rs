mod common;

use bayesopt_core::gp::{log_marginal_likelihood, posterior, sample_prior_many};
use bayesopt_core::{Bounds, GaussianProcess, KernelSpec, MaternSmoothness, ObservationSet};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `t` uniform points at least `sep` apart (restarting if the draw jams),
/// with values uniform in [−2, 2].
fn separated_dataset(rng: &mut ChaCha8Rng, dim: usize, t: usize, sep: f64) -> ObservationSet {
    'draw: loop {
        let mut data = ObservationSet::new(Bounds::unit(dim));
        let mut tries = 0;
        while data.len() < t {
            tries += 1;
            if tries > 10_000 {
                continue 'draw;
            }
            let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let far = data.points().iter().all(|p| {
                p.iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    >= sep
            });
            if far {
                data.push(x, rng.random_range(-2.0..2.0)).unwrap();
            }
        }
        return data;
    }
}

fn random_dataset(rng: &mut ChaCha8Rng, dim: usize, t: usize) -> ObservationSet {
    separated_dataset(rng, dim, t, 0.1)
}

#[test]
fn noise_free_interpolation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..400 {
        let dim = 1 + trial % 2;
        let theta = if trial % 4 < 2 { 0.05 } else { 0.1 };
        let t = rng.random_range(1..=10);
        // With the fixed 1e-8 jitter, points closer than a length scale
        // carrying unrelated values cannot be interpolated to 1e-6.
        let data = separated_dataset(&mut rng, dim, t, theta);
        let spec = KernelSpec::squared_exp(theta, 1.0);
        let gp = GaussianProcess::fit(&spec, &data).unwrap();
        for (x, y) in data.points().iter().zip(data.values()) {
            let p = gp.predict(x).unwrap();
            assert!(
                (p.mean - y).abs() <= 1e-6,
                "trial {trial}: {} vs {y}",
                p.mean
            );
            assert!(p.variance <= 1e-6, "trial {trial}: variance {}", p.variance);
        }
    }
}

#[test]
fn training_variance_vanishes_without_separation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..400 {
        let dim = 1 + trial % 2;
        let t = rng.random_range(1..=10);
        let data = separated_dataset(&mut rng, dim, t, 0.0);
        let gp = GaussianProcess::fit(&KernelSpec::squared_exp(0.3, 1.0), &data).unwrap();
        for x in data.points() {
            assert!(gp.predict(x).unwrap().variance <= 1e-6);
        }
    }
}

#[test]
fn variance_ignores_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let a = random_dataset(&mut rng, 2, 8);
        let values: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b = ObservationSet::from_data(Bounds::unit(2), a.points().to_vec(), values).unwrap();
        let spec = KernelSpec::matern(MaternSmoothness::FiveHalves, 0.4, 2.0).with_noise(0.01);
        for _ in 0..20 {
            let q = vec![rng.random::<f64>(), rng.random::<f64>()];
            let va = posterior(&spec, &a, &q, false).unwrap().variance;
            let vb = posterior(&spec, &b, &q, false).unwrap().variance;
            assert!((va - vb).abs() <= 1e-12);
        }
    }
}

#[test]
fn scalar_example() {
    let data = ObservationSet::from_data(
        Bounds::new(vec![(-2.0, 2.0)]).unwrap(),
        vec![vec![0.0]],
        vec![1.0],
    )
    .unwrap();
    let p = posterior(&KernelSpec::squared_exp(1.0, 1.0), &data, &[1.0], false).unwrap();
    assert!((p.mean - (-0.5f64).exp()).abs() < 1e-7);
    assert!((p.variance - (1.0 - (-1.0f64).exp())).abs() < 1e-7);
}

#[test]
fn posterior_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let data = random_dataset(&mut rng, 2, 6);
        let spec = KernelSpec::squared_exp_ard(vec![0.3, 0.6], 1.5).with_noise(0.05);
        let gp = GaussianProcess::fit(&spec, &data).unwrap();
        let k = sq_exp_ard(&[0.3, 0.6], 1.5);
        let mut kk = gram(data.points(), &k);
        for (i, row) in kk.iter_mut().enumerate() {
            row[i] += 0.05 + gp.jitter();
        }
        let inv = inverse(&kk);
        let q = vec![rng.random::<f64>(), rng.random::<f64>()];
        let kq: Vec<f64> = data.points().iter().map(|p| k(p, &q)).collect();
        let mean = dot(&kq, &matvec(&inv, data.values()));
        let var = 1.5 - dot(&kq, &matvec(&inv, &kq));
        let p = gp.predict(&q).unwrap();
        assert!((p.mean - mean).abs() < 1e-9);
        assert!((p.variance - var).abs() < 1e-9);
        let with_noise = gp.predict_observation(&q).unwrap();
        assert!((with_noise.variance - var - 0.05).abs() < 1e-9);
    }
}

fn sq_exp_ard(theta: &[f64], sv: f64) -> impl Fn(&[f64], &[f64]) -> f64 + '_ {
    move |a, b| {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(theta)
            .map(|((x, y), t)| ((x - y) / t).powi(2))
            .sum();
        sv * (-0.5 * r2).exp()
    }
}

#[test]
fn log_likelihood_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 1..=8 {
        let data = random_dataset(&mut rng, 1, t);
        let spec = KernelSpec::squared_exp(0.25, 0.8).with_noise(0.1);
        let mut kk = gram(data.points(), sq_exp(0.25, 0.8));
        let jitter = GaussianProcess::fit(&spec, &data).unwrap().jitter();
        for (i, row) in kk.iter_mut().enumerate() {
            row[i] += 0.1 + jitter;
        }
        let y = data.values();
        let oracle = -0.5 * dot(y, &matvec(&inverse(&kk), y))
            - 0.5 * det(&kk).ln()
            - 0.5 * t as f64 * (2.0 * std::f64::consts::PI).ln();
        let lml = log_marginal_likelihood(&spec, &data).unwrap();
        assert!((lml - oracle).abs() < 1e-8, "t={t}: {lml} vs {oracle}");
    }
}

#[test]
fn prior_samples_have_kernel_covariance() {
    let points: Vec<Vec<f64>> = [0.0, 0.15, 0.5, 0.9].iter().map(|x| vec![*x]).collect();
    let spec = KernelSpec::squared_exp(0.3, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let draws = sample_prior_many(&spec, &points, n, &mut rng).unwrap();
    let k = gram(&points, sq_exp(0.3, 2.0));
    for i in 0..4 {
        for j in 0..4 {
            let emp = draws.iter().map(|d| d[i] * d[j]).sum::<f64>() / n as f64;
            // 5% of the signal variance covers the sampling error comfortably.
            assert!(
                (emp - k[i][j]).abs() <= 0.05 * 2.0,
                "({i},{j}) {emp} vs {}",
                k[i][j]
            );
        }
    }
}

/// K_ν(z) = ∫₀^∞ exp(−z cosh t) cosh(νt) dt by the trapezoid rule.
fn bessel_k(nu: f64, z: f64) -> f64 {
    let h = 1e-3;
    let mut sum = 0.5 * (-z).exp();
    let mut t: f64 = h;
    loop {
        let v = (-z * t.cosh()).exp() * (nu * t).cosh();
        sum += v;
        if v < 1e-300 || t > 50.0 {
            break;
        }
        t += h;
    }
    sum * h
}

#[test]
fn matern_closed_forms_match_bessel_form() {
    let pi = std::f64::consts::PI;
    // Γ(1/2), Γ(3/2), Γ(5/2).
    let gammas = [pi.sqrt(), pi.sqrt() / 2.0, 3.0 * pi.sqrt() / 4.0];
    let cases = [
        (MaternSmoothness::Half, 0.5),
        (MaternSmoothness::ThreeHalves, 1.5),
        (MaternSmoothness::FiveHalves, 2.5),
    ];
    for ((smoothness, nu), gamma) in cases.into_iter().zip(gammas) {
        let theta = 0.7;
        let spec = KernelSpec::matern(smoothness, theta, 1.0);
        for r in [0.05, 0.2, 0.5, 1.0, 2.0] {
            let s: f64 = 2.0 * f64::sqrt(nu) * r / theta;
            let oracle = 2f64.powf(1.0 - nu) / gamma * s.powf(nu) * bessel_k(nu, s);
            let got = spec.eval(&[0.0], &[r]).unwrap();
            assert!(
                (got - oracle).abs() < 1e-6,
                "nu={nu} r={r}: {got} vs {oracle}"
            );
        }
    }
    let half = KernelSpec::matern(MaternSmoothness::Half, 1.0, 1.0);
    assert!(
        (half.eval(&[0.0], &[0.3]).unwrap() - (-std::f64::consts::SQRT_2 * 0.3).exp()).abs()
            < 1e-15
    );
}

#[test]
fn ard_irrelevant_dimension() {
    let spec = KernelSpec::squared_exp_ard(vec![0.3, 1e3], 1.0);
    let a = spec.eval(&[0.2, 0.0], &[0.5, 0.0]).unwrap();
    let b = spec.eval(&[0.2, 0.0], &[0.5, 1.0]).unwrap();
    assert!((a - b).abs() < 1e-6);
    let c = spec.eval(&[0.2, 0.0], &[0.2, 1.0]).unwrap();
    assert!(c > 0.999_999);
}

fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
    (0.05f64..2.0, 0.1f64..5.0, 0usize..4).prop_map(|(theta, sv, family)| match family {
        0 => KernelSpec::squared_exp(theta, sv),
        1 => KernelSpec::matern(MaternSmoothness::Half, theta, sv),
        2 => KernelSpec::matern(MaternSmoothness::ThreeHalves, theta, sv),
        _ => KernelSpec::matern(MaternSmoothness::FiveHalves, theta, sv),
    })
}

proptest! {
    #[test]
    fn kernel_is_symmetric(spec in kernel_strategy(), a in prop::array::uniform2(0.0f64..1.0), b in prop::array::uniform2(0.0f64..1.0)) {
        prop_assert_eq!(spec.eval(&a, &b).unwrap(), spec.eval(&b, &a).unwrap());
        prop_assert!(spec.eval(&a, &b).unwrap() <= spec.signal_variance);
    }

    #[test]
    fn variance_never_exceeds_prior(spec in kernel_strategy(), noise in 0.0f64..0.5, seed in 0u64..1000, q in prop::array::uniform2(0.0f64..1.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_dataset(&mut rng, 2, 5);
        let spec = spec.with_noise(noise);
        let p = posterior(&spec, &data, &q, false).unwrap();
        prop_assert!(p.variance >= 0.0);
        prop_assert!(p.variance <= spec.signal_variance + noise + 1e-9);
    }
}
