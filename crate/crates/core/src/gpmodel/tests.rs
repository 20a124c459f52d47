use super::*;
use crate::rng::keyed_stream;
use rand::Rng;
use rand_distr::StandardNormal;

fn fp(mean: &[f64], std: &[f64], iteration: usize) -> Fingerprint<f64> {
    Fingerprint::new(mean.to_vec(), std.to_vec(), iteration).unwrap()
}

fn input(psi: &[f64], iteration: usize, mean: f64, std: f64) -> GpInput<f64> {
    GpInput {
        psi: psi.to_vec(),
        iteration,
        fingerprint: fp(&[mean], &[std], iteration),
    }
}

fn hypers(psi_dim: usize) -> GpHypers<f64> {
    GpHypers {
        signal_var: 1.3,
        lengthscales_psi: vec![0.4; psi_dim],
        lengthscale_iter: 0.5,
        lengthscale_fpr: 0.7,
        noise_var: 0.05,
    }
}

/// `1 − Π_i ∫ √(p_i q_i)` by composite Simpson per dimension.
fn hellinger_by_quadrature(f1: &Fingerprint<f64>, f2: &Fingerprint<f64>) -> f64 {
    let mut bc = 1.0;
    for i in 0..f1.dim() {
        let (m1, s1, m2, s2) = (f1.mean[i], f1.std[i], f2.mean[i], f2.std[i]);
        let lo = (m1 - 12.0 * s1).min(m2 - 12.0 * s2);
        let hi = (m1 + 12.0 * s1).max(m2 + 12.0 * s2);
        let pdf = |x: f64, m: f64, s: f64| {
            (-0.5 * ((x - m) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        let f = |x: f64| (pdf(x, m1, s1) * pdf(x, m2, s2)).sqrt();
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for k in 1..n {
            s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        bc *= s * h / 3.0;
    }
    1.0 - bc
}

#[test]
fn hellinger_of_identical_fingerprints_is_zero() {
    let a = fp(&[0.3, -1.0], &[0.5, 2.0], 0);
    assert_eq!(hellinger_sq(&a, &a).unwrap(), 0.0);
}

#[test]
fn hellinger_unit_gaussians_two_apart() {
    let a = fp(&[0.0], &[1.0], 0);
    let b = fp(&[2.0], &[1.0], 0);
    let h = hellinger_sq(&a, &b).unwrap();
    assert!((h - (1.0 - (-0.5f64).exp())).abs() < 1e-12);
    assert!((h - 0.393_469_34).abs() < 1e-6);
    assert!((h - hellinger_by_quadrature(&a, &b)).abs() < 1e-6);
}

#[test]
fn hellinger_matches_quadrature_on_random_pairs() {
    let mut rng = keyed_stream(21);
    for _ in 0..100 {
        let dim = rng.random_range(1..=3);
        let draw = |rng: &mut crate::rng::Rng| {
            let m: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s: Vec<f64> = (0..dim).map(|_| rng.random_range(0.2..2.0)).collect();
            fp(&m, &s, 0)
        };
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let h = hellinger_sq(&a, &b).unwrap();
        assert!((0.0..=1.0).contains(&h));
        assert!((h - hellinger_sq(&b, &a).unwrap()).abs() < 1e-15);
        assert!((h - hellinger_by_quadrature(&a, &b)).abs() < 1e-6);
    }
}

#[test]
fn hellinger_tends_to_one_for_separated_means() {
    let a = fp(&[0.0], &[1.0], 0);
    let mut last = 0.0;
    for d in [1.0, 5.0, 10.0, 40.0] {
        let h = hellinger_sq(&a, &fp(&[d], &[1.0], 0)).unwrap();
        assert!(h > last && h <= 1.0);
        last = h;
    }
    assert!(last > 1.0 - 1e-12);
}

#[test]
fn hellinger_dimension_mismatch() {
    let a = fp(&[0.0], &[1.0], 0);
    let b = fp(&[0.0, 1.0], &[1.0, 1.0], 0);
    assert!(matches!(
        hellinger_sq(&a, &b),
        Err(FpoError::DimensionMismatch { .. })
    ));
}

#[test]
fn kernel_basics() {
    let h = hypers(2);
    let x = input(&[0.2, 0.9], 4, 0.3, 0.1);
    assert!((kernel(&x, &x, &h, 0.01) - h.signal_var).abs() < 1e-15);

    let mut rng = keyed_stream(3);
    let inputs: Vec<GpInput<f64>> = (0..10)
        .map(|_| {
            input(
                &[rng.random(), rng.random()],
                rng.random_range(0..300),
                rng.random_range(-1.0..2.0),
                rng.random_range(0.01..1.0),
            )
        })
        .collect();
    for a in &inputs {
        for b in &inputs {
            assert_eq!(kernel(a, b, &h, 1.0 / 300.0), kernel(b, a, &h, 1.0 / 300.0));
        }
    }
    let mut gram = vec![0.0; 100];
    for i in 0..10 {
        for j in 0..10 {
            gram[i * 10 + j] = kernel(&inputs[i], &inputs[j], &h, 1.0 / 300.0);
        }
        gram[i * 10 + i] += 1e-8;
    }
    assert!(crate::linalg::Cholesky::factor(&gram, 10).is_some());

    // The cached Gram matrix agrees with direct kernel evaluation.
    let cache = DistanceCache::new(&inputs, 1.0 / 300.0);
    let cached = cache.gram(&h);
    for i in 0..10 {
        for j in 0..10 {
            let direct = gram[i * 10 + j] - if i == j { 1e-8 - h.noise_var } else { 0.0 };
            assert!((cached[i * 10 + j] - direct).abs() < 1e-12);
        }
    }
}

#[test]
fn noise_free_single_point_interpolates() {
    let mut data = GpDataset::new();
    let x = input(&[0.5], 3, 1.0, 0.2);
    data.push(x.clone(), 42.0).unwrap();
    let h = GpHypers {
        noise_var: 1e-12,
        ..hypers(1)
    };
    let gp = GaussianProcess::fit(&data, &h, 0.01).unwrap();
    let (mu, var) = gp.predict(&x).unwrap();
    assert!((mu - 42.0).abs() < 1e-6);
    assert!(var < 1e-6);
}

#[test]
fn far_queries_revert_to_the_prior() {
    let mut data = GpDataset::new();
    data.push(input(&[0.1], 0, 0.0, 0.1), -1.0).unwrap();
    data.push(input(&[0.2], 1, 0.1, 0.1), 1.0).unwrap();
    let h = hypers(1);
    let gp = GaussianProcess::fit(&data, &h, 0.01).unwrap();
    // Outputs {−1, 1}: mean 0, std 1, so output units equal normalised units.
    let far = input(&[1e4], 10_000_000, 1e6, 0.1);
    let (mu, var) = gp.predict(&far).unwrap();
    assert!(mu.abs() < 1e-12);
    assert!((var - h.signal_var).abs() < 1e-12);
}

#[test]
fn two_point_posterior_matches_explicit_inverse() {
    let x1 = input(&[0.1], 0, 0.0, 0.3);
    let x2 = input(&[0.6], 2, 0.4, 0.2);
    let q = input(&[0.35], 3, 0.2, 0.25);
    let (y1, y2) = (5.0, 11.0);
    let mut data = GpDataset::new();
    data.push(x1.clone(), y1).unwrap();
    data.push(x2.clone(), y2).unwrap();
    let h = hypers(1);
    let scale = 0.1;
    let gp = GaussianProcess::fit(&data, &h, scale).unwrap();
    let (mu, var) = gp.predict(&q).unwrap();

    let (m, s) = (8.0, 3.0);
    let (z1, z2) = ((y1 - m) / s, (y2 - m) / s);
    let k11 = kernel(&x1, &x1, &h, scale) + h.noise_var;
    let k22 = kernel(&x2, &x2, &h, scale) + h.noise_var;
    let k12 = kernel(&x1, &x2, &h, scale);
    let det = k11 * k22 - k12 * k12;
    let (i11, i12, i22) = (k22 / det, -k12 / det, k11 / det);
    let (kq1, kq2) = (kernel(&q, &x1, &h, scale), kernel(&q, &x2, &h, scale));
    let mu_n = kq1 * (i11 * z1 + i12 * z2) + kq2 * (i12 * z1 + i22 * z2);
    let var_n = h.signal_var - (kq1 * (i11 * kq1 + i12 * kq2) + kq2 * (i12 * kq1 + i22 * kq2));
    assert!((mu - (m + s * mu_n)).abs() < 1e-10);
    assert!((var - var_n * s * s).abs() < 1e-10);

    let ctx = gp.with_context(3, &q.fingerprint);
    let (mu_c, var_c) = ctx.predict(&q.psi).unwrap();
    assert!((mu_c - mu).abs() < 1e-12 && (var_c - var).abs() < 1e-12);
}

#[test]
fn single_precision_posterior() {
    let mut data: GpDataset<f32> = GpDataset::new();
    for (i, y) in [1.0f32, 2.0, 1.5].iter().enumerate() {
        data.push(
            GpInput {
                psi: vec![i as f32 * 0.3],
                iteration: i,
                fingerprint: Fingerprint::new(vec![0.1 * i as f32], vec![0.2], i).unwrap(),
            },
            *y,
        )
        .unwrap();
    }
    let h = hypers(1);
    let h32 = GpHypers {
        signal_var: h.signal_var as f32,
        lengthscales_psi: vec![0.4],
        lengthscale_iter: 0.5,
        lengthscale_fpr: 0.7,
        noise_var: 0.05,
    };
    let gp32 = GaussianProcess::fit(&data, &h32, 0.1).unwrap();
    let q = data.inputs[1].clone();
    let (mu32, var32) = gp32.predict(&q).unwrap();

    let mut data64 = GpDataset::new();
    for (x, y) in data.inputs.iter().zip(&data.outputs) {
        data64
            .push(
                GpInput {
                    psi: x.psi.iter().map(|v| *v as f64).collect(),
                    iteration: x.iteration,
                    fingerprint: x.fingerprint.cast(),
                },
                *y as f64,
            )
            .unwrap();
    }
    let gp64 = GaussianProcess::fit(&data64, &h, 0.1).unwrap();
    let (mu64, var64) = gp64.predict(&data64.inputs[1]).unwrap();
    assert!((mu32 as f64 - mu64).abs() < 1e-4);
    assert!((var32 as f64 - var64).abs() < 1e-4);
}

fn gp_prior_sample(seed: u64, truth: &GpHypers<f64>, n: usize) -> GpDataset<f64> {
    let mut rng = keyed_stream(seed);
    let inputs: Vec<GpInput<f64>> = (0..n)
        .map(|i| input(&[rng.random()], i, rng.random_range(0.0..1.5), 0.2))
        .collect();
    let scale = 1.0 / n as f64;
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = kernel(&inputs[i], &inputs[j], truth, scale);
        }
        k[i * n + i] += 1e-10;
    }
    let l = k_lower(&k, n);
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut data = GpDataset::new();
    for (i, x) in inputs.into_iter().enumerate() {
        // f = L z, plus observation noise.
        let f: f64 = (0..=i).map(|m| l[i * n + m] * z[m]).sum();
        let eps: f64 = rng.sample(StandardNormal);
        data.push(x, f + truth.noise_var.sqrt() * eps).unwrap();
    }
    data
}

// Plain Cholesky, kept separate from the library factorisation.
fn k_lower(k: &[f64], n: usize) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = k[i * n + j];
            for m in 0..j {
                s -= l[i * n + m] * l[j * n + m];
            }
            l[i * n + j] = if i == j { s.sqrt() } else { s / l[j * n + j] };
        }
    }
    l
}

#[test]
fn recovers_noise_level_from_prior_samples() {
    let truth = GpHypers {
        signal_var: 1.0,
        lengthscales_psi: vec![0.3],
        lengthscale_iter: 0.5,
        lengthscale_fpr: 1.0,
        noise_var: 0.1,
    };
    let data = gp_prior_sample(8, &truth, 20);
    let fit = fit_hypers(
        &data,
        &HyperBounds::default(),
        1.0 / 20.0,
        None,
        &mut keyed_stream(9),
    );
    let (_, std) = data.normalisation();
    let noise = fit.hypers.noise_var * std * std;
    assert!(noise > 0.01 && noise < 1.0, "recovered noise {noise}");
}

#[test]
fn fitted_likelihood_dominates_every_start() {
    let truth = hypers(1);
    let data = gp_prior_sample(10, &truth, 15);
    let fit = fit_hypers(
        &data,
        &HyperBounds::default(),
        1.0 / 15.0,
        None,
        &mut keyed_stream(1),
    );
    let best = fit.log_likelihood.unwrap();
    assert_eq!(fit.starts.len(), 8);
    for (_, v) in &fit.starts {
        assert!(best >= *v);
    }
    let direct = log_marginal_likelihood(&data, &fit.hypers, 1.0 / 15.0).unwrap();
    assert!((direct - best).abs() < 1e-9);
}

#[test]
fn duplicated_inputs_with_different_outputs_need_noise() {
    let mut data = GpDataset::new();
    for (k, y) in [0.0, 1.0, 0.3, 0.8, 0.5, 0.1].iter().enumerate() {
        data.push(input(&[0.5], 7 + k % 2, 0.2, 0.1), *y).unwrap();
    }
    let bounds = HyperBounds::default();
    let fit = fit_hypers(&data, &bounds, 0.1, None, &mut keyed_stream(2));
    assert!(fit.hypers.noise_var > bounds.noise_var.0 * 100.0);
}

#[test]
fn too_few_points_returns_midpoint() {
    let mut data = GpDataset::new();
    data.push(input(&[0.5, 0.5], 0, 0.0, 0.1), 1.0).unwrap();
    let bounds: HyperBounds<f64> = HyperBounds::default();
    let fit = fit_hypers(&data, &bounds, 0.1, None, &mut keyed_stream(0));
    assert_eq!(fit.hypers, bounds.midpoint(2));
    assert!(fit.log_likelihood.is_none());
}

#[test]
fn dataset_rejects_bad_rows() {
    let mut data = GpDataset::new();
    assert!(data.push(input(&[0.1], 0, 0.0, 1.0), f64::NAN).is_err());
    data.push(input(&[0.1], 0, 0.0, 1.0), 1.0).unwrap();
    assert!(data.push(input(&[0.1, 0.2], 0, 0.0, 1.0), 1.0).is_err());
    assert!(GaussianProcess::fit(&GpDataset::new(), &hypers(1), 1.0).is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn posterior_variance_is_non_negative(
            ys in proptest::collection::vec(-50.0f64..50.0, 1..12),
            qpsi in 0.0f64..1.0,
            qit in 0usize..30,
        ) {
            let mut data = GpDataset::new();
            for (i, y) in ys.iter().enumerate() {
                data.push(input(&[(i as f64 * 0.37) % 1.0], i, 0.1 * i as f64, 0.2), *y).unwrap();
            }
            let gp = GaussianProcess::fit(&data, &hypers(1), 1.0 / 30.0).unwrap();
            let (_, var) = gp.predict(&input(&[qpsi], qit, 0.3, 0.2)).unwrap();
            prop_assert!(var >= 0.0);
        }

        #[test]
        fn hellinger_bounds_and_symmetry(
            m1 in -5.0f64..5.0, m2 in -5.0f64..5.0,
            s1 in 1e-3f64..3.0, s2 in 1e-3f64..3.0,
        ) {
            let a = fp(&[m1], &[s1], 0);
            let b = fp(&[m2], &[s2], 0);
            let h = hellinger_sq(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&h));
            prop_assert_eq!(h, hellinger_sq(&b, &a).unwrap());
        }
    }
}
