use dkf_core::dynamics::{
    discretize_projectile, measure, step_truth, MeasurementModel, TargetState,
};
use dkf_core::filter::{adapt, time_update};
use dkf_core::numerics::{Matrix, Vector};
use dkf_core::STATE_DIM;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn sample_cov(samples: &[[f64; 4]]) -> DMatrix<f64> {
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..4)
        .map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n)
        .collect();
    DMatrix::from_fn(4, 4, |i, j| {
        samples
            .iter()
            .map(|s| (s[i] - mean[i]) * (s[j] - mean[j]))
            .sum::<f64>()
            / (n - 1.0)
    })
}

#[test]
fn process_noise_has_shaped_covariance() {
    let g = Matrix::from_row_major(
        4,
        4,
        vec![
            1.0, 0.0, 0.0, 0.0, //
            0.5, 1.0, 0.0, 0.0, //
            0.0, 0.0, 2.0, 0.0, //
            0.0, 0.3, 0.0, 0.7,
        ],
    )
    .unwrap();
    let q = Matrix::from_diagonal(&[0.2, 0.1, 0.05, 0.4]);
    let model = discretize_projectile(0.1, 10.0)
        .unwrap()
        .with_process_noise(g.clone(), q.clone())
        .unwrap();
    let start = TargetState([1.0, 2.0, 3.0, 4.0]);
    let mean = model.propagate(&start).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<[f64; 4]> = (0..100_000)
        .map(|_| {
            let s = step_truth(&start, &model, &mut rng).unwrap();
            core::array::from_fn(|i| s.0[i] - mean.0[i])
        })
        .collect();
    let expected = na(&g) * na(&q) * na(&g).transpose();
    let rel = (sample_cov(&samples) - &expected).norm() / expected.norm();
    assert!(rel < 0.05, "relative Frobenius error {rel}");
}

#[test]
fn measurement_noise_has_configured_variance() {
    let sigma2 = 0.37;
    let model = MeasurementModel::new(sigma2).unwrap();
    let truth = TargetState([1.0, -2.0, 0.5, 8.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let samples: Vec<[f64; 4]> = (0..100_000)
        .map(|_| {
            let y = measure(&truth, &model, &mut rng).unwrap();
            core::array::from_fn(|i| y[i] - truth.0[i])
        })
        .collect();
    let expected = DMatrix::identity(4, 4) * sigma2;
    let rel = (sample_cov(&samples) - &expected).norm() / expected.norm();
    assert!(rel < 0.05, "relative Frobenius error {rel}");
}

/// Information form: `P+ = (P^-1 + sum H^T R^-1 H)^-1`,
/// `x+ = P+ (P^-1 x + sum H^T R^-1 y)`.
#[test]
fn sequential_adaptation_matches_information_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..300 {
        let k = 1 + case % 10;
        let b = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let p = &b * b.transpose() + DMatrix::identity(4, 4) * 0.2;
        let x = DVector::from_fn(4, |_, _| rng.random::<f64>() * 20.0 - 10.0);

        let mut info = p.clone().try_inverse().unwrap();
        let mut info_vec = &info * &x;
        let mut messages = Vec::new();
        for _ in 0..k {
            let rows = rng.random_range(1..=4);
            let h = DMatrix::from_fn(rows, 4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let sigma2 = 0.01 + rng.random::<f64>();
            let y = DVector::from_fn(rows, |_, _| rng.random::<f64>() * 20.0 - 10.0);
            info += h.transpose() * &h / sigma2;
            info_vec += h.transpose() * &y / sigma2;
            let h_ours =
                Matrix::from_row_major(rows, 4, h.transpose().iter().copied().collect()).unwrap();
            messages.push((
                Vector::from_vec(y.iter().copied().collect()),
                MeasurementModel::with_observation(h_ours, sigma2).unwrap(),
            ));
        }
        let p_post = info.try_inverse().unwrap();
        let x_post = &p_post * info_vec;

        let p_ours = Matrix::from_row_major(4, 4, p.transpose().iter().copied().collect()).unwrap();
        let x_ours = Vector::from_vec(x.iter().copied().collect());
        let (psi, p_psi) = adapt(&x_ours, &p_ours, messages.iter().map(|(y, m)| (y, m))).unwrap();

        let dp = (na(&p_psi) - &p_post).amax() / p_post.amax();
        let dx =
            (DVector::from_column_slice(psi.as_slice()) - &x_post).amax() / x_post.amax().max(1.0);
        assert!(dp < 1e-8 && dx < 1e-8, "case {case}: dp {dp}, dx {dx}");
    }
}

#[test]
fn noiseless_truth_follows_closed_form() {
    let (delta, g) = (0.1, 10.0);
    let model = discretize_projectile(delta, g).unwrap();
    let mut s = TargetState::launch(1.0, 30.0, 15.0, std::f64::consts::FRAC_PI_4);
    let [x0, y0, vx, vy] = s.0;
    for k in 1..=100 {
        s = model.propagate(&s).unwrap();
        let t = k as f64 * delta;
        assert!((s.0[0] - (x0 + vx * t)).abs() < 1e-9);
        assert!(
            (s.0[1] - (y0 + vy * t - 0.5 * g * t * t)).abs() < 1e-9,
            "step {k}"
        );
        assert!((s.0[3] - (vy - g * t)).abs() < 1e-9);
    }
}

#[test]
fn time_update_matches_matrix_oracle() {
    let model = discretize_projectile(0.2, 9.81)
        .unwrap()
        .with_process_noise(
            Matrix::scaled_identity(STATE_DIM, 0.625),
            Matrix::scaled_identity(STATE_DIM, 0.001),
        )
        .unwrap();
    let x = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
    let p = Matrix::from_row_major(
        4,
        4,
        vec![
            2.0, 0.1, 0.0, 0.3, //
            0.1, 1.0, 0.2, 0.0, //
            0.0, 0.2, 3.0, 0.1, //
            0.3, 0.0, 0.1, 1.5,
        ],
    )
    .unwrap();
    let (x1, p1) = time_update(&x, &p, &model, true).unwrap();

    let f = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.0, 0.2, 0.0, //
            0.0, 1.0, 0.0, 0.2, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ],
    );
    let u = DVector::from_column_slice(&[0.0, -0.5 * 9.81 * 0.04, 0.0, -9.81 * 0.2]);
    let x_ref = &f * DVector::from_column_slice(x.as_slice()) + u;
    let p_ref = &f * na(&p) * f.transpose() + DMatrix::identity(4, 4) * (0.625 * 0.625 * 0.001);
    assert!((DVector::from_column_slice(x1.as_slice()) - x_ref).amax() < 1e-12);
    assert!((na(&p1) - p_ref).amax() < 1e-12);
}
