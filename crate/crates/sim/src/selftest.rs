//! Checks of the filter against independent textbook implementations.

use std::fmt;

use dkf_core::dynamics::{discretize_projectile, MeasurementModel, TargetState};
use dkf_core::filter::{adapt, Engine, EngineConfig};
use dkf_core::numerics::{Matrix, Vector};
use dkf_core::topology::{generate_geometric, initial_partition, ClusterAssignment, Network};
use dkf_core::{Policy, STATE_DIM};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.3e} (tolerance {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn vec_to_na(v: &Vector) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn max_abs<C: nalgebra::Dim>(m: &nalgebra::OMatrix<f64, nalgebra::Dyn, C>) -> f64
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<nalgebra::Dyn, C>,
{
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn rel_err<C: nalgebra::Dim>(
    ours: &nalgebra::OMatrix<f64, nalgebra::Dyn, C>,
    oracle: &nalgebra::OMatrix<f64, nalgebra::Dyn, C>,
) -> f64
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<nalgebra::Dyn, C>,
{
    max_abs(&(ours - oracle)) / max_abs(oracle).max(f64::MIN_POSITIVE)
}

fn transition(delta: f64) -> DMatrix<f64> {
    let mut f = DMatrix::identity(4, 4);
    f[(0, 2)] = delta;
    f[(1, 3)] = delta;
    f
}

fn gravity_input(delta: f64, g: f64) -> DVector<f64> {
    DVector::from_column_slice(&[0.0, -0.5 * g * delta * delta, 0.0, -g * delta])
}

/// A single isolated node runs a plain Kalman filter under every policy.
/// Returns the largest absolute deviation of any state or covariance entry.
pub fn single_node_equivalence(iterations: usize, seed: u64) -> f64 {
    let (delta, g, g_scale, q_scale) = (0.1, 10.0, 0.625, 0.001);
    let mut worst: f64 = 0.0;
    for (k, policy) in Policy::ALL.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let sigma2 = 0.01 + 0.5 * rng.random::<f64>();
        let model = discretize_projectile(delta, g)
            .and_then(|m| {
                m.with_process_noise(
                    Matrix::scaled_identity(STATE_DIM, g_scale),
                    Matrix::scaled_identity(STATE_DIM, q_scale),
                )
            })
            .expect("valid model");
        let net = Network::from_positions(vec![[0.5, 0.5]], 0.35);
        let config = EngineConfig {
            policy,
            ..EngineConfig::default()
        };
        let mut engine = Engine::new(
            net,
            ClusterAssignment::single(1),
            vec![MeasurementModel::new(sigma2).expect("positive variance")],
            model.clone(),
            config,
        )
        .expect("valid engine");

        let f = transition(delta);
        let u = gravity_input(delta, g);
        let shaped = DMatrix::identity(4, 4) * (g_scale * g_scale * q_scale);
        let r = DMatrix::identity(4, 4) * sigma2;
        let h = DMatrix::<f64>::identity(4, 4);
        let mut x = DVector::zeros(4);
        let mut p = DMatrix::identity(4, 4);
        let mut truth = TargetState::launch(1.0, 30.0, 15.0, std::f64::consts::FRAC_PI_3);

        for _ in 0..iterations {
            let ys = engine
                .draw_measurements(std::slice::from_ref(&truth), &mut rng)
                .expect("measurement");
            engine.step_with_measurements(&ys).expect("step");
            let y = vec_to_na(&ys[0]);

            let s = &h * &p * h.transpose() + &r;
            let k = &p * h.transpose() * s.try_inverse().expect("invertible innovation");
            x = &x + &k * (y - &h * &x);
            p = (DMatrix::identity(4, 4) - &k * &h) * &p;
            let node = &engine.nodes()[0];
            worst = worst
                .max(max_abs(&(vec_to_na(&node.x_filt) - &x)))
                .max(max_abs(&(to_na(&node.p_psi) - &p)));

            x = &f * &x + &u;
            p = &f * &p * f.transpose() + &shaped;
            worst = worst
                .max(max_abs(&(vec_to_na(&node.x_pred) - &x)))
                .max(max_abs(&(to_na(&node.p_pred) - &p)));
            truth = model.propagate(&truth).expect("finite truth");
        }
    }
    worst
}

fn random_spd<R: Rng>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    &a * a.transpose() + DMatrix::identity(dim, dim) * 0.1
}

/// Sequential adaptation against a single batch update with stacked
/// observation matrices and block-diagonal noise, for 1 to 10 neighbors.
/// Returns the largest relative deviation.
pub fn batch_equivalence(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let k = 1 + case % 10;
        let p = random_spd(4, &mut rng);
        let x = DVector::from_fn(4, |_, _| rng.random::<f64>() * 10.0 - 5.0);
        let mut models = Vec::with_capacity(k);
        let mut ys = Vec::with_capacity(k);
        for _ in 0..k {
            let rows = rng.random_range(1..=4);
            let h = DMatrix::from_fn(rows, 4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let sigma2 = 0.01 + 0.5 * rng.random::<f64>();
            let y = DVector::from_fn(rows, |_, _| rng.random::<f64>() * 10.0 - 5.0);
            let h_rows: Vec<f64> = h.transpose().iter().copied().collect();
            let hm = Matrix::from_row_major(rows, 4, h_rows).expect("finite");
            models.push((
                h,
                sigma2,
                MeasurementModel::with_observation(hm, sigma2).expect("valid"),
            ));
            ys.push(y);
        }

        let total: usize = ys.iter().map(|y| y.len()).sum();
        let mut hs = DMatrix::zeros(total, 4);
        let mut rs = DMatrix::zeros(total, total);
        let mut ystack = DVector::zeros(total);
        let mut row = 0;
        for ((h, sigma2, _), y) in models.iter().zip(&ys) {
            hs.view_mut((row, 0), (h.nrows(), 4)).copy_from(h);
            for i in 0..h.nrows() {
                rs[(row + i, row + i)] = *sigma2;
                ystack[row + i] = y[i];
            }
            row += h.nrows();
        }
        let s = &hs * &p * hs.transpose() + rs;
        let gain = &p * hs.transpose() * s.try_inverse().expect("invertible innovation");
        let x_batch = &x + &gain * (ystack - &hs * &x);
        let p_batch = &p - &gain * &hs * &p;

        let x_ours = Vector::from_vec(x.iter().copied().collect());
        let p_ours =
            Matrix::from_row_major(4, 4, p.transpose().iter().copied().collect()).expect("finite");
        let ys_ours: Vec<Vector> = ys
            .iter()
            .map(|y| Vector::from_vec(y.iter().copied().collect()))
            .collect();
        let (psi, p_psi) = adapt(
            &x_ours,
            &p_ours,
            ys_ours.iter().zip(models.iter().map(|(_, _, m)| m)),
        )
        .expect("adaptation");
        worst = worst
            .max(rel_err(&vec_to_na(&psi), &x_batch))
            .max(rel_err(&to_na(&p_psi), &p_batch));
    }
    worst
}

/// Runs every policy on random geometric networks and counts combination
/// matrices that are not column-stochastic to 1e-12, carry a negative
/// weight, or put weight outside the neighborhoods.
pub fn stochasticity_violations(networks: usize, iterations: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut tested = 0;
    while tested < networks {
        let n = rng.random_range(4..=30);
        let radius = 0.3 + 0.4 * rng.random::<f64>();
        let Ok(net) = generate_geometric(n, radius, 1, 10_000, &mut rng) else {
            continue;
        };
        tested += 1;
        let clusters = initial_partition(&net, radius, 10_000, &mut rng)
            .unwrap_or_else(|_| ClusterAssignment::single(n));
        let sensors: Vec<MeasurementModel> = (0..n)
            .map(|_| MeasurementModel::new(0.01 + 0.5 * rng.random::<f64>()).expect("positive"))
            .collect();
        let model = discretize_projectile(0.1, 10.0)
            .and_then(|m| {
                m.with_process_noise(
                    Matrix::identity(STATE_DIM),
                    Matrix::scaled_identity(STATE_DIM, 0.001),
                )
            })
            .expect("valid model");
        let truths = [
            TargetState::launch(1.0, 30.0, 15.0, std::f64::consts::FRAC_PI_3),
            TargetState::launch(1.0, 30.0, 15.0, std::f64::consts::FRAC_PI_4),
        ];
        for policy in Policy::ALL {
            let config = EngineConfig {
                policy,
                pruning: Some((0.05, 3)),
                ..EngineConfig::default()
            };
            let mut engine = Engine::new(
                net.clone(),
                clusters.clone(),
                sensors.clone(),
                model.clone(),
                config,
            )
            .expect("valid engine");
            for _ in 0..iterations {
                engine.run_step(&truths, &mut rng).expect("step");
                let c = engine.combination();
                let negative = (0..n).any(|a| (0..n).any(|b| c.weight(a, b) < 0.0));
                if negative
                    || c.check_stochastic(1e-12).is_err()
                    || c.check_support(engine.network()).is_err()
                {
                    violations += 1;
                }
            }
        }
    }
    violations
}

/// Noiseless propagation against the closed-form ballistic trajectory.
/// Returns the largest absolute state error over `steps` steps.
pub fn discretization_error(steps: usize) -> f64 {
    let (delta, g) = (0.1, 10.0);
    let model = discretize_projectile(delta, g).expect("valid model");
    let start = TargetState::launch(1.0, 30.0, 15.0, std::f64::consts::FRAC_PI_3);
    let [x0, y0, vx, vy] = start.0;
    let mut s = start;
    let mut worst: f64 = 0.0;
    for k in 1..=steps {
        s = model.propagate(&s).expect("finite");
        let t = k as f64 * delta;
        let exact = [x0 + vx * t, y0 + vy * t - 0.5 * g * t * t, vx, vy - g * t];
        for (a, b) in s.0.iter().zip(exact) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Every check with its default size and tolerance.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        CheckOutcome {
            name: "single-node Kalman filter equivalence (absolute)",
            value: single_node_equivalence(100, seed),
            tolerance: 1e-10,
        },
        CheckOutcome {
            name: "sequential vs batch adaptation (relative)",
            value: batch_equivalence(1000, seed),
            tolerance: 1e-8,
        },
        CheckOutcome {
            name: "combination matrix violations",
            value: stochasticity_violations(100, 20, seed) as f64,
            tolerance: 0.0,
        },
        CheckOutcome {
            name: "exact discretization error",
            value: discretization_error(100),
            tolerance: 1e-9,
        },
    ]
}
