//! Projectile truth model and sensor measurements.
//!
//! The continuous model is `d/dt [d; v] = theta [d; v] + n` with
//! `theta = [[0, I2], [0, 0]]` and gravity `n = [0, 0, 0, -g]`. Since
//! `theta^2 = 0`, one step of length `delta` discretizes exactly to
//! `F = I + delta theta` and `u = (delta I + delta^2 theta / 2) n`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::STATE_DIM;

/// Target state `[x, y, vx, vy]` in metres and metres per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState(pub [f64; STATE_DIM]);

impl TargetState {
    pub fn new(state: [f64; STATE_DIM]) -> Result<Self> {
        if !state.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                what: "target state",
            });
        }
        Ok(TargetState(state))
    }

    /// Launch state from a position, speed and elevation angle in radians.
    pub fn launch(x0: f64, y0: f64, speed: f64, angle: f64) -> Self {
        TargetState([x0, y0, speed * libm::cos(angle), speed * libm::sin(angle)])
    }

    pub fn position(&self) -> [f64; 2] {
        [self.0[0], self.0[1]]
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_vec(self.0.to_vec())
    }

    fn from_vector(v: &Vector) -> Result<Self> {
        let s = v.as_slice();
        if s.len() != STATE_DIM {
            return Err(Error::DimensionMismatch {
                op: "target state",
                left: (STATE_DIM, 1),
                right: (s.len(), 1),
            });
        }
        Self::new([s[0], s[1], s[2], s[3]])
    }
}

/// Same as [`TargetState::launch`].
pub fn initial_state(x0: f64, y0: f64, speed: f64, angle: f64) -> TargetState {
    TargetState::launch(x0, y0, speed, angle)
}

/// Discrete-time linear motion model with a known deterministic input.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    transition: Matrix,
    noise_gain: Matrix,
    process_cov: Matrix,
    gravity_input: Vector,
    delta: f64,
    gravity: f64,
    // derived: G Q G^T and a factor S with S S^T = Q
    shaped_cov: Matrix,
    noise_factor: Matrix,
}

/// Exact discretization of the projectile model, with no process noise.
pub fn discretize_projectile(delta: f64, gravity: f64) -> Result<MotionModel> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: "time step must be positive and finite",
        });
    }
    if !(gravity >= 0.0) || !gravity.is_finite() {
        return Err(Error::InvalidParameter {
            name: "g",
            reason: "gravity must be non-negative and finite",
        });
    }
    let mut f = Matrix::identity(STATE_DIM);
    f[(0, 2)] = delta;
    f[(1, 3)] = delta;
    // theta n = [0, -g, 0, 0]
    let u = Vector::from_vec(alloc::vec![
        0.0,
        -0.5 * delta * delta * gravity,
        0.0,
        -delta * gravity,
    ]);
    let zero = Matrix::zeros(STATE_DIM, STATE_DIM);
    Ok(MotionModel {
        transition: f,
        noise_gain: Matrix::identity(STATE_DIM),
        process_cov: zero.clone(),
        gravity_input: u,
        delta,
        gravity,
        shaped_cov: zero.clone(),
        noise_factor: zero,
    })
}

impl MotionModel {
    /// Sets the noise shaping matrix `G` and process covariance `Q`.
    pub fn with_process_noise(mut self, noise_gain: Matrix, process_cov: Matrix) -> Result<Self> {
        for m in [&noise_gain, &process_cov] {
            if m.rows() != STATE_DIM || m.cols() != STATE_DIM {
                return Err(Error::DimensionMismatch {
                    op: "process noise",
                    left: (STATE_DIM, STATE_DIM),
                    right: (m.rows(), m.cols()),
                });
            }
            if !m.is_finite() {
                return Err(Error::NonFinite {
                    what: "process noise",
                });
            }
        }
        let noise_factor = process_cov.psd_sqrt("Q")?;
        self.shaped_cov = noise_gain.congruence(&process_cov)?.symmetrize()?;
        self.noise_gain = noise_gain;
        self.process_cov = process_cov;
        self.noise_factor = noise_factor;
        Ok(self)
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn noise_gain(&self) -> &Matrix {
        &self.noise_gain
    }

    pub fn process_cov(&self) -> &Matrix {
        &self.process_cov
    }

    /// `G Q G^T`, the covariance the process noise adds to the state.
    pub fn shaped_process_cov(&self) -> &Matrix {
        &self.shaped_cov
    }

    pub fn gravity_input(&self) -> &Vector {
        &self.gravity_input
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    /// Noise-free propagation `F s + u`.
    pub fn propagate(&self, s: &TargetState) -> Result<TargetState> {
        let next = self
            .transition
            .mul_vec(&s.to_vector())?
            .add(&self.gravity_input)?;
        TargetState::from_vector(&next)
    }
}

fn standard_normal_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    Vector::from_vec(
        (0..dim)
            .map(|_| rng.sample(StandardNormal))
            .collect::<Vec<f64>>(),
    )
}

/// Advances the truth by one step: `F s + u + G w` with `w ~ N(0, Q)`.
pub fn step_truth<R: Rng + ?Sized>(
    s: &TargetState,
    model: &MotionModel,
    rng: &mut R,
) -> Result<TargetState> {
    let z = standard_normal_vector(STATE_DIM, rng);
    let w = model.noise_factor.mul_vec(&z)?;
    let next = model
        .transition
        .mul_vec(&s.to_vector())?
        .add(&model.gravity_input)?
        .add(&model.noise_gain.mul_vec(&w)?)?;
    TargetState::from_vector(&next)
}

/// Observation model of one sensor node: `y = H x + v`, `v ~ N(0, sigma2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    observation: Matrix,
    noise_cov: Matrix,
    sigma2: f64,
}

impl MeasurementModel {
    /// Identity observation of the full state.
    pub fn new(sigma2: f64) -> Result<Self> {
        Self::with_observation(Matrix::identity(STATE_DIM), sigma2)
    }

    pub fn with_observation(observation: Matrix, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma2",
                reason: "measurement noise variance must be positive and finite",
            });
        }
        if observation.cols() != STATE_DIM || observation.rows() == 0 {
            return Err(Error::DimensionMismatch {
                op: "observation matrix",
                left: (observation.rows(), STATE_DIM),
                right: (observation.rows(), observation.cols()),
            });
        }
        if !observation.is_finite() {
            return Err(Error::NonFinite {
                what: "observation matrix",
            });
        }
        let noise_cov = Matrix::scaled_identity(observation.rows(), sigma2);
        Ok(MeasurementModel {
            observation,
            noise_cov,
            sigma2,
        })
    }

    pub fn observation(&self) -> &Matrix {
        &self.observation
    }

    pub fn noise_cov(&self) -> &Matrix {
        &self.noise_cov
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn measurement_dim(&self) -> usize {
        self.observation.rows()
    }
}

/// Draws one noisy measurement `H s + v`.
pub fn measure<R: Rng + ?Sized>(
    s: &TargetState,
    model: &MeasurementModel,
    rng: &mut R,
) -> Result<Vector> {
    let z = standard_normal_vector(model.measurement_dim(), rng);
    let clean = model.observation.mul_vec(&s.to_vector())?;
    let y = clean.add(&z.scale(libm::sqrt(model.sigma2)))?;
    if !y.is_finite() {
        return Err(Error::NonFinite {
            what: "measurement",
        });
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_3, PI};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn transition_structure() {
        let m = discretize_projectile(0.1, 10.0).unwrap();
        let f = m.transition();
        for i in 0..4 {
            assert_eq!(f[(i, i)], 1.0);
        }
        assert_eq!(f[(0, 2)], 0.1);
        assert_eq!(f[(1, 3)], 0.1);
        let off: f64 = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && (i, j) != (0, 2) && (i, j) != (1, 3))
            .map(|(i, j)| f[(i, j)].abs())
            .sum();
        assert_eq!(off, 0.0);
    }

    #[test]
    fn gravity_input_matches_integration() {
        // Oracle: integrate x' = theta x + n over one step from x = 0 with
        // small explicit steps. Position picks up -g t^2/2 exactly enough.
        let (delta, g) = (0.1, 10.0);
        let steps = 100_000;
        let h = delta / steps as f64;
        let (mut y, mut vy) = (0.0_f64, 0.0_f64);
        for _ in 0..steps {
            // midpoint rule is exact for this quadratic trajectory
            let vy_mid = vy - g * h / 2.0;
            y += h * vy_mid;
            vy -= g * h;
        }
        let u = discretize_projectile(delta, g).unwrap();
        let u = u.gravity_input().as_slice();
        assert_eq!(u[0], 0.0);
        assert_eq!(u[2], 0.0);
        // the oracle itself accumulates rounding over 1e5 steps
        assert!((u[1] - y).abs() < 1e-10, "{} vs {}", u[1], y);
        assert!((u[3] - vy).abs() < 1e-10, "{} vs {}", u[3], vy);
        assert!((u[1] + 0.05).abs() < 1e-15);
        assert!((u[3] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn no_gravity_means_no_input() {
        let m = discretize_projectile(0.1, 0.0).unwrap();
        assert_eq!(m.gravity_input().as_slice(), &[0.0; 4]);
    }

    #[test]
    fn rejects_bad_step() {
        assert!(discretize_projectile(0.0, 10.0).is_err());
        assert!(discretize_projectile(-0.1, 10.0).is_err());
        assert!(discretize_projectile(0.1, -1.0).is_err());
    }

    #[test]
    fn noiseless_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = discretize_projectile(0.1, 0.0).unwrap();
        let s = step_truth(&TargetState([0.0, 0.0, 1.0, 1.0]), &m, &mut rng).unwrap();
        assert_eq!(s.0, [0.1, 0.1, 1.0, 1.0]);

        let m = discretize_projectile(0.1, 10.0).unwrap();
        let s = step_truth(&TargetState([1.0, 30.0, 7.5, 12.99]), &m, &mut rng).unwrap();
        let expect = [1.75, 31.249, 7.5, 11.99];
        for (a, b) in s.0.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn launch_states() {
        let s = initial_state(1.0, 30.0, 15.0, FRAC_PI_3);
        assert_eq!(s.0[0], 1.0);
        assert_eq!(s.0[1], 30.0);
        assert!((s.0[2] - 7.5).abs() < 1e-12);
        assert!((s.0[3] - 12.990_381_056_766_58).abs() < 1e-12);
        assert_eq!(initial_state(2.0, 3.0, 4.0, 0.0).0, [2.0, 3.0, 4.0, 0.0]);
        assert_eq!(
            initial_state(2.0, 3.0, 0.0, PI / 5.0).0,
            [2.0, 3.0, 0.0, 0.0]
        );
    }

    #[test]
    fn noiseless_measurement_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mm = MeasurementModel::new(1e-300).unwrap();
        let s = TargetState([1.0, 2.0, 3.0, 4.0]);
        let y = measure(&s, &mm, &mut rng).unwrap();
        for (a, b) in y.as_slice().iter().zip(s.0) {
            assert!((a - b).abs() < 1e-100);
        }
        assert!(MeasurementModel::new(0.0).is_err());
        assert!(MeasurementModel::with_observation(Matrix::identity(3), 1.0).is_err());
    }

    #[test]
    fn truth_is_reproducible() {
        let m = discretize_projectile(0.1, 10.0)
            .unwrap()
            .with_process_noise(
                Matrix::scaled_identity(4, 0.625),
                Matrix::scaled_identity(4, 0.001),
            )
            .unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = TargetState([1.0, 30.0, 7.5, 13.0]);
            for _ in 0..50 {
                s = step_truth(&s, &m, &mut rng).unwrap();
            }
            s
        };
        assert_eq!(run(9).0.map(f64::to_bits), run(9).0.map(f64::to_bits));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn shaped_covariance() {
        let m = discretize_projectile(0.1, 10.0)
            .unwrap()
            .with_process_noise(
                Matrix::scaled_identity(4, 0.625),
                Matrix::scaled_identity(4, 0.001),
            )
            .unwrap();
        let expect = Matrix::scaled_identity(4, 0.625 * 0.625 * 0.001);
        assert!(m.shaped_process_cov().max_abs_diff(&expect).unwrap() < 1e-18);
    }
}
