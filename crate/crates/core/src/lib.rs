//! Adapt-then-combine diffusion Kalman filtering for multitask sensor networks.
//!
//! Nodes of a sensor network are split into clusters, each cluster tracking a
//! different target. Every node runs an incremental Kalman update over the
//! measurements of its neighborhood, then convexly combines the intermediate
//! estimates of its neighbors. With the adaptive combination rule the weights
//! a node assigns to neighbors tracking another target decay towards zero, so
//! clusters emerge without any prior knowledge of the partition.
//!
//! The crate is `no_std` and only needs `alloc`. Randomness is always passed
//! in explicitly, which keeps every routine reproducible from a seed.
//!
//! * [`numerics`]: small dense matrices and vectors.
//! * [`dynamics`]: projectile motion truth model and noisy measurements.
//! * [`topology`]: random geometric networks, cluster partitions, link pruning.
//! * [`combiners`]: static and adaptive combination weights.
//! * [`filter`]: the diffusion Kalman filter engine.
//! * [`metrics`]: mean-square deviation, convergence and cluster recovery.
//!
//! ```
//! use dkf_core::dynamics::{discretize_projectile, MeasurementModel, TargetState};
//! use dkf_core::filter::{Engine, EngineConfig};
//! use dkf_core::numerics::Matrix;
//! use dkf_core::topology::{generate_geometric, initial_partition};
//! use rand::SeedableRng;
//!
//! # fn main() -> dkf_core::Result<()> {
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
//! let net = generate_geometric(30, 0.35, 4, 10_000, &mut rng)?;
//! let clusters = initial_partition(&net, 0.35, 10_000, &mut rng)?;
//! let sensors = (0..30)
//!     .map(|_| MeasurementModel::new(0.2))
//!     .collect::<Result<Vec<_>, _>>()?;
//! let model = discretize_projectile(0.1, 10.0)?.with_process_noise(
//!     Matrix::scaled_identity(4, 0.625),
//!     Matrix::scaled_identity(4, 0.001),
//! )?;
//!
//! let mut engine = Engine::new(net, clusters, sensors, model, EngineConfig::default())?;
//! let truths = [
//!     TargetState::launch(1.0, 30.0, 15.0, core::f64::consts::FRAC_PI_3),
//!     TargetState::launch(1.0, 30.0, 15.0, core::f64::consts::FRAC_PI_4),
//! ];
//! for _ in 0..20 {
//!     engine.run_step(&truths, &mut rng)?;
//! }
//! assert!(engine.combination().check_stochastic(1e-12).is_ok());
//! # Ok(())
//! # }
//! ```

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod combiners;
pub mod dynamics;
mod error;
pub mod filter;
pub mod metrics;
pub mod numerics;
pub mod topology;

pub use combiners::{CombinationMatrix, DiffusionMatrix, Policy};
pub use dynamics::{MeasurementModel, MotionModel, TargetState};
pub use error::{Error, Result};
pub use filter::{Engine, EngineConfig, NodeFilterState};
pub use metrics::MsdSeries;
pub use numerics::{Matrix, Vector};
pub use topology::{ClusterAssignment, LinkPruner, Network};

/// Dimension of the target state `[x, y, vx, vy]`.
pub const STATE_DIM: usize = 4;
