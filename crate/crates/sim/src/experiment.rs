//! Monte Carlo runs of the distributed filter.

use std::collections::VecDeque;

use dkf_core::combiners::CombinationMatrix;
use dkf_core::dynamics::{
    discretize_projectile, step_truth, MeasurementModel, MotionModel, TargetState,
};
use dkf_core::filter::{Engine, EngineConfig};
use dkf_core::metrics::{cluster_recovery_score, msd_accumulate, MsdSeries};
use dkf_core::numerics::Matrix;
use dkf_core::topology::{
    generate_geometric, infer_clusters, initial_partition_where, ClusterAssignment, Network,
};
use dkf_core::{Policy, STATE_DIM};
use rand::Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Result, SimError};
use crate::seed::{stream_rng, trial_seed, Stream};

/// Head draws tried on one network before a new network is generated.
const HEAD_DRAWS_PER_NETWORK: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads; zero uses every core.
    pub threads: usize,
    /// Track the smallest covariance eigenvalue across all trials.
    pub track_psd: bool,
}

/// Network, true clusters and sensor variances of one trial. Shared by all
/// policies run with the same seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: Network,
    pub clusters: ClusterAssignment,
    pub sigma2: Vec<f64>,
}

/// Draws a scenario. Networks are regenerated until one admits a two-way
/// partition in which every cluster is connected on its own.
pub fn build_scenario<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    rng: &mut R,
) -> dkf_core::Result<Scenario> {
    let n = cfg.n_nodes;
    let (network, clusters) = if n == 1 {
        let position = [rng.random::<f64>(), rng.random::<f64>()];
        (
            Network::from_positions(vec![position], cfg.comm_radius),
            ClusterAssignment::single(1),
        )
    } else {
        let mut found = None;
        for _ in 0..cfg.max_attempts {
            let net =
                generate_geometric(n, cfg.comm_radius, cfg.min_degree, cfg.max_attempts, rng)?;
            let partition = initial_partition_where(
                &net,
                cfg.head_radius(),
                HEAD_DRAWS_PER_NETWORK,
                rng,
                |p| net.clusters_connected(p),
            );
            if let Ok(p) = partition {
                found = Some((net, p));
                break;
            }
        }
        found.ok_or(dkf_core::Error::PartitionExhausted {
            attempts: cfg.max_attempts,
        })?
    };
    let sigma2 = (0..n)
        .map(|_| cfg.sigma_min + cfg.sigma_span * rng.random::<f64>())
        .collect();
    Ok(Scenario {
        network,
        clusters,
        sigma2,
    })
}

pub fn scenario_for_trial(cfg: &ExperimentConfig, trial: usize) -> dkf_core::Result<Scenario> {
    let mut rng = stream_rng(trial_seed(cfg.seed, trial), Stream::Scenario);
    build_scenario(cfg, &mut rng)
}

pub fn motion_model(cfg: &ExperimentConfig) -> dkf_core::Result<MotionModel> {
    discretize_projectile(cfg.delta, cfg.g)?.with_process_noise(
        Matrix::scaled_identity(STATE_DIM, cfg.g_scale),
        Matrix::scaled_identity(STATE_DIM, cfg.q_scale),
    )
}

pub fn launch_states(cfg: &ExperimentConfig) -> Vec<TargetState> {
    cfg.angles
        .iter()
        .map(|&a| TargetState::launch(cfg.x0, cfg.y0, cfg.v0, a))
        .collect()
}

pub fn engine_config(cfg: &ExperimentConfig, policy: Policy) -> EngineConfig {
    EngineConfig {
        policy,
        eps: cfg.eps,
        gate_threshold: cfg.gate_threshold,
        pruning: cfg
            .pruning_enabled
            .then_some((cfg.prune_tau, cfg.prune_window)),
        filter_knows_gravity: cfg.filter_knows_gravity,
        initial_cov: Matrix::scaled_identity(STATE_DIM, cfg.p0_scale),
    }
}

/// Per-iteration record of the first trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    /// 1-based target id, equal to the cluster tracking it.
    pub target_id: usize,
    pub truth: [f64; 2],
    /// Mean position estimate over the target's cluster.
    pub estimate: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSnapshot {
    pub iteration: usize,
    pub weights: CombinationMatrix,
}

/// Everything the first trial exports besides its MSD.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDetail {
    pub scenario: Scenario,
    pub final_network: Network,
    pub inferred: ClusterAssignment,
    pub trajectory: Vec<TrajectoryPoint>,
    pub weights: Vec<WeightSnapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    /// Per-iteration MSD; entry 0 is network-wide, entry `l` cluster `l`.
    pub curves: Vec<Vec<f64>>,
    pub recovery: f64,
    pub min_cov_eigenvalue: Option<f64>,
    pub detail: Option<TrialDetail>,
}

/// Runs one trial of `policy`. `detail` additionally records trajectory and
/// weight snapshots.
pub fn run_trial(
    cfg: &ExperimentConfig,
    policy: Policy,
    trial: usize,
    track_psd: bool,
    detail: bool,
) -> Result<TrialResult, dkf_core::Error> {
    let seed = trial_seed(cfg.seed, trial);
    let scenario = build_scenario(cfg, &mut stream_rng(seed, Stream::Scenario))?;
    run_trial_on(cfg, policy, &scenario, seed, track_psd, detail)
}

fn run_trial_on(
    cfg: &ExperimentConfig,
    policy: Policy,
    scenario: &Scenario,
    seed: u64,
    track_psd: bool,
    detail: bool,
) -> Result<TrialResult, dkf_core::Error> {
    let model = motion_model(cfg)?;
    let sensors = scenario
        .sigma2
        .iter()
        .map(|&s| MeasurementModel::new(s))
        .collect::<dkf_core::Result<Vec<_>>>()?;
    let mut engine = Engine::new(
        scenario.network.clone(),
        scenario.clusters.clone(),
        sensors,
        model.clone(),
        engine_config(cfg, policy),
    )?;
    let mut truth_rng = stream_rng(seed, Stream::Truth);
    let mut meas_rng = stream_rng(seed, Stream::Measurement);
    let mut truths = launch_states(cfg);
    let clusters = &scenario.clusters;
    let n = clusters.n_nodes();

    let mut curves = vec![Vec::with_capacity(cfg.n_iterations); clusters.count() + 1];
    let mut window: VecDeque<CombinationMatrix> = VecDeque::with_capacity(cfg.prune_window);
    let mut min_eig = track_psd.then_some(f64::INFINITY);
    let mut trajectory = Vec::new();
    let mut weights = Vec::new();

    if let Some(m) = min_eig.as_mut() {
        *m = m.min(engine.min_covariance_eigenvalue()?);
    }
    for j in 0..cfg.n_iterations {
        engine.run_step(&truths, &mut meas_rng)?;
        let estimates = engine.estimates();
        let errors = msd_accumulate(&truths, &estimates, clusters);
        curves[0].push(errors.iter().map(|e| e.sum).sum::<f64>() / n as f64);
        for (l, e) in errors.iter().enumerate() {
            curves[l + 1].push(e.mean());
        }
        if let Some(m) = min_eig.as_mut() {
            *m = m.min(engine.min_covariance_eigenvalue()?);
        }
        if detail {
            for (l, truth) in truths.iter().enumerate().take(clusters.count()) {
                let members: Vec<usize> = clusters.members(l + 1).collect();
                let mean = |i: usize| {
                    members.iter().map(|&m| estimates[m][i]).sum::<f64>() / members.len() as f64
                };
                trajectory.push(TrajectoryPoint {
                    iteration: j,
                    target_id: l + 1,
                    truth: truth.position(),
                    estimate: [mean(0), mean(1)],
                });
            }
            if cfg.weights_every > 0 && j % cfg.weights_every == 0 {
                weights.push(WeightSnapshot {
                    iteration: j,
                    weights: engine.combination().clone(),
                });
            }
        }
        if window.len() == cfg.prune_window {
            window.pop_front();
        }
        window.push_back(engine.combination().clone());
        truths = truths
            .iter()
            .map(|t| step_truth(t, &model, &mut truth_rng))
            .collect::<dkf_core::Result<_>>()?;
    }

    let averaged =
        CombinationMatrix::mean(window.iter()).unwrap_or_else(|| CombinationMatrix::identity(n));
    let inferred = infer_clusters(&averaged, cfg.cluster_threshold);
    let recovery = cluster_recovery_score(&inferred, clusters);
    Ok(TrialResult {
        curves,
        recovery,
        min_cov_eigenvalue: min_eig,
        detail: detail.then(|| TrialDetail {
            scenario: scenario.clone(),
            final_network: engine.network().clone(),
            inferred,
            trajectory,
            weights,
        }),
    })
}

/// Aggregate of all trials of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub policy: Policy,
    /// Entry 0 is network-wide, entry `l` cluster `l`.
    pub series: Vec<MsdSeries>,
    /// Recovery score of each trial, in trial order.
    pub recovery: Vec<f64>,
    pub min_cov_eigenvalue: Option<f64>,
    /// First trial's detail.
    pub detail: TrialDetail,
}

impl ExperimentReport {
    pub fn network(&self) -> &MsdSeries {
        &self.series[0]
    }

    pub fn cluster(&self, l: usize) -> &MsdSeries {
        &self.series[l]
    }

    pub fn mean_recovery(&self) -> f64 {
        self.recovery.iter().sum::<f64>() / self.recovery.len() as f64
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::ThreadPool(e.to_string()))
}

fn aggregate(policy: Policy, results: Vec<TrialResult>) -> ExperimentReport {
    let n_curves = results[0].curves.len();
    let series = (0..n_curves)
        .map(|c| {
            let per_trial: Vec<Vec<f64>> = results.iter().map(|r| r.curves[c].clone()).collect();
            MsdSeries::from_trials(&per_trial)
        })
        .collect();
    let recovery = results.iter().map(|r| r.recovery).collect();
    let min_cov_eigenvalue = results
        .iter()
        .filter_map(|r| r.min_cov_eigenvalue)
        .reduce(f64::min);
    let detail = results
        .into_iter()
        .next()
        .and_then(|r| r.detail)
        .expect("first trial records detail");
    ExperimentReport {
        policy,
        series,
        recovery,
        min_cov_eigenvalue,
        detail,
    }
}

/// Runs every trial of the configured policy.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentReport> {
    Ok(policy_sweep(cfg, &[cfg.policy], opts)?.remove(0))
}

/// Runs every trial of each policy. Trial `t` uses the same network,
/// sensors, truth and measurement noise under every policy.
pub fn policy_sweep(
    cfg: &ExperimentConfig,
    policies: &[Policy],
    opts: RunOptions,
) -> Result<Vec<ExperimentReport>> {
    cfg.validate()?;
    let pool = pool(opts.threads)?;
    let per_trial: Vec<Vec<TrialResult>> = pool.install(|| {
        (0..cfg.n_trials)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(cfg.seed, t);
                let scenario = build_scenario(cfg, &mut stream_rng(seed, Stream::Scenario))
                    .map_err(|source| SimError::Trial { trial: t, source })?;
                policies
                    .iter()
                    .map(|&p| {
                        run_trial_on(cfg, p, &scenario, seed, opts.track_psd, t == 0)
                            .map_err(|source| SimError::Trial { trial: t, source })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut by_policy: Vec<Vec<TrialResult>> = policies
        .iter()
        .map(|_| Vec::with_capacity(cfg.n_trials))
        .collect();
    for trial in per_trial {
        for (slot, r) in by_policy.iter_mut().zip(trial) {
            slot.push(r);
        }
    }
    Ok(policies
        .iter()
        .zip(by_policy)
        .map(|(&p, results)| aggregate(p, results))
        .collect())
}
