//! Mean-square deviation and cluster recovery.

use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::TargetState;
use crate::numerics::Vector;
use crate::topology::ClusterAssignment;

/// Floor applied before converting to decibels.
pub const DB_FLOOR: f64 = 1e-30;

/// `10 log10(max(linear, 1e-30))`
pub fn to_db(linear: f64) -> f64 {
    10.0 * libm::log10(linear.max(DB_FLOOR))
}

/// Squared Euclidean error of one estimate.
pub fn squared_error(truth: &TargetState, estimate: &Vector) -> f64 {
    truth
        .0
        .iter()
        .zip(estimate.as_slice())
        .map(|(t, e)| (t - e) * (t - e))
        .sum()
}

/// Squared-error total and node count of one cluster at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClusterError {
    pub sum: f64,
    pub count: usize,
}

impl ClusterError {
    /// Per-node mean, zero for an empty cluster.
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Sums `|x_target - x_m|^2` over the nodes of each cluster. Cluster `l`
/// is compared against `truths[l - 1]`; entry `l - 1` of the result holds
/// cluster `l`.
pub fn msd_accumulate(
    truths: &[TargetState],
    estimates: &[Vector],
    clusters: &ClusterAssignment,
) -> Vec<ClusterError> {
    let mut out = vec![ClusterError::default(); clusters.count()];
    for (m, est) in estimates.iter().enumerate() {
        let l = clusters.cluster_of(m) - 1;
        let e = squared_error(&truths[l], est);
        out[l].sum += e;
        out[l].count += 1;
    }
    out
}

/// Pairwise (tree) summation. The grouping depends only on the length, so the
/// result is reproducible no matter how the terms were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Number of trailing entries treated as steady state: the final 20%.
pub fn steady_state_len(len: usize) -> usize {
    len.div_ceil(5).max(1).min(len)
}

/// Mean of the final 20% of a dB series.
pub fn steady_state_db(db: &[f64]) -> f64 {
    if db.is_empty() {
        return f64::NAN;
    }
    let tail = &db[db.len() - steady_state_len(db.len())..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// First iteration from which the series stays within `band_db` of its
/// steady-state level. `None` if the last point is already outside the band
/// or the series is shorter than ten points.
pub fn convergence_iteration(db: &[f64], band_db: f64) -> Option<usize> {
    if db.len() < 10 {
        return None;
    }
    let level = steady_state_db(db);
    let first_stable = match db.iter().rposition(|v| !((v - level).abs() <= band_db)) {
        Some(last_bad) => last_bad + 1,
        None => 0,
    };
    (first_stable < db.len()).then_some(first_stable)
}

/// One MSD curve averaged over Monte Carlo trials.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdSeries {
    linear: Vec<f64>,
    n_trials: usize,
}

impl MsdSeries {
    /// Averages per-trial curves (outer index: trial, in a fixed order) with
    /// pairwise summation.
    pub fn from_trials(trials: &[Vec<f64>]) -> Self {
        let len = trials.first().map_or(0, Vec::len);
        let mut column = Vec::with_capacity(trials.len());
        let linear = (0..len)
            .map(|j| {
                column.clear();
                column.extend(trials.iter().map(|t| t[j]));
                pairwise_sum(&column) / trials.len() as f64
            })
            .collect();
        MsdSeries {
            linear,
            n_trials: trials.len(),
        }
    }

    pub fn from_linear(linear: Vec<f64>, n_trials: usize) -> Self {
        MsdSeries { linear, n_trials }
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn db(&self) -> Vec<f64> {
        self.linear.iter().map(|&v| to_db(v)).collect()
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn len(&self) -> usize {
        self.linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty()
    }

    pub fn steady_state_db(&self) -> f64 {
        steady_state_db(&self.db())
    }

    pub fn convergence_iteration(&self, band_db: f64) -> Option<usize> {
        convergence_iteration(&self.db(), band_db)
    }
}

/// Fraction of nodes whose inferred cluster maps onto their true cluster
/// under the best one-to-one matching of labels.
pub fn cluster_recovery_score(inferred: &ClusterAssignment, truth: &ClusterAssignment) -> f64 {
    let n = inferred.n_nodes();
    if n == 0 || truth.n_nodes() != n {
        return if n == truth.n_nodes() { 1.0 } else { 0.0 };
    }
    let size = inferred.count().max(truth.count());
    // overlap[i][t]: nodes labelled i + 1 by `inferred` and t + 1 by `truth`
    let mut overlap = vec![vec![0i64; size]; size];
    for m in 0..n {
        overlap[inferred.cluster_of(m) - 1][truth.cluster_of(m) - 1] += 1;
    }
    let cost: Vec<Vec<i64>> = overlap
        .iter()
        .map(|row| row.iter().map(|&v| -v).collect())
        .collect();
    let assignment = min_cost_assignment(&cost);
    let matched: i64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &t)| overlap[i][t])
        .sum();
    matched as f64 / n as f64
}

/// Hungarian algorithm on a square cost matrix; returns the column assigned
/// to each row.
fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-based potentials; p[j] is the row matched to column j
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}
