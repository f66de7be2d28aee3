//! Output files of a run.
//!
//! | file | columns |
//! |---|---|
//! | `msd.csv` | `iteration,cluster_id,policy,msd_linear,msd_db,n_trials` |
//! | `trajectory.csv` | `iteration,policy,target_id,x,y,est_x,est_y` |
//! | `topology_initial.csv`, `topology_final[_<policy>].csv` | `node_id,x,y,cluster` |
//! | `edges_initial.csv`, `edges_final[_<policy>].csv` | `node_a,node_b,alive` |
//! | `weights_<policy>.csv` | `iteration,n,m,weight` |
//! | `summary.json`, `run_meta.json` | |
//!
//! `cluster_id` 0 in `msd.csv` is the network-wide average. Node ids are
//! 0-based, cluster and target ids 1-based. Numbers use the shortest
//! representation that parses back to the same `f64`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use dkf_core::topology::{ClusterAssignment, Network};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Result, SimError};
use crate::experiment::ExperimentReport;

pub const MSD_HEADER: &str = "iteration,cluster_id,policy,msd_linear,msd_db,n_trials";
pub const TRAJECTORY_HEADER: &str = "iteration,policy,target_id,x,y,est_x,est_y";
pub const NODES_HEADER: &str = "node_id,x,y,cluster";
pub const EDGES_HEADER: &str = "node_a,node_b,alive";
pub const WEIGHTS_HEADER: &str = "iteration,n,m,weight";

/// Tag written to `run_meta.json`.
pub const ARTIFACT: &str = "dkf-sim";

/// One row of `msd.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdRow {
    pub iteration: usize,
    pub cluster_id: usize,
    pub policy: String,
    pub msd_linear: f64,
    pub msd_db: f64,
    pub n_trials: usize,
}

pub fn msd_rows(reports: &[ExperimentReport]) -> Vec<MsdRow> {
    let mut rows = Vec::new();
    for report in reports {
        let db: Vec<Vec<f64>> = report.series.iter().map(|s| s.db()).collect();
        for j in 0..report.network().len() {
            for (cluster_id, (series, db)) in report.series.iter().zip(&db).enumerate() {
                rows.push(MsdRow {
                    iteration: j,
                    cluster_id,
                    policy: report.policy.name().to_string(),
                    msd_linear: series.linear()[j],
                    msd_db: db[j],
                    n_trials: series.n_trials(),
                });
            }
        }
    }
    rows
}

/// Parses `msd.csv` text.
pub fn parse_msd_csv(text: &str) -> std::result::Result<Vec<MsdRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(MSD_HEADER) {
        return Err("unexpected msd.csv header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| format!("line {}: bad {what}", i + 2);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad("field count"));
            }
            Ok(MsdRow {
                iteration: f[0].parse().map_err(|_| bad("iteration"))?,
                cluster_id: f[1].parse().map_err(|_| bad("cluster_id"))?,
                policy: f[2].to_string(),
                msd_linear: f[3].parse().map_err(|_| bad("msd_linear"))?,
                msd_db: f[4].parse().map_err(|_| bad("msd_db"))?,
                n_trials: f[5].parse().map_err(|_| bad("n_trials"))?,
            })
        })
        .collect()
}

struct CsvFile {
    path: String,
    out: BufWriter<File>,
}

impl CsvFile {
    fn create(dir: &Path, name: &str, header: &str) -> Result<Self> {
        let path = dir.join(name);
        let file = File::create(&path)
            .map_err(|e| SimError::io(format!("cannot create {}", path.display()), e))?;
        let mut csv = CsvFile {
            path: path.display().to_string(),
            out: BufWriter::new(file),
        };
        csv.line(format_args!("{header}"))?;
        Ok(csv)
    }

    fn line(&mut self, args: std::fmt::Arguments<'_>) -> Result<()> {
        writeln!(self.out, "{args}")
            .map_err(|e| SimError::io(format!("cannot write {}", self.path), e))
    }

    fn finish(mut self) -> Result<()> {
        self.out
            .flush()
            .map_err(|e| SimError::io(format!("cannot write {}", self.path), e))
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).expect("output values serialize");
    text.push('\n');
    fs::write(&path, text).map_err(|e| SimError::io(format!("cannot write {}", path.display()), e))
}

/// Writes node positions and cluster labels plus the edge list.
/// `reference` is the network whose edges are listed; an edge is alive if it
/// is still present in `net`.
pub fn write_topology(
    dir: &Path,
    suffix: &str,
    net: &Network,
    reference: &Network,
    clusters: &ClusterAssignment,
) -> Result<()> {
    let mut nodes = CsvFile::create(dir, &format!("topology_{suffix}.csv"), NODES_HEADER)?;
    for (m, [x, y]) in net.positions().iter().enumerate() {
        nodes.line(format_args!("{m},{x},{y},{}", clusters.cluster_of(m)))?;
    }
    nodes.finish()?;
    let mut edges = CsvFile::create(dir, &format!("edges_{suffix}.csv"), EDGES_HEADER)?;
    for (a, b) in reference.edges() {
        edges.line(format_args!("{a},{b},{}", u8::from(net.adjacent(a, b))))?;
    }
    edges.finish()
}

#[derive(Debug, Serialize)]
struct ClusterSummary {
    cluster_id: usize,
    steady_state_db: f64,
    convergence_iteration: Option<usize>,
}

#[derive(Debug, Serialize)]
struct PolicySummary {
    policy: &'static str,
    n_trials: usize,
    clusters: Vec<ClusterSummary>,
    mean_recovery_score: f64,
    min_recovery_score: f64,
    min_covariance_eigenvalue: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RunMeta {
    artifact: &'static str,
    version: &'static str,
    seed: u64,
    policies: Vec<&'static str>,
    msd_normalization: &'static str,
    config: ExperimentConfig,
}

/// Writes every output file of a run into `dir`, creating it if needed.
pub fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    reports: &[ExperimentReport],
) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| SimError::io(format!("cannot create {}", dir.display()), e))?;

    let mut msd = CsvFile::create(dir, "msd.csv", MSD_HEADER)?;
    for r in msd_rows(reports) {
        msd.line(format_args!(
            "{},{},{},{},{},{}",
            r.iteration, r.cluster_id, r.policy, r.msd_linear, r.msd_db, r.n_trials
        ))?;
    }
    msd.finish()?;

    let mut traj = CsvFile::create(dir, "trajectory.csv", TRAJECTORY_HEADER)?;
    for report in reports {
        for p in &report.detail.trajectory {
            traj.line(format_args!(
                "{},{},{},{},{},{},{}",
                p.iteration,
                report.policy,
                p.target_id,
                p.truth[0],
                p.truth[1],
                p.estimate[0],
                p.estimate[1]
            ))?;
        }
    }
    traj.finish()?;

    if let Some(first) = reports.first() {
        let s = &first.detail.scenario;
        write_topology(dir, "initial", &s.network, &s.network, &s.clusters)?;
    }
    for report in reports {
        let suffix = if reports.len() == 1 {
            "final".to_string()
        } else {
            format!("final_{}", report.policy)
        };
        let d = &report.detail;
        write_topology(
            dir,
            &suffix,
            &d.final_network,
            &d.scenario.network,
            &d.inferred,
        )?;

        if !d.weights.is_empty() {
            let mut w = CsvFile::create(
                dir,
                &format!("weights_{}.csv", report.policy),
                WEIGHTS_HEADER,
            )?;
            for snap in &d.weights {
                let n_nodes = snap.weights.n_nodes();
                for n in 0..n_nodes {
                    for m in 0..n_nodes {
                        let weight = snap.weights.weight(n, m);
                        if weight != 0.0 {
                            w.line(format_args!("{},{n},{m},{weight}", snap.iteration))?;
                        }
                    }
                }
            }
            w.finish()?;
        }
    }

    let summary: Vec<PolicySummary> = reports
        .iter()
        .map(|r| PolicySummary {
            policy: r.policy.name(),
            n_trials: r.network().n_trials(),
            clusters: r
                .series
                .iter()
                .enumerate()
                .map(|(cluster_id, s)| ClusterSummary {
                    cluster_id,
                    steady_state_db: s.steady_state_db(),
                    convergence_iteration: s.convergence_iteration(cfg.convergence_band_db),
                })
                .collect(),
            mean_recovery_score: r.mean_recovery(),
            min_recovery_score: r.recovery.iter().copied().fold(f64::INFINITY, f64::min),
            min_covariance_eigenvalue: r.min_cov_eigenvalue,
        })
        .collect();
    write_json(dir, "summary.json", &summary)?;

    let meta = RunMeta {
        artifact: ARTIFACT,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        policies: reports.iter().map(|r| r.policy.name()).collect(),
        msd_normalization: "per-node mean within each cluster; cluster_id 0 averages all nodes",
        config: cfg.resolved(),
    };
    write_json(dir, "run_meta.json", &meta)
}
