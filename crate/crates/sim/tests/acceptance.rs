//! End-to-end acceptance checks at the default scale (30 nodes, 200 trials).
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use dkf_core::Policy;
use dkf_sim::experiment::{policy_sweep, run_trial, ExperimentReport, RunOptions};
use dkf_sim::output::write_outputs;
use dkf_sim::{selftest, ExperimentConfig};

const SEED: u64 = 1;

type Check<'a> = Box<dyn Fn() -> (bool, String) + 'a>;

struct Outcome {
    id: usize,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn oracle_equivalence() -> (bool, String) {
    let err = selftest::single_node_equivalence(100, SEED);
    (
        err <= 1e-10,
        format!("max abs deviation {err:.3e}, tolerance 1e-10"),
    )
}

fn batch_equivalence() -> (bool, String) {
    let err = selftest::batch_equivalence(1000, SEED);
    (
        err <= 1e-8,
        format!("1000 cases, max rel deviation {err:.3e}, tolerance 1e-8"),
    )
}

fn stochasticity() -> (bool, String) {
    let v = selftest::stochasticity_violations(100, 20, SEED);
    (
        v == 0,
        format!("100 networks x 4 policies x 20 iterations, {v} violations"),
    )
}

fn psd(sweep: &[ExperimentReport]) -> (bool, String) {
    let min = sweep
        .iter()
        .map(|r| r.min_cov_eigenvalue.expect("eigenvalues tracked"))
        .fold(f64::INFINITY, f64::min);
    (
        min >= -1e-9,
        format!("smallest eigenvalue over all policies and trials {min:.3e}"),
    )
}

fn recovery() -> (bool, String) {
    let perfect = (1..=100u64)
        .filter(|&seed| {
            let cfg = ExperimentConfig {
                seed,
                ..ExperimentConfig::default()
            };
            run_trial(&cfg, Policy::Adaptive, 0, false, false)
                .expect("trial runs")
                .recovery
                == 1.0
        })
        .count();
    (
        perfect >= 95,
        format!("perfect recovery in {perfect}/100 seeds, need 95"),
    )
}

fn ordering(sweep: &[ExperimentReport]) -> (bool, String) {
    let adaptive = sweep.iter().find(|r| r.policy == Policy::Adaptive).unwrap();
    let statics: Vec<&ExperimentReport> = sweep.iter().filter(|r| r.policy.is_static()).collect();
    let mut passed = true;
    let mut parts = Vec::new();
    for l in 1..adaptive.series.len() {
        let a = adaptive.cluster(l).steady_state_db();
        let s: Vec<f64> = statics
            .iter()
            .map(|r| r.cluster(l).steady_state_db())
            .collect();
        let best_static = s.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = s.iter().copied().fold(f64::NEG_INFINITY, f64::max) - best_static;
        passed &= a <= best_static && spread <= 3.0;
        parts.push(format!(
            "cluster {l}: adaptive {a:.2} dB, static {:.2}/{:.2}/{:.2} dB (spread {spread:.2})",
            s[0], s[1], s[2]
        ));
    }
    (passed, parts.join("; "))
}

fn convergence(sweep: &[ExperimentReport], band: f64) -> (bool, String) {
    let adaptive = sweep.iter().find(|r| r.policy == Policy::Adaptive).unwrap();
    let its: Vec<Option<usize>> = adaptive
        .series
        .iter()
        .map(|s| s.convergence_iteration(band))
        .collect();
    let passed = its.iter().all(|i| i.is_some_and(|i| i <= 80));
    (
        passed,
        format!("network/cluster convergence iterations {its:?}, limit 80"),
    )
}

fn discretization() -> (bool, String) {
    let err = selftest::discretization_error(100);
    (
        err <= 1e-9,
        format!("max abs error over 100 steps {err:.3e}"),
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> (bool, String) {
    let cfg = ExperimentConfig {
        n_trials: 24,
        weights_every: 10,
        ..ExperimentConfig::default()
    };
    let run = |threads: usize| {
        let dir = tempfile::tempdir().unwrap();
        let reports = policy_sweep(
            &cfg,
            &Policy::ALL,
            RunOptions {
                threads,
                track_psd: false,
            },
        )
        .unwrap();
        write_outputs(dir.path(), &cfg, &reports).unwrap();
        csv_files(dir.path())
    };
    let first = run(1);
    let repeat = run(1);
    let parallel = run(8);
    let same = first == repeat;
    let same_parallel = first == parallel;
    (
        same && same_parallel && !first.is_empty(),
        format!(
            "{} CSV files; repeat identical: {same}; 1 vs 8 threads identical: {same_parallel}",
            first.len()
        ),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cfg = ExperimentConfig {
        seed: SEED,
        ..ExperimentConfig::default()
    };
    let sweep = policy_sweep(
        &cfg,
        &Policy::ALL,
        RunOptions {
            threads: 0,
            track_psd: true,
        },
    )
    .expect("default sweep runs");

    let checks: Vec<(&'static str, Check<'_>)> = vec![
        (
            "single-node oracle equivalence",
            Box::new(oracle_equivalence),
        ),
        (
            "sequential vs batch adaptation",
            Box::new(batch_equivalence),
        ),
        ("combination matrix stochasticity", Box::new(stochasticity)),
        (
            "covariance positive semidefiniteness",
            Box::new(|| psd(&sweep)),
        ),
        ("cluster recovery", Box::new(recovery)),
        ("policy ordering", Box::new(|| ordering(&sweep))),
        (
            "adaptive convergence speed",
            Box::new(|| convergence(&sweep, cfg.convergence_band_db)),
        ),
        ("exact discretization", Box::new(discretization)),
        ("determinism", Box::new(determinism)),
    ];
    let outcomes: Vec<Outcome> = checks
        .into_iter()
        .enumerate()
        .map(|(i, (title, check))| {
            let (passed, detail) = check();
            Outcome {
                id: i + 1,
                title,
                passed,
                detail,
            }
        })
        .collect();

    println!();
    for o in &outcomes {
        println!(
            "acceptance {} {} {}: {}",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.title,
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed ({:.1}s)",
        outcomes.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
