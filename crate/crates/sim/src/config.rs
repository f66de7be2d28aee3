//! Experiment configuration.
//!
//! A config file is a flat TOML document whose keys are the fields of
//! [`ExperimentConfig`]; anything left out takes its default. A
//! `run_meta.json` written by a previous run is accepted as well, in which
//! case its `config` object is used.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, SQRT_2};
use std::fs;
use std::path::{Path, PathBuf};

use dkf_core::Policy;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Every accepted key, in document order.
pub const KEYS: &[&str] = &[
    "n_nodes",
    "comm_radius",
    "min_degree",
    "n_trials",
    "n_iterations",
    "delta",
    "g",
    "x0",
    "y0",
    "v0",
    "angles",
    "sigma_min",
    "sigma_span",
    "G_scale",
    "Q_scale",
    "P0_scale",
    "policy",
    "eps",
    "prune_tau",
    "prune_window",
    "pruning_enabled",
    "filter_knows_gravity",
    "seed",
    "head_radius",
    "gate_threshold",
    "cluster_threshold",
    "convergence_band_db",
    "weights_every",
    "max_attempts",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_nodes: usize,
    /// Link radius in the unit square.
    pub comm_radius: f64,
    pub min_degree: usize,
    pub n_trials: usize,
    pub n_iterations: usize,
    /// Time step in seconds.
    pub delta: f64,
    pub g: f64,
    pub x0: f64,
    pub y0: f64,
    pub v0: f64,
    /// Launch angle of each target, radians.
    pub angles: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_span: f64,
    #[serde(rename = "G_scale")]
    pub g_scale: f64,
    #[serde(rename = "Q_scale")]
    pub q_scale: f64,
    #[serde(rename = "P0_scale")]
    pub p0_scale: f64,
    #[serde(with = "policy_name")]
    pub policy: Policy,
    pub eps: f64,
    pub prune_tau: f64,
    pub prune_window: usize,
    pub pruning_enabled: bool,
    pub filter_knows_gravity: bool,
    pub seed: u64,
    /// Radius of the head-based partition; defaults to `comm_radius`.
    pub head_radius: Option<f64>,
    /// Minimum `a_nm` for node `m` to absorb neighbor `n`'s measurement.
    pub gate_threshold: f64,
    /// Weight threshold used to read clusters off the combination matrix.
    pub cluster_threshold: f64,
    pub convergence_band_db: f64,
    /// Snapshot the weights of the first trial every this many iterations;
    /// zero disables snapshots.
    pub weights_every: usize,
    pub max_attempts: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_nodes: 30,
            comm_radius: 0.35,
            min_degree: 4,
            n_trials: 200,
            n_iterations: 100,
            delta: 0.1,
            g: 10.0,
            x0: 1.0,
            y0: 30.0,
            v0: 15.0,
            angles: vec![FRAC_PI_3, FRAC_PI_4],
            sigma_min: 0.01,
            sigma_span: 0.5,
            g_scale: 0.625,
            q_scale: 0.001,
            p0_scale: 1.0,
            policy: Policy::Adaptive,
            eps: 1e-12,
            prune_tau: 0.05,
            prune_window: 10,
            pruning_enabled: true,
            filter_knows_gravity: true,
            seed: 1,
            head_radius: None,
            gate_threshold: 0.0,
            cluster_threshold: 0.05,
            convergence_band_db: 3.0,
            weights_every: 0,
            max_attempts: dkf_core::topology::DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl ExperimentConfig {
    pub fn head_radius(&self) -> f64 {
        self.head_radius.unwrap_or(self.comm_radius)
    }

    /// Copy with every defaulted-from-another-key value written out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.head_radius = Some(self.head_radius());
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        let finite = [
            ("comm_radius", self.comm_radius),
            ("delta", self.delta),
            ("g", self.g),
            ("x0", self.x0),
            ("y0", self.y0),
            ("v0", self.v0),
            ("sigma_min", self.sigma_min),
            ("sigma_span", self.sigma_span),
            ("G_scale", self.g_scale),
            ("Q_scale", self.q_scale),
            ("P0_scale", self.p0_scale),
            ("eps", self.eps),
            ("prune_tau", self.prune_tau),
            ("gate_threshold", self.gate_threshold),
            ("cluster_threshold", self.cluster_threshold),
            ("convergence_band_db", self.convergence_band_db),
            ("head_radius", self.head_radius()),
        ];
        if let Some((key, _)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return fail(format!("{key} must be finite"));
        }
        for (key, v) in [
            ("n_nodes", self.n_nodes),
            ("n_trials", self.n_trials),
            ("n_iterations", self.n_iterations),
            ("prune_window", self.prune_window),
            ("max_attempts", self.max_attempts),
        ] {
            if v == 0 {
                return fail(format!("{key} must be positive"));
            }
        }
        if self.n_nodes > 1 && self.min_degree >= self.n_nodes {
            return fail(format!(
                "min_degree {} is unreachable with {} nodes",
                self.min_degree, self.n_nodes
            ));
        }
        if self.n_nodes == 1 && self.min_degree > 0 {
            return fail("a single node network needs min_degree = 0".into());
        }
        if !(self.comm_radius > 0.0 && self.comm_radius <= SQRT_2) {
            return fail("comm_radius must lie in (0, sqrt 2]".into());
        }
        if self.head_radius() < 0.0 {
            return fail("head_radius must be non-negative".into());
        }
        if !(self.delta > 0.0) {
            return fail("delta must be positive".into());
        }
        if self.g < 0.0 {
            return fail("g must be non-negative".into());
        }
        if self.angles.len() != 2 || self.angles.iter().any(|a| !a.is_finite()) {
            return fail("angles must hold exactly two finite launch angles".into());
        }
        if !(self.sigma_min > 0.0) || self.sigma_span < 0.0 {
            return fail(
                "noise variances must be positive (sigma_min > 0, sigma_span >= 0)".into(),
            );
        }
        if self.q_scale < 0.0 {
            return fail("Q_scale must be non-negative".into());
        }
        if !(self.p0_scale > 0.0) {
            return fail("P0_scale must be positive".into());
        }
        if !(self.eps > 0.0) {
            return fail("eps must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.prune_tau) {
            return fail("prune_tau must lie in [0, 1]".into());
        }
        if !(self.convergence_band_db > 0.0) {
            return fail("convergence_band_db must be positive".into());
        }
        Ok(())
    }
}

/// Reads, checks and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            ConfigError::Missing(path.to_path_buf())
        } else {
            ConfigError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let cfg = if is_json {
        parse_json(&text, path)?
    } else {
        parse_toml(&text, path)?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn check_keys<'a>(keys: impl IntoIterator<Item = &'a String>) -> Result<(), ConfigError> {
    for key in keys {
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key.clone()));
        }
    }
    Ok(())
}

fn parse_error(path: &Path, message: impl ToString) -> ConfigError {
    ConfigError::Parse {
        path: PathBuf::from(path),
        message: message.to_string(),
    }
}

/// Parses a flat TOML document.
pub fn parse_toml(text: &str, path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e| parse_error(path, e))?;
    check_keys(table.keys())?;
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| parse_error(path, e))
}

/// Parses either a flat JSON object or a run metadata document carrying
/// one under `config`.
pub fn parse_json(text: &str, path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(path, e))?;
    let object = match value {
        serde_json::Value::Object(mut map) => match map.remove("config") {
            Some(serde_json::Value::Object(inner)) => inner,
            Some(_) => return Err(parse_error(path, "`config` must be an object")),
            None => map,
        },
        _ => return Err(parse_error(path, "expected a JSON object")),
    };
    check_keys(object.keys())?;
    serde_json::from_value(serde_json::Value::Object(object)).map_err(|e| parse_error(path, e))
}

mod policy_name {
    use dkf_core::Policy;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Policy, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(p.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Policy, D::Error> {
        let name = String::deserialize(d)?;
        name.parse()
            .map_err(|_| D::Error::custom(format!("unknown policy `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let cfg = parse_toml(text, Path::new("test.toml"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.n_nodes, 30);
        assert_eq!(cfg.n_trials, 200);
        assert_eq!(cfg.g_scale, 0.625);
        assert_eq!(cfg.head_radius(), cfg.comm_radius);
    }

    #[test]
    fn keys_cover_every_field() {
        let value = serde_json::to_value(ExperimentConfig::default().resolved()).unwrap();
        let mut fields: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
        let mut keys: Vec<_> = KEYS.iter().map(|k| k.to_string()).collect();
        fields.sort();
        keys.sort();
        assert_eq!(fields, keys);
    }

    #[test]
    fn overrides_and_errors() {
        let cfg = parse("n_trials = 7\npolicy = \"metropolis\"\nG_scale = 1.5").unwrap();
        assert_eq!(cfg.n_trials, 7);
        assert_eq!(cfg.policy, Policy::Metropolis);
        assert_eq!(cfg.g_scale, 1.5);

        assert!(matches!(
            parse("n_trials = 0"),
            Err(ConfigError::Invalid(_))
        ));
        match parse("n_trails = 5") {
            Err(ConfigError::UnknownKey(k)) => assert_eq!(k, "n_trails"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse("n_trials = "),
            Err(ConfigError::Parse { .. })
        ));
        assert!(matches!(
            parse("policy = \"best\""),
            Err(ConfigError::Parse { .. })
        ));
        assert!(matches!(
            parse("angles = [1.0]"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            parse("sigma_min = 0.0"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig {
            seed: 99,
            policy: Policy::RelativeVariance,
            ..ExperimentConfig::default()
        };
        let meta = serde_json::json!({ "version": "x", "config": cfg.resolved() });
        let back = parse_json(&meta.to_string(), Path::new("m.json")).unwrap();
        assert_eq!(back, cfg.resolved());
        let flat = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse_json(&flat, Path::new("c.json")).unwrap(), cfg);
    }
}
