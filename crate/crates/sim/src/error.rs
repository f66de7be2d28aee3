use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG_PARSE: i32 = 2;
    pub const NUMERIC: i32 = 3;
    pub const IO: i32 = 4;
    pub const CONFIG_UNKNOWN_KEY: i32 = 5;
    pub const CONFIG_INVALID: i32 = 6;
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {0} not found")]
    Missing(PathBuf),
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: dkf_core::Error,
    },
    #[error(transparent)]
    Core(#[from] dkf_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot start worker pool: {0}")]
    ThreadPool(String),
}

impl SimError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        SimError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(ConfigError::Missing(_) | ConfigError::Io { .. }) => exit::IO,
            SimError::Config(ConfigError::Parse { .. }) => exit::CONFIG_PARSE,
            SimError::Config(ConfigError::UnknownKey(_)) => exit::CONFIG_UNKNOWN_KEY,
            SimError::Config(ConfigError::Invalid(_)) => exit::CONFIG_INVALID,
            SimError::Trial { .. } | SimError::Core(_) => exit::NUMERIC,
            SimError::Io { .. } | SimError::ThreadPool(_) => exit::IO,
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
