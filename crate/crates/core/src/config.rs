//! Layered settings: defaults < TOML file < `SQLREWARD_*` environment < flags.
//!
//! Every layer is an [`EnvConfig`] with optional fields; [`EnvConfig::merge`]
//! lets the later layer win field by field.
//!
//! ```toml
//! db_root = "fixtures/db"
//! corpus = "fixtures/corpus/tasks.jsonl"
//! jobs = 4
//! reward_limit_ms = 5000
//! eval_limit_ms = 30000
//! row_cap = 10000
//! max_length = 2048
//! epsilon = 0.2
//! beta = 0.001
//! port = 8080
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::exec::{ExecConfig, DEFAULT_EVAL_LIMIT, DEFAULT_REWARD_LIMIT, DEFAULT_ROW_CAP};
use crate::grpo::GrpoConfig;
use crate::reward::{OverlongMode, RewardConfig};

pub const ENV_PREFIX: &str = "SQLREWARD_";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("environment variable {name}={value}: {reason}")]
    Env {
        name: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub db_root: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub schema_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub reward_limit_ms: Option<u64>,
    pub eval_limit_ms: Option<u64>,
    pub row_cap: Option<usize>,
    pub max_length: Option<usize>,
    pub overlong: Option<OverlongMode>,
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub port: Option<u16>,
}

impl EnvConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    /// Reads `SQLREWARD_<FIELD>` variables; unknown names are ignored.
    pub fn from_vars<I, K, V>(vars: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut c = EnvConfig::default();
        for (k, v) in vars {
            let Some(field) = k.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let value = v.as_ref();
            let err = |reason: String| ConfigError::Env {
                name: k.as_ref().to_string(),
                value: value.to_string(),
                reason,
            };
            fn num<T: std::str::FromStr>(s: &str) -> Result<T, String>
            where
                T::Err: std::fmt::Display,
            {
                s.trim().parse().map_err(|e: T::Err| e.to_string())
            }
            match field.to_ascii_lowercase().as_str() {
                "db_root" => c.db_root = Some(value.into()),
                "corpus" => c.corpus = Some(value.into()),
                "schema_dir" => c.schema_dir = Some(value.into()),
                "jobs" => c.jobs = Some(num(value).map_err(err)?),
                "reward_limit_ms" => c.reward_limit_ms = Some(num(value).map_err(err)?),
                "eval_limit_ms" => c.eval_limit_ms = Some(num(value).map_err(err)?),
                "row_cap" => c.row_cap = Some(num(value).map_err(err)?),
                "max_length" => c.max_length = Some(num(value).map_err(err)?),
                "overlong" => {
                    c.overlong = Some(match value.trim() {
                        "as_printed" => OverlongMode::AsPrinted,
                        "strict_penalty" => OverlongMode::StrictPenalty,
                        other => return Err(err(format!("expected as_printed or strict_penalty, got {other}"))),
                    })
                }
                "epsilon" => c.epsilon = Some(num(value).map_err(err)?),
                "beta" => c.beta = Some(num(value).map_err(err)?),
                "port" => c.port = Some(num(value).map_err(err)?),
                _ => {}
            }
        }
        Ok(c)
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_vars(std::env::vars())
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(self, over: EnvConfig) -> EnvConfig {
        EnvConfig {
            db_root: over.db_root.or(self.db_root),
            corpus: over.corpus.or(self.corpus),
            schema_dir: over.schema_dir.or(self.schema_dir),
            jobs: over.jobs.or(self.jobs),
            reward_limit_ms: over.reward_limit_ms.or(self.reward_limit_ms),
            eval_limit_ms: over.eval_limit_ms.or(self.eval_limit_ms),
            row_cap: over.row_cap.or(self.row_cap),
            max_length: over.max_length.or(self.max_length),
            overlong: over.overlong.or(self.overlong),
            epsilon: over.epsilon.or(self.epsilon),
            beta: over.beta.or(self.beta),
            port: over.port.or(self.port),
        }
    }

    /// Builds the layered config: file (if any), then environment, then flags.
    pub fn layered(file: Option<&Path>, env: EnvConfig, flags: EnvConfig) -> Result<Self, ConfigError> {
        let base = match file {
            Some(p) => Self::from_toml_file(p)?,
            None => EnvConfig::default(),
        };
        Ok(base.merge(env).merge(flags))
    }

    pub fn exec_config(&self, limit: Duration) -> Result<ExecConfig, ConfigError> {
        let mut c = ExecConfig {
            limit,
            ..ExecConfig::default()
        };
        if let Some(j) = self.jobs {
            if j == 0 {
                return Err(ConfigError::Invalid("jobs must be >= 1".into()));
            }
            c.jobs = j;
        }
        c.row_cap = self.row_cap.unwrap_or(DEFAULT_ROW_CAP);
        if c.row_cap == 0 {
            return Err(ConfigError::Invalid("row_cap must be >= 1".into()));
        }
        Ok(c)
    }

    pub fn reward_limit(&self) -> Duration {
        self.reward_limit_ms.map_or(DEFAULT_REWARD_LIMIT, Duration::from_millis)
    }

    pub fn eval_limit(&self) -> Duration {
        self.eval_limit_ms.map_or(DEFAULT_EVAL_LIMIT, Duration::from_millis)
    }

    pub fn reward_config(&self) -> Result<RewardConfig, ConfigError> {
        let mut c = RewardConfig {
            execution_limit: self.reward_limit(),
            ..RewardConfig::default()
        };
        if let Some(m) = self.max_length {
            c.max_length = m;
        }
        if let Some(o) = self.overlong {
            c.overlong = o;
        }
        c.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(c)
    }

    pub fn grpo_config(&self) -> Result<GrpoConfig, ConfigError> {
        let mut c = GrpoConfig::default();
        if let Some(e) = self.epsilon {
            c.epsilon = e;
        }
        if let Some(b) = self.beta {
            c.beta = b;
        }
        c.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(c)
    }

    pub fn port(&self) -> u16 {
        self.port.unwrap_or(DEFAULT_PORT)
    }
}
