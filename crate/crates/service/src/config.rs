use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sepsislab::uncertainty::PolicyConfig;

use crate::error::ServiceError;

pub const PORT_ENV: &str = "SEPSISLAB_PORT";
pub const DATA_DIR_ENV: &str = "SEPSISLAB_DATA_DIR";

/// Store file name inside the data directory.
pub const STORE_FILE: &str = "sepsislab.sqlite";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    /// Checkpoint written by `train`.
    pub model_path: PathBuf,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default = "default_bind")]
    pub bind_address: String,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    /// Cohort directory imported into an empty store at startup.
    #[serde(default)]
    pub seed_cohort: Option<PathBuf>,
    /// How many patients to import from `seed_cohort`; all when absent.
    #[serde(default)]
    pub seed_patients: Option<usize>,
}

fn default_bind() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    8080
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

impl ServiceConfig {
    pub fn new(model_path: impl Into<PathBuf>, data_dir: impl Into<PathBuf>) -> Self {
        Self {
            model_path: model_path.into(),
            policy: PolicyConfig::default(),
            bind_address: default_bind(),
            port: default_port(),
            data_dir: data_dir.into(),
            seed_cohort: None,
            seed_patients: None,
        }
    }

    /// Reads the file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ServiceConfig = serde_json::from_str(&text)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.model_path);
        resolve(&mut cfg.data_dir);
        if let Some(c) = cfg.seed_cohort.as_mut() {
            resolve(c);
        }
        cfg.policy.validate()?;
        Ok(cfg)
    }

    /// Applies `SEPSISLAB_PORT` / `SEPSISLAB_DATA_DIR` from `env`.
    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(p) = env(PORT_ENV) {
            self.port = p
                .trim()
                .parse()
                .map_err(|_| ServiceError::Config(format!("{PORT_ENV}={p:?} is not a port number")))?;
        }
        if let Some(d) = env(DATA_DIR_ENV) {
            self.data_dir = PathBuf::from(d);
        }
        Ok(())
    }

    pub fn store_path(&self) -> PathBuf {
        self.data_dir.join(STORE_FILE)
    }
}
