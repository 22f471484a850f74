//! Service configuration: one JSON document, then environment overrides,
//! then command-line flags (applied by the caller).

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::EngineConfig;
use crate::error::{Result, ServiceError};
use crate::node::NodeConfig;

pub const ENV_PORT: &str = "SEVBANDIT_PORT";
pub const ENV_DATA_DIR: &str = "SEVBANDIT_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub engine: EngineConfig,
    pub bind: IpAddr,
    pub port: u16,
    /// `None` keeps state in memory only.
    pub data_dir: Option<PathBuf>,
    /// Sync the replay log to disk after every record.
    pub fsync: bool,
    /// Snapshots between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    /// Run the snapshot refresh timer. Off for scripted sessions that post
    /// refreshes themselves.
    pub refresh_timer: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            data_dir: None,
            fsync: false,
            checkpoint_every: 12,
            refresh_timer: true,
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        Ok(config)
    }

    /// Applies `SEVBANDIT_PORT` and `SEVBANDIT_DATA_DIR` from `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(port) = var(ENV_PORT) {
            self.port = port
                .trim()
                .parse()
                .map_err(|_| ServiceError::Config(format!("{ENV_PORT}=`{port}` is not a port number")))?;
        }
        if let Some(dir) = var(ENV_DATA_DIR) {
            self.data_dir = Some(PathBuf::from(dir));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        Ok(())
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }

    pub fn node_config(&self) -> NodeConfig {
        NodeConfig {
            engine: self.engine.clone(),
            data_dir: self.data_dir.clone(),
            fsync: self.fsync,
            checkpoint_every: self.checkpoint_every,
        }
    }
}
