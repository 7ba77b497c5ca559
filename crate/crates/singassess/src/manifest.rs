//! Run manifests: which files a command produced, under which config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use singassess_core::Config;

use crate::config::config_hash;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    /// Stage name to output path.
    pub outputs: BTreeMap<String, PathBuf>,
    pub config_hash: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, cfg: &Config) -> Self {
        let config_hash = config_hash(cfg);
        let run_id = format!("{command}-{seed}-{}", &config_hash[..12]);
        Self { run_id, command: command.into(), seed, outputs: BTreeMap::new(), config_hash }
    }

    pub fn output(&mut self, stage: &str, path: impl Into<PathBuf>) {
        self.outputs.insert(stage.into(), path.into());
    }

    /// Every output must exist and the hash must match `cfg`.
    pub fn check(&self, cfg: &Config) -> Result<()> {
        if let Some((stage, p)) = self.outputs.iter().find(|(_, p)| !p.exists()) {
            return Err(Error::format(p, format!("manifest output `{stage}` does not exist")));
        }
        if self.config_hash != config_hash(cfg) {
            return Err(Error::Usage("config hash does not match the manifest".into()));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path, cfg: &Config) -> Result<()> {
        self.check(cfg)?;
        crate::io::write_json(path, self)
    }
}
