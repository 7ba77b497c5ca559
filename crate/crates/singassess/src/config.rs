//! TOML config files and their content hash.

use std::path::Path;

use sha2::{Digest, Sha256};
use singassess_core::Config;

use crate::error::{Error, IoContext, Result};

/// Defaults when `path` is `None`.
pub fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).at(p)?;
            toml::from_str(&text).map_err(|e| Error::format(p, e))
        }
    }
}

/// Hex SHA-256 of the canonical TOML rendering of `cfg`.
pub fn config_hash(cfg: &Config) -> String {
    let text = toml::to_string(cfg).expect("config serialises");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).at(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
