//! Deterministic artifact emission: `<subcommand>-<hash(config)>.{csv,json}`
//! under the resolved output directory.

use crate::config::RunConfig;
use gsscrit::{Error, Result};
use serde::Serialize;
use std::path::PathBuf;

/// FNV-1a 64 of the scientific part of the config (the output directory
/// does not change the numbers, so it is excluded).
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for line in cfg.to_flat().lines() {
        if line.starts_with("out_dir=") {
            continue;
        }
        for b in line.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= b'\n' as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

pub struct Emitter {
    dir: PathBuf,
    stem: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config: &'a RunConfig,
    result: &'a T,
}

impl Emitter {
    /// Resolve the output directory (`GSSCRIT_OUT` wins over the config)
    /// and create it.
    pub fn new(subcommand: &str, cfg: &RunConfig) -> Result<Emitter> {
        let dir = std::env::var("GSSCRIT_OUT")
            .ok()
            .filter(|v| !v.is_empty())
            .unwrap_or_else(|| cfg.out_dir.clone());
        let dir = PathBuf::from(dir);
        std::fs::create_dir_all(&dir)?;
        Ok(Emitter { dir, stem: format!("{subcommand}-{}", config_hash(cfg)) })
    }

    pub fn write_csv(&self, text: &str) -> Result<PathBuf> {
        let path = self.dir.join(format!("{}.csv", self.stem));
        std::fs::write(&path, text)?;
        Ok(path)
    }

    /// JSON record echoing the full config alongside the result.
    pub fn write_json<T: Serialize>(&self, cfg: &RunConfig, result: &T) -> Result<PathBuf> {
        let path = self.dir.join(format!("{}.json", self.stem));
        let body = serde_json::to_string_pretty(&Envelope { config: cfg, result })
            .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
        std::fs::write(&path, body + "\n")?;
        Ok(path)
    }
}
