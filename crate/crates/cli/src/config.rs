//! Config discovery shared by every subcommand: an explicit `--config` beats
//! `$SENTINEL_CONFIG`, which beats `./sentinel.toml`, which beats the
//! built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use sentinel_core::engine::EngineConfig;

pub const CONFIG_ENV: &str = "SENTINEL_CONFIG";
pub const DEFAULT_FILE: &str = "sentinel.toml";

pub struct ResolvedConfig {
    pub config: EngineConfig,
    /// The file the config came from; `None` means built-in defaults.
    pub path: Option<PathBuf>,
}

pub fn resolve(flag: Option<&Path>) -> anyhow::Result<ResolvedConfig> {
    if let Some(path) = flag {
        return load(path);
    }
    if let Some(path) = std::env::var_os(CONFIG_ENV) {
        if !path.is_empty() {
            return load(Path::new(&path));
        }
    }
    let default = Path::new(DEFAULT_FILE);
    if default.exists() {
        return load(default);
    }
    Ok(ResolvedConfig {
        config: EngineConfig::default(),
        path: None,
    })
}

fn load(path: &Path) -> anyhow::Result<ResolvedConfig> {
    let config =
        EngineConfig::load(path).with_context(|| format!("loading config {}", path.display()))?;
    Ok(ResolvedConfig {
        config,
        path: Some(path.to_path_buf()),
    })
}
