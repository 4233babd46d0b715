//! Plain-text `key = value` configuration files.
//!
//! Command-line flags take precedence over config values, which take
//! precedence over built-in defaults. Keys are the long flag names
//! without the leading dashes (`protocol`, `spk-emb`, ...). `#` starts a
//! comment; blank lines are ignored.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    /// Empty config (used when no `--config` is given).
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn load(path: &Path, allowed_keys: &[&str]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut values = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected `key = value`, found `{raw}`",
                    path.display(),
                    idx + 1
                );
            };
            let key = key.trim().to_string();
            if !allowed_keys.contains(&key.as_str()) {
                bail!(
                    "{}:{}: unknown key `{key}` (expected one of: {})",
                    path.display(),
                    idx + 1,
                    allowed_keys.join(", ")
                );
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                bail!("{}:{}: duplicate key `{key}`", path.display(), idx + 1);
            }
        }
        Ok(Self { values })
    }

    /// Flag value if present, else the config value, else `None`.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key `{key}`: cannot parse `{raw}`: {e}"),
            },
        }
    }

    pub fn resolve_path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.values.get(key).map(PathBuf::from))
    }
}
