use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Values from an optional `key = value` config file. Keys are the long flag
/// names; `top_n` and `top-n` are the same key. Flags given on the command
/// line win.
#[derive(Debug, Default)]
pub struct Settings {
    table: toml::Table,
    base: PathBuf,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        let table = table.into_iter().map(|(k, v)| (k.replace('_', "-"), v)).collect();
        Ok(Settings {
            table,
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    fn raw(&self, key: &str) -> Option<String> {
        self.table.get(key).map(|v| match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => other.to_string(),
        })
    }

    pub fn value<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            Some(text) => text
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key}: {e}"))),
            None => Ok(None),
        }
    }

    pub fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.value(flag, key)?.unwrap_or(default))
    }

    /// Config paths are relative to the config file.
    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.raw(key).map(|p| self.base.join(p)))
    }

    pub fn required_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
        self.path(flag, key)
            .ok_or_else(|| CliError::Usage(format!("missing --{key} (flag or config key)")))
    }

    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.value::<bool>(None, key)?.unwrap_or(false))
    }
}

/// Comma-separated list of positive integers.
pub fn parse_list(text: &str, flag: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|p| match p.trim().parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(CliError::Usage(format!("--{flag}: expected positive integers, got {p:?}"))),
        })
        .collect()
}
