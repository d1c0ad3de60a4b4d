//! Flat key-value config files. Keys mirror the long CLI flags; values given
//! on the command line win over the file.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected `key = value`", path.display(), idx + 1);
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Config { values })
    }

    pub fn get_str(&self, key: &str) -> Option<String> {
        self.values.get(key).cloned()
    }

    pub fn get_f64(&self, key: &str) -> anyhow::Result<Option<f64>> {
        self.parse(key)
    }

    pub fn get_usize(&self, key: &str) -> anyhow::Result<Option<usize>> {
        self.parse(key)
    }

    pub fn get_u64(&self, key: &str) -> anyhow::Result<Option<u64>> {
        self.parse(key)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key {key} = {raw:?}: {e}"),
            },
        }
    }
}

/// Flag beats config beats default.
pub fn resolve<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

pub fn resolve_required<T>(flag: Option<T>, config: Option<T>, what: &str) -> anyhow::Result<T> {
    flag.or(config)
        .ok_or_else(|| anyhow::anyhow!("missing required value: {what} (flag or config key)"))
}
