//! `key=value` run configuration.
//!
//! Sources are layered: config file, then positional `key=value`
//! overrides, then flags. Later layers win. Every key must be known.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "model",
    "n",
    "n1",
    "n2",
    "m",
    "s",
    "k",
    "r",
    "rho",
    "procedure",
    "lambda",
    "ensemble",
    "trials",
    "seed",
    "tolerance",
    "samples",
    "zeta",
    "out",
    "jobs",
    "axis1",
    "axis2",
    "orientation",
    "band",
    "lambdas",
    "slack",
    "instance",
    "save_instance",
    "max_iterations",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses `key=value` lines; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.set_pair(line)
                .map_err(|e| CliError::Config(format!("config line {}: {e}", no + 1)))?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` pair.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got {pair:?}")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !KEYS.contains(&key) {
            return Err(CliError::Config(format!("unknown key {key:?}")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("invalid {key}: {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key {key}")))
    }

    /// Integer axis written as `lo:hi`, `lo:hi:step`, or a comma list.
    pub fn axis(&self, key: &str) -> Result<Vec<usize>, CliError> {
        let raw: String = self.require(key)?;
        let bad = |why: &str| CliError::Config(format!("invalid {key}: {raw:?}: {why}"));
        let values = if raw.contains(':') {
            let parts: Vec<usize> = raw
                .split(':')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("expected lo:hi or lo:hi:step"))?;
            match parts[..] {
                [lo, hi] => (lo..=hi).collect(),
                [lo, hi, step] if step > 0 => (lo..=hi).step_by(step).collect(),
                _ => return Err(bad("expected lo:hi or lo:hi:step with a positive step")),
            }
        } else {
            raw.split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad("expected a comma-separated list of integers"))?
        };
        if values.is_empty() {
            return Err(bad("empty axis"));
        }
        Ok(values)
    }

    /// Comma list of reals; an empty value is an empty list.
    pub fn real_list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(raw) = self.raw(key) else {
            return Ok(None);
        };
        if raw.trim().is_empty() {
            return Ok(Some(Vec::new()));
        }
        raw.split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::Config(format!("invalid {key}: {p:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}
