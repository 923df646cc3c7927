//! Plain-text configs: `[section]` headers, `key = value` lines, `#`/`;`
//! comments. One section level; every key overridable via `--set
//! section.key=value`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

/// Keys the schema understands, per section. An unknown key is a config
/// error naming the key, so typos fail loudly instead of silently using
/// a default.
const KNOWN: &[(&str, &[&str])] = &[
    ("run", &["seed", "timing", "name"]),
    (
        "data",
        &[
            "kind", "classes", "per_class", "dim", "noise", "radius", "seed", "val_fraction",
            "head_count", "imbalance_ratio", "train_images", "train_labels", "val_images",
            "val_labels", "train_limit", "val_limit",
        ],
    ),
    (
        "train",
        &[
            "epochs", "batch_size", "inner_lr", "outer_lr", "interval", "sigma", "sigma_decay",
            "beta1", "beta2", "reward", "fit", "ece_bins", "mode", "lambda", "alpha0", "backbone",
            "hidden", "conv_c1", "conv_c2", "per_batch_actions", "optimizer", "mask_true_class",
        ],
    ),
    ("sweep", &["grid", "lambda_values", "interval_values"]),
    ("regret", &["family", "t_values", "seed", "eta", "replay_file"]),
];

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            if section.is_empty() {
                return Err(CliError::Config(format!(
                    "line {}: key `{}` appears before any [section]",
                    lineno + 1,
                    key.trim()
                )));
            }
            cfg.sections
                .get_mut(&section)
                .unwrap()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        cfg.validate_keys()?;
        Ok(cfg)
    }

    pub fn validate_keys(&self) -> Result<()> {
        for (section, keys) in &self.sections {
            let known = KNOWN
                .iter()
                .find(|(s, _)| s == section)
                .map(|(_, k)| *k)
                .ok_or_else(|| CliError::Config(format!("unknown config section `[{section}]`")))?;
            for key in keys.keys() {
                if !known.contains(&key.as_str()) {
                    return Err(CliError::Config(format!(
                        "unknown config key `{section}.{key}`"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Applies one `section.key=value` override.
    pub fn set(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects section.key=value, got `{spec}`")))?;
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| CliError::Config(format!("--set expects section.key=value, got `{spec}`")))?;
        self.sections
            .entry(section.trim().to_string())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
        self.validate_keys()
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(|s| s.as_str())
    }

    pub fn get_or<'a>(&'a self, section: &str, key: &str, default: &'a str) -> &'a str {
        self.get(section, key).unwrap_or(default)
    }

    pub fn get_f64(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                CliError::Config(format!("`{section}.{key}` must be a number, got `{v}`"))
            }),
        }
    }

    pub fn get_usize(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                CliError::Config(format!("`{section}.{key}` must be a non-negative integer, got `{v}`"))
            }),
        }
    }

    pub fn get_u64(&self, section: &str, key: &str, default: u64) -> Result<u64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                CliError::Config(format!("`{section}.{key}` must be a non-negative integer, got `{v}`"))
            }),
        }
    }

    pub fn get_bool(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        match self.get(section, key) {
            None => Ok(default),
            Some("on") | Some("true") | Some("yes") | Some("1") => Ok(true),
            Some("off") | Some("false") | Some("no") | Some("0") => Ok(false),
            Some(v) => Err(CliError::Config(format!(
                "`{section}.{key}` must be on/off, got `{v}`"
            ))),
        }
    }

    /// Comma-separated list of numbers.
    pub fn get_f64_list(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(section, key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim().parse().map_err(|_| {
                        CliError::Config(format!("`{section}.{key}` has non-numeric entry `{p}`"))
                    })
                })
                .collect(),
        }
    }

    pub fn get_usize_list(&self, section: &str, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(section, key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim().parse().map_err(|_| {
                        CliError::Config(format!("`{section}.{key}` has non-integer entry `{p}`"))
                    })
                })
                .collect(),
        }
    }

    /// Canonical text form, written into the run manifest.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (section, keys) in &self.sections {
            let _ = writeln!(out, "[{section}]");
            for (k, v) in keys {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let cfg = Config::parse("# comment\n[run]\nseed = 7\n\n[train]\nepochs = 5\n").unwrap();
        assert_eq!(cfg.get("run", "seed"), Some("7"));
        assert_eq!(cfg.get_usize("train", "epochs", 1).unwrap(), 5);
        let again = Config::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_key_names_the_key() {
        let err = Config::parse("[train]\nepohcs = 5\n").unwrap_err();
        assert!(err.to_string().contains("train.epohcs"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(Config::parse("[nope]\nx = 1\n").is_err());
    }

    #[test]
    fn set_overrides_and_validates() {
        let mut cfg = Config::parse("[train]\nepochs = 5\n").unwrap();
        cfg.set("train.epochs=9").unwrap();
        assert_eq!(cfg.get_usize("train", "epochs", 0).unwrap(), 9);
        assert!(cfg.set("train.bogus=1").is_err());
        assert!(cfg.set("no-equals").is_err());
    }

    #[test]
    fn typed_getters_report_bad_values() {
        let cfg = Config::parse("[run]\nseed = abc\ntiming = maybe\n").unwrap();
        assert!(cfg.get_u64("run", "seed", 0).is_err());
        assert!(cfg.get_bool("run", "timing", true).is_err());
        assert!(cfg.get_f64("run", "seed", 0.0).is_err());
    }
}
