//! Translates parsed configs into core datasets and train configs.

use std::fs;
use std::path::Path;

use mpc_core::datagen::{
    dataset_from_idx, default_radius, gen_blobs_counts, longtail_counts, Dataset, LongTailSpec,
};
use mpc_core::evidential::FitTerm;
use mpc_core::optim::OptimKind;
use mpc_core::policy::RewardMode;
use mpc_core::trainer::{BackboneSpec, Clock, ControlMode, TrainConfig};

use crate::config::Config;
use crate::error::{CliError, Result};

/// Wall clock for the EpochLog `seconds` column.
pub struct WallClock {
    start: std::time::Instant,
}

impl WallClock {
    pub fn new() -> Self {
        WallClock { start: std::time::Instant::now() }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Train/validation datasets per the `[data]` section.
pub fn load_datasets(cfg: &Config, base: &Path) -> Result<(Dataset, Dataset)> {
    match cfg.get_or("data", "kind", "blobs") {
        "blobs" | "longtail" => {
            let classes = cfg.get_usize("data", "classes", 2)?;
            let dim = cfg.get_usize("data", "dim", 2)?;
            let noise = cfg.get_f64("data", "noise", 0.3)?;
            let seed = cfg.get_u64("data", "seed", 0)?;
            let radius = match cfg.get("data", "radius") {
                None | Some("auto") => default_radius(classes, noise),
                Some(v) => v.parse().map_err(|_| {
                    CliError::Config(format!("`data.radius` must be a number or auto, got `{v}`"))
                })?,
            };
            let counts = if cfg.get_or("data", "kind", "blobs") == "longtail" {
                longtail_counts(&LongTailSpec {
                    head_count: cfg.get_usize("data", "head_count", 1000)?,
                    classes,
                    imbalance_ratio: cfg.get_f64("data", "imbalance_ratio", 10.0)?,
                })?
            } else {
                vec![cfg.get_usize("data", "per_class", 200)?; classes]
            };
            let all = gen_blobs_counts(&counts, dim, noise, radius, seed)?;
            let val_fraction = cfg.get_f64("data", "val_fraction", 0.2)?;
            if !(val_fraction > 0.0 && val_fraction < 1.0) {
                return Err(CliError::Config(format!(
                    "`data.val_fraction` must be in (0, 1), got {val_fraction}"
                )));
            }
            let train_n = ((all.len() as f64) * (1.0 - val_fraction)).round() as usize;
            Ok(all.split(train_n, seed.wrapping_add(1))?)
        }
        "idx" => {
            let read = |key: &str| -> Result<Vec<u8>> {
                let rel = cfg.get("data", key).ok_or_else(|| {
                    CliError::Config(format!("`data.{key}` is required for kind = idx"))
                })?;
                let path = base.join(rel);
                fs::read(&path).map_err(|e| {
                    CliError::Input(format!("cannot read `{}`: {e}", path.display()))
                })
            };
            let train = dataset_from_idx(
                &read("train_images")?,
                &read("train_labels")?,
                cfg.get_or("data", "train_images", "idx"),
            )?;
            let val = dataset_from_idx(
                &read("val_images")?,
                &read("val_labels")?,
                cfg.get_or("data", "val_images", "idx"),
            )?;
            let train = match cfg.get_usize("data", "train_limit", 0)? {
                0 => train,
                n => train.head(n.min(train.len()))?,
            };
            let val = match cfg.get_usize("data", "val_limit", 0)? {
                0 => val,
                n => val.head(n.min(val.len()))?,
            };
            Ok((train, val))
        }
        other => Err(CliError::Config(format!(
            "`data.kind` must be blobs, longtail or idx, got `{other}`"
        ))),
    }
}

/// TrainConfig per the `[train]` and `[run]` sections; `seed_override`
/// comes from `--seed`.
pub fn train_config(cfg: &Config, seed_override: Option<u64>) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let mode = match cfg.get_or("train", "mode", "mpc") {
        "mpc" => ControlMode::Mpc,
        "fixed" => ControlMode::Fixed {
            lambda: cfg.get_f64("train", "lambda", 1.0)?,
            alpha0: cfg.get_f64("train", "alpha0", 1.0)?,
        },
        other => {
            return Err(CliError::Config(format!(
                "`train.mode` must be mpc or fixed, got `{other}`"
            )))
        }
    };
    let backbone = match cfg.get_or("train", "backbone", "mlp") {
        "mlp" => BackboneSpec::Mlp { hidden: cfg.get_usize_list("train", "hidden", &[64])? },
        "conv" => BackboneSpec::Conv {
            side: 28,
            c1: cfg.get_usize("train", "conv_c1", 6)?,
            c2: cfg.get_usize("train", "conv_c2", 12)?,
        },
        other => {
            return Err(CliError::Config(format!(
                "`train.backbone` must be mlp or conv, got `{other}`"
            )))
        }
    };
    let reward_mode = match cfg.get_or("train", "reward", "delta") {
        "delta" => RewardMode::Delta,
        "absolute" => RewardMode::Absolute,
        other => {
            return Err(CliError::Config(format!(
                "`train.reward` must be delta or absolute, got `{other}`"
            )))
        }
    };
    let fit = match cfg.get_or("train", "fit", "expected_ce") {
        "expected_ce" => FitTerm::ExpectedCrossEntropy,
        "mean_ce" => FitTerm::MeanProbCrossEntropy,
        "mse" => FitTerm::Mse,
        other => {
            return Err(CliError::Config(format!(
                "`train.fit` must be expected_ce, mean_ce or mse, got `{other}`"
            )))
        }
    };
    let optimizer = match cfg.get_or("train", "optimizer", "adam") {
        "adam" => OptimKind::adam_default(),
        "sgd" => OptimKind::Sgd,
        other => {
            return Err(CliError::Config(format!(
                "`train.optimizer` must be adam or sgd, got `{other}`"
            )))
        }
    };
    let tc = TrainConfig {
        epochs: cfg.get_usize("train", "epochs", d.epochs)?,
        batch_size: cfg.get_usize("train", "batch_size", d.batch_size)?,
        inner_lr: cfg.get_f64("train", "inner_lr", d.inner_lr)?,
        outer_lr: cfg.get_f64("train", "outer_lr", d.outer_lr)?,
        interval: cfg.get_usize("train", "interval", d.interval)?,
        sigma: cfg.get_f64("train", "sigma", d.sigma)?,
        sigma_decay: cfg.get_bool("train", "sigma_decay", d.sigma_decay)?,
        beta1: cfg.get_f64("train", "beta1", d.beta1)?,
        beta2: cfg.get_f64("train", "beta2", d.beta2)?,
        reward_mode,
        fit,
        mask_true_class: cfg.get_bool("train", "mask_true_class", false)?,
        ece_bins: cfg.get_usize("train", "ece_bins", d.ece_bins)?,
        seed: match seed_override {
            Some(s) => s,
            None => cfg.get_u64("run", "seed", 0)?,
        },
        mode,
        backbone,
        optimizer,
        per_batch_actions: cfg.get_bool("train", "per_batch_actions", false)?,
        record_hashes: false,
    };
    tc.validate()?;
    Ok(tc)
}

/// Resolves `--config`: a preset name first, then a file path.
pub fn resolve_config(name_or_path: &str) -> Result<Config> {
    if let Some(text) = crate::presets::lookup(name_or_path) {
        return Config::parse(text);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(CliError::Input(format!(
            "`{name_or_path}` is neither a built-in config ({}) nor a readable file",
            crate::presets::NAMES.join(", ")
        )));
    }
    Config::parse(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_config_loads_and_splits() {
        let cfg = Config::parse(
            "[data]\nkind = blobs\nclasses = 3\nper_class = 40\ndim = 2\nnoise = 0.2\nval_fraction = 0.25\n",
        )
        .unwrap();
        let (tr, va) = load_datasets(&cfg, Path::new(".")).unwrap();
        assert_eq!(tr.len() + va.len(), 120);
        assert_eq!(va.len(), 30);
        assert_eq!(tr.classes, 3);
    }

    #[test]
    fn longtail_config_uses_counts() {
        let cfg = Config::parse(
            "[data]\nkind = longtail\nclasses = 5\nhead_count = 100\nimbalance_ratio = 10\nnoise = 0.2\n",
        )
        .unwrap();
        let (tr, va) = load_datasets(&cfg, Path::new(".")).unwrap();
        let spec = LongTailSpec { head_count: 100, classes: 5, imbalance_ratio: 10.0 };
        let total: usize = longtail_counts(&spec).unwrap().iter().sum();
        assert_eq!(tr.len() + va.len(), total);
    }

    #[test]
    fn idx_missing_file_is_input_error() {
        let cfg = Config::parse(
            "[data]\nkind = idx\ntrain_images = no/such.idx\ntrain_labels = x\nval_images = y\nval_labels = z\n",
        )
        .unwrap();
        let err = load_datasets(&cfg, Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn train_config_rejects_bad_enums() {
        let cfg = Config::parse("[train]\nmode = magic\n").unwrap();
        assert_eq!(train_config(&cfg, None).unwrap_err().exit_code(), 2);
        let cfg = Config::parse("[train]\nfit = l2\n").unwrap();
        assert!(train_config(&cfg, None).is_err());
    }

    #[test]
    fn seed_override_wins() {
        let cfg = Config::parse("[run]\nseed = 5\n").unwrap();
        assert_eq!(train_config(&cfg, None).unwrap().seed, 5);
        assert_eq!(train_config(&cfg, Some(9)).unwrap().seed, 9);
    }
}
