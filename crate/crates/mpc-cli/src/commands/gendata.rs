//! `mpc gen-data`: materialize synthetic datasets on disk.

use std::fs;
use std::path::Path;

use crate::config::Config;
use crate::error::Result;
use crate::manifest::RunManifest;
use crate::setup::load_datasets;

pub fn cmd_gendata(cfg: &Config, seed: Option<u64>, out: &Path, quiet: bool) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        cfg.set(&format!("data.seed={s}"))?;
    }
    let (train, val) = load_datasets(&cfg, Path::new("."))?;
    fs::create_dir_all(out)?;
    let seed_v = cfg.get_u64("data", "seed", 0)?;
    let mut manifest = RunManifest::new("gen-data", seed_v, out, &cfg);
    fs::write(out.join("train.csv"), train.to_text())?;
    manifest.add_artifact("train.csv")?;
    fs::write(out.join("val.csv"), val.to_text())?;
    manifest.add_artifact("val.csv")?;
    manifest.write()?;
    if !quiet {
        println!(
            "wrote {} train and {} val samples ({} classes, dim {}) to {}",
            train.len(),
            val.len(),
            train.classes,
            train.dim(),
            out.display()
        );
    }
    Ok(())
}
