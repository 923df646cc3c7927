//! `mpc train`: one training run, artifacts under the output directory.

use std::fs;
use std::path::Path;

use mpc_core::metrics::{records_to_text, MetricsReport};
use mpc_core::trainer::{logs_to_text, run_training, NullClock, TrainOutcome};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::setup::{load_datasets, train_config, WallClock};

pub fn report_to_text(report: &MetricsReport) -> String {
    let racc = match report.racc {
        Some(v) => format!("{v:.6}"),
        None => "nan".to_string(),
    };
    format!(
        "acc = {:.6}\nece = {:.6}\nmue = {:.6}\ntau_star = {:.6}\nracc = {racc}\nretained_fraction = {:.6}\n",
        report.acc, report.ece, report.mue, report.tau_star, report.retained_fraction
    )
}

/// Runs training per `cfg` and returns the outcome without touching disk.
pub fn run_from_config(cfg: &Config, seed: Option<u64>) -> Result<TrainOutcome> {
    let (train, val) = load_datasets(cfg, Path::new("."))?;
    let tc = train_config(cfg, seed)?;
    let timing = cfg.get_bool("run", "timing", true)?;
    let outcome = if timing {
        run_training(&tc, &train, &val, &WallClock::new())?
    } else {
        run_training(&tc, &train, &val, &NullClock)?
    };
    Ok(outcome)
}

/// Writes epochs.csv, report.txt, records.csv, policy.txt (mpc mode)
/// and manifest.txt under `out`.
pub fn write_artifacts(
    cfg: &Config,
    seed: Option<u64>,
    outcome: &TrainOutcome,
    out: &Path,
    command: &str,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let seed = match seed {
        Some(s) => s,
        None => cfg.get_u64("run", "seed", 0)?,
    };
    let mut manifest = RunManifest::new(command, seed, out, cfg);
    let emit = |name: &str, text: &str, manifest: &mut RunManifest| -> Result<()> {
        fs::write(out.join(name), text)?;
        manifest.add_artifact(name)?;
        Ok(())
    };
    emit("epochs.csv", &logs_to_text(&outcome.logs), &mut manifest)?;
    emit("report.txt", &report_to_text(&outcome.final_report), &mut manifest)?;
    emit("records.csv", &records_to_text(&outcome.final_records), &mut manifest)?;
    if let Some(policy) = &outcome.policy {
        emit("policy.txt", &policy.serialize(), &mut manifest)?;
    }
    manifest.write()?;
    Ok(())
}

pub fn cmd_train(cfg: &Config, seed: Option<u64>, out: &Path, quiet: bool) -> Result<()> {
    if out.exists() && out.join("manifest.txt").exists() {
        return Err(CliError::Input(format!(
            "output directory `{}` already holds a run; pick a fresh --out",
            out.display()
        )));
    }
    let outcome = run_from_config(cfg, seed)?;
    write_artifacts(cfg, seed, &outcome, out, "train")?;
    if !quiet {
        for log in &outcome.logs {
            println!("{}", log.to_csv_row());
        }
        print!("{}", report_to_text(&outcome.final_report));
        println!("artifacts written to {}", out.display());
    }
    Ok(())
}
