//! `mpc sweep`: a grid of training runs, one subdirectory each, plus a
//! merged summary table.

use std::fs;
use std::path::Path;

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::commands::train::{run_from_config, write_artifacts};

/// One summary row per grid point.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub label: String,
    pub acc: f64,
    pub ece: f64,
    pub mue: f64,
    pub racc: Option<f64>,
    pub seconds: f64,
}

pub fn rows_to_text(rows: &[SweepRow], with_time: bool) -> String {
    let mut s = String::from(if with_time {
        "point,acc,ece,mue,racc,seconds\n"
    } else {
        "point,acc,ece,mue,racc\n"
    });
    for r in rows {
        let racc = match r.racc {
            Some(v) => format!("{v:.6}"),
            None => "nan".to_string(),
        };
        s.push_str(&format!("{},{:.6},{:.6},{:.6},{racc}", r.label, r.acc, r.ece, r.mue));
        if with_time {
            s.push_str(&format!(",{:.3}", r.seconds));
        }
        s.push('\n');
    }
    s
}

enum Grid {
    Lambda(Vec<f64>),
    Interval(Vec<usize>),
}

fn grid_from_config(cfg: &Config) -> Result<Grid> {
    match cfg.get_or("sweep", "grid", "lambda") {
        "lambda" => Ok(Grid::Lambda(cfg.get_f64_list(
            "sweep",
            "lambda_values",
            &[0.01, 0.1, 1.0, 10.0],
        )?)),
        "interval" => {
            Ok(Grid::Interval(cfg.get_usize_list("sweep", "interval_values", &[1, 3, 10])?))
        }
        other => Err(CliError::Config(format!(
            "`sweep.grid` must be lambda or interval, got `{other}`"
        ))),
    }
}

pub fn cmd_sweep(cfg: &Config, seed: Option<u64>, out: &Path, quiet: bool) -> Result<()> {
    let grid = grid_from_config(cfg)?;
    let points: Vec<(String, Config)> = match &grid {
        Grid::Lambda(values) => values
            .iter()
            .map(|&l| {
                let mut c = cfg.clone();
                c.set(&format!("train.mode=fixed"))?;
                c.set(&format!("train.lambda={l}"))?;
                Ok((format!("lambda_{l}"), c))
            })
            .collect::<Result<_>>()?,
        Grid::Interval(values) => values
            .iter()
            .map(|&k| {
                let mut c = cfg.clone();
                c.set("train.mode=mpc")?;
                c.set(&format!("train.interval={k}"))?;
                Ok((format!("interval_{k}"), c))
            })
            .collect::<Result<_>>()?,
    };
    for (label, _) in &points {
        let dir = out.join(label);
        if dir.exists() {
            return Err(CliError::Input(format!(
                "sweep subdirectory `{}` already exists; refusing to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(out)?;
    let mut rows = Vec::with_capacity(points.len());
    for (label, point_cfg) in &points {
        let outcome = run_from_config(point_cfg, seed)?;
        let dir = out.join(label);
        write_artifacts(point_cfg, seed, &outcome, &dir, &format!("sweep:{label}"))?;
        let seconds = outcome.logs.last().map_or(0.0, |l| l.seconds);
        rows.push(SweepRow {
            label: label.clone(),
            acc: outcome.final_report.acc,
            ece: outcome.final_report.ece,
            mue: outcome.final_report.mue,
            racc: outcome.final_report.racc,
            seconds,
        });
        if !quiet {
            println!(
                "{label}: acc {:.4} ece {:.4} mue {:.4}",
                outcome.final_report.acc, outcome.final_report.ece, outcome.final_report.mue
            );
        }
    }
    let with_time = matches!(grid, Grid::Interval(_));
    let table = rows_to_text(&rows, with_time);
    fs::write(out.join("sweep.csv"), &table)?;
    let seed_v = match seed {
        Some(s) => s,
        None => cfg.get_u64("run", "seed", 0)?,
    };
    let mut manifest = RunManifest::new("sweep", seed_v, out, cfg);
    manifest.add_artifact("sweep.csv")?;
    manifest.write()?;
    if !quiet {
        print!("{table}");
    }
    Ok(())
}
