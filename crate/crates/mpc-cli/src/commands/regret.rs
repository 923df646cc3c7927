//! `mpc regret`: online gradient descent traces and bound checks.

use std::fs;
use std::path::Path;

use mpc_core::regret::{ogd_run, verify_bound, ActionBox, LossFamily, OgdRun};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;

fn family_from_config(cfg: &Config, base: &Path) -> Result<LossFamily> {
    let seed = cfg.get_u64("regret", "seed", 0)?;
    match cfg.get_or("regret", "family", "quadratic") {
        "quadratic" => Ok(LossFamily::Quadratic { seed }),
        "linear" => Ok(LossFamily::Linear { seed }),
        "replay" => {
            let rel = cfg.get("regret", "replay_file").ok_or_else(|| {
                CliError::Config("`regret.replay_file` is required for family = replay".to_string())
            })?;
            let path = base.join(rel);
            let text = fs::read_to_string(&path).map_err(|e| {
                CliError::Input(format!("cannot read `{}`: {e}", path.display()))
            })?;
            let mut grads = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let parts: Vec<&str> = line.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(CliError::Input(format!(
                        "replay line {}: expected two comma-separated numbers, got `{line}`",
                        i + 1
                    )));
                }
                let gx: f64 = parts[0].parse().map_err(|_| {
                    CliError::Input(format!("replay line {}: bad number `{}`", i + 1, parts[0]))
                })?;
                let gy: f64 = parts[1].parse().map_err(|_| {
                    CliError::Input(format!("replay line {}: bad number `{}`", i + 1, parts[1]))
                })?;
                grads.push([gx, gy]);
            }
            if grads.is_empty() {
                return Err(CliError::Input("replay file holds no gradient rows".to_string()));
            }
            Ok(LossFamily::Replay { grads })
        }
        other => Err(CliError::Config(format!(
            "`regret.family` must be quadratic, linear or replay, got `{other}`"
        ))),
    }
}

fn trace_to_text(run: &OgdRun) -> String {
    let mut s = String::from("t,lambda,alpha0,loss,cumulative_regret\n");
    let mut cum_loss = 0.0;
    let per_round_comp = run.comparator_loss / run.actions.len() as f64;
    for (t, (a, loss)) in run.actions.iter().zip(&run.losses).enumerate() {
        cum_loss += loss;
        let cum_regret = cum_loss - per_round_comp * (t + 1) as f64;
        s.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            t + 1,
            a[0],
            a[1],
            loss,
            cum_regret
        ));
    }
    s
}

pub fn cmd_regret(cfg: &Config, seed: Option<u64>, out: &Path, quiet: bool) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        cfg.set(&format!("regret.seed={s}"))?;
    }
    let family = family_from_config(&cfg, Path::new("."))?;
    let replay = matches!(family, LossFamily::Replay { .. });
    let t_values = if replay {
        match &family {
            LossFamily::Replay { grads } => vec![grads.len()],
            _ => unreachable!(),
        }
    } else {
        cfg.get_usize_list("regret", "t_values", &[100, 1000, 10000])?
    };
    let eta = match cfg.get("regret", "eta") {
        None | Some("theory") => None,
        Some(v) => Some(v.parse().map_err(|_| {
            CliError::Config(format!("`regret.eta` must be a number or theory, got `{v}`"))
        })?),
    };
    fs::create_dir_all(out)?;
    let bx = ActionBox::default();
    let seed_v = cfg.get_u64("regret", "seed", 0)?;
    let mut manifest = RunManifest::new("regret", seed_v, out, &cfg);
    let mut summary = String::from("t,regret,bound,ratio,verdict\n");
    for &t in &t_values {
        let run = ogd_run(&family, t, &bx, eta)?;
        let name = format!("trace_{t}.csv");
        fs::write(out.join(&name), trace_to_text(&run))?;
        manifest.add_artifact(&name)?;
        let verdict = if replay {
            "not applicable".to_string()
        } else if verify_bound(&run) {
            "pass".to_string()
        } else {
            "FAIL".to_string()
        };
        let line = format!(
            "{t},{:.6},{:.6},{:.6},{verdict}",
            run.regret,
            run.bound,
            run.regret / run.bound
        );
        summary.push_str(&line);
        summary.push('\n');
        if !quiet {
            println!("{line}");
        }
    }
    fs::write(out.join("summary.csv"), &summary)?;
    manifest.add_artifact("summary.csv")?;
    manifest.write()?;
    if !quiet {
        println!("artifacts written to {}", out.display());
    }
    Ok(())
}
