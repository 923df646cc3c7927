//! `mpc eval`: recompute metrics from a saved prediction records file.

use std::fs;
use std::path::Path;

use mpc_core::metrics::{evaluate, records_from_text};

use crate::commands::train::report_to_text;
use crate::error::{CliError, Result};

pub fn cmd_eval(records_path: &Path, bins: usize, out: Option<&Path>, quiet: bool) -> Result<()> {
    let text = fs::read_to_string(records_path).map_err(|e| {
        CliError::Input(format!("cannot read `{}`: {e}", records_path.display()))
    })?;
    let records = records_from_text(&text)?;
    let report = evaluate(&records, bins)?;
    let rendered = report_to_text(&report);
    if let Some(out) = out {
        if let Some(parent) = out.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(out, &rendered)?;
    }
    if !quiet {
        print!("{rendered}");
    }
    Ok(())
}
