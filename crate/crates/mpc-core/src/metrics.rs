//! Evaluation metrics: accuracy, expected calibration error, the
//! misclassification-uncertainty error with its optimal threshold, and
//! retained accuracy after uncertainty-based rejection.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::CoreError;

/// Default number of equal-width confidence bins for ECE.
pub const DEFAULT_ECE_BINS: usize = 15;

/// One scored prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    pub pred: usize,
    pub label: usize,
    /// Confidence: max expected probability, in [0, 1].
    pub conf: f64,
    /// Uncertainty (vacuity), in (0, 1].
    pub unc: f64,
}

impl PredictionRecord {
    #[inline]
    pub fn correct(&self) -> bool {
        self.pred == self.label
    }
}

/// One evaluation pass worth of metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub acc: f64,
    pub ece: f64,
    /// MUE at the optimal threshold.
    pub mue: f64,
    /// The MUE-minimizing threshold.
    pub tau_star: f64,
    /// Accuracy over retained samples; `None` when everything is rejected.
    pub racc: Option<f64>,
    pub retained_fraction: f64,
}

fn ensure_nonempty(records: &[PredictionRecord]) -> Result<(), CoreError> {
    if records.is_empty() {
        Err(CoreError::UndefinedMetric("empty record set".to_string()))
    } else {
        Ok(())
    }
}

/// Fraction of records with pred == label.
pub fn accuracy(records: &[PredictionRecord]) -> Result<f64, CoreError> {
    ensure_nonempty(records)?;
    let correct = records.iter().filter(|r| r.correct()).count();
    Ok(correct as f64 / records.len() as f64)
}

/// Expected calibration error over `bins` equal-width confidence bins on
/// [0, 1]. Empty bins contribute zero; confidence 1.0 falls in the last bin.
pub fn ece(records: &[PredictionRecord], bins: usize) -> Result<f64, CoreError> {
    ensure_nonempty(records)?;
    if bins == 0 {
        return Err(CoreError::Input("ece needs at least one bin".to_string()));
    }
    if records.iter().any(|r| !(0.0..=1.0).contains(&r.conf)) {
        return Err(CoreError::Input("confidence outside [0,1]".to_string()));
    }
    let mut count = alloc::vec![0usize; bins];
    let mut conf_sum = alloc::vec![0.0f64; bins];
    let mut correct = alloc::vec![0usize; bins];
    for r in records {
        let mut b = (r.conf * bins as f64) as usize;
        if b == bins {
            b = bins - 1;
        }
        count[b] += 1;
        conf_sum[b] += r.conf;
        if r.correct() {
            correct[b] += 1;
        }
    }
    let n = records.len() as f64;
    let mut e = 0.0;
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let acc_b = correct[b] as f64 / count[b] as f64;
        let conf_b = conf_sum[b] / count[b] as f64;
        e += count[b] as f64 / n * (acc_b - conf_b).abs();
    }
    Ok(e)
}

/// MUE(tau): half the rate of correct predictions flagged uncertain plus
/// half the rate of incorrect predictions flagged certain. An empty
/// correct or incorrect set contributes zero to its term.
pub fn mue(records: &[PredictionRecord], tau: f64) -> Result<f64, CoreError> {
    ensure_nonempty(records)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(CoreError::Input(format!("tau must be in [0,1], got {tau}")));
    }
    let (mut n_c, mut n_i, mut c_over, mut i_under) = (0usize, 0usize, 0usize, 0usize);
    for r in records {
        if r.correct() {
            n_c += 1;
            if r.unc > tau {
                c_over += 1;
            }
        } else {
            n_i += 1;
            if r.unc <= tau {
                i_under += 1;
            }
        }
    }
    let term_c = if n_c == 0 { 0.0 } else { c_over as f64 / n_c as f64 };
    let term_i = if n_i == 0 { 0.0 } else { i_under as f64 / n_i as f64 };
    Ok(0.5 * (term_c + term_i))
}

/// MUE-minimizing threshold. Candidates are 0, 1 and the midpoints of
/// consecutive distinct sorted uncertainties; MUE is piecewise constant
/// in tau, so these cover every achievable value. Ties break toward the
/// smallest tau.
pub fn optimal_threshold(records: &[PredictionRecord]) -> Result<(f64, f64), CoreError> {
    ensure_nonempty(records)?;
    let mut u: Vec<f64> = records.iter().map(|r| r.unc).collect();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    u.dedup();
    let mut candidates = Vec::with_capacity(u.len() + 2);
    candidates.push(0.0);
    for w in u.windows(2) {
        candidates.push(0.5 * (w[0] + w[1]));
    }
    candidates.push(1.0);
    let mut best_tau = candidates[0];
    let mut best = mue(records, best_tau)?;
    for &tau in &candidates[1..] {
        let m = mue(records, tau)?;
        if m < best {
            best = m;
            best_tau = tau;
        }
    }
    Ok((best_tau, best))
}

/// Retained accuracy at threshold `tau`: accuracy over samples with
/// `unc <= tau`. Returns `(racc, retained_fraction)`; racc is `None`
/// when every sample is rejected.
pub fn racc(records: &[PredictionRecord], tau: f64) -> Result<(Option<f64>, f64), CoreError> {
    ensure_nonempty(records)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(CoreError::Input(format!("tau must be in [0,1], got {tau}")));
    }
    let retained: Vec<&PredictionRecord> = records.iter().filter(|r| r.unc <= tau).collect();
    let frac = retained.len() as f64 / records.len() as f64;
    if retained.is_empty() {
        return Ok((None, 0.0));
    }
    let correct = retained.iter().filter(|r| r.correct()).count();
    Ok((Some(correct as f64 / retained.len() as f64), frac))
}

/// Full report: ACC, ECE, MUE with tau*, RACC at tau*.
pub fn evaluate(records: &[PredictionRecord], bins: usize) -> Result<MetricsReport, CoreError> {
    let acc = accuracy(records)?;
    let ece_v = ece(records, bins)?;
    let (tau_star, mue_v) = optimal_threshold(records)?;
    let (racc_v, retained) = racc(records, tau_star)?;
    Ok(MetricsReport { acc, ece: ece_v, mue: mue_v, tau_star, racc: racc_v, retained_fraction: retained })
}

/// Serializes records as delimited text, one `pred,label,conf,unc` row
/// per record, with a fixed header.
pub fn records_to_text(records: &[PredictionRecord]) -> String {
    let mut s = String::from("pred,label,conf,unc\n");
    for r in records {
        s.push_str(&format!("{},{},{:.17e},{:.17e}\n", r.pred, r.label, r.conf, r.unc));
    }
    s
}

/// Parses the format written by [`records_to_text`].
pub fn records_from_text(text: &str) -> Result<Vec<PredictionRecord>, CoreError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "pred,label,conf,unc" {
                return Err(CoreError::Format(format!("bad header: {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(CoreError::Format(format!("line {}: expected 4 fields", i + 1)));
        }
        let parse_u = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CoreError::Format(format!("line {}: bad integer {s:?}", i + 1)))
        };
        let parse_f = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CoreError::Format(format!("line {}: bad float {s:?}", i + 1)))
        };
        out.push(PredictionRecord {
            pred: parse_u(parts[0])?,
            label: parse_u(parts[1])?,
            conf: parse_f(parts[2])?,
            unc: parse_f(parts[3])?,
        });
    }
    Ok(out)
}
