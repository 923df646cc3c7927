//! Dirichlet-evidence machinery: evidence activation, concentration
//! construction, closed-form Dirichlet KL, and the configurable loss
//! with exact evidence gradients.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::special::{digamma, lgamma, trigamma};
use crate::tensor::Tensor2;
use crate::CoreError;

/// Per-sample Dirichlet quantities derived from an evidence batch.
#[derive(Debug, Clone)]
pub struct DirichletBatch {
    pub classes: usize,
    /// Nonnegative evidence, one row per sample.
    pub evidence: Tensor2,
    /// Concentration alpha = evidence + 1.
    pub alpha: Tensor2,
    /// Strength S = sum_k alpha_k per sample.
    pub strength: Vec<f64>,
    /// Expected probabilities alpha / S.
    pub expected_prob: Tensor2,
    /// Vacuity u = K / S, in (0, 1].
    pub vacuity: Vec<f64>,
}

/// ReLU evidence activation: e_k = max(0, logit_k).
pub fn evidence_from_logits(logits: &Tensor2) -> Tensor2 {
    logits.map(|x| if x > 0.0 { x } else { 0.0 })
}

/// Builds per-sample alpha, strength, expected probabilities and vacuity.
pub fn dirichlet_from_evidence(evidence: &Tensor2) -> Result<DirichletBatch, CoreError> {
    if evidence.cols == 0 || evidence.rows == 0 {
        return Err(CoreError::Input("empty evidence batch".to_string()));
    }
    if evidence.data.iter().any(|&e| e < 0.0 || !e.is_finite()) {
        return Err(CoreError::Input("negative or non-finite evidence".to_string()));
    }
    let k = evidence.cols;
    let alpha = evidence.map(|e| e + 1.0);
    let mut strength = Vec::with_capacity(alpha.rows);
    let mut expected_prob = alpha.clone();
    let mut vacuity = Vec::with_capacity(alpha.rows);
    for r in 0..alpha.rows {
        let s: f64 = alpha.row(r).iter().sum();
        for p in expected_prob.row_mut(r) {
            *p /= s;
        }
        strength.push(s);
        vacuity.push(k as f64 / s);
    }
    Ok(DirichletBatch { classes: k, evidence: evidence.clone(), alpha, strength, expected_prob, vacuity })
}

/// Per-sample vacuity u = K/S.
pub fn uncertainty(batch: &DirichletBatch) -> &[f64] {
    &batch.vacuity
}

/// Closed-form KL(Dir(alpha) || Dir(alpha0)). Also reports whether any
/// entry sat below 1 (the convexity guarantee assumes entries >= 1; the
/// value is still computed for entries in (0, 1)).
pub fn kl_dirichlet_flagged(alpha: &[f64], alpha0: &[f64]) -> Result<(f64, bool), CoreError> {
    if alpha.len() != alpha0.len() || alpha.is_empty() {
        return Err(CoreError::Shape("kl_dirichlet: length mismatch or empty".to_string()));
    }
    let below_one = alpha.iter().chain(alpha0).any(|&a| a < 1.0);
    let s: f64 = alpha.iter().sum();
    let s0: f64 = alpha0.iter().sum();
    let mut v = lgamma(s)? - lgamma(s0)?;
    let psi_s = digamma(s)?;
    for (&a, &a0) in alpha.iter().zip(alpha0) {
        v += lgamma(a0)? - lgamma(a)?;
        v += (a - a0) * (digamma(a)? - psi_s);
    }
    // clamp tiny negative round-off on the diagonal
    if v < 0.0 && v > -1e-12 {
        v = 0.0;
    }
    Ok((v, below_one))
}

/// Closed-form Dirichlet KL; errors on nonpositive entries.
pub fn kl_dirichlet(alpha: &[f64], alpha0: &[f64]) -> Result<f64, CoreError> {
    Ok(kl_dirichlet_flagged(alpha, alpha0)?.0)
}

/// d KL / d alpha_k = (alpha_k - alpha0_k) psi1(alpha_k) - (S - S0) psi1(S)
fn kl_grad(alpha: &[f64], alpha0: &[f64], out: &mut [f64]) -> Result<(), CoreError> {
    let s: f64 = alpha.iter().sum();
    let s0: f64 = alpha0.iter().sum();
    let t_s = trigamma(s)?;
    for ((o, &a), &a0) in out.iter_mut().zip(alpha).zip(alpha0) {
        *o = (a - a0) * trigamma(a)? - (s - s0) * t_s;
    }
    Ok(())
}

/// Which data-fit term the loss uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitTerm {
    /// psi(S) - psi(alpha_y): cross-entropy under the Dirichlet expectation.
    ExpectedCrossEntropy,
    /// -ln p_hat_y on the expected probabilities.
    MeanProbCrossEntropy,
    /// Brier-style expected squared error with the Dirichlet variance term.
    Mse,
}

/// Loss configuration: KL coefficient, prior vector, fit term.
#[derive(Debug, Clone)]
pub struct EdlLossConfig {
    pub lambda: f64,
    pub alpha0: Vec<f64>,
    pub fit: FitTerm,
    /// When set, the true-class concentration is replaced by 1 inside the
    /// KL term (the original masked-KL variant). Off by default.
    pub mask_true_class: bool,
}

impl EdlLossConfig {
    pub fn new(lambda: f64, alpha0: Vec<f64>, fit: FitTerm) -> Result<Self, CoreError> {
        if !(lambda >= 0.0) {
            return Err(CoreError::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        if alpha0.iter().any(|&a| !(a >= 1.0)) {
            return Err(CoreError::Config("every alpha0 entry must be >= 1".to_string()));
        }
        Ok(EdlLossConfig { lambda, alpha0, fit, mask_true_class: false })
    }

    /// Uniform prior Dir(c, ..., c).
    pub fn uniform(lambda: f64, classes: usize, c: f64, fit: FitTerm) -> Result<Self, CoreError> {
        Self::new(lambda, vec![c; classes], fit)
    }
}

/// Scalar loss plus its exact gradient with respect to the evidence.
#[derive(Debug, Clone)]
pub struct EdlLossOutput {
    pub loss: f64,
    /// Mean per-sample fit term.
    pub fit: f64,
    /// Mean per-sample KL (unscaled by lambda).
    pub kl: f64,
    /// d loss / d evidence, same shape as the batch.
    pub grad_evidence: Tensor2,
    /// True if any KL input entry sat below 1.
    pub kl_below_one: bool,
}

/// Loss = mean_i fit_i + lambda * mean_i KL(alpha_i || alpha0).
pub fn edl_loss(
    batch: &DirichletBatch,
    labels: &[usize],
    cfg: &EdlLossConfig,
) -> Result<EdlLossOutput, CoreError> {
    let n = batch.alpha.rows;
    let k = batch.classes;
    if labels.len() != n {
        return Err(CoreError::Input(format!("{} labels for {} samples", labels.len(), n)));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(CoreError::Input(format!("label {bad} out of range for K={k}")));
    }
    if cfg.alpha0.len() != k {
        return Err(CoreError::Shape(format!(
            "alpha0 has {} entries for K={k}",
            cfg.alpha0.len()
        )));
    }

    let inv_n = 1.0 / n as f64;
    let mut fit_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut below_one = false;
    let mut grad = Tensor2::zeros(n, k);
    let mut kl_g = vec![0.0; k];
    let mut masked = vec![0.0; k];

    for i in 0..n {
        let alpha = batch.alpha.row(i);
        let s = batch.strength[i];
        let y = labels[i];

        // fit term and its alpha-gradient
        let grow = grad.row_mut(i);
        match cfg.fit {
            FitTerm::ExpectedCrossEntropy => {
                fit_sum += digamma(s)? - digamma(alpha[y])?;
                let t_s = trigamma(s)?;
                for g in grow.iter_mut() {
                    *g = t_s;
                }
                grow[y] -= trigamma(alpha[y])?;
            }
            FitTerm::MeanProbCrossEntropy => {
                fit_sum += libm::log(s) - libm::log(alpha[y]);
                let inv_s = 1.0 / s;
                for g in grow.iter_mut() {
                    *g = inv_s;
                }
                grow[y] -= 1.0 / alpha[y];
            }
            FitTerm::Mse => {
                let mut b_sum = 0.0;
                for (j, &a) in alpha.iter().enumerate() {
                    let p = a / s;
                    let t = if j == y { 1.0 } else { 0.0 };
                    fit_sum += (t - p) * (t - p) + p * (1.0 - p) / (s + 1.0);
                    b_sum += p * (1.0 - p);
                }
                for (kk, g) in grow.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, &a) in alpha.iter().enumerate() {
                        let p = a / s;
                        let t = if j == y { 1.0 } else { 0.0 };
                        let dp = (if j == kk { 1.0 } else { 0.0 } - p) / s;
                        acc += 2.0 * (p - t) * dp;
                        acc += (1.0 - 2.0 * p) * dp / (s + 1.0);
                    }
                    acc -= b_sum / ((s + 1.0) * (s + 1.0));
                    *g = acc;
                }
            }
        }

        // KL term and its alpha-gradient
        if cfg.lambda > 0.0 {
            if cfg.mask_true_class {
                masked.copy_from_slice(alpha);
                masked[y] = 1.0;
                let (v, f) = kl_dirichlet_flagged(&masked, &cfg.alpha0)?;
                kl_sum += v;
                below_one |= f;
                kl_grad(&masked, &cfg.alpha0, &mut kl_g)?;
                kl_g[y] = 0.0;
            } else {
                let (v, f) = kl_dirichlet_flagged(alpha, &cfg.alpha0)?;
                kl_sum += v;
                below_one |= f;
                kl_grad(alpha, &cfg.alpha0, &mut kl_g)?;
            }
            for (g, &kg) in grad.row_mut(i).iter_mut().zip(&kl_g) {
                *g += cfg.lambda * kg;
            }
        }
    }

    for g in grad.data.iter_mut() {
        *g *= inv_n;
    }
    let fit = fit_sum * inv_n;
    let kl = kl_sum * inv_n;
    Ok(EdlLossOutput { loss: fit + cfg.lambda * kl, fit, kl, grad_evidence: grad, kl_below_one: below_one })
}

/// Pushes an evidence gradient back through the ReLU evidence activation.
pub fn grad_logits_through_relu(grad_evidence: &Tensor2, logits: &Tensor2) -> Tensor2 {
    let mut g = grad_evidence.clone();
    for (gv, &l) in g.data.iter_mut().zip(&logits.data) {
        if l <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}
