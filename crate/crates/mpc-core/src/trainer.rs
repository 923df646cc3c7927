//! Two-timescale training loop: an inner evidential classifier updated
//! every minibatch, and an outer meta-policy that re-tunes the KL
//! coefficient and Dirichlet prior at fixed epoch intervals from
//! validation rewards.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::datagen::{shuffle, Dataset};
use crate::evidential::{
    dirichlet_from_evidence, edl_loss, evidence_from_logits, grad_logits_through_relu,
    EdlLossConfig, FitTerm,
};
use crate::metrics::{evaluate, MetricsReport, PredictionRecord, DEFAULT_ECE_BINS};
use crate::nn::{Activation, ConvNet, Mlp};
use crate::optim::{OptimKind, Optimizer};
use crate::policy::{
    build_state, compute_reward, sample_action, BatchStats, EpisodeStep, PolicyAction, PolicyNet,
    RewardBaseline, RewardMode, StateVector, TrainingHistory, LAMBDA_SCALE,
};
use crate::rng::seeded;
use crate::tensor::Tensor2;
use crate::CoreError;

/// Monotonic time source for the per-epoch `seconds` column. The core
/// crate only ships the null clock; a wall clock lives with the CLI.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Always reads 0, making epoch logs byte-for-byte reproducible.
pub struct NullClock;

impl Clock for NullClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Inner-model architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum BackboneSpec {
    Mlp { hidden: Vec<usize> },
    /// Two conv+pool stages then a dense layer, for square images.
    Conv { side: usize, c1: usize, c2: usize },
}

/// A built backbone; logits out, no output activation.
#[derive(Debug, Clone)]
pub enum Backbone {
    Mlp(Mlp),
    Conv(ConvNet),
}

impl Backbone {
    pub fn build(
        spec: &BackboneSpec,
        in_dim: usize,
        classes: usize,
        rng: &mut crate::rng::SeededRng,
    ) -> Result<Backbone, CoreError> {
        match spec {
            BackboneSpec::Mlp { hidden } => {
                let mut dims = vec![in_dim];
                dims.extend_from_slice(hidden);
                dims.push(classes);
                let mut mlp = Mlp::new(&dims, Activation::Relu, Activation::Identity, rng);
                // positive logit bias keeps every ReLU evidence unit alive
                // at the start; a unit whose logit goes negative for all
                // inputs can never recover
                if let Some(last) = mlp.layers.last_mut() {
                    last.b.iter_mut().for_each(|b| *b = 1.0);
                }
                Ok(Backbone::Mlp(mlp))
            }
            BackboneSpec::Conv { side, c1, c2 } => {
                if side * side != in_dim {
                    return Err(CoreError::Shape(format!(
                        "conv backbone expects {side}x{side} = {} inputs, data has {in_dim}",
                        side * side
                    )));
                }
                if side % 4 != 0 {
                    return Err(CoreError::Shape(format!(
                        "conv backbone needs side divisible by 4, got {side}"
                    )));
                }
                let mut net = ConvNet::new(*side, *c1, *c2, classes, rng);
                net.fc.b.iter_mut().for_each(|b| *b = 1.0);
                Ok(Backbone::Conv(net))
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor2) -> Result<Tensor2, CoreError> {
        match self {
            Backbone::Mlp(m) => m.forward(x),
            Backbone::Conv(c) => c.forward(x),
        }
    }

    pub fn forward_inference(&mut self, x: &Tensor2) -> Result<Tensor2, CoreError> {
        match self {
            Backbone::Mlp(m) => m.forward_inference(x),
            Backbone::Conv(c) => c.forward_inference(x),
        }
    }

    pub fn backward(&mut self, upstream: &Tensor2) -> Result<(), CoreError> {
        match self {
            Backbone::Mlp(m) => m.backward(upstream).map(|_| ()),
            Backbone::Conv(c) => c.backward(upstream),
        }
    }

    pub fn zero_grad(&mut self) {
        match self {
            Backbone::Mlp(m) => m.zero_grad(),
            Backbone::Conv(c) => c.zero_grad(),
        }
    }

    pub fn params_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        match self {
            Backbone::Mlp(m) => m.params_grads(),
            Backbone::Conv(c) => c.params_grads(),
        }
    }

    pub fn param_hash(&self) -> u64 {
        match self {
            Backbone::Mlp(m) => m.param_hash(),
            Backbone::Conv(c) => c.param_hash(),
        }
    }
}

/// Who picks (lambda, alpha0): the meta-policy, or fixed values.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlMode {
    Mpc,
    Fixed { lambda: f64, alpha0: f64 },
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Inner (backbone) learning rate.
    pub inner_lr: f64,
    /// Outer (policy) learning rate eta'.
    pub outer_lr: f64,
    /// Policy update interval in epochs.
    pub interval: usize,
    /// Exploration noise on the pre-squash action.
    pub sigma: f64,
    /// Linearly anneal sigma to 0 across the run.
    pub sigma_decay: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub reward_mode: RewardMode,
    pub fit: FitTerm,
    pub mask_true_class: bool,
    pub ece_bins: usize,
    pub seed: u64,
    pub mode: ControlMode,
    pub backbone: BackboneSpec,
    pub optimizer: OptimKind,
    /// Experimental: resample the action every minibatch instead of once
    /// per interval. Rewards are still assigned at interval boundaries.
    pub per_batch_actions: bool,
    /// Record per-batch backbone hashes and per-epoch policy hashes
    /// (test instrumentation; costs one hash pass per batch).
    pub record_hashes: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            inner_lr: 1e-3,
            outer_lr: 1e-2,
            interval: 3,
            sigma: 0.1,
            sigma_decay: false,
            beta1: 1.0,
            beta2: 1.0,
            reward_mode: RewardMode::Delta,
            fit: FitTerm::ExpectedCrossEntropy,
            mask_true_class: false,
            ece_bins: DEFAULT_ECE_BINS,
            seed: 0,
            mode: ControlMode::Mpc,
            backbone: BackboneSpec::Mlp { hidden: vec![64] },
            optimizer: OptimKind::adam_default(),
            per_batch_actions: false,
            record_hashes: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.epochs == 0 || self.batch_size == 0 || self.interval == 0 || self.ece_bins == 0 {
            return Err(CoreError::Config(
                "epochs, batch_size, interval and ece_bins must all be >= 1".to_string(),
            ));
        }
        if !(self.inner_lr > 0.0) || !(self.outer_lr > 0.0) {
            return Err(CoreError::Config("learning rates must be positive".to_string()));
        }
        if !(self.sigma >= 0.0) {
            return Err(CoreError::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !self.beta1.is_finite() || !self.beta2.is_finite() {
            return Err(CoreError::Config("non-finite reward weight".to_string()));
        }
        if let ControlMode::Fixed { lambda, alpha0 } = self.mode {
            if !(lambda >= 0.0) {
                return Err(CoreError::Config(format!("fixed lambda must be >= 0, got {lambda}")));
            }
            if !(alpha0 >= 1.0) {
                return Err(CoreError::Config(format!("fixed alpha0 must be >= 1, got {alpha0}")));
            }
        }
        Ok(())
    }
}

/// One epoch's summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub acc: f64,
    pub ece: f64,
    pub mue: f64,
    pub tau: f64,
    pub racc: Option<f64>,
    pub lambda: f64,
    pub alpha0_mean: f64,
    pub reward: f64,
    pub seconds: f64,
}

pub const EPOCH_LOG_HEADER: &str = "epoch,loss,acc,ece,mue,tau,racc,lambda,alpha0_mean,reward,seconds";

impl EpochLog {
    pub fn to_csv_row(&self) -> String {
        let racc = match self.racc {
            Some(v) => format!("{v:.6}"),
            None => "nan".to_string(),
        };
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{racc},{:.6},{:.6},{:.6},{:.3}",
            self.epoch,
            self.loss,
            self.acc,
            self.ece,
            self.mue,
            self.tau,
            self.lambda,
            self.alpha0_mean,
            self.reward,
            self.seconds
        )
    }
}

pub fn logs_to_text(logs: &[EpochLog]) -> String {
    let mut s = String::from(EPOCH_LOG_HEADER);
    s.push('\n');
    for l in logs {
        s.push_str(&l.to_csv_row());
        s.push('\n');
    }
    s
}

/// Mean / sample standard deviation / coefficient of variation of a
/// series tail. CV is `None` when the mean is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStats {
    pub mean: f64,
    pub std: f64,
    pub cv_percent: Option<f64>,
    pub window: usize,
}

/// Stats over the final `fraction` of a series (window at least 2).
pub fn tail_stats(series: &[f64], fraction: f64) -> Result<SeriesStats, CoreError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CoreError::Input(format!("fraction must be in (0, 1], got {fraction}")));
    }
    if series.len() < 2 {
        return Err(CoreError::UndefinedMetric(format!(
            "need at least 2 points for tail stats, have {}",
            series.len()
        )));
    }
    let window = libm::ceil(series.len() as f64 * fraction) as usize;
    let window = window.clamp(2, series.len());
    let tail = &series[series.len() - window..];
    let mean = tail.iter().sum::<f64>() / window as f64;
    let var = tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (window - 1) as f64;
    let std = libm::sqrt(var);
    let cv_percent = if mean == 0.0 { None } else { Some(std / mean.abs() * 100.0) };
    Ok(SeriesStats { mean, std, cv_percent, window })
}

#[derive(Debug, Clone)]
pub struct ConvergenceStats {
    pub lambda: SeriesStats,
    pub alpha0: SeriesStats,
    pub val_acc: SeriesStats,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub final_report: MetricsReport,
    pub final_records: Vec<PredictionRecord>,
    pub stats: ConvergenceStats,
    pub policy: Option<PolicyNet>,
    pub backbone: Backbone,
    pub skipped_batches: usize,
    /// Backbone parameter hash after every optimizer step
    /// (`record_hashes` only).
    pub batch_backbone_hashes: Vec<u64>,
    /// Policy parameter hash after every epoch (`record_hashes` only).
    pub epoch_policy_hashes: Vec<u64>,
}

/// One minibatch gradient step. Returns `Ok(None)` (and leaves the model
/// untouched) when the forward pass or loss goes non-finite.
pub fn inner_step(
    model: &mut Backbone,
    x: &Tensor2,
    y: &[usize],
    cfg: &EdlLossConfig,
    opt: &mut Optimizer,
) -> Result<Option<f64>, CoreError> {
    let logits = model.forward(x)?;
    if !logits.is_finite() {
        return Ok(None);
    }
    let evidence = evidence_from_logits(&logits);
    let batch = dirichlet_from_evidence(&evidence)?;
    let out = edl_loss(&batch, y, cfg)?;
    if !out.loss.is_finite() || !out.grad_evidence.is_finite() {
        return Ok(None);
    }
    let grad = grad_logits_through_relu(&out.grad_evidence, &logits);
    model.zero_grad();
    model.backward(&grad)?;
    match opt.step(&mut model.params_grads()) {
        Ok(()) => Ok(Some(out.loss)),
        Err(CoreError::NonFinite(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores a dataset in chunks and computes the metric suite.
pub fn evaluate_model(
    model: &mut Backbone,
    data: &Dataset,
    bins: usize,
) -> Result<(Vec<PredictionRecord>, MetricsReport), CoreError> {
    let mut records = Vec::with_capacity(data.len());
    let dim = data.dim();
    let chunk = 512;
    let mut at = 0;
    while at < data.len() {
        let n = chunk.min(data.len() - at);
        let mut x = Tensor2::zeros(n, dim);
        x.data.copy_from_slice(&data.features.data[at * dim..(at + n) * dim]);
        let logits = model.forward_inference(&x)?;
        if !logits.is_finite() {
            return Err(CoreError::NonFinite("evaluation logits".to_string()));
        }
        let batch = dirichlet_from_evidence(&evidence_from_logits(&logits))?;
        for i in 0..n {
            let probs = batch.expected_prob.row(i);
            let (mut pred, mut conf) = (0, probs[0]);
            for (k, &p) in probs.iter().enumerate().skip(1) {
                if p > conf {
                    conf = p;
                    pred = k;
                }
            }
            records.push(PredictionRecord {
                pred,
                label: data.labels[at + i],
                conf,
                unc: batch.vacuity[i],
            });
        }
        at += n;
    }
    let report = evaluate(&records, bins)?;
    Ok((records, report))
}

/// Vacuity of unlabelled features (for OOD rejection).
pub fn eval_vacuity(model: &mut Backbone, features: &Tensor2) -> Result<Vec<f64>, CoreError> {
    let mut out = Vec::with_capacity(features.rows);
    let chunk = 512;
    let mut at = 0;
    while at < features.rows {
        let n = chunk.min(features.rows - at);
        let mut x = Tensor2::zeros(n, features.cols);
        x.data
            .copy_from_slice(&features.data[at * features.cols..(at + n) * features.cols]);
        let logits = model.forward_inference(&x)?;
        let batch = dirichlet_from_evidence(&evidence_from_logits(&logits))?;
        out.extend_from_slice(&batch.vacuity);
        at += n;
    }
    Ok(out)
}

/// Drains a step buffer into one policy update. Returns false (no-op)
/// when the buffer is empty.
pub fn outer_step(
    policy: &mut PolicyNet,
    buffer: &mut Vec<EpisodeStep>,
    baseline: &mut RewardBaseline,
    eta_prime: f64,
    sigma: f64,
) -> Result<bool, CoreError> {
    if buffer.is_empty() {
        return Ok(false);
    }
    crate::policy::reinforce_update(policy, buffer, baseline, eta_prime, sigma)?;
    buffer.clear();
    Ok(true)
}

/// Uncertainty-ranked accuracy on in-distribution records plus the OOD
/// rejection rate at a vacuity threshold.
#[derive(Debug, Clone)]
pub struct OodReport {
    /// (retained percentage, accuracy among the lowest-uncertainty slice).
    pub topk: Vec<(f64, f64)>,
    pub tau: f64,
    /// Fraction of OOD samples with vacuity above tau.
    pub reject_rate: f64,
}

pub const OOD_TOPK_PERCENTS: [f64; 6] = [10.0, 20.0, 30.0, 50.0, 80.0, 100.0];

pub fn ood_report(
    records: &[PredictionRecord],
    ood_vacuity: &[f64],
    tau: f64,
) -> Result<OodReport, CoreError> {
    if records.is_empty() || ood_vacuity.is_empty() {
        return Err(CoreError::UndefinedMetric("empty in-distribution or OOD set".to_string()));
    }
    let mut sorted: Vec<&PredictionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.unc.partial_cmp(&b.unc).unwrap_or(core::cmp::Ordering::Equal));
    let topk = OOD_TOPK_PERCENTS
        .iter()
        .map(|&pct| {
            let take = ((records.len() as f64 * pct / 100.0) as usize).max(1).min(records.len());
            let correct = sorted[..take].iter().filter(|r| r.correct()).count();
            (pct, correct as f64 / take as f64)
        })
        .collect();
    let rejected = ood_vacuity.iter().filter(|&&u| u > tau).count();
    Ok(OodReport { topk, tau, reject_rate: rejected as f64 / ood_vacuity.len() as f64 })
}

fn check_dataset(data: &Dataset, classes: usize, dim: usize, what: &str) -> Result<(), CoreError> {
    if data.is_empty() {
        return Err(CoreError::Input(format!("{what} set is empty")));
    }
    if data.dim() != dim || data.classes != classes {
        return Err(CoreError::Input(format!(
            "{what} set shape ({} features, {} classes) disagrees with train ({dim}, {classes})",
            data.dim(),
            data.classes
        )));
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= classes) {
        return Err(CoreError::Input(format!("{what} label {bad} out of range for K={classes}")));
    }
    Ok(())
}

/// Batch statistics feeding the policy state: accuracy, mean evidence and
/// loss of one minibatch under the given loss configuration.
fn batch_statistics(
    model: &mut Backbone,
    x: &Tensor2,
    y: &[usize],
    cfg: &EdlLossConfig,
) -> Result<BatchStats, CoreError> {
    let logits = model.forward_inference(x)?;
    if !logits.is_finite() {
        return Err(CoreError::NonFinite("logits while building policy state".to_string()));
    }
    let evidence = evidence_from_logits(&logits);
    let batch = dirichlet_from_evidence(&evidence)?;
    let out = edl_loss(&batch, y, cfg)?;
    let mut correct = 0;
    for (i, &label) in y.iter().enumerate() {
        let probs = batch.expected_prob.row(i);
        let pred = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(core::cmp::Ordering::Equal))
            .map(|(k, _)| k)
            .unwrap_or(0);
        if pred == label {
            correct += 1;
        }
    }
    let mean_evidence = evidence.data.iter().sum::<f64>() / evidence.data.len() as f64;
    Ok(BatchStats { acc: correct as f64 / y.len() as f64, mean_evidence, loss: out.loss })
}

fn gather_batch(data: &Dataset, ids: &[usize]) -> (Tensor2, Vec<usize>) {
    let dim = data.dim();
    let mut x = Tensor2::zeros(ids.len(), dim);
    let mut y = Vec::with_capacity(ids.len());
    for (r, &i) in ids.iter().enumerate() {
        x.row_mut(r).copy_from_slice(data.features.row(i));
        y.push(data.labels[i]);
    }
    (x, y)
}

/// The full two-timescale loop.
pub fn run_training(
    cfg: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
    clock: &dyn Clock,
) -> Result<TrainOutcome, CoreError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(CoreError::Input("training set is empty".to_string()));
    }
    let classes = train.classes;
    let dim = train.dim();
    if classes < 2 {
        return Err(CoreError::Input("need at least two classes".to_string()));
    }
    check_dataset(train, classes, dim, "train")?;
    check_dataset(val, classes, dim, "validation")?;

    let mut rng = seeded(cfg.seed);
    let mut backbone = Backbone::build(&cfg.backbone, dim, classes, &mut rng)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.inner_lr);

    let initial_lambda = match cfg.mode {
        ControlMode::Mpc => LAMBDA_SCALE / 2.0,
        ControlMode::Fixed { lambda, .. } => lambda,
    };
    let mut policy = match cfg.mode {
        ControlMode::Mpc => Some(PolicyNet::new(classes, &mut rng)),
        ControlMode::Fixed { .. } => None,
    };
    let mut history = TrainingHistory::new(initial_lambda);
    let mut baseline = RewardBaseline::default();

    let mut action = match cfg.mode {
        ControlMode::Mpc => PolicyAction::fixed(LAMBDA_SCALE / 2.0, vec![1.5; classes]),
        ControlMode::Fixed { lambda, alpha0 } => PolicyAction::fixed(lambda, vec![alpha0; classes]),
    };
    let make_loss_cfg = |a: &PolicyAction, c: &TrainConfig| -> Result<EdlLossConfig, CoreError> {
        let mut lc = EdlLossConfig::new(a.lambda, a.alpha0.clone(), c.fit)?;
        lc.mask_true_class = c.mask_true_class;
        Ok(lc)
    };

    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut lambda_series = Vec::with_capacity(cfg.epochs);
    let mut alpha0_series = Vec::with_capacity(cfg.epochs);
    let mut acc_series = Vec::with_capacity(cfg.epochs);
    let mut prev_boundary_report: Option<MetricsReport> = None;
    // sampled steps awaiting their interval reward, plus the sigma used
    let mut pending: Vec<(StateVector, PolicyAction)> = Vec::new();
    let mut pending_sigma = cfg.sigma;
    let mut buffer: Vec<EpisodeStep> = Vec::new();
    let mut skipped_total = 0usize;
    let mut batch_backbone_hashes = Vec::new();
    let mut epoch_policy_hashes = Vec::new();
    let mut final_records = Vec::new();
    let mut final_report = None;

    let mut indices: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        let epoch_t0 = clock.seconds();
        let sigma_t = if cfg.sigma_decay {
            cfg.sigma * (1.0 - epoch as f64 / cfg.epochs as f64)
        } else {
            cfg.sigma
        };

        shuffle(&mut indices, &mut rng);

        // interval boundary: pick this interval's action
        if epoch % cfg.interval == 0 {
            if let Some(pol) = policy.as_mut() {
                let probe = &indices[..cfg.batch_size.min(indices.len())];
                let (px, py) = gather_batch(train, probe);
                let stats_cfg = make_loss_cfg(&action, cfg)?;
                let stats = batch_statistics(&mut backbone, &px, &py, &stats_cfg)?;
                let state = build_state(stats, &mut history, epoch, cfg.epochs)?;
                let means = pol.forward_pre_squash(&state)?;
                action = sample_action(&means, sigma_t, &mut rng)?;
                pending.push((state, action.clone()));
                pending_sigma = sigma_t;
            }
            history.observe_lambda(action.lambda);
        }

        let mut loss_cfg = make_loss_cfg(&action, cfg)?;
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        let mut skipped = 0usize;
        let mut lambda_applied_sum = 0.0;
        let mut alpha0_applied_sum = 0.0;
        let mut batches = 0usize;

        for ids in indices.chunks(cfg.batch_size) {
            if cfg.per_batch_actions && policy.is_some() {
                // experimental per-batch resampling from the boundary state
                if let (Some(pol), Some((state, _))) = (policy.as_ref(), pending.last()) {
                    let means = pol.forward_pre_squash(state)?;
                    let fresh = sample_action(&means, sigma_t, &mut rng)?;
                    pending.push((state.clone(), fresh.clone()));
                    loss_cfg = make_loss_cfg(&fresh, cfg)?;
                    lambda_applied_sum += fresh.lambda;
                    alpha0_applied_sum += fresh.alpha0_mean();
                }
            } else {
                lambda_applied_sum += action.lambda;
                alpha0_applied_sum += action.alpha0_mean();
            }
            batches += 1;
            let (x, y) = gather_batch(train, ids);
            match inner_step(&mut backbone, &x, &y, &loss_cfg, &mut opt)? {
                Some(loss) => {
                    loss_sum += loss;
                    loss_count += 1;
                }
                None => skipped += 1,
            }
            if cfg.record_hashes {
                batch_backbone_hashes.push(backbone.param_hash());
            }
        }
        skipped_total += skipped;
        if loss_count == 0 {
            return Err(CoreError::Divergence(format!(
                "every minibatch of epoch {epoch} produced a non-finite loss"
            )));
        }
        let epoch_loss = loss_sum / loss_count as f64;
        let lambda_applied = lambda_applied_sum / batches as f64;
        let alpha0_applied = alpha0_applied_sum / batches as f64;

        let (records, report) = match evaluate_model(&mut backbone, val, cfg.ece_bins) {
            Ok(v) => v,
            Err(CoreError::NonFinite(_)) => {
                return Err(CoreError::Divergence(format!(
                    "non-finite validation scores at epoch {epoch}"
                )))
            }
            Err(e) => return Err(e),
        };
        history.observe_val_acc(report.acc);

        let boundary_end = (epoch + 1) % cfg.interval == 0 || epoch + 1 == cfg.epochs;
        let mut reward_val = 0.0;
        if boundary_end {
            let comps = compute_reward(
                &report,
                prev_boundary_report.as_ref(),
                cfg.beta1,
                cfg.beta2,
                cfg.reward_mode,
            );
            reward_val = comps.reward;
            prev_boundary_report = Some(report.clone());
            if let Some(pol) = policy.as_mut() {
                for (state, act) in pending.drain(..) {
                    buffer.push(EpisodeStep { state, action: act, reward: reward_val });
                }
                outer_step(pol, &mut buffer, &mut baseline, cfg.outer_lr, pending_sigma)?;
            }
        }
        if cfg.record_hashes {
            epoch_policy_hashes.push(policy.as_ref().map(|p| p.param_hash()).unwrap_or(0));
        }

        lambda_series.push(lambda_applied);
        alpha0_series.push(alpha0_applied);
        acc_series.push(report.acc);
        logs.push(EpochLog {
            epoch,
            loss: epoch_loss,
            acc: report.acc,
            ece: report.ece,
            mue: report.mue,
            tau: report.tau_star,
            racc: report.racc,
            lambda: lambda_applied,
            alpha0_mean: alpha0_applied,
            reward: reward_val,
            seconds: clock.seconds() - epoch_t0,
        });
        final_records = records;
        final_report = Some(report);
    }

    let fraction = 0.2;
    let stats = ConvergenceStats {
        lambda: tail_stats(&lambda_series, fraction)
            .unwrap_or(SeriesStats { mean: lambda_series[0], std: 0.0, cv_percent: Some(0.0), window: 1 }),
        alpha0: tail_stats(&alpha0_series, fraction)
            .unwrap_or(SeriesStats { mean: alpha0_series[0], std: 0.0, cv_percent: Some(0.0), window: 1 }),
        val_acc: tail_stats(&acc_series, fraction)
            .unwrap_or(SeriesStats { mean: acc_series[0], std: 0.0, cv_percent: Some(0.0), window: 1 }),
    };

    Ok(TrainOutcome {
        logs,
        final_report: final_report.expect("at least one epoch ran"),
        final_records,
        stats,
        policy,
        backbone,
        skipped_batches: skipped_total,
        batch_backbone_hashes,
        epoch_policy_hashes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_blobs;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 4,
            batch_size: 32,
            interval: 2,
            backbone: BackboneSpec::Mlp { hidden: vec![16] },
            ..TrainConfig::default()
        }
    }

    fn small_data() -> (Dataset, Dataset) {
        let d = gen_blobs(2, 80, 2, 0.25, 11).unwrap();
        d.split(120, 3).unwrap()
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut c = small_cfg();
        c.epochs = 0;
        assert!(matches!(c.validate(), Err(CoreError::Config(_))));
        let mut c = small_cfg();
        c.inner_lr = -1.0;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.sigma = -0.1;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.mode = ControlMode::Fixed { lambda: 0.1, alpha0: 0.5 };
        assert!(c.validate().is_err());
    }

    #[test]
    fn fixed_mode_learns_separable_blobs() {
        let (tr, va) = small_data();
        let mut cfg = small_cfg();
        cfg.epochs = 60;
        cfg.seed = 1;
        cfg.mode = ControlMode::Fixed { lambda: 0.1, alpha0: 1.0 };
        let out = run_training(&cfg, &tr, &va, &NullClock).unwrap();
        assert!(out.final_report.acc > 0.9, "acc {}", out.final_report.acc);
        assert_eq!(out.logs.len(), 60);
        assert!(out.policy.is_none());
    }

    #[test]
    fn mpc_mode_runs_and_touches_policy() {
        let (tr, va) = small_data();
        let mut cfg = small_cfg();
        cfg.record_hashes = true;
        // absolute reward: the very first boundary already carries a
        // non-zero advantage (delta mode starts at reward 0 by design)
        cfg.reward_mode = RewardMode::Absolute;
        let out = run_training(&cfg, &tr, &va, &NullClock).unwrap();
        assert!(out.policy.is_some());
        // policy hash constant inside an interval, changed across the
        // boundary update at the end of epochs 1 and 3
        let h = &out.epoch_policy_hashes;
        assert_eq!(h.len(), 4);
        assert_ne!(h[0], h[1], "update at end of epoch 1");
        assert_eq!(h[1], h[2], "no update inside the interval");
        assert_ne!(h[2], h[3], "update at end of epoch 3");
    }

    #[test]
    fn backbone_changes_every_batch() {
        let (tr, va) = small_data();
        let mut cfg = small_cfg();
        cfg.epochs = 2;
        cfg.record_hashes = true;
        let out = run_training(&cfg, &tr, &va, &NullClock).unwrap();
        assert!(out.batch_backbone_hashes.len() >= 4);
        for w in out.batch_backbone_hashes.windows(2) {
            assert_ne!(w[0], w[1], "inner model must move every minibatch");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (tr, va) = small_data();
        let cfg = small_cfg();
        let a = run_training(&cfg, &tr, &va, &NullClock).unwrap();
        let b = run_training(&cfg, &tr, &va, &NullClock).unwrap();
        assert_eq!(logs_to_text(&a.logs), logs_to_text(&b.logs));
        assert_eq!(a.backbone.param_hash(), b.backbone.param_hash());
        let mut cfg2 = small_cfg();
        cfg2.seed = 99;
        let c = run_training(&cfg2, &tr, &va, &NullClock).unwrap();
        assert_ne!(a.backbone.param_hash(), c.backbone.param_hash());
    }

    #[test]
    fn interval_action_constant_within_interval() {
        let (tr, va) = small_data();
        let mut cfg = small_cfg();
        cfg.epochs = 6;
        cfg.interval = 3;
        let out = run_training(&cfg, &tr, &va, &NullClock).unwrap();
        let l = &out.logs;
        assert_eq!(l[0].lambda, l[1].lambda);
        assert_eq!(l[1].lambda, l[2].lambda);
        assert_eq!(l[3].lambda, l[4].lambda);
    }

    #[test]
    fn divergence_guard_fires() {
        let (tr, va) = small_data();
        let mut cfg = small_cfg();
        cfg.optimizer = OptimKind::Sgd;
        cfg.inner_lr = 1e308;
        cfg.mode = ControlMode::Fixed { lambda: 1.0, alpha0: 1.0 };
        cfg.epochs = 3;
        let err = run_training(&cfg, &tr, &va, &NullClock).unwrap_err();
        assert!(matches!(err, CoreError::Divergence(_)), "got {err:?}");
    }

    #[test]
    fn mismatched_validation_rejected() {
        let (tr, _) = small_data();
        let other = gen_blobs(2, 10, 3, 0.2, 5).unwrap();
        let cfg = small_cfg();
        assert!(matches!(
            run_training(&cfg, &tr, &other, &NullClock),
            Err(CoreError::Input(_))
        ));
    }

    #[test]
    fn tail_stats_reference_values() {
        let s = tail_stats(&[1.0, 2.0, 3.0], 1.0).unwrap();
        assert!((s.mean - 2.0).abs() < 1e-12);
        assert!((s.std - 1.0).abs() < 1e-12);
        assert!((s.cv_percent.unwrap() - 50.0).abs() < 1e-12);
        // final 20% of a 10-long series is the last 2 points
        let s = tail_stats(&[0.0; 10], 0.2).unwrap();
        assert_eq!(s.window, 2);
        assert!(s.cv_percent.is_none());
        assert!(tail_stats(&[1.0], 0.2).is_err());
    }

    #[test]
    fn epoch_log_format() {
        let log = EpochLog {
            epoch: 3,
            loss: 0.5,
            acc: 0.875,
            ece: 0.01,
            mue: 0.02,
            tau: 0.3,
            racc: None,
            lambda: 5.0,
            alpha0_mean: 1.5,
            reward: -0.125,
            seconds: 0.0,
        };
        assert_eq!(
            log.to_csv_row(),
            "3,0.500000,0.875000,0.010000,0.020000,0.300000,nan,5.000000,1.500000,-0.125000,0.000"
        );
        let text = logs_to_text(&[log]);
        assert!(text.starts_with(EPOCH_LOG_HEADER));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn ood_report_hand_example() {
        // 4 in-dist records ranked by unc: correct, correct, wrong, correct
        let recs = [
            PredictionRecord { pred: 0, label: 0, conf: 0.9, unc: 0.1 },
            PredictionRecord { pred: 1, label: 1, conf: 0.8, unc: 0.2 },
            PredictionRecord { pred: 0, label: 1, conf: 0.7, unc: 0.3 },
            PredictionRecord { pred: 1, label: 1, conf: 0.6, unc: 0.4 },
        ];
        let ood = [0.5, 0.9, 0.05, 0.8];
        let rep = ood_report(&recs, &ood, 0.45).unwrap();
        // top 10/20/30% -> 1 record (max guard), top 50% -> 2, 80% -> 3, 100% -> 4
        assert_eq!(rep.topk[0], (10.0, 1.0));
        assert_eq!(rep.topk[3], (50.0, 1.0));
        assert!((rep.topk[4].1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rep.topk[5], (100.0, 0.75));
        assert_eq!(rep.reject_rate, 0.75);
        assert!(ood_report(&recs, &[], 0.5).is_err());
    }

    #[test]
    fn per_batch_actions_mode_runs() {
        let (tr, va) = small_data();
        let mut cfg = small_cfg();
        cfg.per_batch_actions = true;
        let out = run_training(&cfg, &tr, &va, &NullClock).unwrap();
        assert_eq!(out.logs.len(), 4);
    }

    #[test]
    fn conv_backbone_spec_checked() {
        let mut rng = seeded(1);
        assert!(Backbone::build(&BackboneSpec::Conv { side: 8, c1: 2, c2: 2 }, 65, 2, &mut rng).is_err());
        assert!(Backbone::build(&BackboneSpec::Conv { side: 6, c1: 2, c2: 2 }, 36, 2, &mut rng).is_err());
        assert!(Backbone::build(&BackboneSpec::Conv { side: 8, c1: 2, c2: 2 }, 64, 2, &mut rng).is_ok());
    }
}
