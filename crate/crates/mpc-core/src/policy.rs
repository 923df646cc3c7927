//! The meta-policy controller: six-feature training state, two-headed
//! policy network, Gaussian pre-squash action sampling, rewards and the
//! REINFORCE update.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::metrics::MetricsReport;
use crate::nn::{hash_f64s, Activation, DenseLayer, Mlp};
use crate::rng::{standard_normal, SeededRng};
use crate::tensor::Tensor2;
use crate::CoreError;

pub const STATE_DIM: usize = 6;
/// Floor applied to the sampled KL coefficient.
pub const LAMBDA_FLOOR: f64 = 1e-3;
/// Upper squash scale for the KL coefficient head.
pub const LAMBDA_SCALE: f64 = 10.0;
/// L2 pull of the head parameters toward their zero init, relative to
/// the outer step size.
pub const HEAD_DECAY: f64 = 0.5;
/// Maximum global gradient norm for one policy update.
pub const POLICY_GRAD_CLIP: f64 = 1.0;

/// The six-feature meta-state fed to the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    /// [acc, mean_evidence, loss_feat, epoch_feat, val_acc_feat, hist_kl_feat]
    pub features: [f64; STATE_DIM],
}

/// Exponential moving averages carried across the run for the history
/// features and normalization scales. Decay 0.9 throughout.
#[derive(Debug, Clone)]
pub struct TrainingHistory {
    pub decay: f64,
    /// EMA of validation accuracy, initialized to 0.
    pub val_acc_ema: f64,
    /// EMA of applied lambda values, initialized to the initial lambda.
    pub lambda_ema: f64,
    /// EMA of observed training loss, seeded by the first observation.
    pub loss_scale: Option<f64>,
    /// EMA of observed mean evidence, seeded by the first observation.
    pub evidence_scale: Option<f64>,
}

impl TrainingHistory {
    pub fn new(initial_lambda: f64) -> Self {
        TrainingHistory {
            decay: 0.9,
            val_acc_ema: 0.0,
            lambda_ema: initial_lambda,
            loss_scale: None,
            evidence_scale: None,
        }
    }

    pub fn observe_val_acc(&mut self, acc: f64) {
        self.val_acc_ema = self.decay * self.val_acc_ema + (1.0 - self.decay) * acc;
    }

    pub fn observe_lambda(&mut self, lambda: f64) {
        self.lambda_ema = self.decay * self.lambda_ema + (1.0 - self.decay) * lambda;
    }

    fn observe_scale(slot: &mut Option<f64>, decay: f64, value: f64) -> f64 {
        let s = match *slot {
            None => value,
            Some(prev) => decay * prev + (1.0 - decay) * value,
        };
        *slot = Some(s);
        s
    }
}

/// Instantaneous batch statistics used to build the state.
#[derive(Debug, Clone, Copy)]
pub struct BatchStats {
    pub acc: f64,
    pub mean_evidence: f64,
    pub loss: f64,
}

/// Builds the six-feature state vector; updates the history's running
/// normalization scales with the new observations.
pub fn build_state(
    stats: BatchStats,
    history: &mut TrainingHistory,
    epoch: usize,
    total_epochs: usize,
) -> Result<StateVector, CoreError> {
    if !stats.acc.is_finite() || !stats.mean_evidence.is_finite() || !stats.loss.is_finite() {
        return Err(CoreError::NonFinite("batch statistic for state construction".to_string()));
    }
    let ev_scale = TrainingHistory::observe_scale(
        &mut history.evidence_scale,
        history.decay,
        stats.mean_evidence,
    );
    let loss_scale =
        TrainingHistory::observe_scale(&mut history.loss_scale, history.decay, stats.loss);
    let epoch_feat = if total_epochs <= 1 {
        0.0
    } else {
        epoch as f64 / (total_epochs - 1) as f64
    };
    let features = [
        stats.acc,
        if ev_scale.abs() > 1e-12 { stats.mean_evidence / ev_scale } else { 0.0 },
        if loss_scale.abs() > 1e-12 { stats.loss / loss_scale } else { 0.0 },
        epoch_feat,
        history.val_acc_ema,
        history.lambda_ema / LAMBDA_SCALE,
    ];
    if features.iter().any(|f| !f.is_finite()) {
        return Err(CoreError::NonFinite("state feature".to_string()));
    }
    Ok(StateVector { features })
}

/// Shared trunk (6 -> 128 -> 64, ReLU) with a KL-coefficient head and a
/// class-wise prior head. Heads start at zero so the initial action sits
/// at the sigmoid midpoint: lambda 5.0, every prior entry 1.5.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub trunk: Mlp,
    pub lambda_head: DenseLayer,
    pub prior_head: DenseLayer,
    pub classes: usize,
}

impl PolicyNet {
    pub fn new(classes: usize, rng: &mut SeededRng) -> Self {
        PolicyNet {
            trunk: Mlp::new(&[STATE_DIM, 128, 64], Activation::Relu, Activation::Relu, rng),
            lambda_head: DenseLayer::new_zeros(64, 1, Activation::Identity),
            prior_head: DenseLayer::new_zeros(64, classes, Activation::Identity),
            classes,
        }
    }

    /// Pre-squash head outputs; `[0]` is the lambda head, `[1..]` the
    /// prior head. Uses inference paths (no caches touched).
    pub fn forward_pre_squash(&self, state: &StateVector) -> Result<Vec<f64>, CoreError> {
        let x = Tensor2::from_vec(1, STATE_DIM, state.features.to_vec())?;
        let h = self.trunk.forward_inference(&x)?;
        let zl = self.lambda_head.forward_inference(&h)?;
        let zp = self.prior_head.forward_inference(&h)?;
        let mut out = Vec::with_capacity(1 + self.classes);
        out.push(zl.data[0]);
        out.extend_from_slice(&zp.data);
        Ok(out)
    }

    /// Squashed action means: lambda in (0, 10), priors in (1, 2).
    pub fn forward_means(&self, state: &StateVector) -> Result<(f64, Vec<f64>), CoreError> {
        let pre = self.forward_pre_squash(state)?;
        let (lambda, alpha0) = squash(&pre);
        Ok((lambda, alpha0))
    }

    pub fn param_hash(&self) -> u64 {
        let trunk = self
            .trunk
            .layers
            .iter()
            .flat_map(|l| l.w.data.iter().chain(&l.b));
        let heads = self
            .lambda_head
            .w
            .data
            .iter()
            .chain(&self.lambda_head.b)
            .chain(&self.prior_head.w.data)
            .chain(&self.prior_head.b);
        hash_f64s(trunk.chain(heads))
    }

    /// Text checkpoint: version tag, dims, then parameter arrays in a
    /// fixed order (trunk layers, lambda head, prior head; weights
    /// row-major, then bias).
    pub fn serialize(&self) -> String {
        let mut s = String::from("mpc-policy v1\n");
        s.push_str(&format!("classes {}\n", self.classes));
        let dump = |name: &str, l: &DenseLayer, s: &mut String| {
            s.push_str(&format!("layer {name} {} {}\n", l.w.rows, l.w.cols));
            for &v in l.w.data.iter().chain(&l.b) {
                s.push_str(&format!("{:.17e}\n", v));
            }
        };
        for (i, l) in self.trunk.layers.iter().enumerate() {
            dump(&format!("trunk{i}"), l, &mut s);
        }
        dump("lambda_head", &self.lambda_head, &mut s);
        dump("prior_head", &self.prior_head, &mut s);
        s
    }

    pub fn deserialize(text: &str) -> Result<Self, CoreError> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("mpc-policy v1") {
            return Err(CoreError::Format("missing policy checkpoint version tag".to_string()));
        }
        let classes_line = lines.next().unwrap_or_default();
        let classes: usize = classes_line
            .strip_prefix("classes ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CoreError::Format(format!("bad classes line: {classes_line:?}")))?;

        let read_layer = |lines: &mut core::str::Lines<'_>, want: &str, act: Activation| {
            let header = lines.next().unwrap_or_default();
            let parts: Vec<&str> = header.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "layer" || parts[1] != want {
                return Err(CoreError::Format(format!("bad layer header: {header:?}")));
            }
            let rows: usize = parts[2]
                .parse()
                .map_err(|_| CoreError::Format("bad layer rows".to_string()))?;
            let cols: usize = parts[3]
                .parse()
                .map_err(|_| CoreError::Format("bad layer cols".to_string()))?;
            let mut values = Vec::with_capacity(rows * cols + cols);
            for _ in 0..rows * cols + cols {
                let line = lines
                    .next()
                    .ok_or_else(|| CoreError::Format("truncated checkpoint".to_string()))?;
                values.push(
                    line.trim()
                        .parse::<f64>()
                        .map_err(|_| CoreError::Format(format!("bad value: {line:?}")))?,
                );
            }
            let b = values.split_off(rows * cols);
            let mut layer = DenseLayer::new_zeros(rows, cols, act);
            layer.w = Tensor2::from_vec(rows, cols, values)?;
            layer.b = b;
            Ok(layer)
        };

        let t0 = read_layer(&mut lines, "trunk0", Activation::Relu)?;
        let t1 = read_layer(&mut lines, "trunk1", Activation::Relu)?;
        let lambda_head = read_layer(&mut lines, "lambda_head", Activation::Identity)?;
        let prior_head = read_layer(&mut lines, "prior_head", Activation::Identity)?;
        if prior_head.out_dim() != classes {
            return Err(CoreError::Format("prior head width != classes".to_string()));
        }
        Ok(PolicyNet { trunk: Mlp { layers: vec![t0, t1] }, lambda_head, prior_head, classes })
    }
}

/// Maps a pre-squash vector to the bounded action. The sigmoid is
/// clamped into the open unit interval so extreme pre-squash values
/// cannot produce lambda = 10 or alpha0 at exactly 1 or 2.
pub fn squash(raw: &[f64]) -> (f64, Vec<f64>) {
    let sigmoid = |x: f64| (1.0 / (1.0 + libm::exp(-x))).clamp(1e-12, 1.0 - 1e-12);
    let lambda = (LAMBDA_SCALE * sigmoid(raw[0])).max(LAMBDA_FLOOR);
    let alpha0 = raw[1..].iter().map(|&z| sigmoid(z) + 1.0).collect();
    (lambda, alpha0)
}

/// A sampled hyperparameter configuration with its sampling log-density.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAction {
    pub lambda: f64,
    pub alpha0: Vec<f64>,
    /// Gaussian log-density of the pre-squash sample; 0 for sigma = 0.
    pub log_prob: f64,
    /// The pre-squash sample the log-density refers to.
    pub raw: Vec<f64>,
}

impl PolicyAction {
    /// Deterministic action for a fixed (lambda, alpha0) baseline run.
    pub fn fixed(lambda: f64, alpha0: Vec<f64>) -> Self {
        PolicyAction { lambda, alpha0, log_prob: 0.0, raw: Vec::new() }
    }

    pub fn alpha0_mean(&self) -> f64 {
        self.alpha0.iter().sum::<f64>() / self.alpha0.len() as f64
    }
}

/// Perturbs the pre-squash means with isotropic Gaussian noise and
/// squashes. `sigma = 0` returns the means exactly with log_prob 0.
pub fn sample_action(
    means_pre: &[f64],
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<PolicyAction, CoreError> {
    if sigma < 0.0 {
        return Err(CoreError::Config(format!("exploration sigma must be >= 0, got {sigma}")));
    }
    let raw: Vec<f64> = if sigma == 0.0 {
        means_pre.to_vec()
    } else {
        means_pre
            .iter()
            .map(|&m| m + sigma * standard_normal(rng))
            .collect()
    };
    let log_prob = gaussian_log_prob(&raw, means_pre, sigma);
    let (lambda, alpha0) = squash(&raw);
    Ok(PolicyAction { lambda, alpha0, log_prob, raw })
}

/// Log-density of `raw` under independent N(mean, sigma^2) per dimension.
pub fn gaussian_log_prob(raw: &[f64], means: &[f64], sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let d = raw.len() as f64;
    let mut sq = 0.0;
    for (&r, &m) in raw.iter().zip(means) {
        sq += (r - m) * (r - m);
    }
    -0.5 * d * libm::log(2.0 * core::f64::consts::PI * sigma * sigma)
        - sq / (2.0 * sigma * sigma)
}

/// How the reward combines the metric reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// R = dACC - b1 dECE - b2 dMUE against the previous evaluation.
    Delta,
    /// R = ACC - b1 ECE - b2 MUE of the current evaluation.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardComponents {
    pub d_acc: f64,
    pub d_ece: f64,
    pub d_mue: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub reward: f64,
}

/// Reward per the configured mode. In delta mode the first evaluation
/// (no predecessor) yields reward 0.
pub fn compute_reward(
    current: &MetricsReport,
    previous: Option<&MetricsReport>,
    beta1: f64,
    beta2: f64,
    mode: RewardMode,
) -> RewardComponents {
    match mode {
        RewardMode::Delta => match previous {
            None => RewardComponents { d_acc: 0.0, d_ece: 0.0, d_mue: 0.0, beta1, beta2, reward: 0.0 },
            Some(prev) => {
                let d_acc = current.acc - prev.acc;
                let d_ece = current.ece - prev.ece;
                let d_mue = current.mue - prev.mue;
                RewardComponents {
                    d_acc,
                    d_ece,
                    d_mue,
                    beta1,
                    beta2,
                    reward: d_acc - beta1 * d_ece - beta2 * d_mue,
                }
            }
        },
        RewardMode::Absolute => RewardComponents {
            d_acc: current.acc,
            d_ece: current.ece,
            d_mue: current.mue,
            beta1,
            beta2,
            reward: current.acc - beta1 * current.ece - beta2 * current.mue,
        },
    }
}

/// EMA reward baseline, decay 0.9. The pre-update value is used as b_t;
/// the observed reward is folded in afterwards.
#[derive(Debug, Clone)]
pub struct RewardBaseline {
    pub decay: f64,
    pub value: f64,
}

impl Default for RewardBaseline {
    fn default() -> Self {
        RewardBaseline { decay: 0.9, value: 0.0 }
    }
}

impl RewardBaseline {
    /// Returns b_t, then folds the reward into the EMA.
    pub fn advantage(&mut self, reward: f64) -> f64 {
        let b = self.value;
        self.value = self.decay * self.value + (1.0 - self.decay) * reward;
        reward - b
    }
}

/// One (state, action, reward) step of an episode.
#[derive(Debug, Clone)]
pub struct EpisodeStep {
    pub state: StateVector,
    pub action: PolicyAction,
    pub reward: f64,
}

/// Accumulates the advantage-weighted score gradient
/// sum_t grad log pi(a_t|s_t) * (R_t - b_t) into the policy's gradient
/// buffers (previous contents are cleared) without touching parameters.
pub fn score_gradients(
    policy: &mut PolicyNet,
    episode: &[EpisodeStep],
    baseline: &mut RewardBaseline,
    sigma: f64,
) -> Result<(), CoreError> {
    if sigma <= 0.0 {
        return Err(CoreError::Config(format!(
            "score gradient needs sigma > 0, got {sigma}"
        )));
    }
    policy.trunk.zero_grad();
    policy.lambda_head.zero_grad();
    policy.prior_head.zero_grad();

    let inv_var = 1.0 / (sigma * sigma);
    for step in episode {
        let adv = baseline.advantage(step.reward);
        let x = Tensor2::from_vec(1, STATE_DIM, step.state.features.to_vec())?;
        let h = policy.trunk.forward(&x)?;
        let zl = policy.lambda_head.forward(&h)?;
        let zp = policy.prior_head.forward(&h)?;
        if step.action.raw.len() != 1 + policy.classes {
            return Err(CoreError::Shape("action raw dims != policy heads".to_string()));
        }
        // d log pi / d mean_i = (raw_i - mean_i) / sigma^2, scaled by the advantage
        let up_l = Tensor2::from_vec(1, 1, vec![(step.action.raw[0] - zl.data[0]) * inv_var * adv])?;
        let up_p = Tensor2::from_vec(
            1,
            policy.classes,
            zp.data
                .iter()
                .enumerate()
                .map(|(i, &m)| (step.action.raw[1 + i] - m) * inv_var * adv)
                .collect(),
        )?;
        let dh_l = policy.lambda_head.backward(&up_l)?;
        let dh_p = policy.prior_head.backward(&up_p)?;
        let mut dh = dh_l;
        for (a, b) in dh.data.iter_mut().zip(&dh_p.data) {
            *a += b;
        }
        policy.trunk.backward(&dh)?;
    }
    Ok(())
}

/// REINFORCE ascent: theta += eta' * sum_t grad log pi(a_t|s_t) * (R_t - b_t).
///
/// Gradients flow through the Gaussian log-density of the pre-squash
/// means. With sigma = 0 the score function vanishes and parameters are
/// left untouched. Episodes containing a non-finite reward are rejected
/// whole.
pub fn reinforce_update(
    policy: &mut PolicyNet,
    episode: &[EpisodeStep],
    baseline: &mut RewardBaseline,
    eta_prime: f64,
    sigma: f64,
) -> Result<(), CoreError> {
    if episode.is_empty() {
        return Err(CoreError::Input("empty episode".to_string()));
    }
    if episode.iter().any(|s| !s.reward.is_finite()) {
        return Err(CoreError::NonFinite("episode reward".to_string()));
    }
    if sigma <= 0.0 {
        // degenerate policy: score function is identically zero
        for step in episode {
            baseline.advantage(step.reward);
        }
        return Ok(());
    }

    score_gradients(policy, episode, baseline, sigma)?;
    // global gradient-norm clip: a single lucky draw with a large
    // advantage must not fling the pre-squash means into saturation
    let mut norm_sq = 0.0;
    for l in policy
        .trunk
        .layers
        .iter()
        .chain([&policy.lambda_head, &policy.prior_head])
    {
        norm_sq += l.gw.data.iter().map(|g| g * g).sum::<f64>();
        norm_sq += l.gb.iter().map(|g| g * g).sum::<f64>();
    }
    let norm = libm::sqrt(norm_sq);
    let scale = if norm > POLICY_GRAD_CLIP { POLICY_GRAD_CLIP / norm } else { 1.0 };
    if scale < 1.0 {
        for l in policy
            .trunk
            .layers
            .iter_mut()
            .chain([&mut policy.lambda_head, &mut policy.prior_head])
        {
            for g in l.gw.data.iter_mut() {
                *g *= scale;
            }
            for g in l.gb.iter_mut() {
                *g *= scale;
            }
        }
    }

    // gradient ascent; the heads additionally decay toward their zero
    // init so a saturated squash (where the score signal vanishes) is
    // self-correcting rather than an absorbing state
    let ascend = |layer: &mut DenseLayer, decay: f64| {
        let keep = 1.0 - eta_prime * decay;
        for (p, g) in layer.w.data.iter_mut().zip(&layer.gw.data) {
            *p = keep * *p + eta_prime * g;
        }
        for (p, g) in layer.b.iter_mut().zip(&layer.gb) {
            *p = keep * *p + eta_prime * g;
        }
    };
    for l in &mut policy.trunk.layers {
        ascend(l, 0.0);
    }
    ascend(&mut policy.lambda_head, HEAD_DECAY);
    ascend(&mut policy.prior_head, HEAD_DECAY);
    Ok(())
}
