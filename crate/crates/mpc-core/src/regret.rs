//! Online meta-parameter selection viewed as projected online gradient
//! descent over the 2-D action box (lambda, prior strength), with empirical
//! regret accounting against the best fixed action in hindsight and a check
//! of the sublinear bound R_T <= G * D * sqrt(T).

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::Rng;

use crate::rng::seeded;
use crate::CoreError;

/// Axis-aligned feasible box for (lambda, alpha0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionBox {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Default for ActionBox {
    fn default() -> Self {
        ActionBox { lo: [0.01, 1.0], hi: [10.0, 100.0] }
    }
}

impl ActionBox {
    pub fn validate(&self) -> Result<(), CoreError> {
        for i in 0..2 {
            if !(self.lo[i] < self.hi[i]) || !self.lo[i].is_finite() || !self.hi[i].is_finite() {
                return Err(CoreError::Input(format!(
                    "degenerate action box on axis {i}: [{}, {}]",
                    self.lo[i], self.hi[i]
                )));
            }
        }
        Ok(())
    }

    /// Euclidean diameter (corner to corner).
    pub fn diameter(&self) -> f64 {
        let dx = self.hi[0] - self.lo[0];
        let dy = self.hi[1] - self.lo[1];
        libm::sqrt(dx * dx + dy * dy)
    }

    pub fn project(&self, x: [f64; 2]) -> [f64; 2] {
        [x[0].clamp(self.lo[0], self.hi[0]), x[1].clamp(self.lo[1], self.hi[1])]
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.lo[0] + self.hi[0]) / 2.0, (self.lo[1] + self.hi[1]) / 2.0]
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        (0..2).all(|i| x[i] >= self.lo[i] - 1e-12 && x[i] <= self.hi[i] + 1e-12)
    }
}

/// Convex per-round loss families. All are drawn up front (oblivious
/// adversary), so the theory step size can use the realized gradient bound.
#[derive(Debug, Clone)]
pub enum LossFamily {
    /// f_t(x) = a_t/2 * ||x - c_t||^2 with c_t uniform in the box and
    /// a_t uniform in [0.5, 1.5].
    Quadratic { seed: u64 },
    /// f_t(x) = g_t . x with g_t uniform in [-1, 1]^2.
    Linear { seed: u64 },
    /// Linear losses replaying a recorded gradient sequence (e.g. traced
    /// from a training run).
    Replay { grads: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, Copy)]
enum Round {
    Quad { a: f64, c: [f64; 2] },
    Lin { g: [f64; 2] },
}

impl Round {
    fn value(&self, x: [f64; 2]) -> f64 {
        match self {
            Round::Quad { a, c } => {
                let d0 = x[0] - c[0];
                let d1 = x[1] - c[1];
                a / 2.0 * (d0 * d0 + d1 * d1)
            }
            Round::Lin { g } => g[0] * x[0] + g[1] * x[1],
        }
    }

    fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            Round::Quad { a, c } => [a * (x[0] - c[0]), a * (x[1] - c[1])],
            Round::Lin { g } => *g,
        }
    }

    /// Largest gradient norm attainable anywhere in the box.
    fn sup_grad_norm(&self, bx: &ActionBox) -> f64 {
        match self {
            Round::Quad { a, c } => {
                let dx = libm::fmax(c[0] - bx.lo[0], bx.hi[0] - c[0]);
                let dy = libm::fmax(c[1] - bx.lo[1], bx.hi[1] - c[1]);
                a * libm::sqrt(dx * dx + dy * dy)
            }
            Round::Lin { g } => libm::sqrt(g[0] * g[0] + g[1] * g[1]),
        }
    }
}

fn draw_rounds(family: &LossFamily, t: usize, bx: &ActionBox) -> Result<Vec<Round>, CoreError> {
    match family {
        LossFamily::Quadratic { seed } => {
            let mut rng = seeded(*seed);
            Ok((0..t)
                .map(|_| Round::Quad {
                    a: rng.random_range(0.5..1.5),
                    c: [
                        rng.random_range(bx.lo[0]..bx.hi[0]),
                        rng.random_range(bx.lo[1]..bx.hi[1]),
                    ],
                })
                .collect())
        }
        LossFamily::Linear { seed } => {
            let mut rng = seeded(*seed);
            Ok((0..t)
                .map(|_| Round::Lin {
                    g: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                })
                .collect())
        }
        LossFamily::Replay { grads } => {
            if grads.len() < t {
                return Err(CoreError::Input(format!(
                    "replay trace has {} rounds, need {t}",
                    grads.len()
                )));
            }
            for g in &grads[..t] {
                if !g[0].is_finite() || !g[1].is_finite() {
                    return Err(CoreError::NonFinite("non-finite replay gradient".to_string()));
                }
            }
            Ok(grads[..t].iter().map(|&g| Round::Lin { g }).collect())
        }
    }
}

/// Outcome of one projected-OGD run.
#[derive(Debug, Clone)]
pub struct OgdRun {
    pub actions: Vec<[f64; 2]>,
    pub losses: Vec<f64>,
    pub cumulative_loss: f64,
    pub comparator: [f64; 2],
    pub comparator_loss: f64,
    pub regret: f64,
    /// Realized gradient bound G over the box.
    pub g: f64,
    /// Largest gradient norm actually observed at a played action.
    pub max_observed_grad: f64,
    /// Box diameter D.
    pub d: f64,
    pub eta: f64,
    pub bound: f64,
}

impl OgdRun {
    /// Average per-round regret R_T / T.
    pub fn average_regret(&self) -> f64 {
        self.regret / self.actions.len() as f64
    }
}

/// Best fixed action in hindsight: coarse grid over the box, the played
/// actions themselves, then shrinking-grid refinement around the leader.
fn comparator(rounds: &[Round], bx: &ActionBox, played: &[[f64; 2]]) -> ([f64; 2], f64) {
    let total = |x: [f64; 2]| -> f64 { rounds.iter().map(|r| r.value(x)).sum() };
    let mut best = bx.center();
    let mut best_v = total(best);
    let grid = 21;
    let consider = |x: [f64; 2], best: &mut [f64; 2], best_v: &mut f64| {
        let v = total(x);
        if v < *best_v {
            *best_v = v;
            *best = x;
        }
    };
    for i in 0..grid {
        for j in 0..grid {
            let x = [
                bx.lo[0] + (bx.hi[0] - bx.lo[0]) * i as f64 / (grid - 1) as f64,
                bx.lo[1] + (bx.hi[1] - bx.lo[1]) * j as f64 / (grid - 1) as f64,
            ];
            consider(x, &mut best, &mut best_v);
        }
    }
    for &x in played {
        consider(x, &mut best, &mut best_v);
    }
    // local refinement: re-grid a shrinking window around the leader
    let mut half = [(bx.hi[0] - bx.lo[0]) / (grid - 1) as f64, (bx.hi[1] - bx.lo[1]) / (grid - 1) as f64];
    for _ in 0..12 {
        let c = best;
        for i in 0..5 {
            for j in 0..5 {
                let x = bx.project([
                    c[0] - half[0] + half[0] * i as f64 / 2.0,
                    c[1] - half[1] + half[1] * j as f64 / 2.0,
                ]);
                consider(x, &mut best, &mut best_v);
            }
        }
        half = [half[0] / 2.0, half[1] / 2.0];
    }
    (best, best_v)
}

/// Runs projected OGD for `t` rounds. `eta = None` uses the theory
/// schedule D / (G sqrt(T)) with the realized gradient bound.
pub fn ogd_run(
    family: &LossFamily,
    t: usize,
    bx: &ActionBox,
    eta: Option<f64>,
) -> Result<OgdRun, CoreError> {
    bx.validate()?;
    if t == 0 {
        return Err(CoreError::Input("need at least one round".to_string()));
    }
    let rounds = draw_rounds(family, t, bx)?;
    let d = bx.diameter();
    let g = rounds
        .iter()
        .map(|r| r.sup_grad_norm(bx))
        .fold(0.0, libm::fmax);
    let eta = match eta {
        Some(e) if e > 0.0 && e.is_finite() => e,
        Some(e) => return Err(CoreError::Input(format!("step size must be positive, got {e}"))),
        None => {
            if g == 0.0 {
                return Err(CoreError::Input("all-zero gradients: theory step size undefined".to_string()));
            }
            d / (g * libm::sqrt(t as f64))
        }
    };

    let mut x = bx.center();
    let mut actions = Vec::with_capacity(t);
    let mut losses = Vec::with_capacity(t);
    let mut cumulative = 0.0;
    let mut max_observed = 0.0;
    for r in &rounds {
        actions.push(x);
        let v = r.value(x);
        losses.push(v);
        cumulative += v;
        let gr = r.grad(x);
        max_observed = libm::fmax(max_observed, libm::sqrt(gr[0] * gr[0] + gr[1] * gr[1]));
        x = bx.project([x[0] - eta * gr[0], x[1] - eta * gr[1]]);
    }

    let (comp, comp_loss) = comparator(&rounds, bx, &actions);
    let regret = cumulative - comp_loss;
    let bound = g * d * libm::sqrt(t as f64);
    Ok(OgdRun {
        actions,
        losses,
        cumulative_loss: cumulative,
        comparator: comp,
        comparator_loss: comp_loss,
        regret,
        g,
        max_observed_grad: max_observed,
        d,
        eta,
        bound,
    })
}

/// Verdict of `verify_bound_with` for external reporting.
#[derive(Debug, Clone, Copy)]
pub struct BoundVerdict {
    pub regret: f64,
    pub bound: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// Checks `R_T <= G D sqrt(T)` for caller-supplied constants; `g` must
/// dominate every gradient norm observed along the trace.
pub fn verify_bound_with(run: &OgdRun, g: f64, d: f64) -> Result<BoundVerdict, CoreError> {
    if !g.is_finite() || !d.is_finite() || g <= 0.0 || d <= 0.0 {
        return Err(CoreError::Input(format!("G and D must be positive and finite, got {g}, {d}")));
    }
    if g < run.max_observed_grad {
        return Err(CoreError::Input(format!(
            "G = {g} is smaller than an observed gradient norm {}",
            run.max_observed_grad
        )));
    }
    let bound = g * d * libm::sqrt(run.actions.len() as f64);
    Ok(BoundVerdict {
        regret: run.regret,
        bound,
        ratio: run.regret / bound,
        pass: run.regret <= bound * (1.0 + 1e-9) + 1e-9,
    })
}

/// Checks the sublinear bound with a small slack for comparator
/// discretization error.
pub fn verify_bound(run: &OgdRun) -> bool {
    run.regret <= run.bound * (1.0 + 1e-9) + 1e-9
}
