//! Q-learning controller that decides, once per batch, whether to pool,
//! grow or shrink the first hidden layer.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use log::debug;
use rand::Rng;

use crate::adapt::ActionKind;
use crate::error::{Error, Result};
use crate::gpr::{optimize_hyperparams, GprModel, HyperGrid, Hyperparams};

/// Additive floor used when the reference histogram has an empty class that
/// the current batch populates.
pub const KL_SMOOTHING: f64 = 1e-6;

pub fn ema_update(prev: f64, current: f64, alpha: f64) -> f64 {
    alpha * current + (1.0 - alpha) * prev
}

/// Span-`window` EMA coefficient, `2 / (window + 1)`.
pub fn ema_alpha(window: usize) -> f64 {
    2.0 / (window as f64 + 1.0)
}

fn check_histogram(h: &[f64], name: &str) -> Result<()> {
    if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidHistogram(format!("{name} has a negative or non-finite entry")));
    }
    let total: f64 = h.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidHistogram(format!("{name} sums to {total}")));
    }
    Ok(())
}

/// `sum_i P(i) ln(P(i)/Q(i))`, skipping terms with `P(i) = 0`. When `Q` has a
/// zero where `P` does not, `Q` is smoothed with [`KL_SMOOTHING`] and
/// renormalised first.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            context: "kl divergence",
            expected: p.len(),
            found: q.len(),
        });
    }
    check_histogram(p, "P")?;
    check_histogram(q, "Q")?;
    let needs_smoothing = p.iter().zip(q).any(|(pi, qi)| *pi > 0.0 && *qi == 0.0);
    let k = q.len() as f64;
    let q: Vec<f64> = if needs_smoothing {
        q.iter().map(|v| (v + KL_SMOOTHING) / (1.0 + k * KL_SMOOTHING)).collect()
    } else {
        q.to_vec()
    };
    let kl: f64 = p
        .iter()
        .zip(&q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum();
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum StateSpace {
    /// `[Lg(m3), Lc(m1), Lc(m2), Lc(m3), nu]`
    S1,
    /// `S1` followed by the KL term.
    S2,
    /// `[Lg(m), Lc(m), nu]`
    #[default]
    S3,
    /// `[Lg(m), Lc(m), nu, KL]`
    S4,
}

impl StateSpace {
    pub fn dim(self) -> usize {
        match self {
            StateSpace::S1 => 5,
            StateSpace::S2 => 6,
            StateSpace::S3 => 3,
            StateSpace::S4 => 4,
        }
    }

    fn uses_kl(self) -> bool {
        matches!(self, StateSpace::S2 | StateSpace::S4)
    }

    fn uses_extra_windows(self) -> bool {
        matches!(self, StateSpace::S1 | StateSpace::S2)
    }
}

impl fmt::Display for StateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StateSpace::S1 => "s1",
            StateSpace::S2 => "s2",
            StateSpace::S3 => "s3",
            StateSpace::S4 => "s4",
        };
        f.write_str(s)
    }
}

impl FromStr for StateSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(StateSpace::S1),
            "s2" | "2" => Ok(StateSpace::S2),
            "s3" | "3" => Ok(StateSpace::S3),
            "s4" | "4" => Ok(StateSpace::S4),
            other => Err(Error::InvalidConfig(format!("unknown state space `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QMode {
    #[default]
    Gpr,
    Tabular,
}

impl fmt::Display for QMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QMode::Gpr => "gpr",
            QMode::Tabular => "tabular",
        })
    }
}

impl FromStr for QMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gpr" => Ok(QMode::Gpr),
            "tabular" => Ok(QMode::Tabular),
            other => Err(Error::InvalidConfig(format!("unknown q mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlState {
    pub ema_lg: f64,
    pub ema_lc: f64,
    pub nu1: f64,
    pub kl: Option<f64>,
    /// `[Lg(m3), Lc(m1), Lc(m2), Lc(m3)]` for the multi-window spaces.
    pub extra_emas: Option<[f64; 4]>,
}

impl RlState {
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = match self.extra_emas {
            Some(e) => vec![e[0], e[1], e[2], e[3], self.nu1],
            None => vec![self.ema_lg, self.ema_lc, self.nu1],
        };
        if let Some(kl) = self.kl {
            v.push(kl);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub m: usize,
    pub windows: [usize; 3],
    pub eta1: usize,
    pub eta2: usize,
    pub gamma: f64,
    pub alpha_q: f64,
    /// Defaults to `2 / (m + 1)` when unset.
    pub alpha_ema: Option<f64>,
    pub epsilon: f64,
    /// Defaults to half the initial first-layer width when unset.
    pub lambda_delta: Option<f64>,
    pub mu_hat: f64,
    pub sigma_delta: f64,
    pub v1: f64,
    pub v2: f64,
    pub state_space: StateSpace,
    pub q_mode: QMode,
    pub gpr_noise: f64,
    pub refit_every: usize,
    pub max_observations: usize,
    /// Divide the generative error by the input dimension before it enters
    /// the state vector.
    pub normalize_lg: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            m: 30,
            windows: [5, 15, 30],
            eta1: 30,
            eta2: 60,
            gamma: 0.9,
            alpha_q: 0.5,
            alpha_ema: None,
            epsilon: 0.1,
            lambda_delta: None,
            mu_hat: 1.0,
            sigma_delta: 0.5,
            v1: 0.5,
            v2: 2.0,
            state_space: StateSpace::S3,
            q_mode: QMode::Gpr,
            gpr_noise: 0.01,
            refit_every: 10,
            max_observations: 500,
            normalize_lg: true,
        }
    }
}

impl ControllerConfig {
    pub fn ema_coefficient(&self) -> f64 {
        self.alpha_ema.unwrap_or_else(|| ema_alpha(self.m))
    }

    pub fn lambda_for(&self, initial_width: usize) -> f64 {
        self.lambda_delta.unwrap_or(0.5 * initial_width as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("rl.gamma must lie in (0,1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return fail(format!("rl.epsilon must lie in [0,1], got {}", self.epsilon));
        }
        if self.eta1 >= self.eta2 {
            return fail(format!("rl.eta1 ({}) must be below rl.eta2 ({})", self.eta1, self.eta2));
        }
        if self.v1 >= self.v2 {
            return fail(format!("rl.v1 ({}) must be below rl.v2 ({})", self.v1, self.v2));
        }
        if !(0.0..=1.0).contains(&self.alpha_q) {
            return fail(format!("rl.alpha_q must lie in [0,1], got {}", self.alpha_q));
        }
        if let Some(a) = self.alpha_ema {
            if !(a > 0.0 && a <= 1.0) {
                return fail(format!("rl.alpha_ema must lie in (0,1], got {a}"));
            }
        }
        if self.m == 0 || self.windows.contains(&0) {
            return fail("rl.m and rl.windows must be positive".into());
        }
        if self.sigma_delta <= 0.0 {
            return fail(format!("rl.sigma_delta must be positive, got {}", self.sigma_delta));
        }
        if self.lambda_delta.is_some_and(|l| l < 0.0) {
            return fail("rl.lambda_delta must be non-negative".into());
        }
        if self.gpr_noise < 0.0 {
            return fail("rl.gpr_noise must be non-negative".into());
        }
        if self.refit_every == 0 || self.max_observations == 0 {
            return fail("rl.refit_every and rl.max_observations must be positive".into());
        }
        Ok(())
    }
}

/// Running EMAs, width ratio and class-histogram history behind the state.
#[derive(Debug, Clone)]
pub struct StateTracker {
    alpha: f64,
    window_alphas: [f64; 3],
    kl_window: usize,
    initial_width: usize,
    ema_lg: Option<f64>,
    ema_lc: Option<f64>,
    ema_lg_m3: Option<f64>,
    ema_lc_windows: [Option<f64>; 3],
    history: VecDeque<Vec<f64>>,
    kl: f64,
    nu1: f64,
}

fn step(slot: &mut Option<f64>, value: f64, alpha: f64) {
    *slot = Some(match *slot {
        Some(prev) => ema_update(prev, value, alpha),
        None => value,
    });
}

impl StateTracker {
    pub fn new(cfg: &ControllerConfig, initial_width: usize) -> Self {
        StateTracker {
            alpha: cfg.ema_coefficient(),
            window_alphas: cfg.windows.map(ema_alpha),
            kl_window: cfg.m,
            initial_width: initial_width.max(1),
            ema_lg: None,
            ema_lc: None,
            ema_lg_m3: None,
            ema_lc_windows: [None; 3],
            history: VecDeque::new(),
            kl: 0.0,
            nu1: 1.0,
        }
    }

    /// Folds one batch into the running statistics. The first observation
    /// seeds every average. The KL term compares `histogram` against the mean
    /// of up to `m` previous histograms, and is 0 when there are none.
    pub fn observe(&mut self, lg: f64, lc: f64, histogram: &[f64], width1: usize) -> Result<()> {
        step(&mut self.ema_lg, lg, self.alpha);
        step(&mut self.ema_lc, lc, self.alpha);
        step(&mut self.ema_lg_m3, lg, self.window_alphas[2]);
        for (slot, a) in self.ema_lc_windows.iter_mut().zip(self.window_alphas) {
            step(slot, lc, a);
        }
        self.kl = if self.history.is_empty() {
            0.0
        } else {
            let k = histogram.len();
            let mut q = vec![0.0; k];
            for h in &self.history {
                if h.len() != k {
                    return Err(Error::DimensionMismatch {
                        context: "class histogram",
                        expected: h.len(),
                        found: k,
                    });
                }
                for (qi, hi) in q.iter_mut().zip(h) {
                    *qi += hi;
                }
            }
            let n = self.history.len() as f64;
            q.iter_mut().for_each(|v| *v /= n);
            kl_divergence(histogram, &q)?
        };
        self.history.push_back(histogram.to_vec());
        while self.history.len() > self.kl_window {
            self.history.pop_front();
        }
        self.nu1 = width1 as f64 / self.initial_width as f64;
        Ok(())
    }

    pub fn nu1(&self) -> f64 {
        self.nu1
    }

    pub fn kl(&self) -> f64 {
        self.kl
    }

    pub fn state(&self, space: StateSpace) -> RlState {
        let extra = space.uses_extra_windows().then(|| {
            [
                self.ema_lg_m3.unwrap_or(0.0),
                self.ema_lc_windows[0].unwrap_or(0.0),
                self.ema_lc_windows[1].unwrap_or(0.0),
                self.ema_lc_windows[2].unwrap_or(0.0),
            ]
        });
        RlState {
            ema_lg: self.ema_lg.unwrap_or(0.0),
            ema_lc: self.ema_lc.unwrap_or(0.0),
            nu1: self.nu1,
            kl: space.uses_kl().then_some(self.kl),
            extra_emas: extra,
        }
    }
}

/// Unrounded step size `lambda * exp(-(nu - mu)^2 / (2 sigma^2)) * |Lc_n - Lc_prev|`.
pub fn compute_delta_raw(lc_n: f64, lc_prev: f64, nu: f64, lambda: f64, mu_hat: f64, sigma: f64) -> f64 {
    let envelope = (-(nu - mu_hat).powi(2) / (2.0 * sigma * sigma)).exp();
    (lambda * envelope * (lc_n - lc_prev).abs()).max(0.0)
}

/// Rounded step size: 0 stays 0, anything positive becomes at least 1.
pub fn round_delta(raw: f64) -> usize {
    if raw <= 0.0 || !raw.is_finite() {
        0
    } else {
        (raw.round() as usize).max(1)
    }
}

pub fn compute_delta(lc_n: f64, lc_prev: f64, nu: f64, lambda: f64, mu_hat: f64, sigma: f64) -> usize {
    round_delta(compute_delta_raw(lc_n, lc_prev, nu, lambda, mu_hat, sigma))
}

/// `e = (1 - (Lc_n - Lc_prev)) (1 - Lc_n)`.
pub fn error_reward(lc_n: f64, lc_prev: f64) -> f64 {
    (1.0 - (lc_n - lc_prev)) * (1.0 - lc_n)
}

/// Reward with the size penalty `|mu - nu|` applied outside `[v1, v2]`.
pub fn compute_reward(lc_n: f64, lc_prev: f64, nu1: f64, cfg: &ControllerConfig) -> f64 {
    let e = error_reward(lc_n, lc_prev);
    if nu1 < cfg.v1 || nu1 > cfg.v2 {
        e - (cfg.mu_hat - nu1).abs()
    } else {
        e
    }
}

fn state_key(state: &[f64]) -> Vec<u64> {
    state.iter().map(|v| v.to_bits()).collect()
}

/// Utility estimates: one GPR curve per action, or an exact lookup table.
#[derive(Debug, Clone)]
pub struct QModel {
    mode: QMode,
    observations: [VecDeque<(Vec<f64>, f64)>; 3],
    curves: [Option<GprModel>; 3],
    hypers: [Hyperparams; 3],
    table: HashMap<(Vec<u64>, usize), f64>,
    pub noise_var: f64,
    pub max_observations: usize,
    pub grid: HyperGrid,
}

impl QModel {
    pub fn new(mode: QMode, noise_var: f64, max_observations: usize) -> Self {
        QModel {
            mode,
            observations: Default::default(),
            curves: Default::default(),
            hypers: [Hyperparams::default(); 3],
            table: HashMap::new(),
            noise_var,
            max_observations,
            grid: HyperGrid::default(),
        }
    }

    pub fn tabular() -> Self {
        QModel::new(QMode::Tabular, 0.0, usize::MAX)
    }

    pub fn mode(&self) -> QMode {
        self.mode
    }

    pub fn observations(&self, action: ActionKind) -> &VecDeque<(Vec<f64>, f64)> {
        &self.observations[action.index()]
    }

    pub fn curve(&self, action: ActionKind) -> Option<&GprModel> {
        self.curves[action.index()].as_ref()
    }

    /// Current utility estimate; unseen pairs and unfitted curves read as 0.
    pub fn predict(&self, state: &[f64], action: ActionKind) -> f64 {
        match self.mode {
            QMode::Tabular => self.table.get(&(state_key(state), action.index())).copied().unwrap_or(0.0),
            QMode::Gpr => self.curves[action.index()]
                .as_ref()
                .and_then(|c| c.predict_mean(state).ok())
                .unwrap_or(0.0),
        }
    }

    pub fn predict_all(&self, state: &[f64]) -> [f64; 3] {
        ActionKind::ALL.map(|a| self.predict(state, a))
    }

    /// One Q-learning step for `(s_prev, a_prev)`; returns the new value.
    pub fn update(&mut self, s_prev: &[f64], a_prev: ActionKind, reward: f64, s_new: &[f64], gamma: f64, alpha: f64) -> f64 {
        let best_next = self.predict_all(s_new).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let target = reward + gamma * best_next;
        let old = self.predict(s_prev, a_prev);
        let new = (1.0 - alpha) * old + alpha * target;
        if self.mode == QMode::Tabular {
            self.table.insert((state_key(s_prev), a_prev.index()), new);
        }
        let obs = &mut self.observations[a_prev.index()];
        obs.push_back((s_prev.to_vec(), new));
        while obs.len() > self.max_observations {
            obs.pop_front();
        }
        new
    }

    /// Refits every action's curve from its observation list, selecting the
    /// kernel hyperparameters by marginal likelihood. A no-op in tabular mode.
    pub fn refit(&mut self) -> Result<()> {
        if self.mode == QMode::Tabular {
            return Ok(());
        }
        let noise = self.noise_var;
        let grid = &self.grid;
        let results: Vec<Option<Result<GprModel>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .observations
                .iter()
                .zip(self.hypers)
                .map(|(obs, hyper)| {
                    scope.spawn(move || {
                        if obs.is_empty() {
                            return None;
                        }
                        let xs: Vec<Vec<f64>> = obs.iter().map(|(s, _)| s.clone()).collect();
                        let ys: Vec<f64> = obs.iter().map(|(_, v)| *v).collect();
                        let hyper = if xs.len() >= 2 {
                            optimize_hyperparams(&xs, &ys, hyper, grid, noise).map(|(h, _)| h).unwrap_or(hyper)
                        } else {
                            hyper
                        };
                        Some(GprModel::fit(&xs, &ys, hyper, noise))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("gpr refit thread panicked")).collect()
        });
        for (i, r) in results.into_iter().enumerate() {
            if let Some(r) = r {
                let model = r?;
                self.hypers[i] = model.hyper;
                self.curves[i] = Some(model);
            }
        }
        Ok(())
    }
}

/// Index of the largest value, ties to the lowest index.
pub fn greedy_action(q: &[f64; 3]) -> ActionKind {
    let mut best = 0;
    for i in 1..3 {
        if q[i] > q[best] {
            best = i;
        }
    }
    ActionKind::ALL[best]
}

/// Pool before `eta1`, the fixed rotation Increment, Merge, Pool until
/// `eta2`, then epsilon-greedy on `q`.
pub fn select_action<R: Rng + ?Sized>(n: usize, q: &[f64; 3], cfg: &ControllerConfig, rng: &mut R) -> ActionKind {
    if n < cfg.eta1 {
        ActionKind::Pool
    } else if n < cfg.eta2 {
        [ActionKind::Increment, ActionKind::Merge, ActionKind::Pool][(n - cfg.eta1) % 3]
    } else if rng.random::<f64>() < cfg.epsilon {
        ActionKind::ALL[rng.random_range(0..3)]
    } else {
        greedy_action(q)
    }
}

/// Per-batch measurements handed to the controller.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub lg: f64,
    pub lc: f64,
    pub histogram: &'a [f64],
    pub widths: &'a [usize],
}

/// Controller decision for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CtrlParams {
    pub state: Option<Vec<f64>>,
    pub action: ActionKind,
    pub delta_inc: usize,
    pub delta_mrg: usize,
    pub reward: Option<f64>,
    pub q_values: Option<[f64; 3]>,
    pub raw_delta: f64,
    pub kl: f64,
}

impl CtrlParams {
    pub fn delta(&self) -> usize {
        match self.action {
            ActionKind::Pool => 0,
            ActionKind::Increment => self.delta_inc,
            ActionKind::Merge => self.delta_mrg,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RaDaeController {
    pub cfg: ControllerConfig,
    tracker: StateTracker,
    q: QModel,
    previous: Option<(Vec<f64>, ActionKind)>,
    prev_lc: Option<f64>,
    initial_width: usize,
    input_dim: usize,
}

impl RaDaeController {
    pub fn new(cfg: ControllerConfig, initial_width: usize, input_dim: usize) -> Result<Self> {
        cfg.validate()?;
        let q = QModel::new(cfg.q_mode, cfg.gpr_noise, cfg.max_observations);
        Ok(RaDaeController {
            tracker: StateTracker::new(&cfg, initial_width),
            q,
            cfg,
            previous: None,
            prev_lc: None,
            initial_width: initial_width.max(1),
            input_dim: input_dim.max(1),
        })
    }

    pub fn q_model(&self) -> &QModel {
        &self.q
    }

    pub fn tracker(&self) -> &StateTracker {
        &self.tracker
    }

    fn refit_due(&self, n: usize) -> bool {
        n < self.cfg.eta2 || (n - self.cfg.eta2) % self.cfg.refit_every == 0
    }

    /// One controller step for batch `n`: observe, reward, state, Q update,
    /// curve refit, action selection and step size, in that order.
    pub fn control_params<R: Rng + ?Sized>(&mut self, n: usize, obs: Observation<'_>, rng: &mut R) -> Result<CtrlParams> {
        let width1 = *obs.widths.first().ok_or(Error::InvalidConfig("network has no hidden layer".into()))?;
        let lg = if self.cfg.normalize_lg {
            obs.lg / self.input_dim as f64
        } else {
            obs.lg
        };
        self.tracker.observe(lg, obs.lc, obs.histogram, width1)?;
        let nu1 = self.tracker.nu1();
        let prev_lc = self.prev_lc.replace(obs.lc);
        let reward = prev_lc.map(|p| compute_reward(obs.lc, p, nu1, &self.cfg));
        let kl = self.tracker.kl();

        if n < self.cfg.eta1 {
            return Ok(CtrlParams {
                state: None,
                action: ActionKind::Pool,
                delta_inc: 0,
                delta_mrg: 0,
                reward,
                q_values: None,
                raw_delta: 0.0,
                kl,
            });
        }

        let state = self.tracker.state(self.cfg.state_space).to_vector();
        if let (Some((s_prev, a_prev)), Some(r)) = (self.previous.take(), reward) {
            let v = self.q.update(&s_prev, a_prev, r, &state, self.cfg.gamma, self.cfg.alpha_q);
            debug!("batch {n}: Q({a_prev}) <- {v:.4} (reward {r:.4})");
        }
        if self.refit_due(n) {
            self.q.refit()?;
        }
        let q_values = self.q.predict_all(&state);
        let action = select_action(n, &q_values, &self.cfg, rng);

        let lambda = self.cfg.lambda_for(self.initial_width);
        let raw_delta = prev_lc
            .map(|p| compute_delta_raw(obs.lc, p, nu1, lambda, self.cfg.mu_hat, self.cfg.sigma_delta))
            .unwrap_or(0.0);
        let delta = round_delta(raw_delta);
        let (delta_inc, delta_mrg) = match action {
            ActionKind::Pool => (0, 0),
            ActionKind::Increment => (delta, 0),
            ActionKind::Merge => (0, delta.min(width1 / 2)),
        };
        self.previous = Some((state.clone(), action));
        Ok(CtrlParams {
            state: Some(state),
            action,
            delta_inc,
            delta_mrg,
            reward,
            q_values: Some(q_values),
            raw_delta,
            kl,
        })
    }
}
