//! Merge-incremental baseline: structural change fires whenever the
//! hard-example pool overflows.

use std::collections::VecDeque;

use rand::Rng;

use crate::adapt::{increment_with_epochs, merge};
use crate::error::{Error, Result};
use crate::nn::{DataBatch, Network};
use crate::pools::PoolSet;

#[derive(Debug, Clone, PartialEq)]
pub struct MiDaeConfig {
    pub initial_delta: usize,
    pub step: usize,
    pub merge_ratio: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Number of recent examples in the rolling reconstruction average.
    pub mu_window: usize,
    /// Greedy epochs over the hard pool for the new nodes.
    pub increment_epochs: usize,
    pub lambda: f64,
}

impl Default for MiDaeConfig {
    fn default() -> Self {
        MiDaeConfig {
            initial_delta: 30,
            step: 30,
            merge_ratio: 0.2,
            eps1: 0.01,
            eps2: 0.001,
            mu_window: 10_000,
            increment_epochs: 1,
            lambda: 0.2,
        }
    }
}

impl MiDaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > self.eps2 && self.eps2 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "midae.eps1 ({}) must exceed midae.eps2 ({}) >= 0",
                self.eps1, self.eps2
            )));
        }
        if !(0.0..=1.0).contains(&self.merge_ratio) {
            return Err(Error::InvalidConfig(format!("midae.merge_ratio must lie in [0,1], got {}", self.merge_ratio)));
        }
        if self.mu_window == 0 {
            return Err(Error::InvalidConfig("midae.mu_window must be positive".into()));
        }
        Ok(())
    }
}

/// `ratio < 1 - eps1` adds `step`, `ratio > 1 - eps2` halves (floor),
/// anything in between leaves `delta` unchanged.
pub fn update_rule(delta: usize, e_t: f64, e_prev: f64, eps1: f64, eps2: f64, step: usize) -> usize {
    let ratio = e_t / e_prev;
    if ratio < 1.0 - eps1 {
        delta + step
    } else if ratio > 1.0 - eps2 {
        delta / 2
    } else {
        delta
    }
}

/// Merge count paired with an increment of `delta_inc`: `ceil(ratio * delta_inc)`.
pub fn merge_count(delta_inc: usize, ratio: f64) -> usize {
    (ratio * delta_inc as f64).ceil() as usize
}

/// What one step did to the structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MiDaeEvent {
    pub merged: usize,
    pub incremented: usize,
}

#[derive(Debug, Clone)]
pub struct MiDaeState {
    pub cfg: MiDaeConfig,
    pub delta_n: usize,
    e_prev: Option<f64>,
    recent_losses: VecDeque<f64>,
    recent_sum: f64,
    events: usize,
}

impl MiDaeState {
    pub fn new(cfg: MiDaeConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(MiDaeState {
            delta_n: cfg.initial_delta,
            cfg,
            e_prev: None,
            recent_losses: VecDeque::new(),
            recent_sum: 0.0,
            events: 0,
        })
    }

    pub fn delta_inc(&self) -> usize {
        self.delta_n
    }

    pub fn delta_mrg(&self) -> usize {
        merge_count(self.delta_n, self.cfg.merge_ratio)
    }

    pub fn events(&self) -> usize {
        self.events
    }

    /// Mean reconstruction loss over the most recent `mu_window` examples.
    pub fn mu(&self) -> Option<f64> {
        (!self.recent_losses.is_empty()).then(|| self.recent_sum / self.recent_losses.len() as f64)
    }

    fn push_losses(&mut self, losses: &[f64]) {
        for &l in losses {
            self.recent_losses.push_back(l);
            self.recent_sum += l;
            if self.recent_losses.len() > self.cfg.mu_window {
                self.recent_sum -= self.recent_losses.pop_front().unwrap_or(0.0);
            }
        }
    }

    /// One batch: collect hard examples, run a merge and increment when the
    /// hard pool overflows, then fine-tune the whole network on the batch.
    pub fn merge_inc_step<R: Rng + ?Sized>(
        &mut self,
        net: &mut Network,
        batch: &DataBatch,
        pools: &mut PoolSet,
        rng: &mut R,
    ) -> Result<MiDaeEvent> {
        let losses = net.example_generative_losses(batch)?;
        self.push_losses(&losses);
        pools.update_hard(batch, &losses)?;
        let mut event = MiDaeEvent::default();

        if pools.hard_over_threshold() {
            let e_t = net.mean_discriminative_loss(batch)?;
            let width = net.layers[0].hidden_dim();
            let delta_inc = self.delta_n;
            let delta_mrg = merge_count(delta_inc, self.cfg.merge_ratio).min(width / 2);
            if delta_mrg > 0 {
                merge(net, delta_mrg)?;
            }
            if let Some(hard) = pools.drain_hard(batch.seq_id) {
                increment_with_epochs(net, delta_inc, std::slice::from_ref(&hard), self.cfg.increment_epochs, rng)?;
            }
            if let Some(e_prev) = self.e_prev.filter(|e| *e > 0.0) {
                self.delta_n = update_rule(self.delta_n, e_t, e_prev, self.cfg.eps1, self.cfg.eps2, self.cfg.step);
            }
            self.e_prev = Some(e_t);
            self.events += 1;
            event = MiDaeEvent {
                merged: delta_mrg,
                incremented: delta_inc,
            };
            log::debug!("midae event {}: merged {delta_mrg}, added {delta_inc}, next delta {}", self.events, self.delta_n);
        }

        net.finetune(batch, self.cfg.lambda, rng)?;
        Ok(event)
    }
}
