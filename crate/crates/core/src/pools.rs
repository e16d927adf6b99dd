//! Bounded example pools: the recent pool, the diverse pool of mutually
//! dissimilar batches, and MI-DAE's hard-example pool.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::{DataBatch, Matrix, Vector};

/// Batches are immutable once emitted by a stream and shared between pools.
pub type SharedBatch = Arc<DataBatch>;

/// `1 - cos` between the class-frequency histograms of two batches.
pub fn batch_distance(a: &DataBatch, b: &DataBatch) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if a.num_classes != b.num_classes {
        return Err(Error::DimensionMismatch {
            context: "batch_distance",
            expected: a.num_classes,
            found: b.num_classes,
        });
    }
    Ok(histogram_distance(&a.class_histogram(), &b.class_histogram()))
}

pub fn histogram_distance(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (1.0 - dot / (na * nb)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardExample {
    pub input: Vector,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiverseUpdate {
    /// Inserted; `evicted` older batches were dropped to respect the size bound.
    Inserted { evicted: usize },
    Rejected,
}

#[derive(Debug, Clone)]
pub struct PoolSet {
    recent: VecDeque<SharedBatch>,
    recent_examples: usize,
    diverse: VecDeque<SharedBatch>,
    diverse_examples: usize,
    hard: VecDeque<HardExample>,
    num_classes: Option<usize>,
    pub tau: usize,
    pub lambda_threshold: f64,
}

impl PoolSet {
    pub fn new(tau: usize, lambda_threshold: f64) -> Self {
        PoolSet {
            recent: VecDeque::new(),
            recent_examples: 0,
            diverse: VecDeque::new(),
            diverse_examples: 0,
            hard: VecDeque::new(),
            num_classes: None,
            tau,
            lambda_threshold,
        }
    }

    pub fn recent(&self) -> &VecDeque<SharedBatch> {
        &self.recent
    }

    pub fn diverse(&self) -> &VecDeque<SharedBatch> {
        &self.diverse
    }

    pub fn hard(&self) -> &VecDeque<HardExample> {
        &self.hard
    }

    pub fn recent_examples(&self) -> usize {
        self.recent_examples
    }

    pub fn diverse_examples(&self) -> usize {
        self.diverse_examples
    }

    /// Appends `batch` and drops the oldest whole batches until at most `tau`
    /// examples remain. The newest batch is always kept, even if it alone
    /// exceeds `tau`.
    pub fn update_recent(&mut self, batch: SharedBatch) {
        self.recent_examples += batch.len();
        self.recent.push_back(batch);
        while self.recent_examples > self.tau && self.recent.len() > 1 {
            let old = self.recent.pop_front().unwrap();
            self.recent_examples -= old.len();
        }
    }

    /// Inserts `batch` if the pool is empty or it is farther than
    /// `lambda_threshold` from every member; on overflow the oldest members
    /// are evicted. Otherwise the pool is left unchanged.
    pub fn update_diverse(&mut self, batch: SharedBatch) -> Result<DiverseUpdate> {
        for member in &self.diverse {
            if batch_distance(member, &batch)? <= self.lambda_threshold {
                return Ok(DiverseUpdate::Rejected);
            }
        }
        self.diverse_examples += batch.len();
        self.diverse.push_back(batch);
        let mut evicted = 0;
        while self.diverse_examples > self.tau && self.diverse.len() > 1 {
            let old = self.diverse.pop_front().unwrap();
            self.diverse_examples -= old.len();
            evicted += 1;
        }
        Ok(DiverseUpdate::Inserted { evicted })
    }

    /// Adds the examples whose loss is strictly above the batch mean.
    /// Returns how many were added.
    pub fn update_hard(&mut self, batch: &DataBatch, losses: &[f64]) -> Result<usize> {
        if losses.len() != batch.len() {
            return Err(Error::DimensionMismatch {
                context: "update_hard",
                expected: batch.len(),
                found: losses.len(),
            });
        }
        if batch.is_empty() {
            return Ok(0);
        }
        self.num_classes = Some(batch.num_classes);
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        let mut added = 0;
        for (i, &l) in losses.iter().enumerate() {
            if l > mean {
                self.hard.push_back(HardExample {
                    input: batch.input(i),
                    label: batch.labels[i],
                });
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn hard_over_threshold(&self) -> bool {
        self.hard.len() > self.tau
    }

    /// Empties the hard pool, returning its contents as one batch.
    pub fn drain_hard(&mut self, seq_id: u64) -> Option<DataBatch> {
        if self.hard.is_empty() {
            return None;
        }
        let dim = self.hard[0].input.len();
        let mut inputs = Matrix::zeros(self.hard.len(), dim);
        let mut labels = Vec::with_capacity(self.hard.len());
        for (i, ex) in self.hard.drain(..).enumerate() {
            inputs.set_row(i, &ex.input.transpose());
            labels.push(ex.label);
        }
        let classes = self.num_classes.unwrap_or(1 + labels.iter().copied().max().unwrap_or(0));
        DataBatch::new(seq_id, inputs, labels, classes).ok()
    }
}
